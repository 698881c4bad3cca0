//! Reconstruction of functions in multiply generated shift-invariant subspaces of
//! mixed Lebesgue spaces `L^{p,q}` from nonuniform local averages.
//!
//! Everything is computed on a periodic torus sampled on a uniform midpoint grid:
//!
//! - [`grid`] and [`kernel`]: fields, quadrature, convolution, the kernel catalog.
//! - [`norms`]: mixed Lebesgue, sequence and Wiener amalgam norms; oscillation.
//! - [`space`]: synthesis, the Gram system and the `L^2` projection.
//! - [`sampling`]: sampling sets, density checks, partitions of unity, averaging kernels.
//! - [`reconstruct`]: the sampling operators and the iterative reconstruction.
//! - [`config`], [`experiment`], [`verify`]: batch runs, sweeps and invariant suites.

pub mod config;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod kernel;
pub mod norms;
pub mod reconstruct;
pub mod sampling;
pub mod space;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{convolve, integrate, lin_comb, reflect_conjugate, DiscreteField, GridSpec};
pub use kernel::{rasterize, KernelSpec, Shape};
pub use norms::{
    mixed_lebesgue_norm, mixed_seq_norm, oscillation, wiener_amalgam_norm, MixedExponents,
};
pub use space::{
    build_gram, project, synthesize, CoefficientArray, GeneratorBank, GramOperator,
};
