//! Compactly supported tensor-product kernels and their rasterization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, GridSpec};

/// One-dimensional profile of a tensor-product kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    /// Indicator of `[-1/2, 1/2)`.
    Box,
    /// `1 - |x|` on `[-1, 1]`.
    Tent,
    /// Centered cardinal B-spline of order `n` (degree `n - 1`), supported on `[-n/2, n/2]`.
    BSpline(u8),
    /// `exp(-x^2 / (2 sigma^2))` truncated to `|x| <= cutoff * sigma`.
    TruncatedGaussian { sigma: f64, cutoff: f64 },
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Shape::BSpline(n) if !(1..=4).contains(&n) => Err(Error::InvalidKernel(format!(
                "B-spline order must be in 1..=4, got {n}"
            ))),
            Shape::TruncatedGaussian { sigma, cutoff } if !(sigma > 0.0 && cutoff > 0.0) => {
                Err(Error::InvalidKernel(format!(
                    "gaussian needs sigma > 0 and cutoff > 0, got ({sigma}, {cutoff})"
                )))
            }
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Shape::Box | Shape::BSpline(1) => {
                if (-0.5..0.5).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Shape::Tent | Shape::BSpline(2) => (1.0 - x.abs()).max(0.0),
            Shape::BSpline(3) => {
                let t = x.abs();
                if t < 0.5 {
                    0.75 - t * t
                } else if t < 1.5 {
                    let u = 1.5 - t;
                    0.5 * u * u
                } else {
                    0.0
                }
            }
            Shape::BSpline(4) => {
                let t = x.abs();
                if t < 1.0 {
                    2.0 / 3.0 - t * t + 0.5 * t * t * t
                } else if t < 2.0 {
                    let u = 2.0 - t;
                    u * u * u / 6.0
                } else {
                    0.0
                }
            }
            Shape::BSpline(_) => 0.0,
            Shape::TruncatedGaussian { sigma, cutoff } => {
                if x.abs() <= cutoff * sigma {
                    (-x * x / (2.0 * sigma * sigma)).exp()
                } else {
                    0.0
                }
            }
        }
    }

    pub fn half_width(&self) -> f64 {
        match *self {
            Shape::Box => 0.5,
            Shape::Tent => 1.0,
            Shape::BSpline(n) => n as f64 / 2.0,
            Shape::TruncatedGaussian { sigma, cutoff } => sigma * cutoff,
        }
    }

    pub fn mass(&self) -> f64 {
        match *self {
            Shape::Box | Shape::Tent | Shape::BSpline(_) => 1.0,
            Shape::TruncatedGaussian { sigma, cutoff } => {
                sigma * (2.0 * std::f64::consts::PI).sqrt() * libm::erf(cutoff / 2f64.sqrt())
            }
        }
    }

    /// Continuous on the whole line.
    pub fn is_continuous(&self) -> bool {
        !matches!(
            self,
            Shape::Box | Shape::BSpline(1) | Shape::TruncatedGaussian { .. }
        )
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Box => write!(f, "box"),
            Shape::Tent => write!(f, "tent"),
            Shape::BSpline(n) => write!(f, "bspline:{n}"),
            Shape::TruncatedGaussian { sigma, cutoff } => write!(f, "gaussian:{sigma}:{cutoff}"),
        }
    }
}

impl FromStr for Shape {
    type Err = Error;

    /// Accepts `box`, `tent`, `bspline:<order>`, `gaussian:<sigma>:<cutoff>`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let bad = || Error::InvalidKernel(format!("unknown kernel shape `{s}`"));
        let shape = match parts.as_slice() {
            ["box"] => Shape::Box,
            ["tent"] => Shape::Tent,
            ["bspline", n] => Shape::BSpline(n.parse().map_err(|_| bad())?),
            ["gaussian", sg, c] => Shape::TruncatedGaussian {
                sigma: sg.parse().map_err(|_| bad())?,
                cutoff: c.parse().map_err(|_| bad())?,
            },
            _ => return Err(bad()),
        };
        shape.validate()?;
        Ok(shape)
    }
}

/// `amplitude * prod_a shape((x_a - center_a) / scale_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub shape: Shape,
    pub scale: Vec<f64>,
    pub center: Vec<f64>,
    pub amplitude: f64,
}

impl KernelSpec {
    /// Unit scale, centered at the origin, amplitude 1.
    pub fn new(shape: Shape, dim: usize) -> Self {
        KernelSpec {
            shape,
            scale: vec![1.0; dim],
            center: vec![0.0; dim],
            amplitude: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.len()
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale.iter_mut().for_each(|v| *v = s);
        self
    }

    pub fn centered(mut self, c: &[f64]) -> Self {
        self.center = c.to_vec();
        self
    }

    pub fn with_amplitude(mut self, a: f64) -> Self {
        self.amplitude = a;
        self
    }

    /// Rescales the amplitude so the closed-form integral is 1.
    pub fn unit_mass(mut self) -> Self {
        self.amplitude = 1.0;
        self.amplitude = 1.0 / self.mass();
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.center.len() != self.scale.len() {
            return Err(Error::InvalidKernel("center/scale dimension mismatch".into()));
        }
        if self.scale.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidKernel("scales must be positive".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidKernel("amplitude must be finite".into()));
        }
        Ok(())
    }

    /// Evaluates at a point given relative to the origin (no periodic wrapping).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for a in 0..x.len() {
            if v == 0.0 {
                return 0.0;
            }
            v *= self.shape.eval((x[a] - self.center[a]) / self.scale[a]);
        }
        v
    }

    /// Evaluates at a displacement measured from `center`.
    pub fn eval_from_center(&self, delta: &[f64]) -> f64 {
        let mut v = self.amplitude;
        for a in 0..delta.len() {
            if v == 0.0 {
                return 0.0;
            }
            v *= self.shape.eval(delta[a] / self.scale[a]);
        }
        v
    }

    /// Half-width of the support along `axis`, measured from `center`.
    pub fn support_radius(&self, axis: usize) -> f64 {
        self.shape.half_width() * self.scale[axis]
    }

    pub fn support_diameter(&self) -> f64 {
        (0..self.dim())
            .map(|a| 2.0 * self.support_radius(a))
            .fold(0.0, f64::max)
    }

    /// Closed-form integral over the whole space.
    pub fn mass(&self) -> f64 {
        let m1 = self.shape.mass();
        self.amplitude * self.scale.iter().map(|s| m1 * s).product::<f64>()
    }
}

/// Samples `kernel` at every midpoint of `spec`, wrapping periodically.
pub fn rasterize(kernel: &KernelSpec, spec: &GridSpec) -> Result<DiscreteField> {
    kernel.validate()?;
    if kernel.dim() != spec.dim() {
        return Err(Error::InvalidKernel(format!(
            "kernel has dimension {}, grid has {}",
            kernel.dim(),
            spec.dim()
        )));
    }
    let diameter = kernel.support_diameter();
    if diameter >= spec.min_period() as f64 {
        return Err(Error::SupportTooLarge { diameter, period: spec.min_period() });
    }
    // tensor product: one profile per axis, multiplied in the same order as `eval_from_center`
    let profiles: Vec<Vec<f64>> = (0..spec.dim())
        .map(|a| {
            (0..spec.extent(a))
                .map(|j| {
                    let delta = spec.wrap_delta(a, spec.midpoint(j) - kernel.center[a]);
                    kernel.shape.eval(delta / kernel.scale[a])
                })
                .collect()
        })
        .collect();
    let mut values = vec![kernel.amplitude; 1];
    for profile in &profiles {
        values = values
            .iter()
            .flat_map(|&v| profile.iter().map(move |&p| if v == 0.0 { 0.0 } else { v * p }))
            .collect();
    }
    DiscreteField::from_values(*spec, values)
}
