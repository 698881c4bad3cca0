//! Sampling operators and the iterative reconstruction.
//!
//! With `A` the spread of average samples and `P` the projection onto the space, the
//! iteration is `f_1 = P A f`, `f_{n+1} = f_n + P A (f - f_n)`. Because `A` is linear,
//! `A (f - f_n)` is the spread of `s - acquire(f_n)` where `s` holds the measured
//! samples, so `f` itself is never touched after acquisition. The update is carried
//! out in coefficient space and `f_n` is resynthesized from the coefficients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{lin_comb, DiscreteField};
use crate::norms::{mixed_lebesgue_norm, MixedExponents};
use crate::sampling::{acquire_samples, AveragingKernelSet, Bupu, SamplingSet};
use crate::space::{project, synthesize, CoefficientArray, GeneratorBank, GramOperator};

/// `sum_j values_j beta_j`: every cell takes the value of its assigned sample.
pub fn spread(values: &[f64], bupu: &Bupu) -> Result<DiscreteField> {
    if values.len() != bupu.n_samples() {
        return Err(Error::LengthMismatch { expected: bupu.n_samples(), got: values.len() });
    }
    let out = bupu
        .assignment()
        .par_iter()
        .map(|&j| values.get(j as usize).copied().unwrap_or(0.0))
        .collect();
    DiscreteField::from_values(*bupu.spec(), out)
}

/// `Q_X f`: spread of point values, read at the grid cell nearest to each sample.
pub fn quasi_interpolant(f: &DiscreteField, x: &SamplingSet, bupu: &Bupu) -> Result<DiscreteField> {
    f.spec().check_same(bupu.spec())?;
    let spec = f.spec();
    let values: Vec<f64> = x.points().iter().map(|p| f.values()[spec.nearest_cell_flat(p)]).collect();
    spread(&values, bupu)
}

/// `A f` from its measured average samples.
pub fn approx_operator(samples: &[f64], bupu: &Bupu) -> Result<DiscreteField> {
    spread(samples, bupu)
}

/// Everything the iteration needs besides the samples.
#[derive(Debug, Clone, Copy)]
pub struct Operators<'a> {
    pub bank: &'a GeneratorBank,
    pub gram: &'a GramOperator,
    pub bupu: &'a Bupu,
    pub kernels: &'a AveragingKernelSet,
    pub x: &'a SamplingSet,
}

impl Operators<'_> {
    /// `A f = spread(acquire(f))`.
    pub fn sample_operator(&self, f: &DiscreteField) -> Result<DiscreteField> {
        approx_operator(&acquire_samples(f, self.kernels, self.x)?, self.bupu)
    }

    /// `(I - P A) f`.
    pub fn error_operator(&self, f: &DiscreteField) -> Result<DiscreteField> {
        let pa = synthesize(&project(&self.sample_operator(f)?, self.gram)?, self.bank)?;
        lin_comb(&[(1.0, f), (-1.0, &pa)])
    }

    /// Coefficients of `(I - P A) synthesize(c)`, which keeps orbits exactly inside the space.
    pub fn error_operator_coefficients(&self, c: &CoefficientArray) -> Result<CoefficientArray> {
        let pa = project(&self.sample_operator(&synthesize(c, self.bank)?)?, self.gram)?;
        let mut out = c.clone();
        out.axpy(-1.0, &pa);
        Ok(out)
    }

    /// Coefficient increment `P spread(s - acquire(f_n))`.
    pub fn increment(&self, samples: &[f64], current: &DiscreteField) -> Result<CoefficientArray> {
        let predicted = acquire_samples(current, self.kernels, self.x)?;
        let residual: Vec<f64> = samples.iter().zip(&predicted).map(|(s, p)| s - p).collect();
        project(&spread(&residual, self.bupu)?, self.gram)
    }
}

#[derive(Debug, Clone)]
pub struct ReconstructionOptions {
    pub exponents: MixedExponents,
    pub max_iter: usize,
    pub tol: f64,
    /// Reference field; when present the true error is logged every iteration.
    pub truth: Option<DiscreteField>,
}

impl ReconstructionOptions {
    pub fn new(exponents: MixedExponents) -> Self {
        ReconstructionOptions { exponents, max_iter: 500, tol: 1e-10, truth: None }
    }

    pub fn with_truth(mut self, truth: DiscreteField) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iter < 1 {
            return Err(Error::InvalidArgument("max_iter must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    /// The successive change grew for [`DIVERGENCE_STEPS`] consecutive iterations.
    Diverged,
    /// The iterates settled but the tracked truth is still more than
    /// [`STALL_RELATIVE_ERROR`] away: the samples do not determine the function.
    Stalled,
    MaxIterations,
}

pub const DIVERGENCE_STEPS: usize = 5;

pub const STALL_RELATIVE_ERROR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub iterations_run: usize,
    pub status: Status,
    pub converged: bool,
    pub successive_changes: Vec<f64>,
    /// `||f - f_n||`, present when a truth was supplied.
    pub true_errors: Option<Vec<f64>>,
    /// `||f||`, present when a truth was supplied.
    pub truth_norm: Option<f64>,
    /// Geometric rate fitted to the true errors, or to the successive changes without a truth.
    pub alpha_fit: Option<f64>,
    /// `max_n e_{n+1} / e_n` over the true errors.
    pub max_ratio: Option<f64>,
    /// `e_1 / alpha_fit`.
    pub prefactor: Option<f64>,
    pub timestamps: Vec<String>,
}

impl ReconstructionReport {
    pub fn final_relative_error(&self) -> Option<f64> {
        let e = self.true_errors.as_ref()?.last()?;
        Some(e / self.truth_norm?)
    }

    /// `n,successive_change,true_error,timestamp`, one row per iteration.
    pub fn iterations_csv(&self) -> String {
        let mut out = String::from("n,successive_change,true_error,timestamp\n");
        for n in 0..self.iterations_run {
            let err = self
                .true_errors
                .as_ref()
                .map(|e| format!("{:e}", e[n]))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{:e},{},{}\n",
                n + 1,
                self.successive_changes[n],
                err,
                self.timestamps[n]
            ));
        }
        out
    }
}

/// ISO-8601 UTC time of the current iteration. `SOURCE_DATE_EPOCH`, when set, pins it
/// so that repeated runs produce identical logs.
pub fn timestamp_now() -> String {
    let pinned = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    pinned
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Micros, true)
}

pub fn reconstruct(
    samples: &[f64],
    ops: &Operators<'_>,
    opts: &ReconstructionOptions,
) -> Result<(CoefficientArray, ReconstructionReport)> {
    opts.validate()?;
    if samples.len() != ops.x.len() {
        return Err(Error::LengthMismatch { expected: ops.x.len(), got: samples.len() });
    }
    let spec = *ops.bank.spec();
    if let Some(t) = &opts.truth {
        t.spec().check_same(&spec)?;
    }
    let e = opts.exponents;
    let mut c = CoefficientArray::zeros(ops.bank.r(), &spec);
    let mut current = DiscreteField::zeros(spec);
    let mut changes = Vec::new();
    let mut errors = opts.truth.as_ref().map(|_| Vec::new());
    let mut timestamps = Vec::new();
    let mut growing = 0;
    let mut status = Status::MaxIterations;

    for _ in 0..opts.max_iter {
        let dc = ops.increment(samples, &current)?;
        c.axpy(1.0, &dc);
        let change = mixed_lebesgue_norm(&synthesize(&dc, ops.bank)?, e);
        current = synthesize(&c, ops.bank)?;
        if let (Some(t), Some(errs)) = (&opts.truth, errors.as_mut()) {
            errs.push(mixed_lebesgue_norm(&lin_comb(&[(1.0, t), (-1.0, &current)])?, e));
        }
        timestamps.push(timestamp_now());
        if let Some(&prev) = changes.last() {
            growing = if change > prev { growing + 1 } else { 0 };
        }
        changes.push(change);
        if change <= opts.tol {
            status = Status::Converged;
            break;
        }
        if growing >= DIVERGENCE_STEPS || !change.is_finite() {
            status = Status::Diverged;
            break;
        }
    }

    let truth_norm = opts.truth.as_ref().map(|t| mixed_lebesgue_norm(t, e));
    if let (Status::Converged, Some(errs), Some(norm)) = (status, &errors, truth_norm) {
        if errs.last().is_some_and(|&last| last > STALL_RELATIVE_ERROR * norm) {
            status = Status::Stalled;
        }
    }

    let fit_source = errors.as_deref().unwrap_or(&changes);
    let alpha_fit = fit_decay(fit_source).ok();
    let max_ratio = errors.as_ref().and_then(|e| max_ratio(e));
    let prefactor = match (&errors, alpha_fit) {
        (Some(e), Some(a)) if a > 0.0 => Some(e[0] / a),
        _ => None,
    };
    let report = ReconstructionReport {
        iterations_run: changes.len(),
        status,
        converged: status == Status::Converged,
        successive_changes: changes,
        truth_norm,
        true_errors: errors,
        alpha_fit,
        max_ratio,
        prefactor,
        timestamps,
    };
    Ok((c, report))
}

/// `max_n e_{n+1} / e_n` over consecutive positive entries.
pub fn max_ratio(errors: &[f64]) -> Option<f64> {
    errors
        .windows(2)
        .filter(|w| w[0] > 0.0)
        .map(|w| w[1] / w[0])
        .reduce(f64::max)
}

/// `exp` of the least-squares slope of `ln e_n` against `n`, over the entries above
/// `10 eps e_1`.
pub fn fit_decay(errors: &[f64]) -> Result<f64> {
    let first = errors.first().copied().unwrap_or(0.0);
    let floor = 10.0 * f64::EPSILON * first;
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, &e)| e > 0.0 && e > floor && e.is_finite())
        .map(|(n, &e)| (n as f64, e.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "decay fit needs at least 3 usable entries, got {}",
            pts.len()
        )));
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok((sxy / sxx).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionEstimate {
    pub alpha: f64,
    pub trials: usize,
    pub gamma: f64,
    pub a: f64,
}

/// Longest orbit `g, T g, T^2 g, ...` followed per trial.
pub const ORBIT_STEPS: usize = 64;

/// Orbits stop once consecutive ratios agree to this relative tolerance.
pub const ORBIT_TOL: f64 = 1e-9;

/// Coefficient dimensions up to which `T` is assembled column by column.
pub const DENSE_LIMIT: usize = 2048;

/// Monte-Carlo estimate of the contraction constant of `T = I - P A` on the space.
///
/// Each trial starts from a random member `g` and follows its normalized orbit under
/// `T` (power iteration), recording every ratio `||T g|| / ||g||`. Orbits are iterated
/// on coefficients; on fields, rounding noise outside the space is not contracted and
/// would eventually dominate. Orbits settle on the spectral radius, which for a
/// non-normal `T` can sit below the norm reached by a single step. When the space is
/// small enough, one extra orbit starts from the top singular vector of `T` in the
/// grid `L^2` inner product, so for `p = q = 2` the estimate is the operator norm.
/// The estimate is the largest ratio seen.
pub fn estimate_contraction(
    ops: &Operators<'_>,
    e: MixedExponents,
    trials: usize,
    seed: u64,
) -> Result<ContractionEstimate> {
    if trials < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 trials, got {trials}")));
    }
    let orbit = |mut c: CoefficientArray| -> Result<f64> {
        let mut norm = mixed_lebesgue_norm(&synthesize(&c, ops.bank)?, e);
        let mut best: f64 = 0.0;
        let mut prev = f64::NAN;
        for _ in 0..ORBIT_STEPS {
            if !(norm > 0.0) {
                break;
            }
            c.scale(1.0 / norm);
            c = ops.error_operator_coefficients(&c)?;
            let ratio = mixed_lebesgue_norm(&synthesize(&c, ops.bank)?, e);
            best = best.max(ratio);
            if (ratio - prev).abs() <= ORBIT_TOL * ratio {
                break;
            }
            prev = ratio;
            norm = ratio;
        }
        Ok(best)
    };
    let random = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(t as u64);
            orbit(CoefficientArray::random(ops.bank.r(), ops.bank.spec(), &mut rng))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut alpha = random.into_iter().fold(0.0, f64::max);
    if let Some(v) = top_singular_vector(ops)? {
        alpha = alpha.max(orbit(v)?);
    }
    Ok(ContractionEstimate { alpha, trials, gamma: ops.x.gamma_nominal(), a: ops.kernels.a })
}

/// Maximizer of `||T c||_G / ||c||_G`, with `||c||_G^2 = c^T G c` the grid `L^2` norm of
/// the synthesized field. `None` above [`DENSE_LIMIT`] unknowns.
fn top_singular_vector(ops: &Operators<'_>) -> Result<Option<CoefficientArray>> {
    let (r, spec) = (ops.bank.r(), ops.bank.spec());
    let n = ops.bank.unknowns();
    if n > DENSE_LIMIT {
        return Ok(None);
    }
    let columns = (0..n)
        .into_par_iter()
        .map(|j| {
            let mut unit = vec![0.0; n];
            unit[j] = 1.0;
            let c = CoefficientArray::from_entries(r, spec, unit)?;
            Ok(ops.error_operator_coefficients(&c)?.entries().to_vec())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let t = DMatrix::from_fn(n, n, |i, j| columns[j][i]);
    // in the basis u = L^T c the G-norm is Euclidean and T becomes L^T T L^{-T}
    let l = ops.gram.factor();
    let lt = l.transpose();
    let b = match l.solve_lower_triangular(&(&lt * &t).transpose()) {
        Some(x) => x.transpose(),
        None => return Ok(None),
    };
    let eig = (b.transpose() * &b).symmetric_eigen();
    let top = eig.eigenvalues.imax();
    let u = eig.eigenvectors.column(top).into_owned();
    let c = match lt.solve_upper_triangular(&u) {
        Some(c) => c,
        None => return Ok(None),
    };
    Ok(Some(CoefficientArray::from_entries(r, spec, c.as_slice().to_vec())?))
}
