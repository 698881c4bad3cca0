//! Invariant suites run by `verify`, and the brute-force oracles they compare against.
//!
//! Every check runs on the configuration's own grid and operators unless it needs
//! something the configuration cannot provide: the oracle comparisons use the
//! configuration's periods at the coarsest resolution (`m = 4`), and the two limit
//! checks (oscillation and smoothing) use fixed fine two-dimensional grids, since a
//! limit as the window shrinks is only visible once the window spans several cells.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SamplingConfig};
use crate::error::Result;
use crate::experiment::{derive_seed, sweep_config, Pipeline};
use crate::grid::{convolve, integrate, lin_comb, reflect_conjugate, DiscreteField, GridSpec};
use crate::kernel::{rasterize, KernelSpec, Shape};
use crate::norms::{
    lp_norm, mixed_lebesgue_norm, mixed_seq_norm, oscillation, wiener_amalgam_norm, MixedExponents,
};
use crate::reconstruct::{
    approx_operator, quasi_interpolant, reconstruct, spread, ReconstructionOptions,
};
use crate::sampling::{
    acquire_samples, build_bupu, generate_sampling_set, make_kernels, Bupu, KernelMode, PsiShape,
    SamplingMode,
};
use crate::space::{
    estimate_norm_equivalence, project, random_test_field, synthesize, CoefficientArray,
    GeneratorBank,
};

/// Oracle agreement.
pub const ORACLE_TOL: f64 = 1e-12;
/// Relative slack on the norm inequalities.
pub const INEQUALITY_SLACK: f64 = 1e-8;
/// Largest admissible final term of a limit sequence, relative to the generator norm.
pub const LIMIT_FRACTION: f64 = 0.05;
/// Slack on the contraction trends.
pub const TREND_SLACK: f64 = 0.05;
/// Random draws behind each inequality check.
pub const DRAWS: usize = 100;

/// Resolution of the oscillation-limit grid.
pub const OSCILLATION_GRID_M: usize = 256;
/// Resolution of the smoothing-limit grid.
pub const SMOOTHING_GRID_M: usize = 32;
const LIMIT_GRID_PERIOD: usize = 5;

const VERIFY_STREAM: u64 = 99;

/// Brute-force reference implementations: direct nested sums over multi-indices,
/// sharing nothing with the production code beyond grid indexing.
pub mod oracle {
    use crate::grid::{DiscreteField, GridSpec};
    use crate::norms::{oscillation_radius, MixedExponents};
    use crate::sampling::Bupu;
    use crate::space::{CoefficientArray, GeneratorBank};

    fn units(spec: &GridSpec, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| i / spec.m()).collect()
    }

    pub fn mixed_lebesgue(f: &DiscreteField, e: MixedExponents) -> f64 {
        let spec = f.spec();
        let h = spec.cell_width();
        let mut inner = vec![0.0; spec.extent(0)];
        for cell in 0..spec.len() {
            let i = spec.multi_index(cell)[0];
            inner[i] += f.values()[cell].abs().powf(e.q) * h.powi(spec.d() as i32);
        }
        let outer: f64 = inner.iter().map(|v| v.powf(e.p / e.q) * h).sum();
        outer.powf(1.0 / e.p)
    }

    pub fn mixed_seq(c: &CoefficientArray, i: usize, e: MixedExponents) -> f64 {
        let mut inner = vec![0.0; c.lattice_len() / c.inner_len()];
        for k in 0..c.lattice_len() {
            let idx = c.lattice_index(k);
            inner[idx[0]] += c.get(i, &idx).abs().powf(e.q);
        }
        inner.iter().map(|v| v.powf(e.p / e.q)).sum::<f64>().powf(1.0 / e.p)
    }

    /// Sum over outer unit intervals of the largest (over the interval's grid rows)
    /// sum over inner unit cubes of the cube maximum.
    pub fn wiener(f: &DiscreteField, e: MixedExponents) -> f64 {
        let spec = f.spec();
        let mut total = 0.0;
        for n in 0..spec.period_x() {
            let mut best: f64 = 0.0;
            for xi in n * spec.m()..(n + 1) * spec.m() {
                let mut cube_max = std::collections::BTreeMap::<Vec<usize>, f64>::new();
                for cell in 0..spec.len() {
                    let idx = spec.multi_index(cell);
                    if idx[0] != xi {
                        continue;
                    }
                    let v = f.values()[cell].abs().powf(e.q);
                    let slot = cube_max.entry(units(spec, &idx[1..])).or_insert(0.0);
                    *slot = slot.max(v);
                }
                best = best.max(cube_max.values().sum::<f64>().powf(e.p / e.q));
            }
            total += best;
        }
        total.powf(1.0 / e.p)
    }

    pub fn oscillation(f: &DiscreteField, delta: f64) -> DiscreteField {
        let spec = *f.spec();
        let w = oscillation_radius(spec.m(), delta) as i64;
        let dim = spec.dim();
        let side = (2 * w + 1) as usize;
        DiscreteField::from_values(
            spec,
            (0..spec.len())
                .map(|cell| {
                    let base: Vec<i64> = spec.multi_index(cell).iter().map(|&i| i as i64).collect();
                    let v = f.values()[cell];
                    let mut best: f64 = 0.0;
                    for t in 0..side.pow(dim as u32) {
                        let mut rest = t;
                        let idx: Vec<i64> = base
                            .iter()
                            .map(|&b| {
                                let o = (rest % side) as i64 - w;
                                rest /= side;
                                b + o
                            })
                            .collect();
                        best = best.max((f.get(&idx) - v).abs());
                    }
                    best
                })
                .collect(),
        )
        .expect("finite")
    }

    pub fn convolve(f: &DiscreteField, g: &DiscreteField) -> DiscreteField {
        let spec = *f.spec();
        let h = spec.cell_volume();
        DiscreteField::from_values(
            spec,
            (0..spec.len())
                .map(|k| {
                    let kk = spec.multi_index(k);
                    let mut s = 0.0;
                    for j in 0..spec.len() {
                        let jj = spec.multi_index(j);
                        let diff: Vec<i64> = kk.iter().zip(&jj).map(|(&a, &b)| a as i64 - b as i64).collect();
                        s += f.values()[j] * g.get(&diff);
                    }
                    h * s
                })
                .collect(),
        )
        .expect("finite")
    }

    /// `sum_i sum_k c_i(k) phi_i(x - k)`, each generator evaluated analytically.
    pub fn synthesize(c: &CoefficientArray, bank: &GeneratorBank) -> DiscreteField {
        let spec = *bank.spec();
        DiscreteField::from_values(
            spec,
            (0..spec.len())
                .map(|cell| {
                    let x = spec.midpoint_coords(cell);
                    let mut s = 0.0;
                    for (i, phi) in bank.kernels().iter().enumerate() {
                        for k in 0..c.lattice_len() {
                            let lk = c.lattice_index(k);
                            let delta: Vec<f64> = (0..x.len())
                                .map(|a| spec.wrap_delta(a, x[a] - lk[a] as f64 - phi.center[a]))
                                .collect();
                            s += c.get(i, &lk) * phi.eval_from_center(&delta);
                        }
                    }
                    s
                })
                .collect(),
        )
        .expect("finite")
    }

    pub fn spread(values: &[f64], bupu: &Bupu) -> DiscreteField {
        let spec = *bupu.spec();
        DiscreteField::from_values(
            spec,
            (0..spec.len())
                .map(|cell| values.iter().enumerate().map(|(j, v)| v * bupu.weight(j, cell)).sum())
                .collect(),
        )
        .expect("finite")
    }

    /// Nearest sample by exhaustive search, lowest index on ties.
    pub fn nearest_sample(points: &[Vec<f64>], spec: &GridSpec, cell: usize) -> usize {
        let p = spec.midpoint_coords(cell);
        let d2: Vec<f64> = points
            .iter()
            .map(|s| {
                (0..p.len())
                    .map(|a| {
                        let t = spec.wrap_delta(a, p[a] - s[a]);
                        t * t
                    })
                    .sum()
            })
            .collect();
        let min = d2.iter().cloned().fold(f64::INFINITY, f64::min);
        d2.iter().position(|&v| v == min).expect("nonempty sampling set")
    }
}

/// The catalog shapes a generator may take: box, tent, B-splines of orders 1 to 4 and
/// a truncated Gaussian.
pub fn catalog(dim: usize) -> Vec<KernelSpec> {
    let mut out = vec![KernelSpec::new(Shape::Box, dim), KernelSpec::new(Shape::Tent, dim)];
    out.extend((1..=4).map(|n| KernelSpec::new(Shape::BSpline(n), dim)));
    out.push(KernelSpec::new(Shape::TruncatedGaussian { sigma: 0.5, cutoff: 3.0 }, dim));
    out
}

/// The continuous catalog members, for which the oscillation and smoothing errors
/// vanish in the limit.
pub fn continuous_catalog(dim: usize) -> Vec<KernelSpec> {
    catalog(dim).into_iter().filter(|k| k.shape.is_continuous()).collect()
}

/// `W(L^{1,1})` norms of `osc_{2^-k}(phi)` for `k = 0, ..., ceil(log2 m) - 1`.
pub fn oscillation_sequence(phi: &DiscreteField) -> Result<Vec<f64>> {
    let m = phi.spec().m();
    let last = (m as f64).log2().ceil() as i32 - 1;
    (0..=last)
        .map(|k| Ok(wiener_amalgam_norm(&oscillation(phi, 0.5f64.powi(k))?, MixedExponents::ONE)))
        .collect()
}

/// Raster of `psi*` for the box of side `a`, placed so that `convolve(f, raster)` at
/// index `k` is the smoothed value at the midpoint of cell `k`. The box is even; its
/// jump points are given the midpoint value by averaging over coordinate reflections,
/// which keeps the discrete mass exact when `a m` is an integer.
pub fn smoothing_raster(a: f64, spec: &GridSpec) -> DiscreteField {
    let dim = spec.dim();
    let psi = KernelSpec::new(Shape::Box, dim).scaled(a).unit_mass();
    let h = spec.cell_width();
    DiscreteField::from_fn(*spec, |x| {
        let delta: Vec<f64> = (0..dim).map(|ax| spec.wrap_delta(ax, x[ax] - h / 2.0)).collect();
        let flips = 1usize << dim;
        (0..flips)
            .map(|s| {
                let d: Vec<f64> =
                    delta.iter().enumerate().map(|(ax, &v)| if s >> ax & 1 == 1 { -v } else { v }).collect();
                psi.eval_from_center(&d)
            })
            .sum::<f64>()
            / flips as f64
    })
}

/// `W(L^{1,1})` norms of `phi - phi * psi*_{2^-k}` for `k = 1, ..., ceil(log2 m) - 1`.
pub fn smoothing_sequence(phi: &DiscreteField) -> Result<Vec<f64>> {
    let spec = phi.spec();
    let last = (spec.m() as f64).log2().ceil() as i32 - 1;
    (1..=last)
        .map(|k| {
            let smooth = convolve(phi, &smoothing_raster(0.5f64.powi(k), spec))?;
            Ok(wiener_amalgam_norm(&lin_comb(&[(1.0, phi), (-1.0, &smooth)])?, MixedExponents::ONE))
        })
        .collect()
}

/// Whether a sequence never rises by more than `slack`.
pub fn nonincreasing(seq: &[f64], slack: f64) -> bool {
    seq.windows(2).all(|w| w[1] <= w[0] + slack)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    /// Replace the partition of unity with one that leaves a cell uncovered.
    pub corrupt_bupu: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> Vec<&CheckRow> {
        self.rows.iter().filter(|r| !r.passed).collect()
    }

    /// 0 when every check passed, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            3
        }
    }

    pub fn table(&self) -> String {
        let w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<16} {:<w$} {:<6} detail\n", "suite", "check", "result");
        for r in &self.rows {
            let status = if r.passed { "PASS" } else { "FAIL" };
            let _ = writeln!(out, "{:<16} {:<w$} {:<6} {}", r.suite, r.name, status, r.detail);
        }
        let failed = self.failures().len();
        let _ = writeln!(out, "{} checks, {} failed", self.rows.len(), failed);
        out
    }
}

struct Checks {
    suite: &'static str,
    rows: Vec<CheckRow>,
}

impl Checks {
    fn new(suite: &'static str) -> Self {
        Checks { suite, rows: Vec::new() }
    }

    fn run(&mut self, name: &str, check: impl FnOnce() -> Result<(bool, String)>) {
        let (passed, detail) = check().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.rows.push(CheckRow { suite: self.suite, name: name.to_string(), passed, detail });
    }
}

fn within(err: f64, tol: f64) -> (bool, String) {
    (err <= tol, format!("max deviation {err:.2e} (tol {tol:.0e})"))
}

fn max_diff(a: &DiscreteField, b: &DiscreteField) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn uniform_field(spec: &GridSpec, rng: &mut impl Rng) -> DiscreteField {
    DiscreteField::from_values(*spec, (0..spec.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect())
        .expect("finite")
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, VERIFY_STREAM));
    rng.set_stream(index);
    rng
}

fn random_exponents(rng: &mut impl Rng) -> MixedExponents {
    const CHOICES: [f64; 4] = [1.0, 1.5, 2.0, 3.0];
    MixedExponents { p: CHOICES[rng.gen_range(0..4)], q: CHOICES[rng.gen_range(0..4)] }
}

/// The configuration's periods at the coarsest legal resolution.
fn oracle_grid(spec: &GridSpec) -> Result<GridSpec> {
    GridSpec::new(spec.d(), spec.period_x(), spec.period_y(), 4)
}

fn field_grid_suite(p: &Pipeline) -> Vec<CheckRow> {
    let mut c = Checks::new("field_grid");
    let spec = p.spec;
    c.run("periodic-indexing", || {
        let f = random_test_field(&spec, &mut stream(p.seed, 1));
        let ok = (0..spec.dim()).all(|axis| {
            let mut shift = vec![0i64; spec.dim()];
            shift[axis] = spec.extent(axis) as i64;
            f.translate(&shift) == f
        });
        Ok((ok, "translation by a full period per axis".into()))
    });
    c.run("convolution-bilinearity", || {
        let mut rng = stream(p.seed, 2);
        let f = uniform_field(&spec, &mut rng);
        let g = uniform_field(&spec, &mut rng);
        let h = p.bank.raster(0);
        let (a, b) = (rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let lhs = convolve(&lin_comb(&[(a, &f), (b, &g)])?, h)?;
        let rhs = lin_comb(&[(a, &convolve(&f, h)?), (b, &convolve(&g, h)?)])?;
        Ok(within(max_diff(&lhs, &rhs), 1e-10))
    });
    c.run("convolve-oracle", || {
        let og = oracle_grid(&spec)?;
        let mut rng = stream(p.seed, 3);
        let f = uniform_field(&og, &mut rng);
        let g = rasterize(&KernelSpec::new(Shape::BSpline(3), og.dim()).centered(&vec![0.3; og.dim()]), &og)?;
        let mut err = max_diff(&convolve(&f, &g)?, &oracle::convolve(&f, &g));
        let g2 = uniform_field(&og, &mut rng);
        err = err.max(max_diff(&convolve(&f, &g2)?, &oracle::convolve(&f, &g2)));
        Ok(within(err, ORACLE_TOL))
    });
    c.run("convolution-amalgam-bound", || {
        // dense f against a compact kernel: W(f*g) <= W(g) ||f||_1
        let mut rng = stream(p.seed, 4);
        let shapes = catalog(spec.dim());
        let mut worst: f64 = 0.0;
        for _ in 0..DRAWS {
            let f = uniform_field(&spec, &mut rng);
            let shape = shapes[rng.gen_range(0..shapes.len())].clone();
            let center: Vec<f64> = (0..spec.dim()).map(|a| rng.gen_range(0.0..spec.period(a) as f64)).collect();
            let g = rasterize(&shape.scaled(rng.gen_range(0.25..0.5)).centered(&center), &spec)?;
            let l1 = integrate(&f.abs());
            let lhs = wiener_amalgam_norm(&convolve(&f, &g)?, MixedExponents::ONE);
            let rhs = wiener_amalgam_norm(&g, MixedExponents::ONE) * l1;
            worst = worst.max(lhs / rhs);
        }
        Ok((worst <= 1.0 + INEQUALITY_SLACK, format!("worst ratio {worst:.4} over {DRAWS} pairs")))
    });
    c.rows
}

fn norms_suite(p: &Pipeline) -> Vec<CheckRow> {
    let mut c = Checks::new("norms");
    let spec = p.spec;
    c.run("mixed-lebesgue-oracle", || {
        let og = oracle_grid(&spec)?;
        let mut rng = stream(p.seed, 10);
        let mut err: f64 = 0.0;
        for _ in 0..8 {
            let f = uniform_field(&og, &mut rng);
            let e = random_exponents(&mut rng);
            err = err.max(rel_diff(mixed_lebesgue_norm(&f, e), oracle::mixed_lebesgue(&f, e)));
        }
        Ok(within(err, ORACLE_TOL))
    });
    c.run("mixed-seq-oracle", || {
        let mut rng = stream(p.seed, 11);
        let mut err: f64 = 0.0;
        for _ in 0..8 {
            let cf = CoefficientArray::random(p.bank.r(), &spec, &mut rng);
            let e = random_exponents(&mut rng);
            for i in 0..cf.r() {
                err = err.max(rel_diff(mixed_seq_norm(&cf, i, e), oracle::mixed_seq(&cf, i, e)));
            }
        }
        Ok(within(err, ORACLE_TOL))
    });
    c.run("wiener-amalgam-oracle", || {
        let og = oracle_grid(&spec)?;
        let mut rng = stream(p.seed, 12);
        let mut err: f64 = 0.0;
        for _ in 0..8 {
            let f = uniform_field(&og, &mut rng);
            let e = random_exponents(&mut rng);
            err = err.max(rel_diff(wiener_amalgam_norm(&f, e), oracle::wiener(&f, e)));
        }
        Ok(within(err, ORACLE_TOL))
    });
    c.run("oscillation-oracle", || {
        let og = oracle_grid(&spec)?;
        let f = uniform_field(&og, &mut stream(p.seed, 13));
        let mut err: f64 = 0.0;
        for delta in [0.25, 0.5, 1.0] {
            err = err.max(max_diff(&oscillation(&f, delta)?, &oracle::oscillation(&f, delta)));
        }
        Ok(within(err, ORACLE_TOL))
    });
    c.run("equal-exponents-reduce-to-lp", || {
        let f = random_test_field(&spec, &mut stream(p.seed, 14));
        let mut err: f64 = 0.0;
        for q in [1.0, 1.5, 2.0, 3.0, p.exponents.p] {
            err = err.max(rel_diff(mixed_lebesgue_norm(&f, MixedExponents::uniform(q)?), lp_norm(&f, q)));
        }
        Ok(within(err, ORACLE_TOL))
    });
    c.run("homogeneity", || {
        let mut rng = stream(p.seed, 15);
        let f = random_test_field(&spec, &mut rng);
        let cf = CoefficientArray::random(p.bank.r(), &spec, &mut rng);
        let alpha = -2.5;
        let e = p.exponents;
        let mut scaled_c = cf.clone();
        scaled_c.scale(alpha);
        let fs = f.scale(alpha);
        let pairs = [
            (mixed_lebesgue_norm(&fs, e), mixed_lebesgue_norm(&f, e)),
            (lp_norm(&fs, e.p), lp_norm(&f, e.p)),
            (wiener_amalgam_norm(&fs, e), wiener_amalgam_norm(&f, e)),
            (mixed_seq_norm(&scaled_c, 0, e), mixed_seq_norm(&cf, 0, e)),
        ];
        let err = pairs.iter().map(|&(s, n)| rel_diff(s, alpha.abs() * n)).fold(0.0, f64::max);
        Ok(within(err, ORACLE_TOL))
    });
    c.run("monotonicity", || {
        let mut rng = stream(p.seed, 16);
        let g = random_test_field(&spec, &mut rng);
        let f = DiscreteField::from_values(spec, g.values().iter().map(|v| v * rng.gen_range(-1.0..=1.0)).collect())?;
        let e = p.exponents;
        let ok = mixed_lebesgue_norm(&f, e) <= mixed_lebesgue_norm(&g, e)
            && lp_norm(&f, e.p) <= lp_norm(&g, e.p)
            && wiener_amalgam_norm(&f, e) <= wiener_amalgam_norm(&g, e);
        Ok((ok, "|f| <= |g| pointwise".into()))
    });
    c.run("generator-oscillation-finite", || {
        let mut worst: f64 = 0.0;
        for k in catalog(spec.dim()) {
            for v in oscillation_sequence(&rasterize(&k, &spec)?)? {
                if !v.is_finite() {
                    return Ok((false, format!("{}: non-finite oscillation norm", k.shape)));
                }
                worst = worst.max(v);
            }
        }
        Ok((true, format!("largest W(osc) {worst:.4}")))
    });
    c.run("oscillation-limit", || {
        let fine = GridSpec::new(1, LIMIT_GRID_PERIOD, LIMIT_GRID_PERIOD, OSCILLATION_GRID_M)?;
        limit_check(&fine, oscillation_sequence)
    });
    c.run("smoothing-limit", || {
        let fine = GridSpec::new(1, LIMIT_GRID_PERIOD, LIMIT_GRID_PERIOD, SMOOTHING_GRID_M)?;
        limit_check(&fine, smoothing_sequence)
    });
    c.rows
}

/// Every continuous catalog generator: the sequence is nonincreasing and ends below
/// [`LIMIT_FRACTION`] of the generator norm.
fn limit_check(
    spec: &GridSpec,
    sequence: fn(&DiscreteField) -> Result<Vec<f64>>,
) -> Result<(bool, String)> {
    let results = continuous_catalog(spec.dim())
        .into_par_iter()
        .map(|k| {
            let phi = rasterize(&k, spec)?;
            let norm = wiener_amalgam_norm(&phi, MixedExponents::ONE);
            let seq = sequence(&phi)?;
            let last = seq.last().copied().unwrap_or(f64::INFINITY) / norm;
            Ok((nonincreasing(&seq, 1e-10) && last <= LIMIT_FRACTION, format!("{} {last:.3}", k.shape)))
        })
        .collect::<Result<Vec<(bool, String)>>>()?;
    let ok = results.iter().all(|r| r.0);
    let parts: Vec<&str> = results.iter().map(|r| r.1.as_str()).collect();
    Ok((ok, format!("final/W(phi) at m={}: {}", spec.m(), parts.join(", "))))
}

fn shift_invariant_suite(p: &Pipeline) -> Vec<CheckRow> {
    let mut c = Checks::new("shift_invariant");
    let spec = p.spec;
    c.run("synthesize-oracle", || {
        let og = oracle_grid(&spec)?;
        let bank = GeneratorBank::new(p.bank.kernels().to_vec(), og)?;
        let cf = CoefficientArray::random(bank.r(), &og, &mut stream(p.seed, 20));
        Ok(within(max_diff(&synthesize(&cf, &bank)?, &oracle::synthesize(&cf, &bank)), ORACLE_TOL))
    });
    c.run("gram-positive-definite", || {
        let (lo, hi) = (p.gram.min_eigenvalue(), p.gram.max_eigenvalue());
        let g = p.gram.matrix();
        let asym = (g - &g.transpose()).abs().max();
        Ok((lo > 0.0 && asym <= 1e-12 * hi, format!("eigenvalues [{lo:.3e}, {hi:.3e}], asymmetry {asym:.1e}")))
    });
    c.run("projection-idempotence", || {
        let g = random_test_field(&spec, &mut stream(p.seed, 21));
        let c1 = project(&g, &p.gram)?;
        let c2 = project(&synthesize(&c1, &p.bank)?, &p.gram)?;
        let err = c1.entries().iter().zip(c2.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        Ok(within(err, 1e-9))
    });
    c.run("projection-linearity", || {
        let mut rng = stream(p.seed, 22);
        let f = random_test_field(&spec, &mut rng);
        let g = random_test_field(&spec, &mut rng);
        let (a, b) = (1.75, -0.5);
        let lhs = project(&lin_comb(&[(a, &f), (b, &g)])?, &p.gram)?;
        let mut rhs = project(&f, &p.gram)?;
        rhs.scale(a);
        rhs.axpy(b, &project(&g, &p.gram)?);
        let err = lhs.entries().iter().zip(rhs.entries()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        Ok(within(err, 1e-9))
    });
    let generator_w: Vec<f64> =
        (0..p.bank.r()).map(|i| wiener_amalgam_norm(p.bank.raster(i), MixedExponents::ONE)).collect();
    c.run("absolute-convergence-bound", || {
        let mut rng = stream(p.seed, 23);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let cf = CoefficientArray::random(p.bank.r(), &spec, &mut rng);
            let bound: f64 = (0..cf.r()).map(|i| cf.max_abs(i) * generator_w[i]).sum();
            worst = worst.max(synthesize(&cf, &p.bank)?.max_abs() / bound);
        }
        Ok((worst <= 1.0 + INEQUALITY_SLACK, format!("worst sup ratio {worst:.4}")))
    });
    c.run("synthesis-bound", || {
        let mut rng = stream(p.seed, 24);
        let e = p.exponents;
        let mut worst: f64 = 0.0;
        for _ in 0..DRAWS {
            let cf = CoefficientArray::random(p.bank.r(), &spec, &mut rng);
            let bound: f64 = (0..cf.r()).map(|i| mixed_seq_norm(&cf, i, e) * generator_w[i]).sum();
            worst = worst.max(mixed_lebesgue_norm(&synthesize(&cf, &p.bank)?, e) / bound);
        }
        Ok((worst <= 1.0 + INEQUALITY_SLACK, format!("worst ratio {worst:.4} over {DRAWS} draws")))
    });
    c.run("norm-equivalence", || {
        let a = estimate_norm_equivalence(&p.bank, p.exponents, DRAWS, derive_seed(p.seed, 25))?;
        let b = estimate_norm_equivalence(&p.bank, p.exponents, DRAWS, derive_seed(p.seed, 26))?;
        let spread = (a.d1 - b.d1).abs() / (0.5 * (a.d1 + b.d1));
        let ok = a.d1 > 0.0 && b.d1 > 0.0 && a.d2.is_finite() && spread <= 0.2;
        Ok((ok, format!("D1 {:.4} / {:.4}, D2 {:.4}, seed spread {:.1}%", a.d1, b.d1, a.d2, 100.0 * spread)))
    });
    c.rows
}

fn sampling_suite(p: &Pipeline) -> Vec<CheckRow> {
    let mut c = Checks::new("sampling");
    let spec = p.spec;
    c.run("partition-of-unity", || {
        let sums = p.bupu.weight_sums();
        let bad: Vec<usize> = (0..sums.len()).filter(|&i| sums[i] != 1.0).collect();
        Ok(match bad.first() {
            None => (true, format!("all {} cells sum to 1", sums.len())),
            Some(&first) => (false, format!("{} cells off, first cell {first} sums to {}", bad.len(), sums[first])),
        })
    });
    c.run("support-in-ball", || {
        if !p.density.certified {
            return Ok((
                true,
                format!("density not certified (worst gap {:.4} >= {}), nothing to check", p.density.worst_gap, p.config.gamma),
            ));
        }
        let far = p.bupu.distances().iter().filter(|&&d| d >= p.config.gamma).count();
        Ok((far == 0, format!("{far} cells farther than {} from their sample", p.config.gamma)))
    });
    c.run("voronoi-argmin", || {
        let points = p.x.points();
        let bad = (0..spec.len())
            .filter(|&cell| p.bupu.assignment()[cell] as usize != oracle::nearest_sample(points, &spec, cell))
            .count();
        Ok((bad == 0, format!("{bad} of {} cells disagree with the exhaustive argmin", spec.len())))
    });
    c.run("spread-oracle", || {
        let mut rng = stream(p.seed, 30);
        let vals: Vec<f64> = (0..p.x.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        Ok(within(max_diff(&spread(&vals, &p.bupu)?, &oracle::spread(&vals, &p.bupu)), ORACLE_TOL))
    });
    c.run("point-value-consistency", || {
        let k = make_kernels(KernelMode::Single, PsiShape::Box, 1.0 / spec.m() as f64, &p.x, &spec, 1.0, 0)?;
        let f = random_test_field(&spec, &mut stream(p.seed, 31));
        let samples = acquire_samples(&f, &k, &p.x)?;
        let err = p
            .x
            .points()
            .iter()
            .zip(&samples)
            .map(|(s, v)| (v - f.values()[spec.nearest_cell_flat(s)]).abs())
            .fold(0.0, f64::max);
        Ok(within(err, 1e-14 * f.max_abs().max(1.0)))
    });
    c.run("kernel-normalization", || {
        let mut worst_mass: f64 = 0.0;
        let mut reach_ok = true;
        for j in 0..p.x.len() {
            let k = p.kernels.kernel(j);
            worst_mass = worst_mass.max((k.mass() - 1.0).abs());
            reach_ok &= (0..spec.dim()).all(|a| k.reach(a) <= p.kernels.a) && k.abs_mass <= p.kernels.m_bound;
        }
        Ok((
            reach_ok && worst_mass <= crate::sampling::NORMALIZATION_TOL,
            format!("mass deviation {worst_mass:.1e}, M = {:.4}", p.kernels.m_bound),
        ))
    });
    c.run("determinism", || {
        let again = Pipeline::build(&p.config)?;
        let ok = again.x == p.x && again.bupu == build_bupu(&p.x, &spec) && again.kernels == p.kernels;
        Ok((ok, "rebuilt sampling set, partition and kernels".into()))
    });
    c.rows
}

fn reconstruct_suite(p: &Pipeline) -> Vec<CheckRow> {
    let mut c = Checks::new("reconstruct");
    let spec = p.spec;
    let ops = p.ops();
    let e = p.exponents;
    c.run("error-recursion", || {
        let (_, f) = p.truth(0)?;
        let samples = acquire_samples(&f, &p.kernels, &p.x)?;
        let scale = mixed_lebesgue_norm(&f, e).max(1.0);
        let mut coeffs = CoefficientArray::zeros(p.bank.r(), &spec);
        let mut current = DiscreteField::zeros(spec);
        let mut err: f64 = 0.0;
        for _ in 0..6 {
            let residual = lin_comb(&[(1.0, &f), (-1.0, &current)])?;
            let predicted = mixed_lebesgue_norm(&ops.error_operator(&residual)?, e);
            coeffs.axpy(1.0, &ops.increment(&samples, &current)?);
            current = synthesize(&coeffs, &p.bank)?;
            let measured = mixed_lebesgue_norm(&lin_comb(&[(1.0, &f), (-1.0, &current)])?, e);
            err = err.max((measured - predicted).abs() / scale);
        }
        Ok(within(err, 1e-9))
    });
    c.run("operator-identity", || {
        // unit spacing puts every sample on a grid vertex
        let x = generate_sampling_set(
            SamplingMode::JitteredGrid { spacing: 1.0, jitter: 0.0, product: true },
            &spec,
            0,
        )?;
        let bupu = build_bupu(&x, &spec);
        let k = make_kernels(KernelMode::Single, p.config.kernel_shape, p.config.a, &x, &spec, p.config.m_target, 0)?;
        let psi_star = reflect_conjugate(&k.kernel(0).rasterize(&spec)?);
        let mut rng = stream(p.seed, 40);
        let mut err: f64 = 0.0;
        for _ in 0..10 {
            let f = uniform_field(&spec, &mut rng);
            let lhs = approx_operator(&acquire_samples(&f, &k, &x)?, &bupu)?;
            let rhs = quasi_interpolant(&convolve(&f, &psi_star)?, &x, &bupu)?;
            err = err.max(max_diff(&lhs, &rhs));
        }
        Ok(within(err, 1e-10))
    });
    c.run("zero-offset-matches-single", || {
        let single = make_kernels(KernelMode::Single, p.config.kernel_shape, p.config.a, &p.x, &spec, p.config.m_target, 0)?;
        let per = make_kernels(
            KernelMode::PerSample { max_offset: 0.0 },
            p.config.kernel_shape,
            p.config.a,
            &p.x,
            &spec,
            p.config.m_target,
            0,
        )?;
        let (_, f) = p.truth(1)?;
        let opts = ReconstructionOptions { max_iter: 40, ..p.options() }.with_truth(f.clone());
        let run = |k| -> Result<_> {
            let o = crate::reconstruct::Operators { kernels: k, ..ops };
            reconstruct(&acquire_samples(&f, k, &p.x)?, &o, &opts)
        };
        let (c1, r1) = run(&single)?;
        let (c2, r2) = run(&per)?;
        let ok = c1 == c2 && r1.successive_changes == r2.successive_changes && r1.true_errors == r2.true_errors;
        Ok((ok, format!("{} iterates compared bitwise", r1.iterations_run)))
    });
    c.run("quasi-interpolant-bound", || {
        let mut rng = stream(p.seed, 41);
        let w: Vec<f64> =
            (0..p.bank.r()).map(|i| wiener_amalgam_norm(p.bank.raster(i), MixedExponents::ONE)).collect();
        let mut constant: f64 = 0.0;
        for _ in 0..DRAWS {
            let cf = CoefficientArray::random(p.bank.r(), &spec, &mut rng);
            let q = quasi_interpolant(&synthesize(&cf, &p.bank)?, &p.x, &p.bupu)?;
            let denom: f64 = (0..cf.r()).map(|i| mixed_seq_norm(&cf, i, e) * w[i]).sum();
            constant = constant.max(mixed_lebesgue_norm(&q, e) / denom);
        }
        Ok((constant.is_finite() && constant > 0.0, format!("measured C = {constant:.4}")))
    });
    let contraction = p.contraction();
    c.run("contraction-bounds-iterates", || {
        let alpha = match &contraction {
            Ok(est) => est.alpha,
            Err(e) => return Ok((false, format!("error: {e}"))),
        };
        if alpha >= 1.0 {
            return Ok((true, format!("alpha_hat = {alpha:.4} >= 1, nothing to check")));
        }
        let mut worst: f64 = 0.0;
        for t in 0..3 {
            let errs = p.run_truth(100 + t)?.true_errors.unwrap_or_default();
            for w in errs.windows(2) {
                if w[0] > 0.0 {
                    worst = worst.max(w[1] / (alpha * w[0]));
                }
            }
        }
        Ok((worst <= 1.0 + 1e-6, format!("alpha_hat = {alpha:.4}, worst e_(n+1)/(alpha_hat e_n) = {worst:.4}")))
    });
    c.run("gamma-trend", || trend(p, &[1.0, 0.5, 0.25], |cfg, v| sweep_config(cfg, v, cfg.a, cfg.p, cfg.q)));
    c.run("kernel-scale-trend", || {
        let usable: Vec<f64> = [0.5, 0.25, 0.125]
            .into_iter()
            .filter(|&a| a <= spec.min_period() as f64 / 8.0 && a * spec.m() as f64 >= 2.0)
            .collect();
        trend(p, &usable, |cfg, v| sweep_config(cfg, cfg.gamma, v, cfg.p, cfg.q))
    });
    c.rows
}

/// `alpha_hat` along decreasing parameter values must not rise by more than [`TREND_SLACK`].
fn trend(
    p: &Pipeline,
    values: &[f64],
    vary: impl Fn(&ExperimentConfig, f64) -> Result<ExperimentConfig>,
) -> Result<(bool, String)> {
    if matches!(p.config.sampling, SamplingConfig::File { .. }) {
        return Ok((true, "sampling set read from file, nothing to vary".into()));
    }
    if values.len() < 2 {
        return Ok((true, format!("fewer than two admissible values at m = {}", p.spec.m())));
    }
    let alphas = values
        .iter()
        .map(|&v| Ok(Pipeline::build(&vary(&p.config, v)?)?.contraction()?.alpha))
        .collect::<Result<Vec<f64>>>()?;
    let ok = alphas.windows(2).all(|w| w[1] <= w[0] * (1.0 + TREND_SLACK));
    let listing: Vec<String> = values.iter().zip(&alphas).map(|(v, a)| format!("{v}: {a:.4}")).collect();
    Ok((ok, format!("alpha_hat {}", listing.join(", "))))
}

/// Leaves cell 0 without a sample.
fn corrupt(bupu: &Bupu) -> Bupu {
    let mut assignment = bupu.assignment().to_vec();
    assignment[0] = bupu.n_samples() as u32;
    Bupu::from_assignment_unchecked(*bupu.spec(), bupu.n_samples(), assignment)
}

/// Runs every suite on the configuration. Errors only when the configuration cannot be built.
pub fn cmd_verify(cfg: &ExperimentConfig, opts: VerifyOptions) -> Result<VerifyReport> {
    let mut p = Pipeline::build(cfg)?;
    if opts.corrupt_bupu {
        p.bupu = corrupt(&p.bupu);
    }
    let mut rows = field_grid_suite(&p);
    rows.extend(norms_suite(&p));
    rows.extend(shift_invariant_suite(&p));
    rows.extend(sampling_suite(&p));
    rows.extend(reconstruct_suite(&p));
    Ok(VerifyReport { rows })
}
