//! Sampling sets, density certification, Voronoi partitions of unity, averaging
//! kernels and sample acquisition.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, GridSpec};
use crate::kernel::{rasterize, KernelSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Structure {
    /// Cartesian product of per-axis coordinate lists.
    Product,
    Scattered,
}

/// A finite point set on the torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSet {
    points: Vec<Vec<f64>>,
    structure: Structure,
    gamma_nominal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SamplingMode {
    /// One point per cell of a lattice with spacing close to `spacing`, displaced by
    /// uniform jitter of at most `jitter` per coordinate.
    JitteredGrid { spacing: f64, jitter: f64, product: bool },
    UniformRandom { count: usize },
}

impl SamplingSet {
    pub fn new(points: Vec<Vec<f64>>, structure: Structure, gamma_nominal: f64, spec: &GridSpec) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("sampling set is empty".into()));
        }
        for (j, p) in points.iter().enumerate() {
            if p.len() != spec.dim() {
                return Err(Error::InvalidArgument(format!(
                    "point {j} has {} coordinates, expected {}",
                    p.len(),
                    spec.dim()
                )));
            }
            for (a, &c) in p.iter().enumerate() {
                if !(c >= 0.0 && c < spec.period(a) as f64) {
                    return Err(Error::InvalidArgument(format!(
                        "point {j} coordinate {a} = {c} lies outside [0, {})",
                        spec.period(a)
                    )));
                }
            }
        }
        Ok(SamplingSet { points, structure, gamma_nominal })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn structure(&self) -> Structure {
        self.structure
    }

    pub fn gamma_nominal(&self) -> f64 {
        self.gamma_nominal
    }

    /// Writes `# gamma=<value>` followed by one comma-separated point per line.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = fs::File::create(path)?;
        writeln!(out, "# gamma={}", self.gamma_nominal)?;
        for p in &self.points {
            let line: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(path: &Path, spec: &GridSpec) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let perr = |msg: String| Error::Parse { path: path.display().to_string(), msg };
        let mut gamma = None;
        let mut points = Vec::new();
        for (ln, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(v) = rest.trim().strip_prefix("gamma=") {
                    gamma = Some(v.trim().parse::<f64>().map_err(|e| perr(format!("line {}: {e}", ln + 1)))?);
                }
                continue;
            }
            let p = line
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| perr(format!("line {}: {e}", ln + 1)))?;
            points.push(p);
        }
        let gamma = gamma.ok_or_else(|| perr("missing `# gamma=<value>` header".into()))?;
        SamplingSet::new(points, Structure::Scattered, gamma, spec)
    }
}

pub fn generate_sampling_set(mode: SamplingMode, spec: &GridSpec, seed: u64) -> Result<SamplingSet> {
    let dim = spec.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SamplingMode::JitteredGrid { spacing, jitter, product } => {
            if !(spacing > 0.0 && spacing < spec.min_period() as f64) {
                return Err(Error::InvalidArgument(format!(
                    "spacing {spacing} must lie in (0, {})",
                    spec.min_period()
                )));
            }
            if !(jitter >= 0.0 && jitter < spacing / 2.0) {
                return Err(Error::InvalidArgument(format!(
                    "jitter {jitter} must lie in [0, spacing/2)"
                )));
            }
            let counts: Vec<usize> = (0..dim)
                .map(|a| ((spec.period(a) as f64 / spacing).round() as usize).max(1))
                .collect();
            let steps: Vec<f64> = (0..dim).map(|a| spec.period(a) as f64 / counts[a] as f64).collect();
            let draw = |rng: &mut ChaCha8Rng| {
                if jitter > 0.0 {
                    rng.gen_range(-jitter..=jitter)
                } else {
                    0.0
                }
            };
            let axis_lists: Option<Vec<Vec<f64>>> = product.then(|| {
                (0..dim)
                    .map(|a| {
                        (0..counts[a])
                            .map(|i| spec.wrap_coord(a, i as f64 * steps[a] + draw(&mut rng)))
                            .collect()
                    })
                    .collect()
            });
            let total: usize = counts.iter().product();
            let mut points = Vec::with_capacity(total);
            for flat in 0..total {
                let mut rem = flat;
                let mut idx = vec![0; dim];
                for a in (0..dim).rev() {
                    idx[a] = rem % counts[a];
                    rem /= counts[a];
                }
                let p: Vec<f64> = match &axis_lists {
                    Some(lists) => (0..dim).map(|a| lists[a][idx[a]]).collect(),
                    None => (0..dim)
                        .map(|a| spec.wrap_coord(a, idx[a] as f64 * steps[a] + draw(&mut rng)))
                        .collect(),
                };
                points.push(p);
            }
            let max_step = steps.iter().cloned().fold(0.0, f64::max);
            let gamma = (dim as f64).sqrt() * (max_step / 2.0 + jitter);
            let structure = if product || jitter == 0.0 { Structure::Product } else { Structure::Scattered };
            SamplingSet::new(points, structure, gamma, spec)
        }
        SamplingMode::UniformRandom { count } => {
            if count == 0 {
                return Err(Error::InvalidArgument("count must be positive".into()));
            }
            let points: Vec<Vec<f64>> = (0..count)
                .map(|_| {
                    (0..dim)
                        .map(|a| spec.wrap_coord(a, rng.gen_range(0.0..spec.period(a) as f64)))
                        .collect()
                })
                .collect();
            // covering radius of a lattice with the same point count
            let gamma = (dim as f64).sqrt() / 2.0 * (spec.volume() / count as f64).powf(1.0 / dim as f64);
            SamplingSet::new(points, Structure::Scattered, gamma, spec)
        }
    }
}

/// Nearest sample (lowest index on ties) and its squared distance, per grid cell.
fn nearest_samples(x: &SamplingSet, spec: &GridSpec) -> Vec<(u32, f64)> {
    (0..spec.len())
        .into_par_iter()
        .map(|cell| {
            let p = spec.midpoint_coords(cell);
            let mut best = (0u32, f64::INFINITY);
            for (j, s) in x.points.iter().enumerate() {
                let mut d2 = 0.0;
                for a in 0..p.len() {
                    let t = spec.wrap_delta(a, p[a] - s[a]);
                    d2 += t * t;
                    if d2 >= best.1 {
                        break;
                    }
                }
                if d2 < best.1 {
                    best = (j as u32, d2);
                }
            }
            best
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityReport {
    pub certified: bool,
    pub worst_gap: f64,
}

/// Largest distance from a grid midpoint to its nearest sample; certified when below `gamma`.
pub fn verify_density(x: &SamplingSet, gamma: f64, spec: &GridSpec) -> Result<DensityReport> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let worst_gap = nearest_samples(x, spec)
        .iter()
        .map(|&(_, d2)| d2)
        .fold(0.0, f64::max)
        .sqrt();
    Ok(DensityReport { certified: worst_gap < gamma, worst_gap })
}

/// Hard Voronoi partition of unity: every grid cell belongs to exactly one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Bupu {
    spec: GridSpec,
    n_samples: usize,
    assignment: Vec<u32>,
    distances: Vec<f64>,
}

pub fn build_bupu(x: &SamplingSet, spec: &GridSpec) -> Bupu {
    let nearest = nearest_samples(x, spec);
    Bupu {
        spec: *spec,
        n_samples: x.len(),
        assignment: nearest.iter().map(|&(j, _)| j).collect(),
        distances: nearest.iter().map(|&(_, d2)| d2.sqrt()).collect(),
    }
}

impl Bupu {
    /// Builds a partition from an explicit cell assignment without checking it.
    /// Used to exercise the partition checks with deliberately broken input.
    pub fn from_assignment_unchecked(spec: GridSpec, n_samples: usize, assignment: Vec<u32>) -> Self {
        let distances = vec![0.0; assignment.len()];
        Bupu { spec, n_samples, assignment, distances }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn assignment(&self) -> &[u32] {
        &self.assignment
    }

    /// Distance from each cell midpoint to its assigned sample.
    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    /// `beta_j` evaluated on a cell.
    pub fn weight(&self, j: usize, cell: usize) -> f64 {
        if self.assignment[cell] as usize == j {
            1.0
        } else {
            0.0
        }
    }

    /// `sum_j beta_j` per cell, accumulated over the sample indices.
    pub fn weight_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.assignment.len()];
        for (cell, &j) in self.assignment.iter().enumerate() {
            if (j as usize) < self.n_samples {
                sums[cell] += 1.0;
            }
        }
        sums
    }

    /// The indicator field of `beta_j`.
    pub fn indicator(&self, j: usize) -> DiscreteField {
        let vals = (0..self.assignment.len()).map(|c| self.weight(j, c)).collect();
        DiscreteField::from_values(self.spec, vals).expect("finite")
    }
}

/// Shape of the averaging function `psi`, normalized to unit mass with support `[-1/2, 1/2]^(d+1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PsiShape {
    Box,
    Tent,
    /// `alpha * box - (alpha - 1) * box(half side)`, unit mass, with `int |psi|` set by `m_target`.
    Signed,
}

impl std::str::FromStr for PsiShape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "box" => Ok(PsiShape::Box),
            "tent" => Ok(PsiShape::Tent),
            "signed" => Ok(PsiShape::Signed),
            other => Err(Error::InvalidKernel(format!("unknown averaging shape `{other}`"))),
        }
    }
}

impl std::fmt::Display for PsiShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            PsiShape::Box => "box",
            PsiShape::Tent => "tent",
            PsiShape::Signed => "signed",
        };
        f.write_str(s)
    }
}

/// A signed sum of tensor kernels, evaluated at displacements from a sample position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingKernel {
    pub terms: Vec<KernelSpec>,
    /// Closed-form `int |psi|`.
    pub abs_mass: f64,
}

impl AveragingKernel {
    pub fn eval(&self, delta: &[f64]) -> f64 {
        self.terms.iter().map(|t| t.eval(delta)).sum()
    }

    pub fn mass(&self) -> f64 {
        self.terms.iter().map(|t| t.mass()).sum()
    }

    /// Per-axis radius of a cube around the sample containing the support.
    pub fn reach(&self, axis: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| t.center[axis].abs() + t.support_radius(axis))
            .fold(0.0, f64::max)
    }

    /// The kernel centered at the origin, sampled on the grid.
    pub fn rasterize(&self, spec: &GridSpec) -> Result<DiscreteField> {
        let mut out = DiscreteField::zeros(*spec);
        for t in &self.terms {
            let r = rasterize(t, spec)?;
            for (o, v) in out.values_mut().iter_mut().zip(r.values()) {
                *o += v;
            }
        }
        Ok(out)
    }

    /// Shifts every term by `offset`.
    pub fn offset(&self, offset: &[f64]) -> Self {
        let mut k = self.clone();
        for t in &mut k.terms {
            for (c, o) in t.center.iter_mut().zip(offset) {
                *c += o;
            }
        }
        k
    }
}

/// `psi_a = a^-(d+1) psi(. / a)` for the given shape.
pub fn scaled_psi(shape: PsiShape, a: f64, dim: usize, m_target: f64) -> Result<AveragingKernel> {
    match shape {
        PsiShape::Box => Ok(AveragingKernel {
            terms: vec![KernelSpec::new(Shape::Box, dim).scaled(a).unit_mass()],
            abs_mass: 1.0,
        }),
        PsiShape::Tent => Ok(AveragingKernel {
            terms: vec![KernelSpec::new(Shape::Tent, dim).scaled(a / 2.0).unit_mass()],
            abs_mass: 1.0,
        }),
        PsiShape::Signed => {
            if !(m_target >= 1.0 && m_target.is_finite()) {
                return Err(Error::InvalidKernel(format!(
                    "signed kernel needs M_target >= 1, got {m_target}"
                )));
            }
            let rho = 0.5f64.powi(dim as i32);
            let alpha = (m_target + 1.0) / (2.0 * (1.0 - rho));
            let outer = KernelSpec::new(Shape::Box, dim).scaled(a).unit_mass();
            let inner = KernelSpec::new(Shape::Box, dim).scaled(a / 2.0).unit_mass();
            let outer = KernelSpec { amplitude: alpha * outer.amplitude, ..outer };
            let inner = KernelSpec { amplitude: -(alpha - 1.0) * inner.amplitude, ..inner };
            let abs_mass = alpha * (1.0 - rho) + (alpha * rho - (alpha - 1.0)).abs();
            Ok(AveragingKernel { terms: vec![outer, inner], abs_mass })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelMode {
    /// One `psi_a` shared by every sample.
    Single,
    /// A separately offset kernel per sample, offsets uniform in `[-max_offset, max_offset]`.
    PerSample { max_offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    Single(AveragingKernel),
    PerSample(Vec<AveragingKernel>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragingKernelSet {
    pub family: KernelFamily,
    pub a: f64,
    /// Realized `max_j int |psi_j|`.
    pub m_bound: f64,
}

impl AveragingKernelSet {
    pub fn kernel(&self, j: usize) -> &AveragingKernel {
        match &self.family {
            KernelFamily::Single(k) => k,
            KernelFamily::PerSample(ks) => &ks[j],
        }
    }
}

pub const NORMALIZATION_TOL: f64 = 1e-10;

pub fn make_kernels(
    mode: KernelMode,
    shape: PsiShape,
    a: f64,
    x: &SamplingSet,
    spec: &GridSpec,
    m_target: f64,
    seed: u64,
) -> Result<AveragingKernelSet> {
    if !(a > 0.0 && a <= spec.min_period() as f64 / 8.0) {
        return Err(Error::InvalidArgument(format!(
            "kernel scale a = {a} must lie in (0, min period / 8 = {}]",
            spec.min_period() as f64 / 8.0
        )));
    }
    let dim = spec.dim();
    let psi = scaled_psi(shape, a, dim, m_target)?;
    let check = |k: &AveragingKernel| -> Result<()> {
        let mass = k.mass();
        if (mass - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Normalization { integral: mass });
        }
        if (0..dim).any(|ax| k.reach(ax) > a) {
            return Err(Error::InvalidKernel(format!(
                "kernel support leaves the cube [-{a}, {a}]^{dim} around its sample"
            )));
        }
        Ok(())
    };
    check(&psi)?;
    match mode {
        KernelMode::Single => Ok(AveragingKernelSet {
            m_bound: psi.abs_mass,
            family: KernelFamily::Single(psi),
            a,
        }),
        KernelMode::PerSample { max_offset } => {
            if !(max_offset >= 0.0 && max_offset <= a / 4.0) {
                return Err(Error::InvalidArgument(format!(
                    "per-sample offsets must lie in [0, a/4], got {max_offset}"
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kernels = (0..x.len())
                .map(|_| {
                    let off: Vec<f64> = (0..dim)
                        .map(|_| {
                            if max_offset > 0.0 {
                                rng.gen_range(-max_offset..=max_offset)
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    let k = psi.offset(&off);
                    check(&k)?;
                    Ok(k)
                })
                .collect::<Result<Vec<_>>>()?;
            let m_bound = kernels.iter().map(|k| k.abs_mass).fold(0.0, f64::max);
            Ok(AveragingKernelSet { family: KernelFamily::PerSample(kernels), a, m_bound })
        }
    }
}

/// `<f, psi_j(. - x_j)>` by midpoint quadrature at every sample.
pub fn acquire_samples(f: &DiscreteField, kernels: &AveragingKernelSet, x: &SamplingSet) -> Result<Vec<f64>> {
    let spec = *f.spec();
    if let KernelFamily::PerSample(ks) = &kernels.family {
        if ks.len() != x.len() {
            return Err(Error::LengthMismatch { expected: x.len(), got: ks.len() });
        }
    }
    Ok(x
        .points
        .par_iter()
        .enumerate()
        .map(|(j, s)| sample_one(f, &spec, kernels.kernel(j), s))
        .collect())
}

fn sample_one(f: &DiscreteField, spec: &GridSpec, k: &AveragingKernel, s: &[f64]) -> f64 {
    let dim = spec.dim();
    let m = spec.m() as f64;
    let strides = spec.strides();
    // per axis: wrapped cell indices and displacements covering the kernel reach
    let mut cells: Vec<Vec<usize>> = Vec::with_capacity(dim);
    let mut deltas: Vec<Vec<f64>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let r = k.reach(a);
        let lo = ((s[a] - r) * m - 0.5).floor() as i64 - 1;
        let hi = ((s[a] + r) * m - 0.5).ceil() as i64 + 1;
        let n = spec.extent(a) as i64;
        let idx: Vec<usize> = (lo..=hi).map(|i| i.rem_euclid(n) as usize).collect();
        deltas.push(idx.iter().map(|&j| spec.wrap_delta(a, spec.midpoint(j) - s[a])).collect());
        cells.push(idx);
    }
    // tensor factors per term and axis; the product is taken in the same order as
    // `KernelSpec::eval`
    let factors: Vec<Vec<Vec<f64>>> = k
        .terms
        .iter()
        .map(|t| {
            (0..dim)
                .map(|a| {
                    deltas[a]
                        .iter()
                        .map(|&d| t.shape.eval((d - t.center[a]) / t.scale[a]))
                        .collect()
                })
                .collect()
        })
        .collect();
    let vals = f.values();
    let mut pos = vec![0usize; dim];
    let mut acc = 0.0;
    'outer: loop {
        let mut w = 0.0;
        for (t, fac) in k.terms.iter().zip(&factors) {
            let mut v = t.amplitude;
            for a in 0..dim {
                v *= fac[a][pos[a]];
            }
            w += v;
        }
        if w != 0.0 {
            let flat: usize = (0..dim).map(|a| cells[a][pos[a]] * strides[a]).sum();
            acc += w * vals[flat];
        }
        for a in (0..dim).rev() {
            pos[a] += 1;
            if pos[a] < cells[a].len() {
                continue 'outer;
            }
            pos[a] = 0;
        }
        break;
    }
    acc * spec.cell_volume()
}
