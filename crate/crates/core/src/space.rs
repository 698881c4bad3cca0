//! Multiply generated shift-invariant spaces on the torus.
//!
//! A member of the space is `f = sum_i sum_k c_i(k) phi_i(. - k)` over the integer
//! lattice of the torus. [`GramOperator`] realizes the grid-`L^2` orthogonal
//! projection onto the space, which stands in for the bounded projection the
//! iteration requires.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DiscreteField, GridSpec};
use crate::kernel::{rasterize, KernelSpec};
use crate::norms::{mixed_lebesgue_norm, mixed_seq_norm, MixedExponents};

/// Generators `phi_1, ..., phi_r` with their rasterizations.
#[derive(Debug, Clone)]
pub struct GeneratorBank {
    spec: GridSpec,
    kernels: Vec<KernelSpec>,
    rasters: Vec<DiscreteField>,
    // per generator: nonzero raster values, and the flat cell of each value under
    // every lattice translate (translate-major)
    support_values: Vec<Vec<f64>>,
    translate_cells: Vec<Vec<u32>>,
}

impl GeneratorBank {
    pub fn new(kernels: Vec<KernelSpec>, spec: GridSpec) -> Result<Self> {
        if kernels.is_empty() {
            return Err(Error::InvalidArgument("a bank needs at least one generator".into()));
        }
        let rasters = kernels
            .iter()
            .map(|k| rasterize(k, &spec))
            .collect::<Result<Vec<_>>>()?;
        let mut support_values = Vec::new();
        let mut translate_cells = Vec::new();
        let proto = CoefficientArray::zeros(1, &spec);
        let ext = spec.extents();
        for r in &rasters {
            let nz = r.nonzeros();
            support_values.push(nz.iter().map(|(_, v)| *v).collect());
            let mut cells = Vec::with_capacity(nz.len() * spec.lattice_len());
            for kf in 0..spec.lattice_len() {
                let offsets: Vec<usize> = proto.lattice_index(kf).iter().map(|&ka| ka * spec.m()).collect();
                for (idx, _) in &nz {
                    let mut flat = 0;
                    for a in 0..idx.len() {
                        flat = flat * ext[a] + (idx[a] + offsets[a]) % ext[a];
                    }
                    cells.push(flat as u32);
                }
            }
            translate_cells.push(cells);
        }
        Ok(GeneratorBank { spec, kernels, rasters, support_values, translate_cells })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn r(&self) -> usize {
        self.kernels.len()
    }

    pub fn kernels(&self) -> &[KernelSpec] {
        &self.kernels
    }

    pub fn raster(&self, i: usize) -> &DiscreteField {
        &self.rasters[i]
    }

    /// Cells and raster values of generator `i` translated by lattice point `kf` (flat).
    fn translate(&self, i: usize, kf: usize) -> (&[u32], &[f64]) {
        let vals = &self.support_values[i];
        let n = vals.len();
        (&self.translate_cells[i][kf * n..(kf + 1) * n], vals)
    }

    /// Number of unknowns, `r * |lattice|`.
    pub fn unknowns(&self) -> usize {
        self.r() * self.spec.lattice_len()
    }
}

/// Coefficients `c_i(k)` on the periodic integer lattice, generator-major,
/// lattice row-major with axis 0 slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientArray {
    r: usize,
    period_x: usize,
    period_y: usize,
    d: usize,
    entries: Vec<f64>,
}

impl CoefficientArray {
    pub fn zeros(r: usize, spec: &GridSpec) -> Self {
        CoefficientArray {
            r,
            period_x: spec.period_x(),
            period_y: spec.period_y(),
            d: spec.d(),
            entries: vec![0.0; r * spec.lattice_len()],
        }
    }

    pub fn from_entries(r: usize, spec: &GridSpec, entries: Vec<f64>) -> Result<Self> {
        let expected = r * spec.lattice_len();
        if entries.len() != expected {
            return Err(Error::LengthMismatch { expected, got: entries.len() });
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coefficient".into()));
        }
        let mut c = Self::zeros(r, spec);
        c.entries = entries;
        Ok(c)
    }

    /// Independent uniform draws on `[-1, 1]`.
    pub fn random(r: usize, spec: &GridSpec, rng: &mut impl Rng) -> Self {
        let mut c = Self::zeros(r, spec);
        c.entries.iter_mut().for_each(|v| *v = rng.gen_range(-1.0..=1.0));
        c
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// Lattice points per generator.
    pub fn lattice_len(&self) -> usize {
        self.period_x * self.inner_len()
    }

    /// Lattice points per outer index, `L_2^d`.
    pub fn inner_len(&self) -> usize {
        self.period_y.pow(self.d as u32)
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [f64] {
        &mut self.entries
    }

    pub fn generator(&self, i: usize) -> &[f64] {
        let n = self.lattice_len();
        &self.entries[i * n..(i + 1) * n]
    }

    /// Lattice multi-index of a flat lattice position.
    pub fn lattice_index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.d + 1];
        for a in (1..=self.d).rev() {
            idx[a] = k % self.period_y;
            k /= self.period_y;
        }
        idx[0] = k;
        idx
    }

    pub fn get(&self, i: usize, k: &[usize]) -> f64 {
        let mut flat = k[0];
        for &v in &k[1..] {
            flat = flat * self.period_y + v;
        }
        self.entries[i * self.lattice_len() + flat]
    }

    pub fn set(&mut self, i: usize, k: &[usize], v: f64) {
        let mut flat = k[0];
        for &x in &k[1..] {
            flat = flat * self.period_y + x;
        }
        let n = self.lattice_len();
        self.entries[i * n + flat] = v;
    }

    pub fn max_abs(&self, i: usize) -> f64 {
        self.generator(i).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.entries {
            *v *= a;
        }
    }

    pub fn axpy(&mut self, a: f64, other: &CoefficientArray) {
        for (x, y) in self.entries.iter_mut().zip(&other.entries) {
            *x += a * y;
        }
    }

    fn check_bank(&self, bank: &GeneratorBank) -> Result<()> {
        let s = bank.spec();
        if self.r != bank.r()
            || self.period_x != s.period_x()
            || self.period_y != s.period_y()
            || self.d != s.d()
        {
            return Err(Error::GridMismatch(format!(
                "coefficients (r={}, periods=({}, {}), d={}) do not match bank (r={}, periods=({}, {}), d={})",
                self.r, self.period_x, self.period_y, self.d,
                bank.r(), s.period_x(), s.period_y(), s.d()
            )));
        }
        Ok(())
    }
}

/// Visits `(flat cell, raster value)` for generator `i` translated by lattice point `kf`.
fn for_each_translate(bank: &GeneratorBank, i: usize, kf: usize, mut visit: impl FnMut(usize, f64)) {
    let (cells, vals) = bank.translate(i, kf);
    for (&cell, &v) in cells.iter().zip(vals) {
        visit(cell as usize, v);
    }
}

/// `sum_i sum_k c_i(k) phi_i(. - k)` with periodic wrap.
pub fn synthesize(c: &CoefficientArray, bank: &GeneratorBank) -> Result<DiscreteField> {
    c.check_bank(bank)?;
    let mut out = DiscreteField::zeros(*bank.spec());
    let n = c.lattice_len();
    let vals = out.values_mut();
    for i in 0..bank.r() {
        for kf in 0..n {
            let coef = c.entries[i * n + kf];
            if coef == 0.0 {
                continue;
            }
            for_each_translate(bank, i, kf, |cell, v| vals[cell] += coef * v);
        }
    }
    Ok(out)
}

/// Inner products `<g, phi_i(. - k)>` for every generator and lattice point.
pub fn analysis(g: &DiscreteField, bank: &GeneratorBank) -> Result<Vec<f64>> {
    g.spec().check_same(bank.spec())?;
    let h = bank.spec().cell_volume();
    let n = bank.spec().lattice_len();
    let gv = g.values();
    let mut b = vec![0.0; bank.r() * n];
    for i in 0..bank.r() {
        for kf in 0..n {
            let mut s = 0.0;
            for_each_translate(bank, i, kf, |cell, v| s += gv[cell] * v);
            b[i * n + kf] = h * s;
        }
    }
    Ok(b)
}

/// The Gram system `<phi_i(. - k), phi_j(. - l)>` of a bank, factored for repeated solves.
#[derive(Debug, Clone)]
pub struct GramOperator {
    bank: GeneratorBank,
    matrix: DMatrix<f64>,
    cholesky: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    min_eigenvalue: f64,
    max_eigenvalue: f64,
}

pub const SINGULAR_RATIO: f64 = 1e-10;
pub const SOLVE_RESIDUAL: f64 = 1e-10;

pub fn build_gram(bank: &GeneratorBank) -> Result<GramOperator> {
    let spec = bank.spec();
    let n = spec.lattice_len();
    let r = bank.r();
    let h = spec.cell_volume();
    let proto = CoefficientArray::zeros(r, spec);

    // cross[i][j][delta] = <phi_i(. - delta), phi_j>
    let mut cross = vec![vec![vec![0.0; n]; r]; r];
    for (i, row) in cross.iter_mut().enumerate() {
        for (j, corr) in row.iter_mut().enumerate() {
            let rj = bank.raster(j).values();
            for (delta, slot) in corr.iter_mut().enumerate() {
                // <phi_i(. - delta), phi_j>
                let mut s = 0.0;
                for_each_translate(bank, i, delta, |cell, v| s += v * rj[cell]);
                *slot = h * s;
            }
        }
    }

    let big = r * n;
    let mut matrix = DMatrix::<f64>::zeros(big, big);
    for i in 0..r {
        for j in 0..r {
            for kf in 0..n {
                let k = proto.lattice_index(kf);
                for lf in 0..n {
                    let l = proto.lattice_index(lf);
                    // <phi_i(. - k), phi_j(. - l)> = cross[i][j][k - l]
                    let delta: Vec<usize> = k
                        .iter()
                        .zip(&l)
                        .enumerate()
                        .map(|(a, (&ka, &la))| {
                            let p = spec.period(a);
                            (ka + p - la) % p
                        })
                        .collect();
                    let mut df = delta[0];
                    for &v in &delta[1..] {
                        df = df * spec.period_y() + v;
                    }
                    matrix[(i * n + kf, j * n + lf)] = cross[i][j][df];
                }
            }
        }
    }

    let asym = (&matrix - matrix.transpose()).amax();
    if asym > 1e-10 {
        return Err(Error::InvalidArgument(format!("Gram matrix asymmetric by {asym:e}")));
    }
    let eig = nalgebra::SymmetricEigen::new(matrix.clone());
    let min_eigenvalue = eig.eigenvalues.min();
    let max_eigenvalue = eig.eigenvalues.max();
    if !(min_eigenvalue > SINGULAR_RATIO * max_eigenvalue) {
        return Err(Error::NonRiesz { min: min_eigenvalue, max: max_eigenvalue });
    }
    let cholesky = nalgebra::Cholesky::new(matrix.clone())
        .ok_or(Error::NonRiesz { min: min_eigenvalue, max: max_eigenvalue })?;
    Ok(GramOperator {
        bank: bank.clone(),
        matrix,
        cholesky,
        min_eigenvalue,
        max_eigenvalue,
    })
}

impl GramOperator {
    pub fn bank(&self) -> &GeneratorBank {
        &self.bank
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.max_eigenvalue
    }

    /// Lower-triangular `L` with `G = L L^T`.
    pub fn factor(&self) -> DMatrix<f64> {
        self.cholesky.l()
    }

    /// Solves `G c = b`, with one step of iterative refinement if needed.
    pub fn solve(&self, b: &[f64]) -> Result<CoefficientArray> {
        let rhs = DVector::from_column_slice(b);
        let bn = rhs.norm();
        let mut x = self.cholesky.solve(&rhs);
        if bn == 0.0 {
            return CoefficientArray::from_entries(self.bank.r(), self.bank.spec(), x.as_slice().to_vec());
        }
        let mut res = &rhs - &self.matrix * &x;
        if res.norm() > SOLVE_RESIDUAL * bn {
            x += self.cholesky.solve(&res);
            res = &rhs - &self.matrix * &x;
        }
        let rel = res.norm() / bn;
        if rel > SOLVE_RESIDUAL {
            return Err(Error::SolveFailed { residual: rel });
        }
        CoefficientArray::from_entries(self.bank.r(), self.bank.spec(), x.as_slice().to_vec())
    }
}

/// Coefficients of the grid-`L^2` orthogonal projection of `g` onto the space.
pub fn project(g: &DiscreteField, gram: &GramOperator) -> Result<CoefficientArray> {
    let b = analysis(g, &gram.bank)?;
    gram.solve(&b)
}

/// Empirical norm-equivalence constants `D_1 <= ratio <= D_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEquivalence {
    pub d1: f64,
    pub d2: f64,
    pub trials: usize,
    pub exponents: MixedExponents,
}

/// `(sum_i ||c_i||^2)^(1/2) / ||synthesize(c)||`.
pub fn coefficient_ratio(c: &CoefficientArray, bank: &GeneratorBank, e: MixedExponents) -> Result<f64> {
    let f = synthesize(c, bank)?;
    let seq: f64 = (0..c.r()).map(|i| mixed_seq_norm(c, i, e).powi(2)).sum::<f64>().sqrt();
    Ok(seq / mixed_lebesgue_norm(&f, e))
}

pub fn estimate_norm_equivalence(
    bank: &GeneratorBank,
    e: MixedExponents,
    trials: usize,
    seed: u64,
) -> Result<NormEquivalence> {
    if trials < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 trials, got {trials}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d1 = f64::INFINITY;
    let mut d2: f64 = 0.0;
    let mut done = 0;
    while done < trials {
        let c = CoefficientArray::random(bank.r(), bank.spec(), &mut rng);
        let ratio = coefficient_ratio(&c, bank, e)?;
        if !ratio.is_finite() {
            continue;
        }
        d1 = d1.min(ratio);
        d2 = d2.max(ratio);
        done += 1;
    }
    Ok(NormEquivalence { d1, d2, trials, exponents: e })
}

/// `||P g|| / ||g||`.
pub fn projection_ratio(g: &DiscreteField, gram: &GramOperator, e: MixedExponents) -> Result<f64> {
    let pg = synthesize(&project(g, gram)?, gram.bank())?;
    Ok(mixed_lebesgue_norm(&pg, e) / mixed_lebesgue_norm(g, e))
}

/// A random test field: an independent uniform level on every unit lattice cell
/// plus independent uniform noise on every grid cell.
pub fn random_test_field(spec: &GridSpec, rng: &mut impl Rng) -> DiscreteField {
    let levels: Vec<f64> = (0..spec.lattice_len()).map(|_| rng.gen_range(-1.0..=1.0)).collect();
    let m = spec.m();
    let py = spec.period_y();
    let vals = (0..spec.len())
        .map(|i| {
            let idx = spec.multi_index(i);
            let mut u = idx[0] / m;
            for &j in &idx[1..] {
                u = u * py + j / m;
            }
            levels[u] + rng.gen_range(-1.0..=1.0)
        })
        .collect();
    DiscreteField::from_values(*spec, vals).expect("finite draws")
}

/// Monte-Carlo estimate of the operator norm of the projection on the mixed space.
pub fn estimate_projection_norm(
    gram: &GramOperator,
    e: MixedExponents,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if trials < 10 {
        return Err(Error::InvalidArgument(format!("need at least 10 trials, got {trials}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for _ in 0..trials {
        let g = random_test_field(gram.bank().spec(), &mut rng);
        best = best.max(projection_ratio(&g, gram, e)?);
    }
    Ok(best)
}
