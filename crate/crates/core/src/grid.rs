//! Uniform midpoint grids on a periodic torus and the fields that live on them.
//!
//! A grid covers `[0, L_1) x [0, L_2)^d` with `m` cells per unit length on every
//! axis. Axis 0 is the `x` axis of the mixed norms; axes `1..=d` are the `y` block.
//! Field values are stored row-major with axis 0 slowest, and every value is the
//! function sampled at the cell midpoint `(j + 0.5) / m`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    d: usize,
    period_x: usize,
    period_y: usize,
    m: usize,
}

impl GridSpec {
    pub fn new(d: usize, period_x: usize, period_y: usize, m: usize) -> Result<Self> {
        let mut problems = Vec::new();
        if d < 1 {
            problems.push(format!("d must be >= 1, got {d}"));
        }
        if period_x < 4 || period_y < 4 {
            problems.push(format!(
                "periods must be >= 4, got ({period_x}, {period_y})"
            ));
        }
        if m < 4 {
            problems.push(format!("m must be >= 4, got {m}"));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidGrid(problems.join("; ")));
        }
        Ok(GridSpec { d, period_x, period_y, m })
    }

    /// Number of `y` axes.
    pub fn d(&self) -> usize {
        self.d
    }

    /// Total number of axes, `d + 1`.
    pub fn dim(&self) -> usize {
        self.d + 1
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn period_x(&self) -> usize {
        self.period_x
    }

    pub fn period_y(&self) -> usize {
        self.period_y
    }

    pub fn period(&self, axis: usize) -> usize {
        if axis == 0 {
            self.period_x
        } else {
            self.period_y
        }
    }

    pub fn min_period(&self) -> usize {
        self.period_x.min(self.period_y)
    }

    pub fn periods(&self) -> Vec<usize> {
        (0..self.dim()).map(|a| self.period(a)).collect()
    }

    /// Cells along `axis`.
    pub fn extent(&self, axis: usize) -> usize {
        self.m * self.period(axis)
    }

    pub fn extents(&self) -> Vec<usize> {
        (0..self.dim()).map(|a| self.extent(a)).collect()
    }

    /// Cells along the x axis.
    pub fn nx(&self) -> usize {
        self.extent(0)
    }

    /// Cells in one x-slice (product over the y axes).
    pub fn ny_total(&self) -> usize {
        self.extent(1).pow(self.d as u32)
    }

    pub fn len(&self) -> usize {
        self.nx() * self.ny_total()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_width(&self) -> f64 {
        1.0 / self.m as f64
    }

    /// Quadrature weight of one cell, `(1/m)^(d+1)`.
    pub fn cell_volume(&self) -> f64 {
        1.0 / (self.m as f64).powi(self.dim() as i32)
    }

    /// Volume of the torus, `L_1 * L_2^d`.
    pub fn volume(&self) -> f64 {
        self.period_x as f64 * (self.period_y as f64).powi(self.d as i32)
    }

    /// Number of integer lattice points in the torus.
    pub fn lattice_len(&self) -> usize {
        self.period_x * self.period_y.pow(self.d as u32)
    }

    pub fn strides(&self) -> Vec<usize> {
        let ext = self.extents();
        let mut s = vec![1; ext.len()];
        for a in (0..ext.len() - 1).rev() {
            s[a] = s[a + 1] * ext[a + 1];
        }
        s
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            flat = flat * self.extent(a) + i;
        }
        flat
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            let n = self.extent(a);
            idx[a] = flat % n;
            flat /= n;
        }
        idx
    }

    /// Flat index of a possibly out-of-range signed multi-index, wrapped periodically.
    pub fn wrapped_index(&self, idx: &[i64]) -> usize {
        let mut flat = 0;
        for (a, &i) in idx.iter().enumerate() {
            let n = self.extent(a) as i64;
            flat = flat * self.extent(a) + i.rem_euclid(n) as usize;
        }
        flat
    }

    /// Midpoint coordinate of cell `j` along any axis.
    pub fn midpoint(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.m as f64
    }

    pub fn midpoint_coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .into_iter()
            .map(|j| self.midpoint(j))
            .collect()
    }

    /// Cell whose midpoint is nearest to `coord` along `axis`, ties going to the lower index.
    pub fn nearest_cell(&self, axis: usize, coord: f64) -> usize {
        let t = coord * self.m as f64 - 0.5;
        let j = (t - 0.5).ceil() as i64;
        j.rem_euclid(self.extent(axis) as i64) as usize
    }

    pub fn nearest_cell_flat(&self, point: &[f64]) -> usize {
        let mut flat = 0;
        for (a, &c) in point.iter().enumerate() {
            flat = flat * self.extent(a) + self.nearest_cell(a, c);
        }
        flat
    }

    /// Signed difference `x - y` along `axis`, wrapped into `[-L/2, L/2)`.
    pub fn wrap_delta(&self, axis: usize, delta: f64) -> f64 {
        let l = self.period(axis) as f64;
        delta - l * (delta / l + 0.5).floor()
    }

    /// Euclidean distance on the torus.
    pub fn torus_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .enumerate()
            .map(|(ax, (x, y))| {
                let t = self.wrap_delta(ax, x - y);
                t * t
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Coordinate wrapped into `[0, L)` along `axis`.
    pub fn wrap_coord(&self, axis: usize, x: f64) -> f64 {
        let l = self.period(axis) as f64;
        let w = x.rem_euclid(l);
        // rem_euclid can round up to exactly l
        if w >= l {
            0.0
        } else {
            w
        }
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::GridMismatch(format!("{self:?} vs {other:?}")));
        }
        Ok(())
    }

    /// Calls `visit(dst, src)` for every cell, where `src` is the flat index of `dst - shift`.
    pub(crate) fn for_each_shifted(&self, shift: &[i64], mut visit: impl FnMut(usize, usize)) {
        let ext = self.extents();
        let strides = self.strides();
        let tables: Vec<Vec<usize>> = ext
            .iter()
            .zip(shift)
            .zip(&strides)
            .map(|((&n, &s), &st)| {
                (0..n as i64)
                    .map(|k| (k - s).rem_euclid(n as i64) as usize * st)
                    .collect()
            })
            .collect();
        let inner = ext[ext.len() - 1];
        let inner_table = &tables[ext.len() - 1];
        let outer_count = self.len() / inner;
        let mut idx = vec![0usize; ext.len() - 1];
        let mut dst = 0;
        for _ in 0..outer_count {
            let base: usize = idx.iter().enumerate().map(|(a, &i)| tables[a][i]).sum();
            for &off in inner_table.iter().take(inner) {
                visit(dst, base + off);
                dst += 1;
            }
            for a in (0..idx.len()).rev() {
                idx[a] += 1;
                if idx[a] < ext[a] {
                    break;
                }
                idx[a] = 0;
            }
        }
    }
}

/// A real function sampled at the cell midpoints of a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteField {
    spec: GridSpec,
    values: Vec<f64>,
}

impl DiscreteField {
    pub fn zeros(spec: GridSpec) -> Self {
        DiscreteField { spec, values: vec![0.0; spec.len()] }
    }

    pub fn constant(spec: GridSpec, c: f64) -> Self {
        DiscreteField { spec, values: vec![c; spec.len()] }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::LengthMismatch { expected: spec.len(), got: values.len() });
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite field value at cell {bad}"
            )));
        }
        Ok(DiscreteField { spec, values })
    }

    /// Samples `f` at every cell midpoint.
    pub fn from_fn(spec: GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..spec.len())
            .map(|i| f(&spec.midpoint_coords(i)))
            .collect();
        DiscreteField { spec, values }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, idx: &[i64]) -> f64 {
        self.values[self.spec.wrapped_index(idx)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DiscreteField {
            spec: self.spec,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn abs(&self) -> Self {
        self.map(f64::abs)
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `(multi-index, value)` for every nonzero cell.
    pub fn nonzeros(&self) -> Vec<(Vec<usize>, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (self.spec.multi_index(i), v))
            .collect()
    }

    /// Periodic translation by a whole number of cells per axis: `out[k] = self[k - shift]`.
    pub fn translate(&self, shift: &[i64]) -> Self {
        let mut out = vec![0.0; self.values.len()];
        self.spec
            .for_each_shifted(shift, |dst, src| out[dst] = self.values[src]);
        DiscreteField { spec: self.spec, values: out }
    }

    /// `self += w * other` translated by `shift` cells.
    pub(crate) fn add_translated(&mut self, other: &DiscreteField, shift: &[i64], w: f64) {
        let vals = &mut self.values;
        self.spec
            .for_each_shifted(shift, |dst, src| vals[dst] += w * other.values[src]);
    }
}

/// Midpoint-rule integral.
pub fn integrate(f: &DiscreteField) -> f64 {
    f.spec.cell_volume() * f.values.iter().sum::<f64>()
}

/// Periodic convolution `(f * g)[k] = (1/m)^(d+1) sum_j f[j] g[k - j]`.
///
/// Both operands are midpoint samples, so the result at index `k` approximates the
/// continuous convolution at the grid vertex `(k + 1) / m`, half a cell above the
/// midpoint of cell `k`. The sum runs over the nonzero cells of the sparser operand.
pub fn convolve(f: &DiscreteField, g: &DiscreteField) -> Result<DiscreteField> {
    f.spec.check_same(&g.spec)?;
    let nnz = |x: &DiscreteField| x.values.iter().filter(|&&v| v != 0.0).count();
    let (sparse, dense) = if nnz(f) <= nnz(g) { (f, g) } else { (g, f) };
    let h = f.spec.cell_volume();
    let mut out = DiscreteField::zeros(f.spec);
    for (idx, v) in sparse.nonzeros() {
        let shift: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
        out.add_translated(dense, &shift, v * h);
    }
    Ok(out)
}

/// Pointwise linear combination of fields on one grid.
pub fn lin_comb(terms: &[(f64, &DiscreteField)]) -> Result<DiscreteField> {
    let (_, first) = terms
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty linear combination".into()))?;
    let spec = first.spec;
    let mut values = vec![0.0; spec.len()];
    for (w, f) in terms {
        spec.check_same(&f.spec)?;
        for (o, v) in values.iter_mut().zip(&f.values) {
            *o += w * v;
        }
    }
    Ok(DiscreteField { spec, values })
}

/// Point reflection through the origin, `out(x) = conj(f(-x))`.
///
/// The midpoint of cell `j` reflects onto the midpoint of cell `-1 - j`. Fields are
/// real, so conjugation is the identity.
pub fn reflect_conjugate(f: &DiscreteField) -> DiscreteField {
    let spec = f.spec;
    let values = (0..spec.len())
        .map(|i| {
            let idx: Vec<i64> = spec
                .multi_index(i)
                .into_iter()
                .map(|j| -1 - j as i64)
                .collect();
            f.values[spec.wrapped_index(&idx)]
        })
        .collect();
    DiscreteField { spec, values }
}
