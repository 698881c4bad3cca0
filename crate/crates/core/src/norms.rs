//! Mixed Lebesgue norms, their sequence counterparts, the mixed Wiener amalgam
//! norm and the oscillation (local modulus of continuity).
//!
//! Axis 0 is the outer (`p`) variable, the remaining `d` axes form the inner
//! (`q`) block. All sums run in a fixed order so results do not depend on
//! scheduling.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::DiscreteField;
use crate::space::CoefficientArray;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixedExponents {
    pub p: f64,
    pub q: f64,
}

impl MixedExponents {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        if !(p >= 1.0 && p.is_finite()) || !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "exponents must satisfy 1 <= p, q < inf, got ({p}, {q})"
            )));
        }
        Ok(MixedExponents { p, q })
    }

    pub fn uniform(p: f64) -> Result<Self> {
        Self::new(p, p)
    }

    pub const ONE: MixedExponents = MixedExponents { p: 1.0, q: 1.0 };
    pub const TWO: MixedExponents = MixedExponents { p: 2.0, q: 2.0 };
}

fn abs_pow(v: f64, q: f64) -> f64 {
    if q == 2.0 {
        v * v
    } else if q == 1.0 {
        v.abs()
    } else {
        v.abs().powf(q)
    }
}

/// `[ int ( int |f(x,y)|^q dy )^(p/q) dx ]^(1/p)` by the midpoint rule.
pub fn mixed_lebesgue_norm(f: &DiscreteField, e: MixedExponents) -> f64 {
    let spec = f.spec();
    let ny = spec.ny_total();
    let h = spec.cell_width();
    let hy = h.powi(spec.d() as i32);
    let outer: f64 = f
        .values()
        .chunks(ny)
        .map(|row| {
            let inner: f64 = row.iter().map(|&v| abs_pow(v, e.q)).sum::<f64>() * hy;
            inner.powf(e.p / e.q)
        })
        .sum::<f64>()
        * h;
    outer.powf(1.0 / e.p)
}

/// Plain `L^p` norm on the grid.
pub fn lp_norm(f: &DiscreteField, p: f64) -> f64 {
    let s: f64 = f.values().iter().map(|&v| abs_pow(v, p)).sum();
    (s * f.spec().cell_volume()).powf(1.0 / p)
}

/// Mixed sequence norm of a row-major array with `n1` outer and `n2` inner entries.
pub fn mixed_seq_norm_slice(values: &[f64], n2: usize, e: MixedExponents) -> f64 {
    values
        .chunks(n2)
        .map(|row| {
            row.iter()
                .map(|&v| abs_pow(v, e.q))
                .sum::<f64>()
                .powf(e.p / e.q)
        })
        .sum::<f64>()
        .powf(1.0 / e.p)
}

/// `||c_i||` in the mixed sequence space over the periodic lattice.
pub fn mixed_seq_norm(c: &CoefficientArray, i: usize, e: MixedExponents) -> f64 {
    mixed_seq_norm_slice(c.generator(i), c.inner_len(), e)
}

/// Mixed Wiener amalgam norm. Suprema over unit cells are maxima over the grid
/// samples inside each cell.
pub fn wiener_amalgam_norm(f: &DiscreteField, e: MixedExponents) -> f64 {
    let spec = f.spec();
    let m = spec.m();
    let d = spec.d();
    let ny = spec.ny_total();
    let n_units_y = spec.period_y().pow(d as u32);
    let ext_y = spec.extent(1);

    // unit-cube id of every y-cell
    let unit_of: Vec<usize> = (0..ny)
        .map(|mut flat| {
            let mut unit = 0;
            let mut mul = 1;
            for _ in 0..d {
                let j = flat % ext_y;
                flat /= ext_y;
                unit += (j / m) * mul;
                mul *= spec.period_y();
            }
            unit
        })
        .collect();

    let mut cell_max = vec![0.0f64; n_units_y];
    let inner: Vec<f64> = f
        .values()
        .chunks(ny)
        .map(|row| {
            cell_max.iter_mut().for_each(|v| *v = 0.0);
            for (v, &u) in row.iter().zip(&unit_of) {
                let a = abs_pow(*v, e.q);
                if a > cell_max[u] {
                    cell_max[u] = a;
                }
            }
            cell_max.iter().sum::<f64>().powf(e.p / e.q)
        })
        .collect();

    inner
        .chunks(m)
        .map(|unit| unit.iter().cloned().fold(0.0, f64::max))
        .sum::<f64>()
        .powf(1.0 / e.p)
}

/// Window radius in cells for a given `delta`.
pub fn oscillation_radius(m: usize, delta: f64) -> usize {
    (delta * m as f64 + 1e-9).floor() as usize
}

/// `osc_delta(f)(x) = max_{|t_a| <= delta} |f(x + t) - f(x)|` over grid points, with a
/// per-coordinate (cube) window.
pub fn oscillation(f: &DiscreteField, delta: f64) -> Result<DiscreteField> {
    let spec = f.spec();
    if !(delta > 0.0) || delta > spec.min_period() as f64 / 4.0 {
        return Err(Error::InvalidArgument(format!(
            "oscillation window {delta} must lie in (0, {}]",
            spec.min_period() as f64 / 4.0
        )));
    }
    let w = oscillation_radius(spec.m(), delta);
    if w == 0 {
        return Ok(DiscreteField::zeros(*spec));
    }
    let mut hi = f.values().to_vec();
    let mut lo = f.values().to_vec();
    for axis in 0..spec.dim() {
        hi = window_extreme(spec, &hi, axis, w, f64::max);
        lo = window_extreme(spec, &lo, axis, w, f64::min);
    }
    let vals = f
        .values()
        .iter()
        .zip(hi.iter().zip(&lo))
        .map(|(&v, (&h, &l))| (h - v).max(v - l))
        .collect();
    DiscreteField::from_values(*spec, vals)
}

/// Periodic sliding-window extreme of radius `w` along one axis (van Herk / Gil-Werman).
///
/// All lines of a block sharing the outer indices are swept together, so every step
/// reads and writes contiguous rows of `inner` values.
fn window_extreme(
    spec: &crate::grid::GridSpec,
    values: &[f64],
    axis: usize,
    w: usize,
    pick: impl Fn(f64, f64) -> f64 + Copy,
) -> Vec<f64> {
    let n = spec.extent(axis);
    let inner = spec.strides()[axis];
    let k = 2 * w + 1;
    let ext_len = n + 2 * w;
    let mut out = vec![0.0; values.len()];
    let mut prefix = vec![0.0; ext_len * inner];
    let mut suffix = vec![0.0; ext_len * inner];
    let combine = |dst: &mut [f64], prev: &[f64], src: &[f64]| {
        for ((d, &p), &s) in dst.iter_mut().zip(prev).zip(src) {
            *d = pick(p, s);
        }
    };
    // extended line position i holds line index (i - w) mod n
    let source: Vec<usize> = (0..ext_len).map(|i| (i + n - w % n) % n * inner).collect();
    if inner == 1 {
        let (prefix, suffix) = (&mut prefix[..], &mut suffix[..]);
        for (line, out_line) in values.chunks(n).zip(out.chunks_mut(n)) {
            for i in 0..ext_len {
                let v = line[source[i]];
                prefix[i] = if i % k == 0 { v } else { pick(prefix[i - 1], v) };
            }
            for i in (0..ext_len).rev() {
                let v = line[source[i]];
                suffix[i] = if i == ext_len - 1 || (i + 1) % k == 0 { v } else { pick(suffix[i + 1], v) };
            }
            for (j, o) in out_line.iter_mut().enumerate() {
                *o = pick(suffix[j], prefix[j + k - 1]);
            }
        }
        return out;
    }
    for (block, out_block) in values.chunks(n * inner).zip(out.chunks_mut(n * inner)) {
        let row = |i: usize| &block[source[i]..source[i] + inner];
        for i in 0..ext_len {
            if i % k == 0 {
                prefix[i * inner..(i + 1) * inner].copy_from_slice(row(i));
            } else {
                let (done, rest) = prefix.split_at_mut(i * inner);
                combine(&mut rest[..inner], &done[(i - 1) * inner..], row(i));
            }
        }
        for i in (0..ext_len).rev() {
            if i == ext_len - 1 || (i + 1) % k == 0 {
                suffix[i * inner..(i + 1) * inner].copy_from_slice(row(i));
            } else {
                let (head, done) = suffix.split_at_mut((i + 1) * inner);
                combine(&mut head[i * inner..], &done[..inner], row(i));
            }
        }
        for j in 0..n {
            let lo = &suffix[j * inner..(j + 1) * inner];
            let hi = &prefix[(j + k - 1) * inner..(j + k) * inner];
            combine(&mut out_block[j * inner..(j + 1) * inner], lo, hi);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{integrate, lin_comb, GridSpec};
    use crate::kernel::{rasterize, KernelSpec, Shape};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_field(spec: GridSpec, seed: u64) -> DiscreteField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..spec.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        DiscreteField::from_values(spec, vals).unwrap()
    }

    #[test]
    fn exponents_validated() {
        assert!(MixedExponents::new(0.5, 1.0).is_err());
        assert!(MixedExponents::new(1.0, f64::INFINITY).is_err());
        assert!(MixedExponents::new(1.0, 3.5).is_ok());
    }

    #[test]
    fn constant_field_norms() {
        // periods (1,1) are below the grid minimum; the unit-torus case is
        // checked by scaling: ||1|| on periods (4,4) is 4^(1/p) * 4^(1/q).
        let g = GridSpec::new(1, 4, 4, 4).unwrap();
        let one = DiscreteField::constant(g, 1.0);
        for (p, q) in [(1.0, 1.0), (2.0, 3.0), (1.5, 1.0)] {
            let e = MixedExponents::new(p, q).unwrap();
            let want = 4f64.powf(1.0 / p) * 4f64.powf(1.0 / q);
            assert!((mixed_lebesgue_norm(&one, e) - want).abs() < 1e-12);
        }
        let g = GridSpec::new(1, 4, 6, 4).unwrap();
        let c = DiscreteField::constant(g, -2.5);
        assert!((mixed_lebesgue_norm(&c, MixedExponents::ONE) - 24.0 * 2.5).abs() < 1e-12);
    }

    #[test]
    fn separable_field_factorizes() {
        let g = GridSpec::new(1, 4, 5, 8).unwrap();
        let gx = |x: f64| (x * 1.3).sin() + 0.2;
        let hy = |y: f64| (-(y - 2.0).powi(2)).exp();
        let f = DiscreteField::from_fn(g, |p| gx(p[0]) * hy(p[1]));
        let (p, q) = (3.0, 1.5);
        let h = g.cell_width();
        let gp: f64 = (0..g.extent(0))
            .map(|j| gx(g.midpoint(j)).abs().powf(p) * h)
            .sum::<f64>()
            .powf(1.0 / p);
        let hq: f64 = (0..g.extent(1))
            .map(|j| hy(g.midpoint(j)).abs().powf(q) * h)
            .sum::<f64>()
            .powf(1.0 / q);
        let got = mixed_lebesgue_norm(&f, MixedExponents::new(p, q).unwrap());
        assert!((got - gp * hq).abs() < 1e-12 * (gp * hq));
    }

    #[test]
    fn seq_norm_examples() {
        let mut v = vec![0.0; 20];
        v[7] = -3.25;
        assert!((mixed_seq_norm_slice(&v, 5, MixedExponents::new(2.0, 3.0).unwrap()) - 3.25).abs() < 1e-15);
        let ones = vec![1.0; 20];
        let e = MixedExponents::new(2.0, 3.0).unwrap();
        let want = 4f64.powf(0.5) * 5f64.powf(1.0 / 3.0);
        assert!((mixed_seq_norm_slice(&ones, 5, e) - want).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let r: Vec<f64> = (0..48).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let e = MixedExponents::new(1.5, 2.5).unwrap();
        let mut outer = 0.0;
        for k1 in 0..6 {
            let mut inner = 0.0;
            for k2 in 0..8 {
                inner += f64::abs(r[k1 * 8 + k2]).powf(2.5);
            }
            outer += f64::powf(inner, 1.5 / 2.5);
        }
        let want = f64::powf(outer, 1.0 / 1.5);
        assert!((mixed_seq_norm_slice(&r, 8, e) - want).abs() < 1e-12);
    }

    #[test]
    fn amalgam_examples() {
        let g = GridSpec::new(1, 4, 5, 4).unwrap();
        let cell = DiscreteField::from_fn(g, |p| {
            if (1.0..2.0).contains(&p[0]) && (3.0..4.0).contains(&p[1]) {
                1.0
            } else {
                0.0
            }
        });
        assert_eq!(wiener_amalgam_norm(&cell, MixedExponents::ONE), 1.0);
        let c = DiscreteField::constant(g, -0.5);
        assert!((wiener_amalgam_norm(&c, MixedExponents::ONE) - 0.5 * 20.0).abs() < 1e-12);
    }

    #[test]
    fn amalgam_matches_per_cell_scan() {
        let g = GridSpec::new(1, 8, 8, 8).unwrap();
        let k = KernelSpec::new(Shape::BSpline(4), 2).centered(&[0.3, 7.1]);
        let f = rasterize(&k, &g).unwrap();
        for (p, q) in [(1.0, 1.0), (2.0, 1.5)] {
            let e = MixedExponents::new(p, q).unwrap();
            let mut total = 0.0;
            for n in 0..8 {
                let mut best: f64 = 0.0;
                for ix in n * 8..(n + 1) * 8 {
                    let mut s = 0.0;
                    for l in 0..8 {
                        let mut mx: f64 = 0.0;
                        for iy in l * 8..(l + 1) * 8 {
                            mx = mx.max(f.get(&[ix as i64, iy as i64]).abs().powf(q));
                        }
                        s += mx;
                    }
                    best = best.max(f64::powf(s, p / q));
                }
                total += best;
            }
            let want = f64::powf(total, 1.0 / p);
            assert!((wiener_amalgam_norm(&f, e) - want).abs() < 1e-12 * want);
        }
    }

    #[test]
    fn amalgam_d2() {
        let g = GridSpec::new(2, 4, 4, 4).unwrap();
        let c = DiscreteField::constant(g, 2.0);
        assert!((wiener_amalgam_norm(&c, MixedExponents::ONE) - 128.0).abs() < 1e-12);
        assert!((mixed_lebesgue_norm(&c, MixedExponents::ONE) - 128.0).abs() < 1e-12);
    }

    fn brute_osc(f: &DiscreteField, delta: f64) -> DiscreteField {
        let g = *f.spec();
        let w = oscillation_radius(g.m(), delta) as i64;
        DiscreteField::from_values(
            g,
            (0..g.len())
                .map(|i| {
                    let idx: Vec<i64> = g.multi_index(i).iter().map(|&v| v as i64).collect();
                    let v = f.values()[i];
                    let mut best: f64 = 0.0;
                    let mut off = vec![-w; idx.len()];
                    loop {
                        let at: Vec<i64> = idx.iter().zip(&off).map(|(a, b)| a + b).collect();
                        best = best.max((f.get(&at) - v).abs());
                        let mut a = 0;
                        loop {
                            if a == off.len() {
                                return best;
                            }
                            off[a] += 1;
                            if off[a] <= w {
                                break;
                            }
                            off[a] = -w;
                            a += 1;
                        }
                    }
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn oscillation_examples() {
        let g = GridSpec::new(1, 4, 4, 16).unwrap();
        let c = DiscreteField::constant(g, 3.0);
        assert!(oscillation(&c, 0.5).unwrap().values().iter().all(|&v| v == 0.0));

        let saw = DiscreteField::from_fn(g, |p| p[0]);
        let osc = oscillation(&saw, 2.0 / 16.0).unwrap();
        for ix in 3..g.extent(0) - 3 {
            for iy in 0..g.extent(1) {
                let v = osc.get(&[ix as i64, iy as i64]);
                assert!((v - 2.0 / 16.0).abs() < 1e-12, "{ix}: {v}");
            }
        }

        let tent = rasterize(&KernelSpec::new(Shape::Tent, 2).centered(&[1.0, 3.0]), &g).unwrap();
        assert_eq!(oscillation(&tent, 0.25).unwrap(), brute_osc(&tent, 0.25));

        let r = random_field(GridSpec::new(2, 4, 4, 4).unwrap(), 3);
        assert_eq!(oscillation(&r, 0.5).unwrap(), brute_osc(&r, 0.5));

        assert!(oscillation(&tent, 1.5).is_err());
        assert!(oscillation(&tent, 0.0).is_err());
    }

    #[test]
    fn p_equals_q_is_plain_lp() {
        let g = GridSpec::new(1, 4, 4, 8).unwrap();
        let f = random_field(g, 11);
        for p in [1.0, 1.5, 2.0, 4.0] {
            let a = mixed_lebesgue_norm(&f, MixedExponents::uniform(p).unwrap());
            assert!((a - lp_norm(&f, p)).abs() < 1e-12);
        }
        assert!((lp_norm(&f, 1.0) - integrate(&f.abs())).abs() < 1e-12);
    }

    #[test]
    fn norms_monotone_and_homogeneous() {
        let g = GridSpec::new(1, 4, 4, 4).unwrap();
        let e = MixedExponents::new(1.5, 2.5).unwrap();
        for seed in 0..20 {
            let f = random_field(g, seed);
            let bump = random_field(g, seed + 100).abs();
            let bigger = lin_comb(&[(1.0, &f.abs()), (1.0, &bump)]).unwrap();
            assert!(mixed_lebesgue_norm(&f, e) <= mixed_lebesgue_norm(&bigger, e));
            assert!(wiener_amalgam_norm(&f, e) <= wiener_amalgam_norm(&bigger, e));
            let alpha = -1.7;
            let s = f.scale(alpha);
            for (a, b) in [
                (mixed_lebesgue_norm(&s, e), mixed_lebesgue_norm(&f, e)),
                (wiener_amalgam_norm(&s, e), wiener_amalgam_norm(&f, e)),
                (lp_norm(&s, 1.5), lp_norm(&f, 1.5)),
                (
                    mixed_seq_norm_slice(s.values(), 16, e),
                    mixed_seq_norm_slice(f.values(), 16, e),
                ),
            ] {
                assert!((a - alpha.abs() * b).abs() < 1e-12 * a.max(1.0));
            }
        }
    }
}
