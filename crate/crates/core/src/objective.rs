//! Cost functional over cavity-mode coefficients: mode-volume overlap `S`,
//! on-site intensity `P` and the light-line proxy `W`, all as Hermitian
//! matrices over the flat `(n, q)` mode index.
//!
//! For `a` normalized, `V = a†Sa`, `I = a†Pa`, `L = a†Wa` and
//! `J = L + β_I I − β_V V`.

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::bulk::{polarization_vector, BulkSet};
use crate::defect::{synthesize_field, GridSpec, KGrid};
use crate::error::{Error, Result};
use crate::lattice::Vec2;
use crate::linalg::{mat_vec, quad_form, CMat};

/// Bloch vectors shorter than this (in units of `2π/a`) count as Γ.
pub const GAMMA_CUTOFF: f64 = 1e-3;
/// Diagonal penalty given to Γ modes in `W`.
pub const GAMMA_PENALTY: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub beta_i: f64,
    pub beta_v: f64,
}

impl CostWeights {
    pub fn new(beta_i: f64, beta_v: f64) -> Result<Self> {
        for (k, v) in [("beta_I", beta_i), ("beta_V", beta_v)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid("objective", format!("{k} must be finite and >= 0, got {v}")));
            }
        }
        Ok(CostWeights { beta_i, beta_v })
    }
}

/// Rectangular integration domain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Domain {
    pub fn centered(side: f64) -> Self {
        Domain {
            x0: -0.5 * side,
            x1: 0.5 * side,
            y0: -0.5 * side,
            y1: 0.5 * side,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn grid(&self, resolution: f64) -> GridSpec {
        GridSpec {
            x0: self.x0,
            x1: self.x1,
            y0: self.y0,
            y1: self.y1,
            resolution,
        }
    }

    /// `∫_domain e^{i d·r} dA`.
    pub fn plane_wave_integral(&self, d: Vec2) -> c64 {
        let axis = |k: f64, a: f64, b: f64| {
            let (l, c) = (b - a, 0.5 * (a + b));
            c64::from_polar(l * sinc(0.5 * k * l), k * c)
        };
        axis(d.x, self.x0, self.x1) * axis(d.y, self.y0, self.y1)
    }
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-6 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Clone, Debug)]
pub struct ObjectiveGrams {
    pub s: CMat,
    pub p: CMat,
    pub w: CMat,
    pub domain: Domain,
}

/// Builds the three Gram matrices over the bulk modes of `bulk`.
pub fn build_grams(bulk: &BulkSet, domain: Domain) -> ObjectiveGrams {
    let grid = KGrid::new(&bulk.basis, &bulk.bz);
    let pol = bulk.polarization;
    let ev: Vec<[f64; 3]> = grid.vectors.iter().map(|&k| polarization_vector(k, pol)).collect();
    let s = bulk.project(|i, j| {
        let e: f64 = (0..3).map(|d| ev[i][d] * ev[j][d]).sum();
        if e == 0.0 {
            return c64::new(0.0, 0.0);
        }
        domain.plane_wave_integral(grid.vectors[j] - grid.vectors[i]) * e
    });

    // H_j(0) per mode, per Cartesian component
    let n = bulk.len();
    let ng = bulk.basis.len();
    let h0: Vec<[c64; 3]> = (0..n)
        .map(|idx| {
            let (b, qi) = bulk.split(idx);
            let mut v = [c64::new(0.0, 0.0); 3];
            for g in 0..ng {
                let h = bulk.h[qi][(g, b)];
                let e = ev[qi * ng + g];
                for d in 0..3 {
                    v[d] += h * e[d];
                }
            }
            v
        })
        .collect();
    let p = CMat::from_fn(n, n, |i, j| (0..3).map(|d| h0[i][d].conj() * h0[j][d]).sum());

    let qmin = GAMMA_CUTOFF * 2.0 * std::f64::consts::PI;
    let ratio: Vec<Option<f64>> = (0..n)
        .map(|idx| {
            let (_, qi) = bulk.split(idx);
            let q = bulk.bz.q_points[qi].norm();
            (q >= qmin).then(|| bulk.omega_flat(idx) / q)
        })
        .collect();
    let w = CMat::from_fn(n, n, |i, j| match (ratio[i], ratio[j]) {
        (Some(a), Some(b)) => c64::new(a * b, 0.0),
        _ if i == j => c64::new(GAMMA_PENALTY, 0.0),
        _ => c64::new(0.0, 0.0),
    });
    ObjectiveGrams { s, p, w, domain }
}

fn real_form(m: &CMat, a: &[c64]) -> f64 {
    let v = quad_form(m, a);
    debug_assert!(v.im.abs() <= 1e-10 * v.re.abs().max(1.0));
    v.re
}

/// Unscaled overlap `a†Sa`.
pub fn overlap(a: &[c64], s: &CMat) -> f64 {
    real_form(s, a)
}

/// Mode volume with max-one normalization: `a†Sa / max_r |H(r)|²`.
pub fn mode_volume(a: &[c64], s: &CMat, field_max: f64) -> Result<f64> {
    if field_max <= 0.0 {
        return Err(Error::ZeroField { module: "objective" });
    }
    Ok(real_form(s, a) / (field_max * field_max))
}

/// Mode volume with the peak taken from a field synthesized on `grid`.
pub fn mode_volume_on_grid(a: &[c64], grams: &ObjectiveGrams, bulk: &BulkSet, resolution: f64) -> Result<f64> {
    let field = synthesize_field(a, bulk, grams.domain.grid(resolution));
    mode_volume(a, &grams.s, field.max_abs)
}

pub fn intensity_at_origin(a: &[c64], p: &CMat) -> f64 {
    real_form(p, a)
}

pub fn q_proxy(a: &[c64], w: &CMat) -> f64 {
    real_form(w, a)
}

/// `W + β_I P − β_V S`.
pub fn combined(grams: &ObjectiveGrams, weights: CostWeights) -> CMat {
    let n = grams.w.nrows();
    CMat::from_fn(n, n, |i, j| {
        grams.w[(i, j)] + grams.p[(i, j)] * weights.beta_i - grams.s[(i, j)] * weights.beta_v
    })
}

/// `J = L + β_I I − β_V a†Sa`.
pub fn cost(a: &[c64], grams: &ObjectiveGrams, weights: CostWeights) -> f64 {
    q_proxy(a, &grams.w) + weights.beta_i * intensity_at_origin(a, &grams.p)
        - weights.beta_v * overlap(a, &grams.s)
}

/// Gradient of [`cost`] with respect to `(Re a, Im a)`, packed as a complex
/// vector: `2 (W + β_I P − β_V S) a`.
pub fn cost_gradient(a: &[c64], grams: &ObjectiveGrams, weights: CostWeights) -> Vec<c64> {
    let (w, p, s) = (mat_vec(&grams.w, a), mat_vec(&grams.p, a), mat_vec(&grams.s, a));
    (0..a.len())
        .map(|i| 2.0 * (w[i] + weights.beta_i * p[i] - weights.beta_v * s[i]))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bulk::Polarization;
    use crate::lattice::*;
    use proptest::prelude::*;

    fn small_bulk() -> BulkSet {
        let spec = LatticeSpec::new(0.3, 3.4, 1.0).unwrap();
        let b = build_reciprocal_basis(&spec, 7).unwrap();
        let e = eta_fourier(&spec, &b);
        let bz = sample_brillouin_zone(&b, 7).unwrap();
        BulkSet::solve(&e, &b, &bz, Polarization::TE, 7).unwrap()
    }

    fn random_grams(n: usize, seed: u64) -> ObjectiveGrams {
        let mut x = seed;
        let mut rnd = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((x >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut herm = || {
            let m = CMat::from_fn(n, n, |_, _| c64::new(rnd(), rnd()));
            CMat::from_fn(n, n, |i, j| m[(i, j)] + m[(j, i)].conj())
        };
        ObjectiveGrams {
            s: herm(),
            p: herm(),
            w: herm(),
            domain: Domain::centered(1.0),
        }
    }

    #[test]
    fn single_mode_forms() {
        let bulk = small_bulk();
        let g = build_grams(&bulk, Domain::centered(10.0));
        let idx = bulk.index(1, 3);
        let mut a = vec![c64::new(0.0, 0.0); bulk.len()];
        a[idx] = c64::new(1.0, 0.0);
        let m = bulk.mode(idx);
        let l = q_proxy(&a, &g.w);
        assert!((l - (m.omega / m.q.norm()).powi(2)).abs() < 1e-10 * l);
        let h0 = crate::bulk::mode_field(&m, Vec2::ZERO)[2];
        assert!((intensity_at_origin(&a, &g.p) - h0.norm_sqr()).abs() < 1e-12);
    }

    #[test]
    fn equal_ratio_modes_factorize() {
        // modes at q and -q in the same band share ω/|q| = v, so
        // L = v² |Σ a_j|²
        let bulk = small_bulk();
        let g = build_grams(&bulk, Domain::centered(10.0));
        let q1 = 1;
        let q2 = (0..bulk.bz.len())
            .find(|&j| (bulk.bz.q_points[j] + bulk.bz.q_points[q1]).norm() < 1e-9)
            .unwrap();
        let (i, j) = (bulk.index(2, q1), bulk.index(2, q2));
        let m = bulk.mode(i);
        let v = m.omega / m.q.norm();
        let mut a = vec![c64::new(0.0, 0.0); bulk.len()];
        a[i] = c64::new(0.6, 0.0);
        a[j] = c64::new(0.0, 0.8);
        let want = v * v * (a[i] + a[j]).norm_sqr();
        assert!((q_proxy(&a, &g.w) - want).abs() < 1e-9 * want);
    }

    #[test]
    fn gamma_modes_are_penalized() {
        let bulk = small_bulk();
        let g = build_grams(&bulk, Domain::centered(10.0));
        let gi = bulk.index(0, 0);
        assert!(bulk.bz.q_points[0].norm() < 1e-12);
        assert_eq!(g.w[(gi, gi)].re, GAMMA_PENALTY);
        assert_eq!(g.w[(gi, gi + 1 + bulk.n_bands)].norm(), 0.0);
    }

    #[test]
    fn overlap_matches_grid_quadrature() {
        let bulk = small_bulk();
        let dom = Domain::centered(3.0);
        let g = build_grams(&bulk, dom);
        let picks = [1usize, 8, 15, 22, 40];
        let res = 128.0;
        let grid = dom.grid(res);
        let fields: Vec<_> = picks
            .iter()
            .map(|&i| {
                let mut a = vec![c64::new(0.0, 0.0); bulk.len()];
                a[i] = c64::new(1.0, 0.0);
                synthesize_field(&a, &bulk, grid)
            })
            .collect();
        let da = grid.dx() * grid.dy();
        for (x, &i) in picks.iter().enumerate() {
            for (y, &j) in picks.iter().enumerate() {
                let num: c64 = fields[x]
                    .values
                    .iter()
                    .zip(&fields[y].values)
                    .map(|(u, v)| u[2].conj() * v[2])
                    .sum::<c64>()
                    * da;
                let want = g.s[(i, j)];
                let scale = (g.s[(i, i)].re * g.s[(j, j)].re).sqrt();
                assert!((num - want).norm() < 5e-3 * scale, "{i},{j}: {num} vs {want}");
            }
        }
    }

    #[test]
    fn constant_field_volume_is_area() {
        // a single Γ plane wave is constant; peak 1 gives V = area
        let bulk = small_bulk();
        let dom = Domain::centered(4.0);
        let g = build_grams(&bulk, dom);
        // combination of the Γ band-0 mode: purely the G=0 wave for TE
        let i = bulk.index(0, 0);
        let mut a = vec![c64::new(0.0, 0.0); bulk.len()];
        a[i] = c64::new(1.0, 0.0);
        let m = bulk.mode(i);
        assert!((m.h[0].norm() - 1.0).abs() < 1e-8);
        let v = mode_volume_on_grid(&a, &g, &bulk, 16.0).unwrap();
        assert!((v - dom.area()).abs() < 1e-6 * dom.area());
    }

    #[test]
    fn zero_field_rejected() {
        let g = random_grams(3, 1);
        assert!(mode_volume(&[c64::new(0.0, 0.0); 3], &g.s, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(seed in 0u64..1000, bi in 0.0f64..3.0, bv in 0.0f64..3.0) {
            let n = 6;
            let g = random_grams(n, seed);
            let w = CostWeights::new(bi, bv).unwrap();
            let a: Vec<c64> = (0..n).map(|i| c64::new(((seed + i as u64) as f64).sin(), (i as f64 * 0.7).cos())).collect();
            let grad = cost_gradient(&a, &g, w);
            let h = 1e-6;
            for i in 0..n {
                for (k, dir) in [c64::new(1.0, 0.0), c64::new(0.0, 1.0)].into_iter().enumerate() {
                    let mut ap = a.clone();
                    let mut am = a.clone();
                    ap[i] += dir * h;
                    am[i] -= dir * h;
                    let fd = (cost(&ap, &g, w) - cost(&am, &g, w)) / (2.0 * h);
                    let an = if k == 0 { grad[i].re } else { grad[i].im };
                    prop_assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0));
                }
            }
        }

        #[test]
        fn forms_invariant_under_global_phase(seed in 0u64..1000, th in 0.0f64..6.3) {
            let g = random_grams(5, seed);
            let w = CostWeights::new(0.4, 1.3).unwrap();
            let a: Vec<c64> = (0..5).map(|i| c64::new((i as f64 + seed as f64).cos(), 0.3 * i as f64)).collect();
            let b: Vec<c64> = a.iter().map(|z| z * c64::from_polar(1.0, th)).collect();
            prop_assert!((cost(&a, &g, w) - cost(&b, &g, w)).abs() < 1e-10);
        }
    }
}
