//! Sampled 3D fields and their mode volume.

use num_complex::Complex64 as c64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Complex field on a rectilinear grid with uniform spacing per axis.
/// `values[(iz·ny + iy)·nx + ix]`.
#[derive(Clone, Debug, Serialize)]
pub struct FieldGrid3D {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub zs: Vec<f64>,
    #[serde(skip)]
    pub values: Vec<c64>,
}

impl FieldGrid3D {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, zs: Vec<f64>, values: Vec<c64>) -> Result<Self> {
        let bad = |m: String| Err(Error::invalid("planar_solver", m));
        if values.len() != xs.len() * ys.len() * zs.len() {
            return bad(format!(
                "field has {} samples for a {}×{}×{} grid",
                values.len(),
                xs.len(),
                ys.len(),
                zs.len()
            ));
        }
        for (name, ax) in [("x", &xs), ("y", &ys), ("z", &zs)] {
            if ax.len() < 2 {
                return bad(format!("{name} axis needs at least two samples"));
            }
            let h = ax[1] - ax[0];
            if !(h > 0.0) || ax.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.max(1.0)) {
                return bad(format!("{name} axis must be uniformly increasing"));
            }
        }
        Ok(FieldGrid3D { xs, ys, zs, values })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.xs.len(), self.ys.len(), self.zs.len()]
    }

    pub fn at(&self, ix: usize, iy: usize, iz: usize) -> c64 {
        self.values[(iz * self.ys.len() + iy) * self.xs.len() + ix]
    }

    /// Sample nearest to a point.
    pub fn nearest(&self, x: f64, y: f64, z: f64) -> c64 {
        let idx = |ax: &[f64], v: f64| {
            let h = ax[1] - ax[0];
            (((v - ax[0]) / h).round().max(0.0) as usize).min(ax.len() - 1)
        };
        self.at(idx(&self.xs, x), idx(&self.ys, y), idx(&self.zs, z))
    }

    /// The samples with `|x| ≤ hx` and `|y| ≤ hy`, all `z`.
    pub fn crop(&self, hx: f64, hy: f64) -> Result<FieldGrid3D> {
        let keep = |ax: &[f64], h: f64| -> Vec<usize> { (0..ax.len()).filter(|&i| ax[i].abs() <= h + 1e-12).collect() };
        let (ix, iy) = (keep(&self.xs, hx), keep(&self.ys, hy));
        let mut values = Vec::with_capacity(ix.len() * iy.len() * self.zs.len());
        for iz in 0..self.zs.len() {
            for &j in &iy {
                for &i in &ix {
                    values.push(self.at(i, j, iz));
                }
            }
        }
        FieldGrid3D::new(
            ix.iter().map(|&i| self.xs[i]).collect(),
            iy.iter().map(|&j| self.ys[j]).collect(),
            self.zs.clone(),
            values,
        )
    }

    /// `|H|²` interpolated trilinearly to a point inside the grid.
    pub fn intensity_at(&self, x: f64, y: f64, z: f64) -> f64 {
        let locate = |ax: &[f64], v: f64| {
            let h = ax[1] - ax[0];
            let t = ((v - ax[0]) / h).clamp(0.0, (ax.len() - 1) as f64);
            let i = (t.floor() as usize).min(ax.len() - 2);
            (i, t - i as f64)
        };
        let (ix, tx) = locate(&self.xs, x);
        let (iy, ty) = locate(&self.ys, y);
        let (iz, tz) = locate(&self.zs, z);
        let mut s = 0.0;
        for (dz, wz) in [(0, 1.0 - tz), (1, tz)] {
            for (dy, wy) in [(0, 1.0 - ty), (1, ty)] {
                for (dx, wx) in [(0, 1.0 - tx), (1, tx)] {
                    s += wx * wy * wz * self.at(ix + dx, iy + dy, iz + dz).norm_sqr();
                }
            }
        }
        s
    }

    pub fn max_intensity(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max)
    }
}

/// Composite Simpson weights for `n` uniform samples of spacing `h`.  An
/// even sample count needs one 3/8 panel; the rule with that panel at the
/// start and the one with it at the end are averaged, which keeps the weights
/// mirror-symmetric.  Two samples fall back to the trapezoid rule.
pub fn simpson_weights(n: usize, h: f64) -> Vec<f64> {
    // Simpson panels over [from, from + 2k], k = len / 2
    fn simpson(w: &mut [f64], from: usize, len: usize, h: f64, scale: f64) {
        for i in (from..from + len).step_by(2) {
            w[i] += scale * h / 3.0;
            w[i + 1] += scale * 4.0 * h / 3.0;
            w[i + 2] += scale * h / 3.0;
        }
    }
    fn three_eighths(w: &mut [f64], from: usize, h: f64, scale: f64) {
        for (o, c) in [1.0, 3.0, 3.0, 1.0].into_iter().enumerate() {
            w[from + o] += scale * 3.0 * h / 8.0 * c;
        }
    }
    let mut w = vec![0.0; n];
    match n {
        0 | 1 => {}
        2 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ if n % 2 == 1 => simpson(&mut w, 0, n - 1, h, 1.0),
        _ => {
            simpson(&mut w, 0, n - 4, h, 0.5);
            three_eighths(&mut w, n - 4, h, 0.5);
            three_eighths(&mut w, 0, h, 0.5);
            simpson(&mut w, 3, n - 4, h, 0.5);
        }
    }
    w
}

/// `∫|f|² dV / max|f|²` over the sampled box.
pub fn mode_volume_3d(field: &FieldGrid3D) -> Result<f64> {
    let peak = field.max_intensity();
    if !(peak > 0.0) {
        return Err(Error::ZeroField { module: "planar_solver" });
    }
    let [nx, ny, nz] = field.dims();
    let wx = simpson_weights(nx, field.xs[1] - field.xs[0]);
    let wy = simpson_weights(ny, field.ys[1] - field.ys[0]);
    let wz = simpson_weights(nz, field.zs[1] - field.zs[0]);
    let mut total = 0.0;
    for (iz, wz) in wz.iter().enumerate() {
        for (iy, wy) in wy.iter().enumerate() {
            let row = (iz * ny + iy) * nx;
            let s: f64 = wx.iter().zip(&field.values[row..row + nx]).map(|(w, v)| w * v.norm_sqr()).sum();
            total += wz * wy * s;
        }
    }
    Ok(total / peak)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn axis(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    }

    fn grid(n: usize, half: f64, f: impl Fn(f64, f64, f64) -> f64) -> FieldGrid3D {
        let a = axis(n, -half, half);
        let mut v = Vec::new();
        for &z in &a {
            for &y in &a {
                for &x in &a {
                    v.push(c64::new(f(x, y, z), 0.0));
                }
            }
        }
        FieldGrid3D::new(a.clone(), a.clone(), a, v).unwrap()
    }

    #[test]
    fn gaussian_volume_at_33_cubed() {
        let s: f64 = 1.0;
        let g = grid(33, 6.0 * s, |x, y, z| (-(x * x + y * y + z * z) / (2.0 * s * s)).exp());
        // ∫ exp(−r²/σ²) = (√π σ)³
        let want = (std::f64::consts::PI.sqrt() * s).powi(3);
        let v = mode_volume_3d(&g).unwrap();
        assert!(((v - want) / want).abs() < 5e-3, "{v} vs {want}");
    }

    #[test]
    fn crop_keeps_the_central_box() {
        let g = grid(9, 2.0, |x, y, _| x + 10.0 * y);
        let c = g.crop(1.0, 0.5).unwrap();
        assert_eq!(c.dims(), [5, 3, 9]);
        assert_eq!(c.nearest(1.0, -0.5, 0.0).re, 1.0 - 5.0);
        assert_eq!(g.nearest(0.26, 0.0, 0.0).re, 0.5);
    }

    #[test]
    fn interpolated_intensity_is_mirror_symmetric() {
        let a = axis(6, -1.0, 1.0);
        let mut v = Vec::new();
        for _ in 0..6 {
            for &y in &a {
                for _ in 0..6 {
                    v.push(c64::new(1.0 + y, 0.0));
                }
            }
        }
        let g = FieldGrid3D::new(a.clone(), a.clone(), a, v).unwrap();
        // (1 − 0.2)² and (1 + 0.2)² averaged
        assert!((g.intensity_at(0.0, 0.0, 0.0) - 1.04).abs() < 1e-12);
        assert!((g.intensity_at(0.6, 1.0, -1.0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_field_is_an_error() {
        let g = grid(5, 1.0, |_, _, _| 0.0);
        assert!(matches!(mode_volume_3d(&g), Err(Error::ZeroField { .. })));
    }

    #[test]
    fn mismatched_sizes_are_rejected() {
        let a = axis(3, 0.0, 1.0);
        assert!(FieldGrid3D::new(a.clone(), a.clone(), a, vec![c64::new(1.0, 0.0); 5]).is_err());
    }

    proptest! {
        #[test]
        fn constant_field_gives_the_box(n in 2usize..12, side in 0.1f64..10.0, amp in 0.1f64..5.0) {
            let g = grid(n, side / 2.0, |_, _, _| amp);
            let v = mode_volume_3d(&g).unwrap();
            prop_assert!((v - side.powi(3)).abs() < 1e-12 * side.powi(3).max(1.0));
        }

        #[test]
        fn simpson_is_exact_on_cubics(n in 2usize..40, c in -3.0f64..3.0) {
            let h = 1.0 / (n - 1) as f64;
            let w = simpson_weights(n, h);
            let exact = if n == 2 { 0.5 + c * 0.5 } else { 0.25 + c / 3.0 };
            let f = |x: f64| if n == 2 { 0.5 + c * x } else { x * x * x + c * x * x };
            let got: f64 = w.iter().enumerate().map(|(i, w)| w * f(i as f64 * h)).sum();
            prop_assert!((got - exact).abs() < 1e-12);
            prop_assert!((0..n).all(|i| (w[i] - w[n - 1 - i]).abs() < 1e-15));
        }
    }
}
