//! Simpson mode volume of a Gaussian field against its closed form as the
//! sampling is refined, and of a constant field (the box volume).
//!
//! ```text
//! cargo run --release --example mode_volume
//! ```

use num_complex::Complex64 as c64;

use phc_design::planar::volume::{mode_volume_3d, FieldGrid3D};

fn cube(n: usize, half: f64, f: impl Fn(f64, f64, f64) -> f64) -> phc_design::Result<FieldGrid3D> {
    let ax: Vec<f64> = (0..n).map(|i| -half + 2.0 * half * i as f64 / (n - 1) as f64).collect();
    let mut v = Vec::with_capacity(n * n * n);
    for &z in &ax {
        for &y in &ax {
            for &x in &ax {
                v.push(c64::new(f(x, y, z), 0.0));
            }
        }
    }
    FieldGrid3D::new(ax.clone(), ax.clone(), ax, v)
}

fn main() -> phc_design::Result<()> {
    let exact = std::f64::consts::PI.powf(1.5);
    println!("Gaussian exp(-r²/2), exact volume {exact:.6}");
    for n in [9, 17, 33, 65] {
        let v = mode_volume_3d(&cube(n, 3.0, |x, y, z| (-(x * x + y * y + z * z) / 2.0).exp())?)?;
        println!("  {n:>3}³  V = {v:.6}  error {:.4}%", 100.0 * (v - exact).abs() / exact);
    }
    let v = mode_volume_3d(&cube(12, 1.0, |_, _, _| 0.3)?)?;
    println!("constant field on a 2×2×2 box: V = {v:.15}");
    Ok(())
}
