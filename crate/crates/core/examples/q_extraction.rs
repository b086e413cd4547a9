//! Fit a synthetic reflectance dip and compare the recovered quality factor
//! with the truth as noise grows.
//!
//! ```text
//! cargo run --release --example q_extraction -- [q]
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use phc_design::planar::spectrum::{extract_q, ReflectionSpectrum, Resonance};

fn main() -> phc_design::Result<()> {
    let q: f64 = std::env::args().nth(1).map_or(1e4, |s| s.parse().expect("numeric Q"));
    let w0 = 0.28;
    let truth = Resonance { omega0: w0, fwhm: w0 / q, q, depth: 0.6, baseline: 0.8, slope: 0.5 };
    let freqs: Vec<f64> = (0..401).map(|i| w0 + (i as f64 - 200.0) * truth.fwhm / 40.0).collect();
    println!("{:>8} {:>12} {:>10} {:>10}", "noise", "Q", "error %", "a/lambda");
    for sigma in [0.0, 0.001, 0.01, 0.03] {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r: Vec<f64> = freqs
            .iter()
            .map(|&w| truth.model(w) + if sigma > 0.0 { Normal::new(0.0, sigma).unwrap().sample(&mut rng) } else { 0.0 })
            .collect();
        let fit = extract_q(&ReflectionSpectrum::from_reflectance(freqs.clone(), r))?;
        println!("{sigma:>8} {:>12.1} {:>10.3} {:>10.6}", fit.q, 100.0 * (fit.q - q).abs() / q, fit.omega0);
    }
    Ok(())
}
