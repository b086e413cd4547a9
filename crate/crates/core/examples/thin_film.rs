//! Reflectance of an unpatterned slab at vertical incidence from the planar
//! solver next to the Airy formula.
//!
//! ```text
//! cargo run --release --example thin_film -- [index] [thickness]
//! ```

use phc_design::lattice::LatticeSpec;
use phc_design::planar::tmm::{responses, thin_film_reflectance};
use phc_design::planar::{Incidence, SlabSpec};

fn main() -> phc_design::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().expect("numeric argument"));
    let n = args.next().unwrap_or(3.4);
    let d = args.next().unwrap_or(0.75);
    let mut spec = SlabSpec::new(LatticeSpec::uniform(n), d);
    spec.incidence = Incidence::Vertical;
    let freqs: Vec<f64> = (0..=30).map(|i| 0.05 + 0.01 * i as f64).collect();
    println!("{:>8} {:>12} {:>12} {:>10}", "a/lambda", "R solver", "R Airy", "R + T");
    for r in responses(&spec, &freqs)? {
        let airy = thin_film_reflectance(n, d, r.frequency);
        println!("{:>8.3} {:>12.8} {:>12.8} {:>10.6}", r.frequency, r.reflectance, airy, r.reflectance + r.transmittance);
    }
    Ok(())
}
