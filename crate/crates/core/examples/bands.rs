//! TE band structure of the hexagonal hole lattice and its gap versus the
//! plane-wave cutoff.
//!
//! ```text
//! cargo run --release --example bands
//! ```

use phc_design::bulk::{band_structure, Polarization};
use phc_design::lattice::{build_reciprocal_basis, eta_fourier, LatticeSpec};

fn main() -> phc_design::Result<()> {
    let spec = LatticeSpec::new(0.3, 3.4, 1.0)?;
    println!("{:>5} {:>10} {:>10} {:>10}", "n_g", "low a/l", "high a/l", "width");
    for n_g in [37, 61, 127, 169] {
        let basis = build_reciprocal_basis(&spec, n_g)?;
        let eta = eta_fourier(&spec, &basis);
        let bands = band_structure(&eta, &basis, 12, Polarization::TE, 4)?;
        match bands.gap {
            Some(g) => {
                let tau = 2.0 * std::f64::consts::PI;
                println!(
                    "{:>5} {:>10.5} {:>10.5} {:>10.5}",
                    basis.len(),
                    g.low / tau,
                    g.high / tau,
                    g.width() / tau
                );
            }
            None => println!("{:>5} no gap", basis.len()),
        }
    }
    Ok(())
}
