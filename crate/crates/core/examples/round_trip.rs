//! Plant a filled central hole, find its in-gap mode, and recover the defect
//! dielectric by inverting the Maxwell equation.
//!
//! `cargo run --release --example round_trip -- [n_g] [n_q] [max_modes]`

use std::time::Instant;

use phc_design::bulk::{band_structure, BulkSet, Polarization};
use phc_design::defect::{assemble_defect_operator, solve_cavity_modes, DefectFourier, KGrid};
use phc_design::inverter::{build_inversion_system, solve_defect};
use phc_design::lattice::*;

fn main() -> phc_design::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<usize>().expect("integer argument"));
    let n_g = args.next().unwrap_or(19);
    let n_q = args.next().unwrap_or(n_g);
    let max_modes = args.next().unwrap_or(usize::MAX);
    let t = Instant::now();
    let spec = LatticeSpec::new(0.3, 3.4, 1.0)?;
    let basis = build_reciprocal_basis(&spec, n_g)?;
    let eta = eta_fourier(&spec, &basis);
    let gap = band_structure(&eta, &basis, 12, Polarization::TE, 3)?.gap.expect("TE gap");
    let bz = sample_brillouin_zone(&basis, n_q)?;
    let bulk = BulkSet::solve(&eta, &basis, &bz, Polarization::TE, basis.len())?;
    let planted = DefectFourier::disc(KGrid::new(&basis, &bz), Vec2::ZERO, 0.3, spec.eta_bulk() - spec.eta_hole());
    let d = assemble_defect_operator(&bulk, &planted)?;
    let modes = solve_cavity_modes(&d, gap)?;
    println!("N = {}  gap = [{:.5}, {:.5}] a/λ", bulk.len(), gap.low / std::f64::consts::TAU, gap.high / std::f64::consts::TAU);
    for m in modes.iter().take(max_modes) {
        let sys = build_inversion_system(&m.coefficients, &bulk, m.omega_m, gap)?;
        let (rec, rep) = solve_defect(&sys, 1e-8)?;
        println!(
            "mode {:>4}  a/λ = {:.5}  rank {}/{}  residual {:.2e}  recovery error {:.3e}",
            m.mode_index,
            m.omega_m / std::f64::consts::TAU,
            rep.rank,
            sys.grid.len(),
            rep.relative_residual,
            rec.relative_error(&planted)
        );
    }
    println!("elapsed {:.1} s", t.elapsed().as_secs_f64());
    Ok(())
}
