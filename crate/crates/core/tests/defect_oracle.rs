//! The defect operator in the bulk-mode basis against a converged plane-wave
//! solve set up directly on the superlattice.

use num_complex::Complex64 as c64;
use phc_design::bulk::{BulkSet, Polarization};
use phc_design::defect::{assemble_defect_operator, solve_cavity_modes, DefectFourier, KGrid};
use phc_design::lattice::*;
use phc_design::linalg::{herm_eigen, hermitian_defect, CMat};

/// TE eigenvalues of `−∇·η∇` on the superlattice with `η = η₀ + δη`, using
/// every reciprocal-superlattice vector with `|k| < cutoff`.
fn supercell_spectrum(spec: &LatticeSpec, defect: &DefectFourier, bz: &BzSampling, cutoff: f64) -> Vec<f64> {
    let m = bz.supercell;
    let det = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) as i32;
    let mut ks: Vec<[i32; 2]> = Vec::new();
    let r = 40;
    for i in -r..=r {
        for j in -r..=r {
            if bz.sup_point([i, j]).norm() < cutoff {
                ks.push([i, j]);
            }
        }
    }
    // superlattice coords n = M g  ⇔  g = M⁻¹ n (integral when k is a bulk G)
    let to_g = |n: [i32; 2]| -> Option<[i32; 2]> {
        let a = m[1][1] * n[0] - m[0][1] * n[1];
        let b = -m[1][0] * n[0] + m[0][0] * n[1];
        (a % det == 0 && b % det == 0).then(|| [a / det, b / det])
    };
    let n = ks.len();
    let a = CMat::from_fn(n, n, |i, j| {
        let d = [ks[i][0] - ks[j][0], ks[i][1] - ks[j][1]];
        let mut eta = defect.get(d);
        if let Some(g) = to_g(d) {
            eta += c64::new(eta_coefficient(spec, reciprocal_point(g)), 0.0);
        }
        eta * bz.sup_point(ks[i]).dot(bz.sup_point(ks[j]))
    });
    assert!(hermitian_defect(&a) < 1e-12);
    herm_eigen(&a, "oracle").unwrap().0
}

#[test]
fn defect_operator_matches_supercell_oracle() {
    // weak, smooth, band-limited perturbation of a weak-contrast crystal
    let spec = LatticeSpec::new(0.3, 1.25, 1.0).unwrap();
    let basis = build_reciprocal_basis(&spec, 7).unwrap();
    let eta = eta_fourier(&spec, &basis);
    let bz = sample_brillouin_zone(&basis, 7).unwrap();
    let bulk = BulkSet::solve(&eta, &basis, &bz, Polarization::TE, basis.len()).unwrap();
    let grid = KGrid::new(&basis, &bz);
    let mut defect = DefectFourier::from_fn(grid, |k| {
        c64::from_polar(0.08 * (-0.05 * k.norm2()).exp(), -k.dot(Vec2::new(0.2, 0.1)))
    });
    defect.symmetrize();
    let d = assemble_defect_operator(&bulk, &defect).unwrap();
    assert!(hermitian_defect(&d) < 1e-10);
    let (ours, _) = herm_eigen(&d, "test").unwrap();
    let oracle = supercell_spectrum(&spec, &defect, &bz, 40.0);
    for i in 1..8 {
        let (w, o) = (ours[i].sqrt(), oracle[i].sqrt());
        assert!((w - o).abs() / o < 0.02, "mode {i}: {w} vs {o}");
    }
}

#[test]
fn filled_hole_creates_in_gap_mode() {
    let spec = LatticeSpec::new(0.3, 3.4, 1.0).unwrap();
    let basis = build_reciprocal_basis(&spec, 19).unwrap();
    let eta = eta_fourier(&spec, &basis);
    let bz = sample_brillouin_zone(&basis, 19).unwrap();
    let bulk = BulkSet::solve(&eta, &basis, &bz, Polarization::TE, basis.len()).unwrap();
    let gap = phc_design::bulk::band_structure(&eta, &basis, 10, Polarization::TE, 3)
        .unwrap()
        .gap
        .unwrap();
    let grid = KGrid::new(&basis, &bz);
    let defect = DefectFourier::disc(grid, Vec2::ZERO, 0.3, spec.eta_bulk() - spec.eta_hole());
    let d = assemble_defect_operator(&bulk, &defect).unwrap();
    let modes = solve_cavity_modes(&d, gap).unwrap();
    assert!(!modes.is_empty());
    for m in &modes {
        let mut r = 0.0f64;
        for i in 0..d.nrows() {
            let mut s = c64::new(0.0, 0.0);
            for j in 0..d.ncols() {
                s += d[(i, j)] * m.coefficients[j];
            }
            r += (s - m.omega_m * m.omega_m * m.coefficients[i]).norm_sqr();
        }
        assert!(r.sqrt() < 1e-8);
    }

    // the converged superlattice solve also has a state in the gap
    let oracle = supercell_spectrum(&spec, &defect, &bz, 45.0);
    assert!(oracle.iter().any(|&l| l > 0.0 && gap.contains(l.sqrt())));
}

#[test]
fn no_defect_means_no_in_gap_mode() {
    let spec = LatticeSpec::new(0.3, 3.4, 1.0).unwrap();
    let basis = build_reciprocal_basis(&spec, 19).unwrap();
    let eta = eta_fourier(&spec, &basis);
    let bz = sample_brillouin_zone(&basis, 7).unwrap();
    let bulk = BulkSet::solve(&eta, &basis, &bz, Polarization::TE, basis.len()).unwrap();
    let gap = phc_design::bulk::band_structure(&eta, &basis, 10, Polarization::TE, 3)
        .unwrap()
        .gap
        .unwrap();
    let d = assemble_defect_operator(&bulk, &DefectFourier::zero(KGrid::new(&basis, &bz))).unwrap();
    assert!(matches!(
        solve_cavity_modes(&d, gap),
        Err(phc_design::Error::NoInGapMode { .. })
    ));
}
