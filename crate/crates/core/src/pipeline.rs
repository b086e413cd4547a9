//! The 2D analytic design chain: bulk modes → optimal cavity coefficients →
//! defect dielectric → hole geometry.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::bulk::{band_structure, BulkSet, Gap, Polarization};
use crate::defect::{synthesize_field, DefectFourier, GridSpec};
use crate::error::{Error, Result};
use crate::inverter::{
    build_inversion_system, merit, optimize_weights, reconstruct_and_contour, solve_defect, DielectricMap,
    Selector, SolveReport, VariationalResult,
};
use crate::lattice::{build_reciprocal_basis, eta_fourier, sample_brillouin_zone, LatticeSpec};
use crate::objective::{build_grams, intensity_at_origin, overlap, q_proxy, CostWeights, Domain};

/// Parameters of one 2D inversion.  Frequencies are in `a/λ`.
#[derive(Clone, Debug, Serialize)]
pub struct Invert2dParams {
    pub lattice: LatticeSpec,
    pub n_g: usize,
    pub n_q: usize,
    /// Bands per Bloch vector admitted into the cavity expansion.
    pub n_bands: usize,
    pub polarization: Polarization,
    pub domain_side: f64,
    pub weights: CostWeights,
    pub selector: Selector,
    /// Eigenproblem solves allowed in the weight search (1 = no search).
    pub budget: usize,
    /// Cavity frequency; `None` selects midgap.
    pub omega_m: Option<f64>,
    pub tau: f64,
    /// Samples per `a` when locating the field peak.
    pub peak_resolution: f64,
    /// Samples per `a` of the reconstructed dielectric.
    pub contour_resolution: f64,
    /// Side of the square on which the dielectric is reconstructed.
    pub contour_side: f64,
}

impl Invert2dParams {
    /// The symmetric-defect setup: n_b = 3.4, r_h = 0.3a, five layers.
    pub fn symmetric_defect(n_g: usize, n_q: usize) -> Result<Self> {
        Ok(Invert2dParams {
            lattice: LatticeSpec::new(0.3, 3.4, 1.0)?,
            n_g,
            n_q,
            n_bands: 6,
            polarization: Polarization::TE,
            domain_side: 10.0,
            weights: CostWeights::new(1.0, 1.0)?,
            selector: Selector::Confining,
            budget: 28,
            omega_m: None,
            tau: 1e-8,
            peak_resolution: 8.0,
            contour_resolution: 32.0,
            contour_side: 6.0,
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("analytic_inverter", m));
        if self.n_g == 0 || self.n_q == 0 || self.n_bands == 0 {
            return bad("n_g, n_q and n_bands must be positive".into());
        }
        if self.budget == 0 {
            return bad("budget must be at least 1".into());
        }
        if !(self.domain_side > 0.0 && self.contour_side > 0.0) {
            return bad("domain sides must be positive".into());
        }
        if !(self.peak_resolution > 0.0 && self.contour_resolution > 0.0) {
            return bad("resolutions must be positive".into());
        }
        if !(self.tau >= 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in [0, 1), got {}", self.tau));
        }
        self.lattice.validate()
    }
}

/// Everything produced by one inversion.
#[derive(Clone, Debug, Serialize)]
pub struct Invert2dOutcome {
    pub hole_index: f64,
    /// Gap edges in `a/λ`.
    pub gap: [f64; 2],
    /// Cavity frequency in `a/λ`.
    pub omega_m: f64,
    pub variational: VariationalResult,
    pub evaluations: usize,
    /// Merit at the reference weights.
    pub merit: f64,
    pub q_proxy: f64,
    pub intensity: f64,
    /// Max-one mode volume in `a²` and in `λ²`.
    pub volume: f64,
    pub volume_lambda2: f64,
    pub solve: SolveReport,
    #[serde(skip)]
    pub defect: DefectFourier,
    #[serde(skip)]
    pub map: DielectricMap,
    pub central_radius: f64,
    pub bulk_hole_index: Option<f64>,
}

fn lowest_gap(lattice: &LatticeSpec, n_g: usize, pol: Polarization) -> Result<Gap> {
    let basis = build_reciprocal_basis(lattice, n_g)?;
    let eta = eta_fourier(lattice, &basis);
    band_structure(&eta, &basis, 12, pol, 4)?.gap.ok_or(Error::NoGap)
}

/// Run the chain once.
pub fn invert2d(p: &Invert2dParams) -> Result<Invert2dOutcome> {
    p.validate()?;
    let basis = build_reciprocal_basis(&p.lattice, p.n_g)?;
    let eta = eta_fourier(&p.lattice, &basis);
    let gap = lowest_gap(&p.lattice, p.n_g, p.polarization)?;
    let omega_m = match p.omega_m {
        Some(f) => f * TAU,
        None => gap.midgap(),
    };
    if !gap.contains(omega_m) {
        return Err(Error::OutsideGap {
            omega: omega_m / TAU,
            low: gap.low / TAU,
            high: gap.high / TAU,
        });
    }
    let bz = sample_brillouin_zone(&basis, p.n_q)?;
    let bulk = BulkSet::solve(&eta, &basis, &bz, p.polarization, p.n_bands.min(basis.len()))?;
    let domain = Domain::centered(p.domain_side);
    let grams = build_grams(&bulk, domain);
    let (_, var, evaluations) = optimize_weights(&grams, p.weights, p.budget, p.selector, |r| {
        merit(r, &grams, &bulk, p.weights, p.peak_resolution)
    })?;
    let a = &var.coefficients;
    let merit_value = merit(&var, &grams, &bulk, p.weights, p.peak_resolution);
    let peak = synthesize_field(a, &bulk, domain.grid(2.0 * p.peak_resolution)).max_abs;
    if peak == 0.0 {
        return Err(Error::ZeroField { module: "analytic_inverter" });
    }
    let volume = overlap(a, &grams.s) / (peak * peak);
    let lambda = TAU / omega_m;
    let system = build_inversion_system(a, &bulk, omega_m, gap)?;
    let (defect, solve) = solve_defect(&system, p.tau)?;
    let map = reconstruct_and_contour(&defect, &p.lattice, GridSpec::centered(p.contour_side, p.contour_resolution));
    Ok(Invert2dOutcome {
        hole_index: p.lattice.hole_index,
        gap: [gap.low / TAU, gap.high / TAU],
        omega_m: omega_m / TAU,
        evaluations,
        merit: merit_value,
        q_proxy: q_proxy(a, &grams.w),
        intensity: intensity_at_origin(a, &grams.p),
        volume,
        volume_lambda2: volume / (lambda * lambda),
        solve,
        central_radius: map.central_radius(),
        bulk_hole_index: map.bulk_hole_index(),
        defect,
        map,
        variational: var,
    })
}

/// Treat the bulk hole index as a design variable: run the chain for the
/// candidate indices in order and keep the one with the largest merit.  The
/// scan ends at the first candidate whose crystal has lost its gap (raising the
/// hole index only shrinks it).  Returns the per-candidate merits and the
/// winning outcome.
pub fn invert2d_free_index(p: &Invert2dParams, candidates: &[f64]) -> Result<(Vec<(f64, f64)>, Invert2dOutcome)> {
    let mut scan = Vec::new();
    let mut best: Option<Invert2dOutcome> = None;
    let mut first_err = None;
    for &n_h in candidates {
        let mut q = p.clone();
        q.lattice = LatticeSpec::new(p.lattice.hole_radius, p.lattice.bulk_index, n_h)?;
        match invert2d(&q) {
            Ok(o) => {
                scan.push((n_h, o.merit));
                if best.as_ref().is_none_or(|b| o.merit > b.merit) {
                    best = Some(o);
                }
            }
            Err(e @ (Error::NoGap | Error::OutsideGap { .. })) => {
                scan.push((n_h, f64::NEG_INFINITY));
                first_err.get_or_insert(e);
                if best.is_some() {
                    break;
                }
            }
            Err(e) => return Err(e),
        }
    }
    match best {
        Some(b) => Ok((scan, b)),
        None => Err(first_err.unwrap_or_else(|| Error::invalid("analytic_inverter", "no hole-index candidates"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_run_is_consistent() {
        let mut p = Invert2dParams::symmetric_defect(7, 7).unwrap();
        p.budget = 5;
        p.contour_resolution = 16.0;
        let o = invert2d(&p).unwrap();
        assert!(o.evaluations <= 5);
        assert!(o.omega_m > o.gap[0] && o.omega_m < o.gap[1]);
        assert!(o.volume > 0.0 && o.volume <= 100.0 + 1e-9);
        assert!(o.variational.residual < 1e-8);
        // δη is real in space after symmetrization
        for r in [crate::lattice::Vec2::new(0.1, 0.2), crate::lattice::Vec2::new(-0.7, 0.3)] {
            assert!(o.defect.synthesize(r).im.abs() < 1e-8);
        }
    }

    #[test]
    fn free_index_scan_stops_when_the_gap_closes() {
        let mut p = Invert2dParams::symmetric_defect(7, 7).unwrap();
        p.budget = 2;
        p.contour_resolution = 8.0;
        let (scan, best) = invert2d_free_index(&p, &[1.0, 1.5, 3.3, 3.4]).unwrap();
        assert!(scan.len() <= 3);
        assert_eq!(scan.last().unwrap().1, f64::NEG_INFINITY);
        assert!(scan.iter().any(|(n, m)| *n == best.hole_index && *m == best.merit));
    }

    #[test]
    fn off_gap_frequency_is_rejected() {
        let mut p = Invert2dParams::symmetric_defect(7, 7).unwrap();
        p.omega_m = Some(0.05);
        assert!(matches!(invert2d(&p), Err(Error::OutsideGap { .. })));
    }
}
