//! Plane-wave expansion of bulk Bloch modes for the two in-plane
//! polarizations, band paths and gap detection.
//!
//! TE modes carry `H` along `z` with the operator
//! `η_{G-G'} (q+G)·(q+G')`; TM modes carry an in-plane `H` and use
//! `η_{G-G'} |q+G||q+G'|`.  Eigenvalues are `ω²` in units of `(c/a)²`.

use std::f64::consts::PI;
use std::sync::Arc;

use faer::linalg::matmul::matmul;
use faer::{Accum, Par};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{
    high_symmetry_path, BzSampling, FourierDielectric, ReciprocalBasis, Vec2,
};
use crate::linalg::{herm_eigen, CMat};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Polarization {
    #[default]
    TE,
    TM,
}

impl std::str::FromStr for Polarization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "TE" => Ok(Polarization::TE),
            "TM" => Ok(Polarization::TM),
            _ => Err(Error::invalid("bulk_solver", format!("unknown polarization `{s}`"))),
        }
    }
}

/// One Bloch eigenmode. `h[i]` is the coefficient of the plane wave
/// `q + G_i`, with `G_i` taken from `g_vectors`.
#[derive(Clone, Debug)]
pub struct BulkMode {
    pub band: usize,
    pub q: Vec2,
    pub omega: f64,
    pub h: Vec<c64>,
    pub polarization: Polarization,
    pub g_vectors: Arc<[Vec2]>,
}

impl BulkMode {
    /// Frequency in `a/λ`.
    pub fn frequency(&self) -> f64 {
        self.omega / (2.0 * PI)
    }
}

/// Unit polarization vector of the plane wave with wavevector `k`.
pub fn polarization_vector(k: Vec2, pol: Polarization) -> [f64; 3] {
    match pol {
        Polarization::TE => [0.0, 0.0, 1.0],
        Polarization::TM => {
            let n = k.norm();
            if n < 1e-14 {
                [0.0, 1.0, 0.0]
            } else {
                [-k.y / n, k.x / n, 0.0]
            }
        }
    }
}

/// Magnetic field `Σ_G h_G ê_G e^{i(q+G)·r}` of a Bloch mode.
pub fn mode_field(mode: &BulkMode, r: Vec2) -> [c64; 3] {
    let mut out = [c64::new(0.0, 0.0); 3];
    for (h, g) in mode.h.iter().zip(mode.g_vectors.iter()) {
        let k = mode.q + *g;
        let w = h * c64::from_polar(1.0, k.dot(r));
        let e = polarization_vector(k, mode.polarization);
        for d in 0..3 {
            out[d] += w * e[d];
        }
    }
    out
}

/// Kernel `(q+G)·(q+G')` (TE) or `|q+G||q+G'|` (TM).
pub fn kinetic(k: Vec2, kp: Vec2, pol: Polarization) -> f64 {
    match pol {
        Polarization::TE => k.dot(kp),
        Polarization::TM => k.norm() * kp.norm(),
    }
}

/// Hermitian plane-wave operator at Bloch vector `q`.
pub fn assemble_operator(
    eta: &FourierDielectric,
    basis: &ReciprocalBasis,
    q: Vec2,
    pol: Polarization,
) -> Result<CMat> {
    let n = basis.len();
    let mut a = CMat::zeros(n, n);
    let (gc, gv) = (basis.coords(), basis.vectors());
    for j in 0..n {
        let kj = q + gv[j];
        for i in j..n {
            let d = [gc[i][0] - gc[j][0], gc[i][1] - gc[j][1]];
            let v = eta.get(d)? * kinetic(q + gv[i], kj, pol);
            a[(i, j)] = v;
            a[(j, i)] = v.conj();
        }
    }
    Ok(a)
}

fn clamp_omega(lambda: f64, scale: f64) -> Result<f64> {
    if lambda >= 0.0 {
        Ok(lambda.sqrt())
    } else if lambda >= -1e-10 * scale {
        Ok(0.0)
    } else {
        Err(Error::NegativeEigenvalue {
            module: "bulk_solver",
            value: lambda,
        })
    }
}

/// Lowest `n_bands` eigenpairs at `q` (sorted, unit-normalized).
pub fn solve_bands(
    eta: &FourierDielectric,
    basis: &ReciprocalBasis,
    q: Vec2,
    pol: Polarization,
    n_bands: usize,
) -> Result<Vec<BulkMode>> {
    if n_bands > basis.len() {
        return Err(Error::invalid(
            "bulk_solver",
            format!("n_bands = {n_bands} exceeds basis size {}", basis.len()),
        ));
    }
    let g_vectors: Arc<[Vec2]> = basis.vectors().into();
    let a = assemble_operator(eta, basis, q, pol)?;
    let (vals, vecs) = herm_eigen(&a, "bulk_solver")?;
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    (0..n_bands)
        .map(|b| {
            Ok(BulkMode {
                band: b,
                q,
                omega: clamp_omega(vals[b], scale)?,
                h: (0..basis.len()).map(|i| vecs[(i, b)]).collect(),
                polarization: pol,
                g_vectors: g_vectors.clone(),
            })
        })
        .collect()
}

/// Band gap between `lower_band` and `lower_band + 1`, angular frequencies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Gap {
    pub lower_band: usize,
    pub low: f64,
    pub high: f64,
}

impl Gap {
    pub fn width(&self) -> f64 {
        self.high - self.low
    }

    pub fn midgap(&self) -> f64 {
        0.5 * (self.low + self.high)
    }

    pub fn contains(&self, omega: f64) -> bool {
        omega > self.low && omega < self.high
    }
}

#[derive(Clone, Debug)]
pub struct BandStructure {
    pub path: Vec<Vec2>,
    pub path_coordinate: Vec<f64>,
    /// `bands[i][b]`: angular frequency of band `b` at path point `i`.
    pub bands: Vec<Vec<f64>>,
    pub gap: Option<Gap>,
    pub polarization: Polarization,
}

impl BandStructure {
    /// All complete gaps `(band b, band b+1)` in ascending order.
    pub fn gaps(&self) -> Vec<Gap> {
        find_gaps(&self.bands)
    }
}

pub fn find_gaps(bands: &[Vec<f64>]) -> Vec<Gap> {
    let nb = bands.iter().map(Vec::len).min().unwrap_or(0);
    let mut out = Vec::new();
    for b in 0..nb.saturating_sub(1) {
        let top = bands.iter().map(|v| v[b]).fold(f64::NEG_INFINITY, f64::max);
        let bottom = bands.iter().map(|v| v[b + 1]).fold(f64::INFINITY, f64::min);
        if top < bottom && (bottom - top) > 1e-9 * bottom.abs().max(1.0) {
            out.push(Gap {
                lower_band: b,
                low: top,
                high: bottom,
            });
        }
    }
    out
}

/// Bands along Γ–M–K–Γ with `per_segment` steps per leg.
pub fn band_structure(
    eta: &FourierDielectric,
    basis: &ReciprocalBasis,
    per_segment: usize,
    pol: Polarization,
    n_bands: usize,
) -> Result<BandStructure> {
    let (path, path_coordinate) = high_symmetry_path(per_segment);
    let bands = path
        .iter()
        .map(|&q| {
            Ok(solve_bands(eta, basis, q, pol, n_bands)?
                .into_iter()
                .map(|m| m.omega)
                .collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let gap = find_gaps(&bands).into_iter().next();
    Ok(BandStructure {
        path,
        path_coordinate,
        bands,
        gap,
        polarization: pol,
    })
}

/// Every bulk mode on a Brillouin-zone sampling, stored per sample point as a
/// coefficient matrix (plane waves × bands).  Mode `(n, q_i)` has the flat
/// index `i * n_bands + n`.
#[derive(Clone, Debug)]
pub struct BulkSet {
    pub basis: ReciprocalBasis,
    pub bz: BzSampling,
    pub polarization: Polarization,
    pub n_bands: usize,
    pub omega: Vec<Vec<f64>>,
    pub h: Vec<CMat>,
    g_vectors: Arc<[Vec2]>,
}

impl BulkSet {
    pub fn solve(
        eta: &FourierDielectric,
        basis: &ReciprocalBasis,
        bz: &BzSampling,
        pol: Polarization,
        n_bands: usize,
    ) -> Result<Self> {
        let mut omega = Vec::with_capacity(bz.len());
        let mut h = Vec::with_capacity(bz.len());
        for &q in &bz.q_points {
            let modes = solve_bands(eta, basis, q, pol, n_bands)?;
            omega.push(modes.iter().map(|m| m.omega).collect());
            h.push(CMat::from_fn(basis.len(), n_bands, |i, b| modes[b].h[i]));
        }
        Ok(BulkSet {
            basis: basis.clone(),
            bz: bz.clone(),
            polarization: pol,
            n_bands,
            omega,
            h,
            g_vectors: basis.vectors().into(),
        })
    }

    /// Number of `(n, q)` modes.
    pub fn len(&self) -> usize {
        self.n_bands * self.bz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, band: usize, qi: usize) -> usize {
        qi * self.n_bands + band
    }

    /// `(band, q index)` of a flat index.
    pub fn split(&self, idx: usize) -> (usize, usize) {
        (idx % self.n_bands, idx / self.n_bands)
    }

    pub fn omega_flat(&self, idx: usize) -> f64 {
        let (b, qi) = self.split(idx);
        self.omega[qi][b]
    }

    pub fn mode(&self, idx: usize) -> BulkMode {
        let (b, qi) = self.split(idx);
        BulkMode {
            band: b,
            q: self.bz.q_points[qi],
            omega: self.omega[qi][b],
            h: (0..self.basis.len()).map(|i| self.h[qi][(i, b)]).collect(),
            polarization: self.polarization,
            g_vectors: self.g_vectors.clone(),
        }
    }

    pub fn modes(&self) -> Vec<BulkMode> {
        (0..self.len()).map(|i| self.mode(i)).collect()
    }

    /// Project a plane-wave kernel into the mode basis: returns `U† K U`
    /// where `U` is block diagonal with the per-point coefficient matrices and
    /// `kernel(p, p')` is indexed like the plane-wave grid (`q_i * n_g + G_j`).
    pub fn project(&self, kernel: impl Fn(usize, usize) -> c64) -> CMat {
        let (ng, nq, nb) = (self.basis.len(), self.bz.len(), self.n_bands);
        let mut d = CMat::zeros(nb * nq, nb * nq);
        let mut block = CMat::zeros(ng, ng);
        let mut tmp = CMat::zeros(ng, nb);
        let mut out = CMat::zeros(nb, nb);
        let one = c64::new(1.0, 0.0);
        for qj in 0..nq {
            for qi in 0..nq {
                for gj in 0..ng {
                    for gi in 0..ng {
                        block[(gi, gj)] = kernel(qi * ng + gi, qj * ng + gj);
                    }
                }
                matmul(tmp.as_mut(), Accum::Replace, block.as_ref(), self.h[qj].as_ref(), one, Par::Seq);
                matmul(out.as_mut(), Accum::Replace, self.h[qi].adjoint(), tmp.as_ref(), one, Par::Seq);
                for bj in 0..nb {
                    for bi in 0..nb {
                        d[(qi * nb + bi, qj * nb + bj)] = out[(bi, bj)];
                    }
                }
            }
        }
        d
    }
}
