//! Defect perturbation `δη`, the defect-coupled eigenproblem in the bulk-mode
//! basis, and real-space synthesis of cavity fields.
//!
//! The defect lives on the superlattice that underlies the Brillouin-zone
//! sampling, so its Fourier support is the discrete set `K = {q + G}`.
//! Wavevectors are keyed by integer coordinates in the reciprocal
//! superlattice basis.  `δη` is band limited to `K`: coefficients outside it
//! are zero.

use std::collections::HashMap;
use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Par};
use num_complex::Complex64 as c64;
use serde::Serialize;

use crate::bulk::{kinetic, polarization_vector, BulkSet, Gap, Polarization};
use crate::error::{Error, Result};
use crate::lattice::{disc_factor, BzSampling, ReciprocalBasis, Vec2};
use crate::linalg::{herm_eigen, CMat};

/// The wavevector set `K = {q_i + G_j}`; entry `i * n_g + j`.
#[derive(Clone, Debug)]
pub struct KGrid {
    pub coords: Vec<[i32; 2]>,
    pub vectors: Vec<Vec2>,
    pub n_g: usize,
    pub n_q: usize,
    pub supercell: [[i32; 2]; 2],
    pub sup_b1: Vec2,
    pub sup_b2: Vec2,
    index: HashMap<[i32; 2], usize>,
}

impl KGrid {
    pub fn new(basis: &ReciprocalBasis, bz: &BzSampling) -> Self {
        let mut coords = Vec::with_capacity(basis.len() * bz.len());
        for qc in &bz.q_coords {
            for g in basis.coords() {
                let s = bz.g_to_sup(*g);
                coords.push([qc[0] + s[0], qc[1] + s[1]]);
            }
        }
        let vectors = coords.iter().map(|&c| bz.sup_point(c)).collect();
        let index = coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
        KGrid {
            coords,
            vectors,
            n_g: basis.len(),
            n_q: bz.len(),
            supercell: bz.supercell,
            sup_b1: bz.sup_b1,
            sup_b2: bz.sup_b2,
            index,
        }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn lookup(&self, c: [i32; 2]) -> Option<usize> {
        self.index.get(&c).copied()
    }

    pub fn point(&self, c: [i32; 2]) -> Vec2 {
        self.sup_b1 * c[0] as f64 + self.sup_b2 * c[1] as f64
    }

    /// Index of `-k` when it belongs to the grid.
    pub fn neg(&self, i: usize) -> Option<usize> {
        let c = self.coords[i];
        self.lookup([-c[0], -c[1]])
    }

    /// Real-space area of the superlattice cell.
    pub fn super_area(&self) -> f64 {
        crate::lattice::CELL_AREA * self.n_q as f64
    }

    fn compatible(&self, bulk: &BulkSet) -> Result<()> {
        if self.supercell != bulk.bz.supercell || self.n_g != bulk.basis.len() || self.n_q != bulk.bz.len() {
            return Err(Error::invalid(
                "defect_model",
                "defect Fourier grid was built for a different basis or Brillouin-zone sampling",
            ));
        }
        Ok(())
    }
}

/// Fourier coefficients of the defect perturbation on a [`KGrid`].
#[derive(Clone, Debug)]
pub struct DefectFourier {
    pub grid: KGrid,
    pub coefficients: Vec<c64>,
}

impl DefectFourier {
    pub fn zero(grid: KGrid) -> Self {
        let n = grid.len();
        DefectFourier {
            grid,
            coefficients: vec![c64::new(0.0, 0.0); n],
        }
    }

    pub fn from_fn(grid: KGrid, f: impl Fn(Vec2) -> c64) -> Self {
        let coefficients = grid.vectors.iter().map(|&k| f(k)).collect();
        DefectFourier { grid, coefficients }
    }

    /// Disc of radius `radius` at `center` whose `η` is shifted by `delta`,
    /// repeated on the superlattice.
    pub fn disc(grid: KGrid, center: Vec2, radius: f64, delta: f64) -> Self {
        let area = grid.super_area();
        let w = delta * PI * radius * radius / area;
        Self::from_fn(grid, |k| {
            c64::from_polar(w * disc_factor(k.norm() * radius), -k.dot(center))
        })
    }

    /// `δη_k` for an arbitrary superlattice coordinate (zero outside the grid).
    pub fn get(&self, c: [i32; 2]) -> c64 {
        self.grid
            .lookup(c)
            .map_or(c64::new(0.0, 0.0), |i| self.coefficients[i])
    }

    /// Enforce `δη_{-k} = conj(δη_k)` on every pair present in the grid.
    pub fn symmetrize(&mut self) {
        let old = self.coefficients.clone();
        for i in 0..old.len() {
            if let Some(j) = self.grid.neg(i) {
                self.coefficients[i] = 0.5 * (old[i] + old[j].conj());
            }
        }
    }

    /// `δη(r)`; real for symmetric coefficient sets.
    pub fn synthesize(&self, r: Vec2) -> c64 {
        self.grid
            .vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(k, c)| c * c64::from_polar(1.0, k.dot(r)))
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Relative L2 distance `‖self − other‖ / ‖other‖` in coefficient space.
    pub fn relative_error(&self, other: &DefectFourier) -> f64 {
        let d: f64 = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        d.sqrt() / other.l2_norm()
    }
}

/// Plane-wave coefficients `c_p = Σ_n a_{n,q} h_{n,p}` over the grid.
pub fn plane_wave_coefficients(a: &[c64], bulk: &BulkSet) -> Vec<c64> {
    let ng = bulk.basis.len();
    let mut c = vec![c64::new(0.0, 0.0); ng * bulk.bz.len()];
    for qi in 0..bulk.bz.len() {
        let h = &bulk.h[qi];
        for b in 0..bulk.n_bands {
            let ab = a[bulk.index(b, qi)];
            if ab == c64::new(0.0, 0.0) {
                continue;
            }
            for g in 0..ng {
                c[qi * ng + g] += h[(g, b)] * ab;
            }
        }
    }
    c
}

/// Defect operator `D = U† V U + diag(ω²)` over the `(n, q)` modes, where
/// `V_{pp'} = δη_{p−p'} κ(p, p')` on the plane-wave grid and `U` holds the
/// bulk eigenvectors.
pub fn assemble_defect_operator(bulk: &BulkSet, defect: &DefectFourier) -> Result<CMat> {
    let grid = &defect.grid;
    grid.compatible(bulk)?;
    let pol = bulk.polarization;
    let mut d = bulk.project(|pi, pj| {
        let (c, cp) = (grid.coords[pi], grid.coords[pj]);
        defect.get([c[0] - cp[0], c[1] - cp[1]]) * kinetic(grid.vectors[pi], grid.vectors[pj], pol)
    });
    let n = d.nrows();
    for i in 0..n {
        let w = bulk.omega_flat(i);
        d[(i, i)] += c64::new(w * w, 0.0);
    }
    Ok(d)
}

/// Cavity mode in the bulk-mode basis; `coefficients` uses the flat `(n, q)`
/// index of [`BulkSet`].
#[derive(Clone, Debug, Serialize)]
pub struct CavityExpansion {
    #[serde(skip)]
    pub coefficients: Vec<c64>,
    pub omega_m: f64,
    pub mode_index: usize,
}

impl CavityExpansion {
    pub fn normalized(coefficients: Vec<c64>, omega_m: f64, mode_index: usize) -> Self {
        let n = crate::linalg::norm(&coefficients);
        CavityExpansion {
            coefficients: coefficients.into_iter().map(|c| c / n).collect(),
            omega_m,
            mode_index,
        }
    }
}

/// Eigenmodes of `D` whose frequency falls inside `gap`, ascending.
pub fn solve_cavity_modes(d: &CMat, gap: Gap) -> Result<Vec<CavityExpansion>> {
    let (vals, vecs) = herm_eigen(d, "defect_model")?;
    let modes: Vec<CavityExpansion> = vals
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0.0 && gap.contains(l.sqrt()))
        .map(|(i, &l)| CavityExpansion {
            coefficients: (0..d.nrows()).map(|r| vecs[(r, i)]).collect(),
            omega_m: l.sqrt(),
            mode_index: i,
        })
        .collect();
    if modes.is_empty() {
        return Err(Error::NoInGapMode {
            low: gap.low / (2.0 * PI),
            high: gap.high / (2.0 * PI),
        });
    }
    Ok(modes)
}

/// Rectangular sampling window; samples sit at cell centres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    /// Samples per lattice constant.
    pub resolution: f64,
}

impl GridSpec {
    /// Square of side `side` centred at the origin.
    pub fn centered(side: f64, resolution: f64) -> Self {
        GridSpec {
            x0: -0.5 * side,
            x1: 0.5 * side,
            y0: -0.5 * side,
            y1: 0.5 * side,
            resolution,
        }
    }

    pub fn nx(&self) -> usize {
        (((self.x1 - self.x0) * self.resolution).round() as usize).max(1)
    }

    pub fn ny(&self) -> usize {
        (((self.y1 - self.y0) * self.resolution).round() as usize).max(1)
    }

    pub fn dx(&self) -> f64 {
        (self.x1 - self.x0) / self.nx() as f64
    }

    pub fn dy(&self) -> f64 {
        (self.y1 - self.y0) / self.ny() as f64
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx()).map(|i| self.x0 + (i as f64 + 0.5) * self.dx()).collect()
    }

    pub fn ys(&self) -> Vec<f64> {
        (0..self.ny()).map(|j| self.y0 + (j as f64 + 0.5) * self.dy()).collect()
    }
}

/// Sampled vector field, row-major in `y` then `x` (`values[j * nx + i]`).
#[derive(Clone, Debug)]
pub struct FieldGrid2D {
    pub grid: GridSpec,
    pub values: Vec<[c64; 3]>,
    pub max_abs: f64,
}

impl FieldGrid2D {
    pub fn magnitude(&self, idx: usize) -> f64 {
        self.values[idx].iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `∫|F|² dA` by the midpoint rule.
    pub fn l2_norm_sqr(&self) -> f64 {
        let da = self.grid.dx() * self.grid.dy();
        (0..self.values.len()).map(|i| self.magnitude(i).powi(2)).sum::<f64>() * da
    }

    /// Copy scaled so that `max |F| = 1`.
    pub fn max_one_normalized(&self) -> Result<FieldGrid2D> {
        if self.max_abs == 0.0 {
            return Err(Error::ZeroField { module: "defect_model" });
        }
        let s = 1.0 / self.max_abs;
        Ok(FieldGrid2D {
            grid: self.grid,
            values: self.values.iter().map(|v| [v[0] * s, v[1] * s, v[2] * s]).collect(),
            max_abs: 1.0,
        })
    }
}

/// Field of arbitrary plane-wave amplitudes `Σ_p c_p ê_p e^{ip·r}`,
/// evaluated through separable phase tables.
pub fn synthesize_plane_waves(
    ks: &[Vec2],
    c: &[c64],
    pol: Polarization,
    grid: GridSpec,
) -> FieldGrid2D {
    let (xs, ys) = (grid.xs(), grid.ys());
    let (nx, ny) = (xs.len(), ys.len());
    let nk = ks.len();
    let ex = CMat::from_fn(ny, nk, |j, p| c64::from_polar(1.0, ks[p].y * ys[j]));
    let comps: &[usize] = match pol {
        Polarization::TE => &[2],
        Polarization::TM => &[0, 1],
    };
    let mut values = vec![[c64::new(0.0, 0.0); 3]; nx * ny];
    let mut f = CMat::zeros(ny, nx);
    for &d in comps {
        let bx = CMat::from_fn(nk, nx, |p, i| {
            let e = polarization_vector(ks[p], pol)[d];
            c[p] * e * c64::from_polar(1.0, ks[p].x * xs[i])
        });
        matmul(f.as_mut(), Accum::Replace, ex.as_ref(), bx.as_ref(), c64::new(1.0, 0.0), Par::Seq);
        for j in 0..ny {
            for i in 0..nx {
                values[j * nx + i][d] = f[(j, i)];
            }
        }
    }
    let max_abs = values
        .iter()
        .map(|v| v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max);
    FieldGrid2D { grid, values, max_abs }
}

/// Real-space cavity field `Σ a_{n,q} H_{n,q}(r)` (not normalized;
/// `max_abs` reports the peak magnitude).
pub fn synthesize_field(a: &[c64], bulk: &BulkSet, grid: GridSpec) -> FieldGrid2D {
    let kg = KGrid::new(&bulk.basis, &bulk.bz);
    let c = plane_wave_coefficients(a, bulk);
    synthesize_plane_waves(&kg.vectors, &c, bulk.polarization, grid)
}
