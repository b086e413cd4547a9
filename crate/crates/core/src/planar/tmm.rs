//! Slice propagation: transverse finite-difference eigenmodes per slice and
//! Redheffer-star chaining of per-slice scattering matrices, all expressed
//! relative to the modes of a reference medium.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use faer::linalg::solvers::{DenseSolveCore, Solve};
use num_complex::Complex64 as c64;
use rayon::prelude::*;
use serde::Serialize;

use super::volume::FieldGrid3D;
use super::{fill_fraction, slab_profile, slab_te_mode, Incidence, SlabSpec};
use crate::error::{Error, Result};
use crate::lattice::Vec2;
use crate::linalg::{herm_eigen, CMat};

const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
const ONE: c64 = c64 { re: 1.0, im: 0.0 };

/// Transverse discretization of a slice.
#[derive(Clone, Debug)]
pub(crate) enum Transverse {
    /// Cell-centred line of `n` points, field zero beyond both ends, with
    /// complex coordinate stretching `s` at centres and at the `n + 1` faces.
    Line { h: f64, s_c: Vec<c64>, s_f: Vec<c64> },
    /// Periodic `nx × ny` rectangle.
    Periodic { nx: usize, ny: usize, hx: f64, hy: f64 },
}

impl Transverse {
    /// Line with graded absorbers of thickness `depth` at both ends; the
    /// stretching `1 + iσ/k` uses a cubic profile.
    pub(crate) fn line(n: usize, h: f64, depth: f64, k: f64) -> Self {
        let len = n as f64 * h;
        let sigma_max = 4.0 * 3.0 * 10f64.ln() / (2.0 * depth.max(h));
        let s = |y: f64| {
            let u = (depth - y).max(depth - (len - y)).max(0.0) / depth.max(h);
            c64::new(1.0, sigma_max * u.powi(3) / k)
        };
        Transverse::Line {
            h,
            s_c: (0..n).map(|j| s((j as f64 + 0.5) * h)).collect(),
            s_f: (0..=n).map(|j| s(j as f64 * h)).collect(),
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            Transverse::Line { s_c, .. } => s_c.len(),
            Transverse::Periodic { nx, ny, .. } => nx * ny,
        }
    }

    /// Quadrature weight of one transverse cell.
    pub(crate) fn weight(&self) -> f64 {
        match self {
            Transverse::Line { h, .. } => *h,
            Transverse::Periodic { hx, hy, .. } => hx * hy,
        }
    }

    /// `∂(η ∂·)` restricted to the transverse grid.
    fn divergence(&self, eta: &[f64]) -> CMat {
        let n = self.len();
        let mut l = CMat::zeros(n, n);
        match self {
            Transverse::Line { h, s_c, s_f } => {
                let h2 = h * h;
                for j in 0..n {
                    let left = if j > 0 { 0.5 * (eta[j] + eta[j - 1]) } else { eta[j] };
                    let right = if j + 1 < n { 0.5 * (eta[j] + eta[j + 1]) } else { eta[j] };
                    let cl = left / (s_f[j] * s_c[j] * h2);
                    let cr = right / (s_f[j + 1] * s_c[j] * h2);
                    l[(j, j)] = -(cl + cr);
                    if j > 0 {
                        l[(j, j - 1)] = cl;
                    }
                    if j + 1 < n {
                        l[(j, j + 1)] = cr;
                    }
                }
            }
            Transverse::Periodic { nx, ny, hx, hy } => {
                let (nx, ny) = (*nx, *ny);
                let idx = |i: usize, j: usize| j * nx + i;
                for j in 0..ny {
                    for i in 0..nx {
                        let c = idx(i, j);
                        for (nb, h) in [
                            (idx((i + 1) % nx, j), hx),
                            (idx((i + nx - 1) % nx, j), hx),
                            (idx(i, (j + 1) % ny), hy),
                            (idx(i, (j + ny - 1) % ny), hy),
                        ] {
                            let w = 0.5 * (eta[c] + eta[nb]) / (h * h);
                            l[(c, c)] -= w;
                            l[(c, nb)] += w;
                        }
                    }
                }
            }
        }
        l
    }
}

/// Eigenmodes of one slice: `H = V(c⁺e^{iβx} + c⁻e^{−iβx})`,
/// `η∂H = Q(c⁺e^{iβx} − c⁻e^{−iβx})`.
#[derive(Clone, Debug)]
pub(crate) struct Modes {
    pub v: CMat,
    pub q: CMat,
    pub beta: Vec<c64>,
    v_inv: CMat,
    q_inv: CMat,
}

fn branch(lambda: c64) -> c64 {
    let b = lambda.sqrt();
    if b.im < 0.0 || (b.im == 0.0 && b.re < 0.0) {
        -b
    } else {
        b
    }
}

impl Modes {
    pub(crate) fn solve(t: &Transverse, eta: &[f64], k: f64) -> Result<Modes> {
        let n = t.len();
        let mut l = t.divergence(eta);
        for j in 0..n {
            l[(j, j)] += k * k;
        }
        // ∂²H = −A H with A = η⁻¹(∂η∂ + k²)
        let (v, lambda): (CMat, Vec<c64>) = match t {
            Transverse::Periodic { .. } => {
                // similar to the symmetric η^{-1/2}(·)η^{-1/2}
                let r: Vec<f64> = eta.iter().map(|e| e.sqrt().recip()).collect();
                let b = CMat::from_fn(n, n, |i, j| l[(i, j)] * (r[i] * r[j]));
                let (vals, u) = herm_eigen(&b, "planar_solver")?;
                (
                    CMat::from_fn(n, n, |i, j| u[(i, j)] * r[i]),
                    vals.into_iter().map(|x| c64::new(x, 0.0)).collect(),
                )
            }
            Transverse::Line { .. } => {
                let a = CMat::from_fn(n, n, |i, j| l[(i, j)] / eta[i]);
                let e = a.eigen().map_err(|e| Error::Eigensolver {
                    module: "planar_solver",
                    dim: n,
                    max_entry: crate::linalg::max_abs(&a),
                    message: format!("{e:?}"),
                })?;
                let s = e.S().column_vector();
                (e.U().to_owned(), (0..n).map(|i| s[i]).collect())
            }
        };
        let beta: Vec<c64> = lambda.iter().map(|&x| branch(x)).collect();
        let q = CMat::from_fn(n, n, |i, j| v[(i, j)] * eta[i] * c64::new(0.0, 1.0) * beta[j]);
        let v_inv = v.partial_piv_lu().inverse();
        let q_inv = q.partial_piv_lu().inverse();
        if v_inv.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).any(|z: c64| !z.is_finite())
            || q_inv.col_iter().flat_map(|c| c.iter().copied().collect::<Vec<_>>()).any(|z: c64| !z.is_finite())
        {
            return Err(Error::Instability("singular slice eigenbasis".into()));
        }
        Ok(Modes { v, q, beta, v_inv, q_inv })
    }

    fn phase(&self, len: f64) -> Vec<c64> {
        self.beta.iter().map(|b| (c64::new(0.0, 1.0) * b * len).exp()).collect()
    }
}

/// Scattering matrix mapping incoming reference-mode amplitudes to outgoing
/// ones: `[c⁻_left; c⁺_right] = S [c⁺_left; c⁻_right]`.
#[derive(Clone, Debug)]
pub(crate) struct SMatrix {
    pub s11: CMat,
    pub s12: CMat,
    pub s21: CMat,
    pub s22: CMat,
}

fn scale_rows(d: &[c64], m: &CMat) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| d[i] * m[(i, j)])
}

fn inv(m: &CMat) -> CMat {
    m.partial_piv_lu().inverse()
}

impl SMatrix {
    pub(crate) fn identity(n: usize) -> Self {
        SMatrix {
            s11: CMat::zeros(n, n),
            s12: CMat::identity(n, n),
            s21: CMat::identity(n, n),
            s22: CMat::zeros(n, n),
        }
    }

    /// Slice of length `len` with modes `m`, embedded in the reference `r`.
    pub(crate) fn slice(m: &Modes, r: &Modes, len: f64) -> Self {
        let vv = &m.v_inv * &r.v;
        let qq = &m.q_inv * &r.q;
        let a = &vv + &qq;
        let b = &vv - &qq;
        let x = m.phase(len);
        let a_inv = inv(&a);
        let xb = scale_rows(&x, &b);
        let xba = &xb * &a_inv;
        // D = A − X B A⁻¹ X B
        let d = &a - &(&xba * &scale_rows(&x, &b));
        let d_lu = d.partial_piv_lu();
        let s11 = d_lu.solve(&(&(&xba * &scale_rows(&x, &a)) - &b));
        let s12 = d_lu.solve(&scale_rows(&x, &(&a - &(&(&b * &a_inv) * &b))));
        SMatrix {
            s21: s12.clone(),
            s22: s11.clone(),
            s11,
            s12,
        }
    }

    /// Redheffer star product `self ⋆ other` (self on the left).
    pub(crate) fn star(&self, o: &SMatrix) -> SMatrix {
        let n = self.s11.nrows();
        let id = CMat::identity(n, n);
        let d = (&id - &(&o.s11 * &self.s22)).partial_piv_lu();
        let f = (&id - &(&self.s22 * &o.s11)).partial_piv_lu();
        let dd = &self.s12 * &d.inverse();
        let ff = &o.s21 * &f.inverse();
        SMatrix {
            s11: &self.s11 + &(&(&dd * &o.s11) * &self.s21),
            s12: &dd * &o.s12,
            s21: &ff * &self.s21,
            s22: &o.s22 + &(&(&ff * &self.s22) * &o.s12),
        }
    }
}

/// Power flux through a transverse plane carried by `(H, η∂H)`.
fn flux(h: &[c64], eh: &[c64], w: f64) -> f64 {
    h.iter()
        .zip(eh)
        .map(|(a, b)| (c64::new(0.0, -1.0) * b * a.conj()).re)
        .sum::<f64>()
        * w
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Response {
    /// Frequency in `a/λ`.
    pub frequency: f64,
    pub reflectance: f64,
    pub transmittance: f64,
}

/// The discretized structure at one frequency.
struct Problem {
    transverse: Transverse,
    reference: Modes,
    incident: usize,
    /// Per-slice `η` profile keys and lengths, in propagation order.
    slices: Vec<(usize, f64)>,
    profiles: Vec<Vec<f64>>,
    k: f64,
}

/// In-plane geometry: cell centres, fill fractions, slab mode data.
struct InPlaneGrid {
    xs: Vec<f64>,
    ys: Vec<f64>,
    dx: f64,
    fill: Vec<f64>,
}

fn in_plane_grid(spec: &SlabSpec) -> InPlaneGrid {
    let (hx, hy) = spec.crystal_half_extent();
    let h = 1.0 / spec.mesh;
    let nx = (2.0 * hx * spec.mesh).round() as usize;
    let ny = (2.0 * (hy + spec.absorber) * spec.mesh).round() as usize;
    let y0 = -(ny as f64) * h / 2.0;
    let x0 = -(nx as f64) * h / 2.0;
    let xs: Vec<f64> = (0..nx).map(|i| x0 + (i as f64 + 0.5) * h).collect();
    let ys: Vec<f64> = (0..ny).map(|j| y0 + (j as f64 + 0.5) * h).collect();
    let fill = fill_fraction(&spec.hole_list(), &xs, &ys, h, h);
    InPlaneGrid { xs, ys, dx: h, fill }
}

fn check_mesh(spec: &SlabSpec, k: f64, n_max: f64) -> Result<()> {
    let cells = TAU / (k * n_max) * spec.mesh;
    if cells < 4.0 {
        return Err(Error::MeshTooCoarse { cells });
    }
    Ok(())
}

fn eps_mix(f: f64, eps_b: f64, eps_h: f64) -> f64 {
    f * eps_h + (1.0 - f) * eps_b
}

fn build_problem(spec: &SlabSpec, frequency: f64, grid: Option<&InPlaneGrid>) -> Result<Problem> {
    let k = TAU * frequency;
    let lat = &spec.lattice;
    match spec.incidence {
        Incidence::InPlane => {
            let grid = grid.expect("in-plane grid");
            let (nb, _, _) = slab_te_mode(lat.bulk_index, spec.thickness, k);
            let (nh, _, _) = slab_te_mode(lat.hole_index, spec.thickness, k);
            check_mesh(spec, k, nb.max(nh))?;
            let (eb, eh) = (nb * nb, nh * nh);
            let ny = grid.ys.len();
            let transverse = Transverse::line(ny, grid.dx, spec.absorber, k);
            let ref_eta = vec![1.0 / eb; ny];
            let reference = Modes::solve(&transverse, &ref_eta, k)?;
            let mut keys: HashMap<Vec<u64>, usize> = HashMap::new();
            let mut profiles = Vec::new();
            let mut slices = Vec::new();
            for i in 0..grid.xs.len() {
                let eta: Vec<f64> = (0..ny)
                    .map(|j| 1.0 / eps_mix(grid.fill[j * grid.xs.len() + i], eb, eh))
                    .collect();
                let key: Vec<u64> = eta.iter().map(|v| v.to_bits()).collect();
                let id = *keys.entry(key).or_insert_with(|| {
                    profiles.push(eta);
                    profiles.len() - 1
                });
                slices.push((id, grid.dx));
            }
            let incident = fundamental(&reference);
            Ok(Problem { transverse, reference, incident, slices, profiles, k })
        }
        Incidence::Vertical => {
            check_mesh(spec, k, lat.bulk_index.max(lat.hole_index))?;
            let (transverse, eta) = vertical_cell(spec);
            let n = transverse.len();
            let reference = Modes::solve(&transverse, &vec![1.0; n], k)?;
            let incident = fundamental(&reference);
            Ok(Problem {
                transverse,
                reference,
                incident,
                slices: vec![(0, spec.thickness)],
                profiles: vec![eta],
                k,
            })
        }
    }
}

/// Periodic rectangular cell `a × √3a` holding two holes of the bulk lattice.
fn vertical_cell(spec: &SlabSpec) -> (Transverse, Vec<f64>) {
    let lat = &spec.lattice;
    let nx = (spec.mesh.round() as usize).max(2);
    let ly = 3f64.sqrt();
    let ny = ((ly * spec.mesh).round() as usize).max(2);
    let (hx, hy) = (1.0 / nx as f64, ly / ny as f64);
    let r = lat.hole_radius;
    let sub = 4;
    let mut eta = vec![0.0; nx * ny];
    let centres = [
        Vec2::new(0.0, 0.0),
        Vec2::new(1.0, 0.0),
        Vec2::new(0.0, ly),
        Vec2::new(1.0, ly),
        Vec2::new(0.5, ly / 2.0),
    ];
    let (eb, eh) = (lat.bulk_index.powi(2), lat.hole_index.powi(2));
    for j in 0..ny {
        for i in 0..nx {
            let mut hit = 0;
            for sj in 0..sub {
                for si in 0..sub {
                    let p = Vec2::new(
                        (i as f64 + (si as f64 + 0.5) / sub as f64) * hx,
                        (j as f64 + (sj as f64 + 0.5) / sub as f64) * hy,
                    );
                    hit += centres.iter().any(|c| (p - *c).norm() < r) as usize;
                }
            }
            let f = hit as f64 / (sub * sub) as f64;
            eta[j * nx + i] = 1.0 / eps_mix(f, eb, eh);
        }
    }
    (Transverse::Periodic { nx, ny, hx, hy }, eta)
}

/// The propagating reference mode with the largest propagation constant.
/// Modes localized in the absorbers carry a large `Im β` and are skipped.
fn fundamental(m: &Modes) -> usize {
    let propagating = |b: c64| b.re > 0.0 && b.im < 1e-2 * b.re;
    (0..m.beta.len())
        .filter(|&i| propagating(m.beta[i]))
        .max_by(|&a, &b| m.beta[a].re.total_cmp(&m.beta[b].re))
        .or_else(|| (0..m.beta.len()).min_by(|&a, &b| m.beta[a].im.total_cmp(&m.beta[b].im)))
        .unwrap_or(0)
}

impl Problem {
    fn slice_smatrices(&self) -> Result<Vec<SMatrix>> {
        let mut cache: HashMap<(usize, u64), SMatrix> = HashMap::new();
        let mut modes: HashMap<usize, Modes> = HashMap::new();
        let mut out = Vec::with_capacity(self.slices.len());
        for &(id, len) in &self.slices {
            let key = (id, len.to_bits());
            if !cache.contains_key(&key) {
                if !modes.contains_key(&id) {
                    modes.insert(id, Modes::solve(&self.transverse, &self.profiles[id], self.k)?);
                }
                cache.insert(key, SMatrix::slice(&modes[&id], &self.reference, len));
            }
            out.push(cache[&key].clone());
        }
        Ok(out)
    }

    fn incident_vector(&self) -> Vec<c64> {
        let mut c = vec![ZERO; self.reference.beta.len()];
        c[self.incident] = ONE;
        c
    }

    fn fields(&self, c_plus: &[c64], c_minus: &[c64]) -> (Vec<c64>, Vec<c64>) {
        let r = &self.reference;
        let n = c_plus.len();
        let mut h = vec![ZERO; n];
        let mut eh = vec![ZERO; n];
        for j in 0..n {
            for i in 0..n {
                h[i] += r.v[(i, j)] * (c_plus[j] + c_minus[j]);
                eh[i] += r.q[(i, j)] * (c_plus[j] - c_minus[j]);
            }
        }
        (h, eh)
    }

    fn response(&self, total: &SMatrix, frequency: f64) -> Result<Response> {
        let n = self.reference.beta.len();
        let w = self.transverse.weight();
        let inc = self.incident_vector();
        let zero = vec![ZERO; n];
        let r: Vec<c64> = (0..n).map(|i| total.s11[(i, self.incident)]).collect();
        let t: Vec<c64> = (0..n).map(|i| total.s21[(i, self.incident)]).collect();
        let (hi, ei) = self.fields(&inc, &zero);
        let p_in = flux(&hi, &ei, w);
        let (hr, er) = self.fields(&zero, &r);
        let (ht, et) = self.fields(&t, &zero);
        let reflectance = -flux(&hr, &er, w) / p_in;
        // normalized to the incident mode carried through the empty reference,
        // so that guiding losses into the side absorbers cancel
        let length: f64 = self.slices.iter().map(|s| s.1).sum();
        let carried = (c64::new(0.0, 1.0) * self.reference.beta[self.incident] * length).exp().norm_sqr();
        let transmittance = flux(&ht, &et, w) / (p_in * carried);
        if !(reflectance.is_finite() && transmittance.is_finite()) {
            return Err(Error::Instability(format!("non-finite response at a/λ = {frequency}")));
        }
        Ok(Response { frequency, reflectance, transmittance })
    }
}

fn chain(slices: &[SMatrix], n: usize) -> SMatrix {
    slices.iter().fold(SMatrix::identity(n), |acc, s| acc.star(s))
}

/// Reflectance and transmittance at one frequency (in `a/λ`).
pub fn response(spec: &SlabSpec, frequency: f64) -> Result<Response> {
    spec.validate()?;
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid("planar_solver", format!("frequency must be positive, got {frequency}")));
    }
    let grid = (spec.incidence == Incidence::InPlane).then(|| in_plane_grid(spec));
    response_with(spec, frequency, grid.as_ref())
}

fn response_with(spec: &SlabSpec, frequency: f64, grid: Option<&InPlaneGrid>) -> Result<Response> {
    let p = build_problem(spec, frequency, grid)?;
    let s = p.slice_smatrices()?;
    let total = chain(&s, p.reference.beta.len());
    p.response(&total, frequency)
}

/// Responses over many frequencies sharing one rasterized geometry; the
/// frequencies are evaluated concurrently.
pub fn responses(spec: &SlabSpec, frequencies: &[f64]) -> Result<Vec<Response>> {
    spec.validate()?;
    let grid = (spec.incidence == Incidence::InPlane).then(|| in_plane_grid(spec));
    frequencies
        .par_iter()
        .map(|&f| {
            if !(f > 0.0 && f.is_finite()) {
                return Err(Error::invalid("planar_solver", format!("frequency must be positive, got {f}")));
            }
            response_with(spec, f, grid.as_ref())
        })
        .collect()
}

/// Reflectance, transmittance and the field inside the structure.
///
/// For in-plane incidence the in-plane field is sampled at every slice
/// boundary and multiplied by the vertical profile of the slab mode over the
/// slab plus `padding` cladding layers.  For vertical incidence the field of
/// the periodic cell is sampled through the slab and the cladding.
pub fn simulate(spec: &SlabSpec, frequency: f64) -> Result<(Response, FieldGrid3D)> {
    spec.validate()?;
    if !(frequency > 0.0 && frequency.is_finite()) {
        return Err(Error::invalid("planar_solver", format!("frequency must be positive, got {frequency}")));
    }
    let grid = (spec.incidence == Incidence::InPlane).then(|| in_plane_grid(spec));
    let p = build_problem(spec, frequency, grid.as_ref())?;
    let s = p.slice_smatrices()?;
    let n = p.reference.beta.len();
    let total = chain(&s, n);
    let resp = p.response(&total, frequency)?;
    let inc = p.incident_vector();
    let h_pad = spec.padding as f64;
    let dz = 1.0 / spec.mesh;
    let nz = ((spec.thickness + 2.0 * h_pad) / dz).round() as usize + 1;
    let zs: Vec<f64> = (0..nz).map(|i| -0.5 * spec.thickness - h_pad + i as f64 * dz).collect();
    match spec.incidence {
        Incidence::InPlane => {
            let g = grid.expect("in-plane grid");
            // suffix products S_{k+1..N}, keeping only the S11 blocks
            let mut right = vec![CMat::zeros(n, n); s.len() + 1];
            let mut acc = SMatrix::identity(n);
            for k in (0..s.len()).rev() {
                acc = s[k].star(&acc);
                right[k] = acc.s11.clone();
            }
            let mut left = SMatrix::identity(n);
            let id = CMat::identity(n, n);
            let nx = s.len() + 1;
            let ny = n;
            let mut plane = vec![ZERO; nx * ny];
            for k in 0..nx {
                if k > 0 {
                    left = left.star(&s[k - 1]);
                }
                let rhs: Vec<c64> = (0..n).map(|i| (0..n).map(|j| left.s21[(i, j)] * inc[j]).sum()).collect();
                let m = &id - &(&left.s22 * &right[k]);
                let rhs_m = CMat::from_fn(n, 1, |i, _| rhs[i]);
                let cp = m.partial_piv_lu().solve(&rhs_m);
                let cp: Vec<c64> = (0..n).map(|i| cp[(i, 0)]).collect();
                let cm: Vec<c64> = (0..n).map(|i| (0..n).map(|j| right[k][(i, j)] * cp[j]).sum()).collect();
                let (h, _) = p.fields(&cp, &cm);
                for j in 0..ny {
                    plane[j * nx + k] = h[j];
                }
            }
            let x0 = g.xs[0] - 0.5 * g.dx;
            let xs: Vec<f64> = (0..nx).map(|k| x0 + k as f64 * g.dx).collect();
            let (_, kappa, gamma) = slab_te_mode(spec.lattice.bulk_index, spec.thickness, p.k);
            let prof: Vec<f64> = zs.iter().map(|&z| slab_profile(z, spec.thickness, kappa, gamma)).collect();
            let mut values = Vec::with_capacity(nx * ny * nz);
            for &pz in &prof {
                for v in &plane {
                    values.push(v * pz);
                }
            }
            Ok((resp, FieldGrid3D::new(xs, g.ys.clone(), zs, values)?))
        }
        Incidence::Vertical => {
            let Transverse::Periodic { nx, ny, hx, hy } = p.transverse else {
                unreachable!("vertical incidence uses a periodic cell")
            };
            let modes = Modes::solve(&p.transverse, &p.profiles[0], p.k)?;
            let r: Vec<c64> = (0..n).map(|i| total.s11[(i, p.incident)]).collect();
            let t: Vec<c64> = (0..n).map(|i| total.s21[(i, p.incident)]).collect();
            // slab amplitudes from the fields at both faces
            let zero = vec![ZERO; n];
            let (h_top, e_top) = p.fields(&inc, &r);
            let (h_bot, e_bot) = p.fields(&t, &zero);
            let half = |h: &[c64], e: &[c64], sign: f64| -> Vec<c64> {
                (0..n)
                    .map(|i| {
                        let a: c64 = (0..n).map(|j| modes.v_inv[(i, j)] * h[j]).sum();
                        let b: c64 = (0..n).map(|j| modes.q_inv[(i, j)] * e[j]).sum();
                        0.5 * (a + sign * b)
                    })
                    .collect()
            };
            let a_plus = half(&h_top, &e_top, 1.0);
            let a_minus = half(&h_bot, &e_bot, -1.0);
            let d = spec.thickness;
            let ref_prop = |c: &[c64], dist: f64| -> Vec<c64> {
                c.iter()
                    .zip(&p.reference.beta)
                    .map(|(a, b)| a * (c64::new(0.0, 1.0) * b * dist).exp())
                    .collect()
            };
            let mut values = Vec::with_capacity(nx * ny * nz);
            for &z in &zs {
                let zt = z + 0.5 * d;
                let h: Vec<c64> = if zt < 0.0 {
                    p.fields(&ref_prop(&inc, zt), &ref_prop(&r, -zt)).0
                } else if zt > d {
                    p.fields(&ref_prop(&t, zt - d), &zero).0
                } else {
                    let cp: Vec<c64> = a_plus
                        .iter()
                        .zip(&modes.beta)
                        .map(|(a, b)| a * (c64::new(0.0, 1.0) * b * zt).exp())
                        .collect();
                    let cm: Vec<c64> = a_minus
                        .iter()
                        .zip(&modes.beta)
                        .map(|(a, b)| a * (c64::new(0.0, 1.0) * b * (d - zt)).exp())
                        .collect();
                    (0..n)
                        .map(|i| (0..n).map(|j| modes.v[(i, j)] * (cp[j] + cm[j])).sum())
                        .collect()
                };
                values.extend(h);
            }
            let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * hx).collect();
            let ys: Vec<f64> = (0..ny).map(|j| (j as f64 + 0.5) * hy).collect();
            Ok((resp, FieldGrid3D::new(xs, ys, zs, values)?))
        }
    }
}

/// Normal-incidence reflectance of a film of index `n` and thickness `d` in
/// air (Airy summation).
pub fn thin_film_reflectance(n: f64, d: f64, frequency: f64) -> f64 {
    let r12 = (1.0 - n) / (1.0 + n);
    let r23 = -r12;
    let delta = 2.0 * PI * frequency * n * d;
    let e = c64::from_polar(1.0, 2.0 * delta);
    let r = (r12 + r23 * e) / (1.0 + r12 * r23 * e);
    r.norm_sqr()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::LatticeSpec;

    fn uniform_vertical(n: f64, mesh: f64) -> SlabSpec {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, n, n).unwrap(), 0.75);
        s.incidence = Incidence::Vertical;
        s.mesh = mesh;
        s
    }

    #[test]
    fn uniform_slab_matches_airy() {
        let s = uniform_vertical(3.4, 8.0);
        for i in 0..30 {
            let f = 0.2 + 0.005 * i as f64;
            let r = response(&s, f).unwrap();
            assert!((r.reflectance - thin_film_reflectance(3.4, 0.75, f)).abs() < 1e-3, "f = {f}");
            assert!((r.reflectance + r.transmittance - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn vacuum_is_transparent() {
        for inc in [Incidence::Vertical, Incidence::InPlane] {
            let mut s = SlabSpec::new(LatticeSpec::new(0.3, 1.0, 1.0).unwrap(), 0.75);
            s.incidence = inc;
            s.layers = 1;
            s.mesh = 8.0;
            let r = response(&s, 0.25).unwrap();
            assert!(r.reflectance < 1e-6, "{inc:?}: R = {}", r.reflectance);
            assert!(r.transmittance > 1.0 - 1e-6, "{inc:?}: T = {}", r.transmittance);
        }
    }

    #[test]
    fn coarse_mesh_is_rejected() {
        let s = uniform_vertical(3.4, 2.0);
        assert!(matches!(response(&s, 0.5), Err(Error::MeshTooCoarse { .. })));
    }

    #[test]
    fn star_with_identity_is_neutral() {
        let n = 3;
        let m = |seed: f64| CMat::from_fn(n, n, |i, j| c64::new((seed + i as f64 * 0.3 + j as f64).sin() * 0.2, 0.1 * seed));
        let s = SMatrix { s11: m(1.0), s12: m(2.0), s21: m(3.0), s22: m(4.0) };
        let l = SMatrix::identity(n).star(&s);
        let r = s.star(&SMatrix::identity(n));
        for (a, b) in [(&l.s11, &s.s11), (&l.s22, &s.s22), (&r.s12, &s.s12), (&r.s21, &s.s21)] {
            assert!((a - b).norm_max() < 1e-14);
        }
    }

    #[test]
    fn uniform_slab_converges_with_mesh() {
        for f in [0.22, 0.27, 0.31] {
            let coarse = response(&uniform_vertical(3.4, 8.0), f).unwrap().reflectance;
            let fine = response(&uniform_vertical(3.4, 16.0), f).unwrap().reflectance;
            assert!((coarse - fine).abs() < 0.01 * fine.max(1e-3), "f = {f}: {coarse} vs {fine}");
        }
    }

    #[test]
    fn mirror_symmetric_crystal_is_reciprocal() {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
        s.layers = 2;
        s.mesh = 8.0;
        let grid = in_plane_grid(&s);
        let p = build_problem(&s, 0.27, Some(&grid)).unwrap();
        let total = chain(&p.slice_smatrices().unwrap(), p.reference.beta.len());
        let flipped = SMatrix {
            s11: total.s22.clone(),
            s12: total.s21.clone(),
            s21: total.s12.clone(),
            s22: total.s11.clone(),
        };
        let a = p.response(&total, 0.27).unwrap();
        let b = p.response(&flipped, 0.27).unwrap();
        assert!((a.reflectance - b.reflectance).abs() < 1e-6, "{a:?} {b:?}");
        assert!(a.reflectance > 0.0 && a.reflectance + a.transmittance <= 1.0 + 1e-6);
    }

    #[test]
    fn in_plane_field_has_the_grid_shape() {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
        s.layers = 1;
        s.mesh = 8.0;
        s.padding = 1;
        let (r, field) = simulate(&s, 0.27).unwrap();
        let [nx, ny, nz] = field.dims();
        assert_eq!(field.values.len(), nx * ny * nz);
        assert!(field.max_intensity() > 0.0);
        let direct = response(&s, 0.27).unwrap();
        assert!((r.reflectance - direct.reflectance).abs() < 1e-12);
    }

    #[test]
    fn perforated_slab_is_lossless_under_vertical_incidence() {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
        s.incidence = Incidence::Vertical;
        s.mesh = 8.0;
        for f in [0.21, 0.27, 0.33] {
            let r = response(&s, f).unwrap();
            assert!((r.reflectance + r.transmittance - 1.0).abs() < 1e-6, "f = {f}: {r:?}");
        }
    }
}
