//! Hexagonal lattice geometry, reciprocal basis, Brillouin-zone sampling and
//! the Fourier series of the bulk reciprocal dielectric `η₀ = 1/ε`.
//!
//! Lengths are in units of the lattice constant `a` and wavevectors in
//! radians per `a`, so `|b| = 4π/√3`.  Frequencies handled by the rest of the
//! crate are angular (`ω a / c`); divide by `2π` for `a/λ`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// Plain 2-vector used for positions and wavevectors.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Polar angle in `[0, 2π)`.
    pub fn angle(self) -> f64 {
        let t = self.y.atan2(self.x);
        if t < 0.0 {
            t + 2.0 * PI
        } else {
            t
        }
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}, {:.6})", self.x, self.y)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatticeType {
    #[default]
    Hexagonal,
}

impl std::str::FromStr for LatticeType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hexagonal" | "triangular" => Ok(LatticeType::Hexagonal),
            other => Err(Error::UnsupportedLattice(other.to_string())),
        }
    }
}

/// Bulk crystal: circular holes of index `hole_index` in a background of
/// index `bulk_index`, radius given in units of `a`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub hole_radius: f64,
    pub bulk_index: f64,
    pub hole_index: f64,
    #[serde(default)]
    pub lattice_type: LatticeType,
}

impl LatticeSpec {
    pub fn new(hole_radius: f64, bulk_index: f64, hole_index: f64) -> Result<Self> {
        let s = LatticeSpec {
            hole_radius,
            bulk_index,
            hole_index,
            lattice_type: LatticeType::Hexagonal,
        };
        s.validate()?;
        Ok(s)
    }

    /// Uniform medium of index `n` (zero hole contrast).
    pub fn uniform(n: f64) -> Self {
        LatticeSpec {
            hole_radius: 0.3,
            bulk_index: n,
            hole_index: n,
            lattice_type: LatticeType::Hexagonal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.hole_radius > 0.0 && self.hole_radius < 0.5) {
            return Err(Error::invalid(
                "lattice",
                format!("hole_radius must lie in (0, 0.5), got {}", self.hole_radius),
            ));
        }
        for (name, v) in [("bulk_index", self.bulk_index), ("hole_index", self.hole_index)] {
            if !(v.is_finite() && v >= 1.0) {
                return Err(Error::invalid("lattice", format!("{name} must be >= 1, got {v}")));
            }
        }
        Ok(())
    }

    pub fn eta_bulk(&self) -> f64 {
        1.0 / (self.bulk_index * self.bulk_index)
    }

    pub fn eta_hole(&self) -> f64 {
        1.0 / (self.hole_index * self.hole_index)
    }

    /// Fraction of the unit cell covered by the hole.
    pub fn fill_fraction(&self) -> f64 {
        PI * self.hole_radius * self.hole_radius / CELL_AREA
    }

    /// Real-space `η₀(r)` (step profile).
    pub fn eta_at(&self, r: Vec2) -> f64 {
        if distance_to_nearest_site(r) < self.hole_radius {
            self.eta_hole()
        } else {
            self.eta_bulk()
        }
    }
}

/// Area of the primitive cell.
pub const CELL_AREA: f64 = SQRT3 / 2.0;

pub fn a1() -> Vec2 {
    Vec2::new(1.0, 0.0)
}

pub fn a2() -> Vec2 {
    Vec2::new(0.5, SQRT3 / 2.0)
}

pub fn b1() -> Vec2 {
    Vec2::new(2.0 * PI, -2.0 * PI / SQRT3)
}

pub fn b2() -> Vec2 {
    Vec2::new(0.0, 4.0 * PI / SQRT3)
}

/// Area of the first Brillouin zone.
pub fn bz_area() -> f64 {
    (2.0 * PI) * (2.0 * PI) / CELL_AREA
}

pub fn lattice_point(n: [i32; 2]) -> Vec2 {
    a1() * n[0] as f64 + a2() * n[1] as f64
}

pub fn reciprocal_point(g: [i32; 2]) -> Vec2 {
    b1() * g[0] as f64 + b2() * g[1] as f64
}

/// Fractional coordinates of `r` in the `(a1, a2)` basis.
pub fn fractional(r: Vec2) -> [f64; 2] {
    // r = u a1 + v a2 with a2 = (1/2, √3/2)
    let v = r.y * 2.0 / SQRT3;
    let u = r.x - 0.5 * v;
    [u, v]
}

/// Distance from `r` to the nearest real-space lattice site.
pub fn distance_to_nearest_site(r: Vec2) -> f64 {
    let [u, v] = fractional(r);
    let (u0, v0) = (u.floor() as i32, v.floor() as i32);
    let mut best = f64::INFINITY;
    for du in -1..=2 {
        for dv in -1..=2 {
            let d = (r - lattice_point([u0 + du, v0 + dv])).norm();
            best = best.min(d);
        }
    }
    best
}

/// High-symmetry points; `X` and `J` in some of the literature are
/// the conventional `M` and `K`.
pub fn gamma_point() -> Vec2 {
    Vec2::ZERO
}

pub fn m_point() -> Vec2 {
    b2() * 0.5
}

pub fn k_point() -> Vec2 {
    Vec2::new(2.0 * PI / 3.0, 2.0 * PI / SQRT3)
}

/// Truncated, negation-closed set of reciprocal vectors sorted by length.
#[derive(Clone, Debug)]
pub struct ReciprocalBasis {
    pub b1: Vec2,
    pub b2: Vec2,
    coords: Vec<[i32; 2]>,
    vectors: Vec<Vec2>,
    index: HashMap<[i32; 2], usize>,
}

impl ReciprocalBasis {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Integer coordinates `(i, j)` with `G = i b1 + j b2`.
    pub fn coords(&self) -> &[[i32; 2]] {
        &self.coords
    }

    pub fn vectors(&self) -> &[Vec2] {
        &self.vectors
    }

    pub fn index_of(&self, g: [i32; 2]) -> Option<usize> {
        self.index.get(&g).copied()
    }

    /// All distinct differences `G - G'` over the basis.
    pub fn differences(&self) -> Vec<[i32; 2]> {
        let mut seen = HashMap::new();
        let mut out = Vec::new();
        for g in &self.coords {
            for h in &self.coords {
                let d = [g[0] - h[0], g[1] - h[1]];
                if seen.insert(d, ()).is_none() {
                    out.push(d);
                }
            }
        }
        out
    }
}

fn sorted_lattice(radius_shells: i32) -> Vec<([i32; 2], f64)> {
    let mut pts = Vec::new();
    for i in -radius_shells..=radius_shells {
        for j in -radius_shells..=radius_shells {
            let g = [i, j];
            pts.push((g, reciprocal_point(g).norm2()));
        }
    }
    pts.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    pts
}

/// The `n_g` shortest reciprocal vectors, rounded up to a closed shell.
pub fn build_reciprocal_basis(spec: &LatticeSpec, n_g: usize) -> Result<ReciprocalBasis> {
    match spec.lattice_type {
        LatticeType::Hexagonal => {}
    }
    if n_g == 0 {
        return Err(Error::invalid("lattice", "n_g must be at least 1"));
    }
    // Grow the integer window until it contains the full disc through the
    // n_g-th vector (the window inscribes a disc of radius R |b| √3/2).
    let mut range = 2;
    let (pts, cut) = loop {
        let pts = sorted_lattice(range);
        if pts.len() <= n_g {
            range *= 2;
            continue;
        }
        let cut = pts[n_g - 1].1;
        let bound = range as f64 * b1().norm() * SQRT3 / 2.0;
        if cut.sqrt() < bound * (1.0 - 1e-9) {
            break (pts, cut);
        }
        range *= 2;
    };
    let tol = 1e-9 * cut.max(1.0);
    let coords: Vec<[i32; 2]> = pts
        .iter()
        .take_while(|p| p.1 <= cut + tol)
        .map(|p| p.0)
        .collect();
    let vectors = coords.iter().map(|&g| reciprocal_point(g)).collect();
    let index = coords.iter().enumerate().map(|(i, &g)| (g, i)).collect();
    Ok(ReciprocalBasis {
        b1: b1(),
        b2: b2(),
        coords,
        vectors,
        index,
    })
}

/// Fourier coefficients of `η₀` keyed by integer reciprocal coordinates.
#[derive(Clone, Debug)]
pub struct FourierDielectric {
    pub spec: LatticeSpec,
    coefficients: HashMap<[i32; 2], c64>,
}

impl FourierDielectric {
    pub fn get(&self, g: [i32; 2]) -> Result<c64> {
        self.coefficients
            .get(&g)
            .copied()
            .ok_or(Error::MissingCoefficient { module: "lattice", key: g })
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[i32; 2], &c64)> {
        self.coefficients.iter()
    }

    /// Truncated Fourier synthesis of `η₀` at `r`.
    pub fn synthesize(&self, r: Vec2) -> f64 {
        self.coefficients
            .iter()
            .map(|(g, c)| {
                let ph = reciprocal_point(*g).dot(r);
                (c * c64::from_polar(1.0, ph)).re
            })
            .sum()
    }
}

/// `2 J1(x)/x`, the normalized disc form factor.
pub fn disc_factor(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 8.0
    } else {
        2.0 * libm::j1(x) / x
    }
}

/// Closed-form `η_G` for a circular hole centred at the origin.
pub fn eta_coefficient(spec: &LatticeSpec, g: Vec2) -> f64 {
    let f = spec.fill_fraction();
    let d = spec.eta_hole() - spec.eta_bulk();
    let gn = g.norm();
    if gn < 1e-12 {
        spec.eta_bulk() + f * d
    } else {
        d * f * disc_factor(gn * spec.hole_radius)
    }
}

/// Fourier series of `η₀` covering every difference `G - G'` of the basis.
pub fn eta_fourier(spec: &LatticeSpec, basis: &ReciprocalBasis) -> FourierDielectric {
    let coefficients = basis
        .differences()
        .into_iter()
        .map(|g| (g, c64::new(eta_coefficient(spec, reciprocal_point(g)), 0.0)))
        .collect();
    FourierDielectric {
        spec: spec.clone(),
        coefficients,
    }
}

/// Reduce `q` to its representative in the first Brillouin zone.
pub fn fold_to_bz(q: Vec2) -> Vec2 {
    fold_with_shift(q).0
}

/// Folded vector together with the integer reciprocal shift applied.
pub fn fold_with_shift(q: Vec2) -> (Vec2, [i32; 2]) {
    // fractional coordinates in the (b1, b2) basis: f_j = q·a_j / 2π
    let f1 = q.dot(a1()) / (2.0 * PI);
    let f2 = q.dot(a2()) / (2.0 * PI);
    let (c1, c2) = (-f1.round() as i32, -f2.round() as i32);
    let mut best = (q + reciprocal_point([c1, c2]), [c1, c2]);
    for d1 in -2..=2 {
        for d2 in -2..=2 {
            let g = [c1 + d1, c2 + d2];
            let cand = q + reciprocal_point(g);
            if cand.norm2() < best.0.norm2() - 1e-12 {
                best = (cand, g);
            }
        }
    }
    best
}

/// True when `(q, ω)` lies below the free-space light line `ω = c|q|`.
/// Both quantities use the crate's radian units.
pub fn is_below_light_line(q: Vec2, omega: f64) -> bool {
    omega < fold_to_bz(q).norm()
}

/// Uniform sampling of the first Brillouin zone built from a superlattice of
/// `n_q` primitive cells: the sample points are the reciprocal-superlattice
/// vectors modulo the primitive reciprocal lattice.
///
/// `q_coords[i]` gives `q_i` in units of the reciprocal superlattice vectors
/// `sup_b1, sup_b2`; a plane wave `q + G` then has superlattice coordinates
/// `q_coords[i] + supercell · G`.
#[derive(Clone, Debug)]
pub struct BzSampling {
    pub q_points: Vec<Vec2>,
    pub weights: Vec<f64>,
    pub q_coords: Vec<[i32; 2]>,
    /// Rows give the superlattice vectors in the `(a1, a2)` basis.
    pub supercell: [[i32; 2]; 2],
    pub sup_b1: Vec2,
    pub sup_b2: Vec2,
}

impl BzSampling {
    pub fn len(&self) -> usize {
        self.q_points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_points.is_empty()
    }

    /// Superlattice coordinates of the integer reciprocal vector `g`.
    pub fn g_to_sup(&self, g: [i32; 2]) -> [i32; 2] {
        let m = self.supercell;
        [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]]
    }

    pub fn sup_point(&self, n: [i32; 2]) -> Vec2 {
        self.sup_b1 * n[0] as f64 + self.sup_b2 * n[1] as f64
    }

    /// Superlattice vectors in real space.
    pub fn super_vectors(&self) -> (Vec2, Vec2) {
        let m = self.supercell;
        (
            a1() * m[0][0] as f64 + a2() * m[0][1] as f64,
            a1() * m[1][0] as f64 + a2() * m[1][1] as f64,
        )
    }

    /// Real-space area of the superlattice cell.
    pub fn super_area(&self) -> f64 {
        CELL_AREA * self.len() as f64
    }
}

/// Lagrange–Gauss reduction; returns the squared lengths of the reduced pair.
fn reduced_lengths(mut u: Vec2, mut v: Vec2) -> (f64, f64) {
    if u.norm2() > v.norm2() {
        std::mem::swap(&mut u, &mut v);
    }
    loop {
        let mu = (u.dot(v) / u.norm2()).round();
        v = v - u * mu;
        if v.norm2() >= u.norm2() - 1e-12 {
            return (u.norm2(), v.norm2());
        }
        std::mem::swap(&mut u, &mut v);
    }
}

/// Most compact superlattice (largest shortest vector) of index `n`, in
/// Hermite normal form `A1 = p a1`, `A2 = r a1 + s a2`.
fn best_supercell(n: i32) -> [[i32; 2]; 2] {
    let mut best: Option<((f64, f64), [[i32; 2]; 2])> = None;
    for p in 1..=n {
        if n % p != 0 {
            continue;
        }
        let s = n / p;
        for r in 0..p {
            let m = [[p, 0], [r, s]];
            let u = a1() * p as f64;
            let v = a1() * r as f64 + a2() * s as f64;
            let (l1, l2) = reduced_lengths(u, v);
            let better = match &best {
                None => true,
                Some(((b1, b2), _)) => {
                    l1 > b1 + 1e-9 || ((l1 - b1).abs() <= 1e-9 && l2 < b2 - 1e-9)
                }
            };
            if better {
                best = Some(((l1, l2), m));
            }
        }
    }
    best.expect("n >= 1").1
}

/// Deterministic uniform sampling of the first Brillouin zone with exactly
/// `n_q` points.  For odd `n_q` the set is closed under `q → -q`.
pub fn sample_brillouin_zone(_basis: &ReciprocalBasis, n_q: usize) -> Result<BzSampling> {
    if n_q == 0 {
        return Err(Error::invalid("lattice", "n_q must be at least 1"));
    }
    let n = i32::try_from(n_q).map_err(|_| Error::invalid("lattice", "n_q too large"))?;
    let m = best_supercell(n);
    let (p, r, s) = (m[0][0], m[1][0], m[1][1]);
    let det = n as f64;
    // B_i = Σ_j (M^{-1})_{ji} b_j with M^{-1} = [[s, 0], [-r, p]] / det
    let sup_b1 = (b1() * s as f64 + b2() * (-r) as f64) * (1.0 / det);
    let sup_b2 = b2() * (p as f64 / det);
    let sup = |c: [i32; 2]| sup_b1 * c[0] as f64 + sup_b2 * c[1] as f64;
    let lattice_shift = |g: [i32; 2]| [m[0][0] * g[0] + m[0][1] * g[1], m[1][0] * g[0] + m[1][1] * g[1]];
    // canonical coset label: reduce modulo the lattice {M g}
    let canon = |c: [i32; 2]| -> [i32; 2] {
        let g1 = c[0].div_euclid(p);
        let c0 = c[0] - p * g1;
        let c1 = c[1] - r * g1;
        [c0, c1.rem_euclid(s)]
    };

    let mut chosen: HashMap<[i32; 2], [i32; 2]> = HashMap::new();
    let mut labels = Vec::with_capacity(n_q);
    for c0 in 0..p {
        for c1 in 0..s {
            labels.push([c0, c1]);
        }
    }
    for &c in &labels {
        if chosen.contains_key(&c) {
            continue;
        }
        // minimum-norm member of the coset, ties broken on the coordinates
        let (_, g) = fold_with_shift(sup(c));
        let base = {
            let sh = lattice_shift(g);
            [c[0] + sh[0], c[1] + sh[1]]
        };
        let mut best = base;
        let mut best_n = sup(base).norm2();
        for d1 in -1..=1 {
            for d2 in -1..=1 {
                let sh = lattice_shift([d1, d2]);
                let cand = [base[0] + sh[0], base[1] + sh[1]];
                let nn = sup(cand).norm2();
                let tol = 1e-9 * best_n.max(1.0);
                if nn < best_n - tol || ((nn - best_n).abs() <= tol && cand > best) {
                    best = cand;
                    best_n = nn;
                }
            }
        }
        chosen.insert(c, best);
        let neg = canon([-c[0], -c[1]]);
        chosen.entry(neg).or_insert([-best[0], -best[1]]);
    }

    let mut coords: Vec<[i32; 2]> = labels.iter().map(|c| chosen[c]).collect();
    coords.sort_by(|a, b| {
        let (qa, qb) = (sup(*a), sup(*b));
        let tol = 1e-9 * qa.norm().max(qb.norm()).max(1.0);
        if (qa.norm() - qb.norm()).abs() > tol {
            qa.norm().total_cmp(&qb.norm())
        } else {
            let (ta, tb) = (qa.angle(), qb.angle());
            if (ta - tb).abs() > 1e-9 {
                ta.total_cmp(&tb)
            } else {
                a.cmp(b)
            }
        }
    });
    let q_points = coords.iter().map(|&c| sup(c)).collect();
    Ok(BzSampling {
        q_points,
        weights: vec![bz_area() / det; n_q],
        q_coords: coords,
        supercell: m,
        sup_b1,
        sup_b2,
    })
}

/// Inside-or-on test for the hexagonal first Brillouin zone.
pub fn in_first_bz(q: Vec2, tol: f64) -> bool {
    [[1, 0], [0, 1], [1, 1], [-1, 0], [0, -1], [-1, -1]]
        .iter()
        .all(|&g| {
            let gv = reciprocal_point(g);
            q.dot(gv) <= 0.5 * gv.norm2() * (1.0 + tol)
        })
}

/// Piecewise-linear path Γ → M → K → Γ with `per_segment` steps per leg.
/// Returns the points and their cumulative path coordinate.
pub fn high_symmetry_path(per_segment: usize) -> (Vec<Vec2>, Vec<f64>) {
    let corners = [gamma_point(), m_point(), k_point(), gamma_point()];
    let per = per_segment.max(1);
    let mut pts = vec![corners[0]];
    let mut s = vec![0.0];
    for w in corners.windows(2) {
        for i in 1..=per {
            let t = i as f64 / per as f64;
            let q = w[0] + (w[1] - w[0]) * t;
            let last = *pts.last().expect("non-empty");
            s.push(s.last().expect("non-empty") + (q - last).norm());
            pts.push(q);
        }
    }
    (pts, s)
}
