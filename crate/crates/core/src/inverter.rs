//! Analytic inversion: optimal cavity coefficients from the variational
//! eigenproblem, the nested search over the cost weights, and extraction of
//! the defect dielectric from the Maxwell equation in the bulk-mode basis.

use std::collections::HashMap;
use std::f64::consts::PI;

use faer::linalg::matmul::matmul;
use faer::{Accum, Par};
use num_complex::Complex64 as c64;
use serde::{Deserialize, Serialize};

use crate::bulk::{kinetic, BulkSet, Gap, Polarization};
use crate::defect::{plane_wave_coefficients, synthesize_plane_waves, DefectFourier, GridSpec, KGrid};
use crate::error::{Error, Result};
use crate::lattice::{fractional, lattice_point, LatticeSpec, Vec2};
use crate::linalg::{herm_eigen, mat_vec, CMat};
use crate::objective::{
    combined, cost, intensity_at_origin, overlap, q_proxy, CostWeights, ObjectiveGrams,
};

/// Which eigenvector of the variational problem is taken as the optimum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selector {
    /// Smallest eigenvalue of `W + β_I P − β_V S`.
    #[default]
    SmallestEigenvalue,
    /// Eigenvector with the largest cost `J`, i.e. the largest eigenvalue of
    /// `W + β_I P − β_V S`.
    MaxCost,
    /// Smallest eigenvalue of `W − β_I P + β_V S`: suppresses the light-line
    /// proxy while favouring on-site intensity and a small overlap.
    Confining,
}

impl std::str::FromStr for Selector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smallest_eigenvalue" | "smallest" => Ok(Selector::SmallestEigenvalue),
            "max_cost" => Ok(Selector::MaxCost),
            "confining" => Ok(Selector::Confining),
            _ => Err(Error::invalid(
                "analytic_inverter",
                format!("unknown selector `{s}` (smallest_eigenvalue, max_cost, confining)"),
            )),
        }
    }
}

impl Selector {
    /// The matrix whose eigenpair the selector returns.
    pub fn matrix(self, grams: &ObjectiveGrams, w: CostWeights) -> CMat {
        match self {
            Selector::SmallestEigenvalue | Selector::MaxCost => combined(grams, w),
            Selector::Confining => {
                let n = grams.w.nrows();
                CMat::from_fn(n, n, |i, j| {
                    grams.w[(i, j)] - grams.p[(i, j)] * w.beta_i + grams.s[(i, j)] * w.beta_v
                })
            }
        }
    }

    /// Sign carried by the proxy `L` in the merit the selector optimizes.
    pub fn proxy_sign(self) -> f64 {
        match self {
            Selector::Confining => -1.0,
            _ => 1.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VariationalResult {
    #[serde(skip)]
    pub coefficients: Vec<c64>,
    pub lambda: f64,
    pub cost: f64,
    pub weights: CostWeights,
    pub selector: Selector,
    pub residual: f64,
}

/// One eigenpair of the variational problem, chosen by `selector`.
pub fn solve_variational(
    grams: &ObjectiveGrams,
    weights: CostWeights,
    selector: Selector,
) -> Result<VariationalResult> {
    let m = selector.matrix(grams, weights);
    let (vals, vecs) = herm_eigen(&m, "analytic_inverter")?;
    let idx = match selector {
        Selector::MaxCost => vals.len() - 1,
        _ => 0,
    };
    let a: Vec<c64> = (0..m.nrows()).map(|i| vecs[(i, idx)]).collect();
    let lambda = vals[idx];
    let ma = mat_vec(&m, &a);
    let residual = ma
        .iter()
        .zip(&a)
        .map(|(x, y)| (x - lambda * y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok(VariationalResult {
        cost: cost(&a, grams, weights),
        coefficients: a,
        lambda,
        weights,
        selector,
        residual,
    })
}

/// Derivative-free compass search maximizing `f` over `x ∈ ℝⁿ`.  Starting
/// with `step`, every coordinate is polled in both directions; improvements
/// are accepted greedily and the step is halved when a full poll fails.
/// Values are cached, and `budget` bounds the number of distinct evaluations.
/// Returns the best point, its value and the number of evaluations.
pub fn pattern_search(
    x0: &[f64],
    step: f64,
    budget: usize,
    mut f: impl FnMut(&[f64]) -> f64,
) -> (Vec<f64>, f64, usize) {
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v * 1e9).round() as i64).collect() };
    let mut cache: HashMap<Vec<i64>, f64> = HashMap::new();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], cache: &mut HashMap<Vec<i64>, f64>, evals: &mut usize| -> Option<f64> {
        let k = key(x);
        if let Some(v) = cache.get(&k) {
            return Some(*v);
        }
        if *evals >= budget {
            return None;
        }
        *evals += 1;
        let v = f(x);
        let v = if v.is_nan() { f64::NEG_INFINITY } else { v };
        cache.insert(k, v);
        Some(v)
    };
    let mut x = x0.to_vec();
    let Some(mut fx) = eval(&x, &mut cache, &mut evals) else {
        return (x, f64::NEG_INFINITY, 0);
    };
    let mut h = step;
    'outer: while h > 1e-6 && !x.is_empty() {
        let mut improved = false;
        for d in 0..x.len() {
            for s in [1.0, -1.0] {
                let mut y = x.clone();
                y[d] += s * h;
                let Some(fy) = eval(&y, &mut cache, &mut evals) else {
                    break 'outer;
                };
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    (x, fx, evals)
}

/// Nested optimization of the weights: a compass search over `ln β_I` and
/// `ln β_V` maximizing `merit` of the selected eigenvector.  Weights that
/// start at zero stay at zero.  The Gram matrices are reused for every trial.
pub fn optimize_weights(
    grams: &ObjectiveGrams,
    initial: CostWeights,
    budget: usize,
    selector: Selector,
    mut merit: impl FnMut(&VariationalResult) -> f64,
) -> Result<(CostWeights, VariationalResult, usize)> {
    let active: Vec<usize> = [initial.beta_i, initial.beta_v]
        .iter()
        .enumerate()
        .filter(|(_, b)| **b > 0.0)
        .map(|(i, _)| i)
        .collect();
    let decode = |x: &[f64]| {
        let mut b = [initial.beta_i, initial.beta_v];
        for (k, &i) in active.iter().enumerate() {
            b[i] = x[k].exp();
        }
        CostWeights { beta_i: b[0], beta_v: b[1] }
    };
    let x0: Vec<f64> = active
        .iter()
        .map(|&i| [initial.beta_i, initial.beta_v][i].ln())
        .collect();
    let mut first_err = None;
    let mut best: Option<(f64, VariationalResult)> = None;
    let (x, _, evals) = pattern_search(&x0, 1.0, budget.max(1), |x| {
        match solve_variational(grams, decode(x), selector) {
            Ok(r) => {
                let m = merit(&r);
                if best.as_ref().is_none_or(|(b, _)| m > *b) {
                    best = Some((m, r));
                }
                m
            }
            Err(e) => {
                first_err.get_or_insert(e);
                f64::NEG_INFINITY
            }
        }
    });
    match best {
        Some((_, r)) => Ok((decode(&x), r, evals)),
        None => Err(first_err.unwrap_or(Error::RankZero)),
    }
}

/// Merit of a variational result: `s L + β_I I − β_V V̂` at fixed reference
/// weights, with `V̂` the max-one normalized mode volume and `s` the proxy
/// sign of the selector.
pub fn merit(
    r: &VariationalResult,
    grams: &ObjectiveGrams,
    bulk: &BulkSet,
    reference: CostWeights,
    resolution: f64,
) -> f64 {
    let a = &r.coefficients;
    let peak = field_peak(a, bulk, grams.domain.grid(resolution));
    if peak == 0.0 {
        return f64::NEG_INFINITY;
    }
    let v = overlap(a, &grams.s) / (peak * peak);
    r.selector.proxy_sign() * q_proxy(a, &grams.w) + reference.beta_i * intensity_at_origin(a, &grams.p)
        - reference.beta_v * v
}

fn field_peak(a: &[c64], bulk: &BulkSet, grid: GridSpec) -> f64 {
    crate::defect::synthesize_field(a, bulk, grid).max_abs
}

/// The linear system `M δη = rhs` whose unknowns are `δη_k` on the grid `K`.
#[derive(Clone, Debug)]
pub struct InversionSystem {
    pub matrix: CMat,
    pub rhs: Vec<c64>,
    pub omega_m: f64,
    pub grid: KGrid,
}

/// Assemble the inversion system for the cavity coefficients `a` at
/// frequency `omega_m` (angular units).  Row `(n, q)` reads
/// `Σ_{k'} [Σ_G h*_{n,p} κ(p, p−k') c_{p−k'}] δη_{k'} = a_{n,q}(ω_m² − ω²_{n,q})`
/// with `p = q + G` and `c` the plane-wave coefficients of the cavity field.
pub fn build_inversion_system(
    a: &[c64],
    bulk: &BulkSet,
    omega_m: f64,
    gap: Gap,
) -> Result<InversionSystem> {
    if !gap.contains(omega_m) {
        return Err(Error::OutsideGap {
            omega: omega_m / (2.0 * PI),
            low: gap.low / (2.0 * PI),
            high: gap.high / (2.0 * PI),
        });
    }
    if a.len() != bulk.len() {
        return Err(Error::invalid(
            "analytic_inverter",
            format!("expected {} coefficients, got {}", bulk.len(), a.len()),
        ));
    }
    let grid = KGrid::new(&bulk.basis, &bulk.bz);
    let c = plane_wave_coefficients(a, bulk);
    let (ng, nq, nb, nk) = (grid.n_g, grid.n_q, bulk.n_bands, grid.len());
    let pol = bulk.polarization;
    let mut matrix = CMat::zeros(nb * nq, nk);
    let mut b = CMat::zeros(ng, nk);
    let mut out = CMat::zeros(nb, nk);
    for qi in 0..nq {
        b.fill(c64::new(0.0, 0.0));
        for g in 0..ng {
            let pidx = qi * ng + g;
            let (pc, pv) = (grid.coords[pidx], grid.vectors[pidx]);
            for (pj, &cp) in c.iter().enumerate() {
                if cp == c64::new(0.0, 0.0) {
                    continue;
                }
                let qc = grid.coords[pj];
                if let Some(kidx) = grid.lookup([pc[0] - qc[0], pc[1] - qc[1]]) {
                    b[(g, kidx)] = cp * kinetic(pv, grid.vectors[pj], pol);
                }
            }
        }
        matmul(out.as_mut(), Accum::Replace, bulk.h[qi].adjoint(), b.as_ref(), c64::new(1.0, 0.0), Par::Seq);
        for n in 0..nb {
            for k in 0..nk {
                matrix[(qi * nb + n, k)] = out[(n, k)];
            }
        }
    }
    let rhs = (0..bulk.len())
        .map(|i| {
            let w = bulk.omega_flat(i);
            a[i] * (omega_m * omega_m - w * w)
        })
        .collect();
    Ok(InversionSystem {
        matrix,
        rhs,
        omega_m,
        grid,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct SolveReport {
    pub rank: usize,
    pub sigma_max: f64,
    pub sigma_min_kept: f64,
    /// `‖M x − b‖ / ‖b‖`.
    pub relative_residual: f64,
}

/// Minimum-norm least-squares solution via truncated SVD: singular values
/// below `tau · σ_max` are discarded.
pub fn truncated_svd_solve(m: &CMat, b: &[c64], tau: f64) -> Result<(Vec<c64>, SolveReport)> {
    let svd = m.svd().map_err(|e| Error::Eigensolver {
        module: "analytic_inverter",
        dim: m.nrows().max(m.ncols()),
        max_entry: crate::linalg::max_abs(m),
        message: format!("SVD failed: {e:?}"),
    })?;
    let s = svd.S().column_vector();
    let (u, v) = (svd.U(), svd.V());
    let k = s.nrows();
    let sigma_max = (0..k).map(|i| s[i].re).fold(0.0, f64::max);
    let mut x = vec![c64::new(0.0, 0.0); m.ncols()];
    let mut rank = 0;
    let mut sigma_min_kept = f64::INFINITY;
    for i in 0..k {
        let si = s[i].re;
        if sigma_max == 0.0 || si <= tau * sigma_max {
            continue;
        }
        rank += 1;
        sigma_min_kept = sigma_min_kept.min(si);
        let mut proj = c64::new(0.0, 0.0);
        for r in 0..m.nrows() {
            proj += u[(r, i)].conj() * b[r];
        }
        let w = proj / si;
        for (c, xc) in x.iter_mut().enumerate() {
            *xc += v[(c, i)] * w;
        }
    }
    if rank == 0 {
        return Err(Error::RankZero);
    }
    let mx = mat_vec(m, &x);
    let bn = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let rn = mx.iter().zip(b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
    Ok((
        x,
        SolveReport {
            rank,
            sigma_max,
            sigma_min_kept,
            relative_residual: if bn > 0.0 { rn / bn } else { rn },
        },
    ))
}

/// Solve for `δη` and enforce `δη_{-k} = conj(δη_k)`.
pub fn solve_defect(system: &InversionSystem, tau: f64) -> Result<(DefectFourier, SolveReport)> {
    let (x, report) = truncated_svd_solve(&system.matrix, &system.rhs, tau)?;
    let mut d = DefectFourier {
        grid: system.grid.clone(),
        coefficients: x,
    };
    d.symmetrize();
    Ok((d, report))
}

/// Fitted hole: centre, semi-axes and orientation from second moments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HoleFit {
    pub site: [i32; 2],
    pub center_x: f64,
    pub center_y: f64,
    pub major: f64,
    pub minor: f64,
    pub angle: f64,
    pub area: f64,
    pub mean_eta: f64,
    pub touches_edge: bool,
    /// The region covers the sample nearest the origin.
    pub covers_origin: bool,
}

impl HoleFit {
    /// Radius of the circle with the same axis product.
    pub fn radius(&self) -> f64 {
        (self.major * self.minor).sqrt()
    }

    pub fn index(&self) -> f64 {
        1.0 / self.mean_eta.sqrt()
    }
}

/// Rasterized dielectric with its hole contours.
#[derive(Clone, Debug)]
pub struct DielectricMap {
    pub grid: GridSpec,
    /// `η(r)` row-major, `values[j * nx + i]`.
    pub values: Vec<f64>,
    pub level: f64,
    pub holes: Vec<HoleFit>,
}

impl DielectricMap {
    /// Hole assigned to the lattice site at the origin.
    pub fn central(&self) -> Option<&HoleFit> {
        self.holes.iter().find(|h| h.covers_origin && !h.touches_edge)
    }

    /// Radius of the central hole (zero when the origin is not inside a hole).
    pub fn central_radius(&self) -> f64 {
        self.central().map_or(0.0, HoleFit::radius)
    }

    /// Index implied by the mean `η` over the interior, non-central holes.
    pub fn bulk_hole_index(&self) -> Option<f64> {
        let (mut w, mut s) = (0.0, 0.0);
        for h in self.holes.iter().filter(|h| !h.covers_origin && !h.touches_edge) {
            w += h.area;
            s += h.area * h.mean_eta;
        }
        (w > 0.0).then(|| 1.0 / (s / w).sqrt())
    }
}

/// Nearest lattice site to `r`.
pub fn nearest_site(r: Vec2) -> [i32; 2] {
    let [u, v] = fractional(r);
    let (u0, v0) = (u.floor() as i32, v.floor() as i32);
    let mut best = ([u0, v0], f64::INFINITY);
    for du in 0..=1 {
        for dv in 0..=1 {
            let s = [u0 + du, v0 + dv];
            let d = (r - lattice_point(s)).norm();
            if d < best.1 {
                best = (s, d);
            }
        }
    }
    best.0
}

/// Threshold `values` at `(min + max)/2` and fit every connected region above
/// the level (4-connectivity) with a second-moment ellipse.
pub fn contour_holes(grid: GridSpec, values: &[f64]) -> (f64, Vec<HoleFit>) {
    let (nx, ny) = (grid.nx(), grid.ny());
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let level = 0.5 * (lo + hi);
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        return (level, Vec::new());
    }
    let (xs, ys) = (grid.xs(), grid.ys());
    let da = grid.dx() * grid.dy();
    let nearest = |v: &[f64]| {
        (0..v.len())
            .min_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap_or(0)
    };
    let origin = nearest(&ys) * nx + nearest(&xs);
    let mut label = vec![usize::MAX; nx * ny];
    let mut holes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..nx * ny {
        if values[start] <= level || label[start] != usize::MAX {
            continue;
        }
        let id = holes.len();
        label[start] = id;
        stack.push(start);
        let (mut n, mut sx, mut sy, mut sxx, mut syy, mut sxy, mut se) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        let mut edge = false;
        let mut covers_origin = false;
        while let Some(c) = stack.pop() {
            covers_origin |= c == origin;
            let (i, j) = (c % nx, c / nx);
            let (x, y) = (xs[i], ys[j]);
            n += 1.0;
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            se += values[c];
            if i == 0 || j == 0 || i == nx - 1 || j == ny - 1 {
                edge = true;
            }
            let mut push = |ii: usize, jj: usize| {
                let cc = jj * nx + ii;
                if values[cc] > level && label[cc] == usize::MAX {
                    label[cc] = id;
                    stack.push(cc);
                }
            };
            if i > 0 {
                push(i - 1, j);
            }
            if i + 1 < nx {
                push(i + 1, j);
            }
            if j > 0 {
                push(i, j - 1);
            }
            if j + 1 < ny {
                push(i, j + 1);
            }
        }
        let (cx, cy) = (sx / n, sy / n);
        // pixel variance (dx²/12) added so single pixels have finite size
        let (vx, vy) = (grid.dx().powi(2) / 12.0, grid.dy().powi(2) / 12.0);
        let cxx = sxx / n - cx * cx + vx;
        let cyy = syy / n - cy * cy + vy;
        let cxy = sxy / n - cx * cy;
        let tr = 0.5 * (cxx + cyy);
        let det = ((0.5 * (cxx - cyy)).powi(2) + cxy * cxy).sqrt();
        let (l1, l2) = (tr + det, (tr - det).max(0.0));
        let angle = 0.5 * (2.0 * cxy).atan2(cxx - cyy);
        holes.push(HoleFit {
            site: nearest_site(Vec2::new(cx, cy)),
            center_x: cx,
            center_y: cy,
            major: 2.0 * l1.sqrt(),
            minor: 2.0 * l2.sqrt(),
            angle,
            area: n * da,
            mean_eta: se / n,
            touches_edge: edge,
            covers_origin,
        });
    }
    (level, holes)
}

/// `η(r) = η₀(r) + δη(r)` on `grid` (bulk holes as exact discs), plus its
/// hole contours.
pub fn reconstruct_and_contour(
    defect: &DefectFourier,
    spec: &LatticeSpec,
    grid: GridSpec,
) -> DielectricMap {
    let d = synthesize_plane_waves(&defect.grid.vectors, &defect.coefficients, Polarization::TE, grid);
    let (xs, ys) = (grid.xs(), grid.ys());
    let nx = xs.len();
    let values: Vec<f64> = (0..d.values.len())
        .map(|idx| spec.eta_at(Vec2::new(xs[idx % nx], ys[idx / nx])) + d.values[idx][2].re)
        .collect();
    let (level, holes) = contour_holes(grid, &values);
    DielectricMap {
        grid,
        values,
        level,
        holes,
    }
}
