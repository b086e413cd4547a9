//! Thin wrappers over `faer` dense kernels with crate error reporting.

use faer::{Mat, Side};
use num_complex::Complex64 as c64;

use crate::error::{Error, Result};

pub type CMat = Mat<c64>;

pub fn max_abs(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

/// Largest entrywise deviation from Hermitian symmetry.
pub fn hermitian_defect(a: &CMat) -> f64 {
    let mut m: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..=j.min(a.nrows() - 1) {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// Ascending eigen-decomposition of a Hermitian matrix (lower triangle read).
/// Eigenvectors in nearly degenerate clusters are canonicalized, see
/// [`canonicalize_clusters`].
pub fn herm_eigen(a: &CMat, module: &'static str) -> Result<(Vec<f64>, CMat)> {
    let n = a.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let evd = a.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver {
        module,
        dim: n,
        max_entry: max_abs(a),
        message: format!("{e:?}"),
    })?;
    let s = evd.S().column_vector();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigensolver {
            module,
            dim: n,
            max_entry: max_abs(a),
            message: "non-finite eigenvalue".into(),
        });
    }
    let mut vecs = evd.U().to_owned();
    canonicalize_clusters(&vals, &mut vecs, 1e-8);
    Ok((vals, vecs))
}

/// Make eigenvectors deterministic: within each cluster of eigenvalues whose
/// relative spacing is below `rel_gap`, rebuild an orthonormal basis by
/// projecting the unit vectors `e_0, e_1, …` in order and Gram–Schmidt
/// orthogonalizing; the first component of significant magnitude of every
/// vector is then made real and positive.
pub fn canonicalize_clusters(vals: &[f64], vecs: &mut CMat, rel_gap: f64) {
    let n = vecs.nrows();
    let scale = vals.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut start = 0;
    while start < vals.len() {
        let mut end = start + 1;
        while end < vals.len() && (vals[end] - vals[end - 1]).abs() <= rel_gap * scale {
            end += 1;
        }
        let k = end - start;
        if k > 1 {
            let sub: Vec<Vec<c64>> = (start..end)
                .map(|c| (0..n).map(|i| vecs[(i, c)]).collect())
                .collect();
            let mut chosen: Vec<Vec<c64>> = Vec::with_capacity(k);
            for j in 0..n {
                if chosen.len() == k {
                    break;
                }
                // P e_j = Σ_c v_c conj(v_c[j])
                let mut w = vec![c64::new(0.0, 0.0); n];
                for v in &sub {
                    let cj = v[j].conj();
                    for i in 0..n {
                        w[i] += v[i] * cj;
                    }
                }
                for u in &chosen {
                    let d: c64 = u.iter().zip(&w).map(|(a, b)| a.conj() * b).sum();
                    for i in 0..n {
                        w[i] -= u[i] * d;
                    }
                }
                let nrm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                if nrm > 1e-6 {
                    w.iter_mut().for_each(|z| *z /= nrm);
                    chosen.push(w);
                }
            }
            if chosen.len() == k {
                for (c, v) in (start..end).zip(chosen) {
                    for i in 0..n {
                        vecs[(i, c)] = v[i];
                    }
                }
            }
        }
        start = end;
    }
    for c in 0..vecs.ncols() {
        fix_phase(vecs, c);
    }
}

fn fix_phase(vecs: &mut CMat, c: usize) {
    let n = vecs.nrows();
    let big = (0..n).fold(0.0f64, |m, i| m.max(vecs[(i, c)].norm()));
    if big == 0.0 {
        return;
    }
    let pivot = (0..n)
        .find(|&i| vecs[(i, c)].norm() > 1e-6 * big)
        .expect("nonzero column");
    let z = vecs[(pivot, c)];
    let ph = z.conj() / z.norm();
    for i in 0..n {
        vecs[(i, c)] *= ph;
    }
}

pub fn column(a: &CMat, j: usize) -> Vec<c64> {
    (0..a.nrows()).map(|i| a[(i, j)]).collect()
}

pub fn from_columns(rows: usize, cols: &[Vec<c64>]) -> CMat {
    CMat::from_fn(rows, cols.len(), |i, j| cols[j][i])
}

pub fn dot(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Hermitian quadratic form `a† M a` (real part).
pub fn quad_form(m: &CMat, a: &[c64]) -> c64 {
    let mut acc = c64::new(0.0, 0.0);
    for j in 0..m.ncols() {
        let mut col = c64::new(0.0, 0.0);
        for i in 0..m.nrows() {
            col += a[i].conj() * m[(i, j)];
        }
        acc += col * a[j];
    }
    acc
}

pub fn mat_vec(m: &CMat, a: &[c64]) -> Vec<c64> {
    let mut out = vec![c64::new(0.0, 0.0); m.nrows()];
    for j in 0..m.ncols() {
        let aj = a[j];
        for (i, o) in out.iter_mut().enumerate() {
            *o += m[(i, j)] * aj;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_basis_is_unique_for_rotated_input() {
        // a 2-fold degenerate subspace presented in two different rotations
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v1 = CMat::from_fn(3, 2, |i, j| match (i, j) {
            (0, 0) => c64::new(s, 0.0),
            (1, 0) => c64::new(s, 0.0),
            (0, 1) => c64::new(0.0, s),
            (1, 1) => c64::new(0.0, -s),
            _ => c64::new(0.0, 0.0),
        });
        let v2 = CMat::from_fn(3, 2, |i, j| match (i, j) {
            (0, 0) => c64::new(0.0, 1.0),
            (1, 1) => c64::new(-1.0, 0.0),
            _ => c64::new(0.0, 0.0),
        });
        let (mut a, mut b) = (v1, v2);
        canonicalize_clusters(&[1.0, 1.0], &mut a, 1e-8);
        canonicalize_clusters(&[1.0, 1.0], &mut b, 1e-8);
        for i in 0..3 {
            for j in 0..2 {
                assert!((a[(i, j)] - b[(i, j)]).norm() < 1e-12);
            }
        }
        assert!((a[(0, 0)] - c64::new(1.0, 0.0)).norm() < 1e-12);
    }
}
