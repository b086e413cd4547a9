//! Reflection scans and resonance fitting.

use faer::prelude::Solve;
use faer::Mat;
use serde::Serialize;

use super::tmm::{responses, Response};
use super::SlabSpec;
use crate::error::{Error, Result};

/// Reflectance and transmittance on an increasing frequency grid (`a/λ`).
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ReflectionSpectrum {
    pub frequencies: Vec<f64>,
    pub reflectance: Vec<f64>,
    pub transmittance: Vec<f64>,
}

impl ReflectionSpectrum {
    pub fn from_responses(mut r: Vec<Response>) -> Self {
        r.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        r.dedup_by(|a, b| a.frequency == b.frequency);
        ReflectionSpectrum {
            frequencies: r.iter().map(|x| x.frequency).collect(),
            reflectance: r.iter().map(|x| x.reflectance).collect(),
            transmittance: r.iter().map(|x| x.transmittance).collect(),
        }
    }

    /// Spectrum with reflectance only (transmittance `1 − R`).
    pub fn from_reflectance(frequencies: Vec<f64>, reflectance: Vec<f64>) -> Self {
        let transmittance = reflectance.iter().map(|r| 1.0 - r).collect();
        ReflectionSpectrum { frequencies, reflectance, transmittance }
    }

    pub fn len(&self) -> usize {
        self.frequencies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
}

/// A fitted Lorentzian resonance on a linear background, frequencies in
/// a/λ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Resonance {
    pub omega0: f64,
    pub fwhm: f64,
    pub q: f64,
    /// Positive for a dip in reflectance, negative for a peak.
    pub depth: f64,
    /// Background reflectance at `omega0`.
    pub baseline: f64,
    /// Background slope per unit a/λ.
    pub slope: f64,
}

impl Resonance {
    pub fn model(&self, w: f64) -> f64 {
        lorentzian(&[self.omega0, self.fwhm, self.baseline, self.depth, self.slope], w)
    }
}

/// `B + S(ω − ω₀) − D (Γ/2)² / ((ω − ω₀)² + (Γ/2)²)` with
/// `p = [ω₀, Γ, B, D, S]`.
fn lorentzian(p: &[f64; 5], w: f64) -> f64 {
    let hw = 0.5 * p[1];
    let x = w - p[0];
    p[2] + p[4] * x - p[3] * hw * hw / (x * x + hw * hw)
}

const REFINE_LEVELS: usize = 3;

/// Scan `n_points` uniformly over `[lo, hi]`, then refine three times around
/// every prominent local extremum: each level adds points at a quarter of the
/// local spacing within two spacings of it.
pub fn scan_reflection(spec: &SlabSpec, range: [f64; 2], n_points: usize) -> Result<ReflectionSpectrum> {
    let [lo, hi] = range;
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::invalid("planar_solver", format!("scan range must satisfy 0 < lo < hi, got [{lo}, {hi}]")));
    }
    if n_points < 3 {
        return Err(Error::invalid("planar_solver", "a scan needs at least 3 points"));
    }
    let grid: Vec<f64> = (0..n_points)
        .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
        .collect();
    let mut all = responses(spec, &grid)?;
    let mut spectrum = ReflectionSpectrum::from_responses(all.clone());
    for _ in 0..REFINE_LEVELS {
        let extra = refinement_points(&spectrum);
        if extra.is_empty() {
            break;
        }
        all.extend(responses(spec, &extra)?);
        spectrum = ReflectionSpectrum::from_responses(all.clone());
    }
    Ok(spectrum)
}

/// New sample points around every feature candidate.
pub(crate) fn refinement_points(s: &ReflectionSpectrum) -> Vec<f64> {
    let f = &s.frequencies;
    let n = f.len();
    let mut out: Vec<f64> = Vec::new();
    for e in candidates(&s.reflectance) {
        let i = e.index;
        // a feature already spanning several samples beyond half prominence
        // is resolved
        if e.inside(&s.reflectance).count() > 4 {
            continue;
        }
        let h = (f[i + 1] - f[i]).min(f[i] - f[i - 1]);
        for k in -7i32..=7 {
            let x = f[i] + k as f64 * h / 4.0;
            if k % 4 != 0 && x > f[0] && x < f[n - 1] {
                out.push(x);
            }
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    out.retain(|x| f.binary_search_by(|y| y.total_cmp(x)).is_err());
    out
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Robust noise level from the MAD of third differences, which a smooth
/// background barely affects even on coarse scans; scaled for Gaussian
/// noise (`Var = 20σ²`).
fn noise_level(r: &[f64]) -> f64 {
    let d: Vec<f64> = r.windows(4).map(|w| w[3] - 3.0 * w[2] + 3.0 * w[1] - w[0]).collect();
    if d.is_empty() {
        return 0.0;
    }
    let m = median(&mut d.clone());
    let mut dev: Vec<f64> = d.iter().map(|x| (x - m).abs()).collect();
    1.4826 * median(&mut dev) / 20f64.sqrt()
}

/// A local extremum with its topographic prominence and the indices of the
/// highest (for a dip) points bounding it on either side.
#[derive(Clone, Copy, Debug)]
struct Extremum {
    index: usize,
    prominence: f64,
    left: usize,
    right: usize,
    /// +1 for a dip, −1 for a peak.
    sign: f64,
}

impl Extremum {
    /// Samples around the extremum lying beyond half its prominence.
    fn inside(&self, r: &[f64]) -> std::ops::RangeInclusive<usize> {
        let level = |j: usize| self.sign * (r[j] - r[self.index]) < 0.5 * self.prominence;
        let (mut a, mut b) = (self.index, self.index);
        while a > self.left && level(a - 1) {
            a -= 1;
        }
        while b < self.right && level(b + 1) {
            b += 1;
        }
        a..=b
    }

}

/// Dips of `sign · r` (peaks when `sign = −1`) and their prominences.
fn extrema(r: &[f64], sign: f64) -> Vec<Extremum> {
    let n = r.len();
    let v: Vec<f64> = r.iter().map(|x| sign * x).collect();
    let mut out = Vec::new();
    for i in 1..n - 1 {
        if !(v[i] < v[i - 1] && v[i] <= v[i + 1]) {
            continue;
        }
        let (mut left, mut j) = (i, i);
        while j > 0 && v[j - 1] >= v[i] {
            j -= 1;
            if v[j] > v[left] {
                left = j;
            }
        }
        let (mut right, mut j) = (i, i);
        while j + 1 < n && v[j + 1] >= v[i] {
            j += 1;
            if v[j] > v[right] {
                right = j;
            }
        }
        let prominence = v[left].min(v[right]) - v[i];
        out.push(Extremum { index: i, prominence, left, right, sign });
    }
    out
}

/// Extrema prominent enough to be treated as features, in frequency order.
fn candidates(r: &[f64]) -> Vec<Extremum> {
    if r.len() < 3 {
        return Vec::new();
    }
    let mut cand = extrema(r, 1.0);
    cand.extend(extrema(r, -1.0));
    // the prominence of a noise extremum is a difference of two noise
    // samples, hence the wide margin
    let thresh = (8.0 * noise_level(r)).max(1e-6);
    cand.retain(|e| e.prominence > thresh);
    cand.sort_by_key(|e| e.index);
    cand
}

/// Every resonance feature of the spectrum, fitted with a Lorentzian on a
/// linear background.
///
/// Candidates are the local minima and maxima of the reflectance whose
/// prominence exceeds eight noise levels and 1e-6.  Each is fitted between its bounding maxima (minima for a
/// peak), cut halfway to neighbouring candidates of the same kind.  Fits
/// closer than a linewidth describe one feature; the deeper one is kept.
pub fn find_resonances(s: &ReflectionSpectrum) -> Vec<Resonance> {
    let n = s.len();
    if n < 5 {
        return Vec::new();
    }
    let f = &s.frequencies;
    let r = &s.reflectance;
    let cand = candidates(r);
    let mut out: Vec<Resonance> = Vec::new();
    for e in &cand {
        // windows stop halfway to the next feature of the same sign; an
        // adjacent extremum of opposite sign belongs to an asymmetric line
        let same = |k: &&Extremum| k.sign == e.sign && k.index != e.index;
        let mut lo = e.left.min(e.index);
        let mut hi = e.right.max(e.index) + 1;
        if let Some(p) = cand.iter().filter(same).filter(|k| k.index < e.index).map(|k| k.index).max() {
            lo = lo.max((p + e.index).div_ceil(2));
        }
        if let Some(nx) = cand.iter().filter(same).filter(|k| k.index > e.index).map(|k| k.index).min() {
            hi = hi.min((e.index + nx) / 2 + 1);
        }
        // about four linewidths either side, judged from the nearer
        // half-prominence crossing
        let level = |j: usize| e.sign * (r[j] - r[e.index]) < 0.5 * e.prominence;
        let mut a = e.index;
        while a > lo && level(a - 1) {
            a -= 1;
        }
        let mut b = e.index;
        while b + 1 < hi && level(b + 1) {
            b += 1;
        }
        let half = (f[e.index] - f[a.saturating_sub(1).max(lo)]).min(f[(b + 1).min(hi - 1)] - f[e.index]);
        let reach = 8.0 * half.max(f[e.index + 1] - f[e.index]);
        while lo + 1 < e.index && f[e.index] - f[lo] > reach {
            lo += 1;
        }
        while hi > e.index + 2 && f[hi - 1] - f[e.index] > reach {
            hi -= 1;
        }
        if hi - lo < 5 {
            continue;
        }
        if let Some(res) = fit_window(&f[lo..hi], &r[lo..hi], e.index - lo, e.sign * e.prominence) {
            if res.omega0 >= f[lo] && res.omega0 <= f[hi - 1] {
                out.push(res);
            }
        }
    }
    // one feature seen from both of its extrema: keep the deeper fit
    out.sort_by(|a, b| b.depth.abs().total_cmp(&a.depth.abs()));
    let mut kept: Vec<Resonance> = Vec::new();
    for r in out {
        if kept.iter().all(|k| (k.omega0 - r.omega0).abs() > k.fwhm.max(r.fwhm)) {
            kept.push(r);
        }
    }
    kept.sort_by(|a, b| a.omega0.total_cmp(&b.omega0));
    kept
}

/// Fit one feature; `ip` indexes its extremum and `depth` its signed
/// prominence.
fn fit_window(f: &[f64], r: &[f64], ip: usize, depth: f64) -> Option<Resonance> {
    let m = f.len();
    // background through the window ends
    let slope = (r[m - 1] - r[0]) / (f[m - 1] - f[0]);
    let trend = |w: f64| r[0] + slope * (w - f[0]);
    let half = |step: isize| -> f64 {
        let mut j = ip as isize;
        while j + step >= 0 && ((j + step) as usize) < m {
            let nj = (j + step) as usize;
            if (trend(f[nj]) - r[nj]) * depth.signum() < 0.5 * depth.abs() {
                return f[nj];
            }
            j += step;
        }
        f[j as usize]
    };
    let span = f[m - 1] - f[0];
    let fwhm = (half(1) - half(-1)).max(f[ip + 1] - f[ip]).max(f[ip] - f[ip - 1]);
    let p = levenberg_marquardt(f, r, [f[ip], fwhm, trend(f[ip]), depth, slope])?;
    // a reflectance feature cannot be deeper than the full range, a width
    // beyond the fitted window is background and one far below the sample
    // spacing is not resolved by the data
    let spacing = (f[ip + 1] - f[ip]).min(f[ip] - f[ip - 1]);
    if !(p[1] > 0.5 * spacing && p[1] < span) || p[3] == 0.0 || p[3].abs() > 1.5 {
        return None;
    }
    Some(Resonance { omega0: p[0], fwhm: p[1], q: p[0] / p[1], depth: p[3], baseline: p[2], slope: p[4] })
}

/// Damped Gauss–Newton fit of the Lorentzian model.  Internally the centre
/// and slope are scaled by the initial width and the width is fitted in log
/// space, which keeps the normal equations well conditioned for high Q.
fn levenberg_marquardt(f: &[f64], r: &[f64], p0: [f64; 5]) -> Option<[f64; 5]> {
    const NP: usize = 5;
    let (w0, g0) = (p0[0], p0[1]);
    let to_model = |u: &[f64; NP]| [w0 + u[0] * g0, g0 * u[1].exp(), u[2], u[3], u[4] / g0];
    let cost = |u: &[f64; NP]| -> f64 {
        let p = to_model(u);
        f.iter().zip(r).map(|(&w, &y)| (lorentzian(&p, w) - y).powi(2)).sum()
    };
    let mut u = [0.0, 0.0, p0[2], p0[3], p0[4] * g0];
    let mut c = cost(&u);
    let mut mu = 1e-3;
    for _ in 0..500 {
        let p = to_model(&u);
        let hw = 0.5 * p[1];
        let mut jtj = Mat::<f64>::zeros(NP, NP);
        let mut jtr = Mat::<f64>::zeros(NP, 1);
        for (&w, &y) in f.iter().zip(r) {
            let x = w - p[0];
            let den = x * x + hw * hw;
            let l = hw * hw / den;
            let res = lorentzian(&p, w) - y;
            // derivatives with respect to the scaled parameters
            let j = [
                (-p[3] * l * 2.0 * x / den - p[4]) * g0,
                -p[3] * 2.0 * l * (1.0 - l),
                1.0,
                -l,
                x / g0,
            ];
            for a in 0..NP {
                jtr[(a, 0)] += j[a] * res;
                for b in 0..NP {
                    jtj[(a, b)] += j[a] * j[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj.clone();
            for a in 0..NP {
                m[(a, a)] += mu * jtj[(a, a)].max(1e-300);
            }
            let step = m.partial_piv_lu().solve(&jtr);
            let trial: [f64; NP] = std::array::from_fn(|a| u[a] - step[(a, 0)]);
            let ct = cost(&trial);
            if ct.is_finite() && ct < c {
                let rel = (c - ct) / c.max(1e-300);
                u = trial;
                c = ct;
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if rel < 1e-14 {
                    return Some(to_model(&u));
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    let p = to_model(&u);
    p.iter().all(|x| x.is_finite()).then_some(p)
}

/// The single resonance of a spectrum.
pub fn extract_q(s: &ReflectionSpectrum) -> Result<Resonance> {
    let mut c = find_resonances(s);
    match c.len() {
        0 => Err(Error::NoFeature),
        1 => Ok(c.remove(0)),
        _ => Err(Error::AmbiguousFeature { candidates: c }),
    }
}
