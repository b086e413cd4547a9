//! Finite-thickness slab solver: reflection and transmission of a perforated
//! slab by layer-by-layer propagation, resonance fitting and 3D mode volume.
//!
//! The field is a single scalar `H` obeying `∇·(η∇H) + k²H = 0`.  Along the
//! propagation axis the structure is cut into slices that are uniform in that
//! direction; each slice is solved exactly in its transverse finite-difference
//! eigenbasis and the slices are chained with scattering matrices.
//!
//! Two illuminations are supported.  `InPlane` sends a guided wave into one
//! edge of a finite crystal and reduces the slab to its fundamental TE
//! effective index, with graded absorbing layers on the open transverse sides.
//! `Vertical` sends a plane wave through the slab at normal incidence using a
//! periodic rectangular cell of the bulk lattice.

pub mod spectrum;
pub mod tmm;
pub mod volume;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use self::spectrum::Resonance;
use self::volume::{mode_volume_3d, FieldGrid3D};
use crate::error::{Error, Result};
use crate::inverter::nearest_site;
use crate::lattice::{lattice_point, LatticeSpec, Vec2};

/// Direction of the incident wave.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Incidence {
    /// Along `+x` inside the slab plane, entering one edge of the crystal.
    #[default]
    InPlane,
    /// Along `+z`, normal to the slab.
    Vertical,
}

/// Per-site replacement of a nominal hole: offset from the lattice site and
/// semi-axes along `x` and `y`.  A zero semi-axis removes the hole.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoleOverride {
    pub site: [i32; 2],
    pub dx: f64,
    pub dy: f64,
    pub rx: f64,
    pub ry: f64,
}

/// An elliptical hole with axes along `x` and `y`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Hole {
    pub site: [i32; 2],
    pub center: Vec2,
    pub rx: f64,
    pub ry: f64,
}

impl Hole {
    pub fn contains(&self, r: Vec2) -> bool {
        if self.rx <= 0.0 || self.ry <= 0.0 {
            return false;
        }
        let d = r - self.center;
        (d.x / self.rx).powi(2) + (d.y / self.ry).powi(2) < 1.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlabSpec {
    pub lattice: LatticeSpec,
    /// Slab thickness in units of `a`.
    pub thickness: f64,
    /// Rings of holes around the cavity site.
    pub layers: usize,
    pub holes: Vec<HoleOverride>,
    /// Cells per `a`, in-plane and vertically.
    pub mesh: f64,
    /// Cladding layers (in `a`) above and below the slab.
    pub padding: usize,
    /// Thickness of the graded absorbing layers on open transverse sides.
    pub absorber: f64,
    pub incidence: Incidence,
}

impl SlabSpec {
    /// Eight rings, `d = 0.75a`, 12 cells per `a`, five cladding layers.
    pub fn new(lattice: LatticeSpec, thickness: f64) -> Self {
        SlabSpec {
            lattice,
            thickness,
            layers: 8,
            holes: Vec::new(),
            mesh: 12.0,
            padding: 5,
            absorber: 1.5,
            incidence: Incidence::InPlane,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("planar_solver", m));
        self.lattice.validate()?;
        if !(self.thickness > 0.0 && self.thickness.is_finite()) {
            return bad(format!("thickness must be positive, got {}", self.thickness));
        }
        if !(self.mesh >= 2.0 && self.mesh.is_finite()) {
            return bad(format!("mesh must be at least 2 cells per a, got {}", self.mesh));
        }
        if self.padding < 1 {
            return bad("padding must be at least one layer".into());
        }
        if !(self.absorber > 0.0) {
            return bad("absorber thickness must be positive".into());
        }
        for h in &self.holes {
            if !(h.rx >= 0.0 && h.ry >= 0.0 && h.rx < 0.5 && h.ry < 0.5) {
                return bad(format!("hole at site {:?} has semi-axes outside [0, 0.5)", h.site));
            }
            if hex_distance(h.site) > self.layers as i32 {
                return bad(format!("hole override at site {:?} lies outside the crystal", h.site));
            }
        }
        Ok(())
    }

    /// All holes of the finite crystal, overrides applied.
    pub fn hole_list(&self) -> Vec<Hole> {
        let over: HashMap<[i32; 2], HoleOverride> = self.holes.iter().map(|h| (h.site, *h)).collect();
        let l = self.layers as i32;
        let r = self.lattice.hole_radius;
        let mut out = Vec::new();
        for i in -l..=l {
            for j in -l..=l {
                let site = [i, j];
                if hex_distance(site) > l {
                    continue;
                }
                let p = lattice_point(site);
                out.push(match over.get(&site) {
                    Some(o) => Hole {
                        site,
                        center: p + Vec2::new(o.dx, o.dy),
                        rx: o.rx,
                        ry: o.ry,
                    },
                    None => Hole { site, center: p, rx: r, ry: r },
                });
            }
        }
        out
    }

    /// Half extents of the crystal region in `x` and `y`.
    pub fn crystal_half_extent(&self) -> (f64, f64) {
        let l = self.layers as f64;
        (l + 0.5, l * 3f64.sqrt() / 2.0 + 0.5)
    }
}

/// Localization of a resonance, measured on its field inside the crystal.
#[derive(Clone, Debug, Serialize)]
pub struct CavityMetrics {
    #[serde(skip)]
    pub field: FieldGrid3D,
    /// Max-one mode volume in units of `λ³`, `λ = a/ω₀`.
    pub volume: f64,
    /// `|H(0)|² / max|H|²`.
    pub intensity: f64,
}

/// Field of a resonance with the illumination removed, and its volume and
/// centre intensity.
///
/// The stationary field at `ω₀` is the cavity mode plus the illuminating
/// wave and its reflections from the crystal.  Subtracting the field of the
/// unperturbed crystal (no hole overrides) at the same frequency leaves the
/// field scattered by the defect, which the resonant mode dominates.
pub fn cavity_metrics(spec: &SlabSpec, res: &Resonance) -> Result<CavityMetrics> {
    let (_, on) = tmm::simulate(spec, res.omega0)?;
    let reference = SlabSpec { holes: Vec::new(), ..spec.clone() };
    let (_, off) = tmm::simulate(&reference, res.omega0)?;
    let values = on.values.iter().zip(&off.values).map(|(a, b)| a - b).collect();
    let field = FieldGrid3D::new(on.xs, on.ys, on.zs, values)?;
    let (hx, hy) = spec.crystal_half_extent();
    let inner = field.crop(hx, hy)?;
    let volume = mode_volume_3d(&inner)? * res.omega0.powi(3);
    let intensity = inner.intensity_at(0.0, 0.0, 0.0) / inner.max_intensity();
    Ok(CavityMetrics { field, volume, intensity })
}

/// Number of rings separating a site from the origin.
pub fn hex_distance(s: [i32; 2]) -> i32 {
    s[0].abs().max(s[1].abs()).max((s[0] + s[1]).abs())
}

/// Hole fill fraction of every cell of a grid, estimated with 4×4
/// sub-samples per cell.  `periodic` wraps sample points into the given cell.
pub(crate) fn fill_fraction(
    holes: &[Hole],
    xs: &[f64],
    ys: &[f64],
    dx: f64,
    dy: f64,
) -> Vec<f64> {
    let mut by_site: HashMap<[i32; 2], Vec<Hole>> = HashMap::new();
    for h in holes {
        by_site.entry(h.site).or_default().push(*h);
    }
    const SUB: usize = 4;
    let neighbours = [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1]];
    let mut out = vec![0.0; xs.len() * ys.len()];
    for (j, &y) in ys.iter().enumerate() {
        for (i, &x) in xs.iter().enumerate() {
            let mut hit = 0;
            for sj in 0..SUB {
                for si in 0..SUB {
                    let r = Vec2::new(
                        x + dx * ((si as f64 + 0.5) / SUB as f64 - 0.5),
                        y + dy * ((sj as f64 + 0.5) / SUB as f64 - 0.5),
                    );
                    let s = nearest_site(r);
                    let inside = neighbours.iter().any(|d| {
                        by_site
                            .get(&[s[0] + d[0], s[1] + d[1]])
                            .is_some_and(|v| v.iter().any(|h| h.contains(r)))
                    });
                    hit += inside as usize;
                }
            }
            out[j * xs.len() + i] = hit as f64 / (SUB * SUB) as f64;
        }
    }
    out
}

/// Fundamental even TE mode of a symmetric slab of index `n` in air:
/// returns `(n_eff, κ, γ)` with `κ` the internal and `γ` the external
/// transverse wavenumbers.  A slab of index 1 returns `(1, 0, 0)`.
pub fn slab_te_mode(n: f64, thickness: f64, k: f64) -> (f64, f64, f64) {
    if n <= 1.0 {
        return (1.0, 0.0, 0.0);
    }
    let v = 0.5 * k * thickness * (n * n - 1.0).sqrt();
    // u tan u = sqrt(V² − u²) on (0, min(V, π/2))
    let (mut lo, mut hi) = (0.0, v.min(std::f64::consts::FRAC_PI_2) * (1.0 - 1e-15));
    for _ in 0..200 {
        let u = 0.5 * (lo + hi);
        if u * u.tan() - (v * v - u * u).max(0.0).sqrt() > 0.0 {
            hi = u;
        } else {
            lo = u;
        }
    }
    let u = 0.5 * (lo + hi);
    let kappa = 2.0 * u / thickness;
    let n_eff = (n * n - (kappa / k).powi(2)).sqrt();
    let gamma = k * (n_eff * n_eff - 1.0).max(0.0).sqrt();
    (n_eff, kappa, gamma)
}

/// Vertical profile of the fundamental slab mode, normalized to 1 at `z = 0`.
pub fn slab_profile(z: f64, thickness: f64, kappa: f64, gamma: f64) -> f64 {
    let h = 0.5 * thickness;
    if z.abs() <= h {
        (kappa * z).cos()
    } else {
        (kappa * h).cos() * (-gamma * (z.abs() - h)).exp()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_counts() {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
        for l in 0..5 {
            s.layers = l;
            assert_eq!(s.hole_list().len(), 1 + 3 * l * (l + 1));
        }
    }

    #[test]
    fn overrides_replace_sites() {
        let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
        s.layers = 2;
        s.holes.push(HoleOverride { site: [0, 0], dx: 0.1, dy: 0.0, rx: 0.2, ry: 0.1 });
        let h = s.hole_list().into_iter().find(|h| h.site == [0, 0]).unwrap();
        assert_eq!((h.center.x, h.rx, h.ry), (0.1, 0.2, 0.1));
        s.holes[0].site = [5, 0];
        assert!(s.validate().is_err());
    }

    #[test]
    fn fill_fraction_matches_hole_area() {
        let holes = vec![Hole { site: [0, 0], center: Vec2::ZERO, rx: 0.3, ry: 0.3 }];
        let n = 64;
        let h = 1.0 / n as f64;
        let xs: Vec<f64> = (0..n).map(|i| -0.5 + (i as f64 + 0.5) * h).collect();
        let f = fill_fraction(&holes, &xs, &xs, h, h);
        let area: f64 = f.iter().sum::<f64>() * h * h;
        assert!((area - std::f64::consts::PI * 0.09).abs() < 1e-3);
    }

    #[test]
    fn slab_mode_satisfies_dispersion() {
        let k = 2.0 * std::f64::consts::PI * 0.27;
        let (n_eff, kappa, gamma) = slab_te_mode(3.4, 0.75, k);
        assert!(n_eff > 1.0 && n_eff < 3.4);
        assert!((kappa * (kappa * 0.375).tan() - gamma).abs() < 1e-9 * gamma.max(1.0));
        // continuity of the profile at the surface
        let z = 0.375;
        assert!((slab_profile(z - 1e-12, 0.75, kappa, gamma) - slab_profile(z + 1e-12, 0.75, kappa, gamma)).abs() < 1e-9);
        assert_eq!(slab_te_mode(1.0, 0.75, k).0, 1.0);
    }
}
