//! Edge-illuminated reflection scan of a finite hexagonal slab with a
//! reduced central hole, followed by a Lorentzian fit of the cavity dip.
//!
//! usage: planar_scan [layers] [mesh] [points] [lo] [hi] [center_radius]

use std::time::Instant;

use phc_design::lattice::LatticeSpec;
use phc_design::planar::spectrum::{find_resonances, scan_reflection};
use phc_design::planar::{HoleOverride, SlabSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let mut spec = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0)?, 0.75);
    spec.layers = arg(0, 4.0) as usize;
    spec.mesh = arg(1, 8.0);
    let points = arg(2, 41.0) as usize;
    let (lo, hi) = (arg(3, 0.22), arg(4, 0.34));
    let rc = arg(5, 0.15);
    spec.holes.push(HoleOverride { site: [0, 0], dx: 0.0, dy: 0.0, rx: rc, ry: rc });
    let t = Instant::now();
    let s = scan_reflection(&spec, [lo, hi], points)?;
    println!("# {} frequencies in {:.1?}", s.len(), t.elapsed());
    println!("# a/lambda        R               T");
    for i in 0..s.len() {
        println!("{:.8} {:.6e} {:.6e}", s.frequencies[i], s.reflectance[i], s.transmittance[i]);
    }
    for r in find_resonances(&s) {
        println!("# resonance a/lambda = {:.6}  Q = {:.1}  depth = {:.3}", r.omega0, r.q, r.depth);
    }
    Ok(())
}
