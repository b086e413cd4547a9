//! Physical GA fitness of a hand-made genome: a shrunken central hole with
//! its two x neighbours pushed outwards, on a small three-layer crystal.
//!
//! ```text
//! cargo run --release --example slab_fitness -- [center_radius] [shift]
//! ```

use phc_design::ga::{Genome, SlabObjective};
use phc_design::lattice::LatticeSpec;
use phc_design::objective::CostWeights;
use phc_design::planar::SlabSpec;

const SITES: [[i32; 2]; 7] = [[0, 0], [1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]];

fn main() -> phc_design::Result<()> {
    let mut args = std::env::args().skip(1).map(|s| s.parse::<f64>().expect("numeric argument"));
    let rc = args.next().unwrap_or(0.15);
    let shift = args.next().unwrap_or(0.02);
    let mut spec = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0)?, 0.75);
    spec.layers = 3;
    spec.mesh = 8.0;
    let objective = SlabObjective { spec, weights: CostWeights::new(1.0, 1.0)?, window: [0.27, 0.30], points: 13 };
    let mut g = Genome::nominal(&SITES, 0.3);
    g.genes[2] = rc;
    g.genes[3] = rc;
    g.genes[4] = shift;
    g.genes[4 * 4] = -shift;
    let e = objective.evaluate(&g);
    match e.resonance {
        Some(r) => println!(
            "a/lambda {:.6}  Q {:.1}  V {:.4} λ³  I {:.3e}  fitness {:.3}",
            r.omega0, r.q, e.volume, e.intensity, e.fitness
        ),
        None => println!("no resonance: {}  fitness {:.1e}", e.failure.unwrap_or_default(), e.fitness),
    }
    Ok(())
}
