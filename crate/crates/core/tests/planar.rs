//! Slab scans and the physical GA fitness on small crystals.

use phc_design::ga::{Genome, SlabObjective, SENTINEL};
use phc_design::lattice::LatticeSpec;
use phc_design::objective::CostWeights;
use phc_design::planar::spectrum::{find_resonances, scan_reflection};
use phc_design::planar::{cavity_metrics, HoleOverride, SlabSpec};

const WINDOW: [f64; 2] = [0.27, 0.30];

fn crystal() -> SlabSpec {
    let mut s = SlabSpec::new(LatticeSpec::new(0.3, 3.4, 1.0).unwrap(), 0.75);
    s.layers = 3;
    s.mesh = 8.0;
    s
}

fn objective() -> SlabObjective {
    SlabObjective { spec: crystal(), weights: CostWeights::new(1.0, 1.0).unwrap(), window: WINDOW, points: 13 }
}

const SITES: [[i32; 2]; 7] = [[0, 0], [1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]];

#[test]
fn reduced_centre_hole_gives_a_localized_resonance() {
    let mut s = crystal();
    s.holes.push(HoleOverride { site: [0, 0], dx: 0.0, dy: 0.0, rx: 0.15, ry: 0.15 });
    let spectrum = scan_reflection(&s, WINDOW, 13).unwrap();
    let res = find_resonances(&spectrum);
    assert!(!res.is_empty(), "no resonance in {:?}", spectrum.reflectance);
    let best = res.iter().max_by(|a, b| a.q.total_cmp(&b.q)).unwrap();
    assert!(best.q > 20.0 && best.q < 1e4, "{best:?}");
    let m = cavity_metrics(&s, best).unwrap();
    // the scattered field peaks next to the defect, not at the crystal edge
    let [nx, ny, nz] = m.field.dims();
    let (mut peak, mut at) = (0.0, (0.0, 0.0));
    for j in 0..ny {
        for i in 0..nx {
            let v = m.field.at(i, j, nz / 2).norm_sqr();
            if v > peak {
                peak = v;
                at = (m.field.xs[i], m.field.ys[j]);
            }
        }
    }
    assert!(at.0.hypot(at.1) < 1.5, "field peak at {at:?}");
    assert!(m.volume > 0.0 && m.volume < 1.0, "{}", m.volume);
}

#[test]
fn bulk_crystal_has_no_resonance_in_the_gap() {
    let spectrum = scan_reflection(&crystal(), WINDOW, 13).unwrap();
    assert!(find_resonances(&spectrum).is_empty());
}

#[test]
fn nominal_genome_scores_the_sentinel() {
    let e = objective().evaluate(&Genome::nominal(&SITES, 0.3));
    assert_eq!(e.fitness, SENTINEL);
    assert!(e.failure.is_some());
}

#[test]
fn mirror_image_genome_has_equal_fitness() {
    let mut g = Genome::nominal(&SITES, 0.3);
    // centre shrunk, upper neighbours displaced and enlarged: no y symmetry
    g.genes[2] = 0.15;
    g.genes[3] = 0.12;
    g.genes[2 * 4 + 1] = 0.04;
    g.genes[2 * 4 + 2] = 0.27;
    g.genes[3 * 4] = -0.03;
    // y → −y maps lattice site [i, j] to [i + j, −j] and negates dy
    let mirrored = Genome {
        sites: g.sites.iter().map(|&[i, j]| [i + j, -j]).collect(),
        genes: g.genes.chunks(4).flat_map(|c| [c[0], -c[1], c[2], c[3]]).collect(),
    };
    let obj = objective();
    let (a, b) = (obj.evaluate(&g), obj.evaluate(&mirrored));
    assert!(a.fitness > SENTINEL, "{:?}", a.failure);
    assert!((a.fitness - b.fitness).abs() < 1e-6 * a.fitness.abs(), "{} vs {}", a.fitness, b.fitness);
}
