//! Steady-state genetic optimization of planar hole geometries.
//!
//! A genome holds `(dx, dy, rx, ry)` for each of thirteen sites around the
//! cavity: the cavity itself, its six nearest neighbours and the holes at
//! `±2, ±3, ±4` along `x`.  Each generation breeds `population` offspring one
//! at a time: binary-tournament parents, uniform crossover, per-gene Gaussian
//! mutation, and replacement of the worst individual other than the best.

use std::io::{Read, Write};
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::lattice::Vec2;
use crate::objective::CostWeights;
use crate::planar::spectrum::{find_resonances, scan_reflection, Resonance};
use crate::planar::{cavity_metrics, hex_distance, CavityMetrics, HoleOverride, SlabSpec};

/// The default thirteen parameterized sites.
pub const DEFAULT_SITES: [[i32; 2]; 13] = [
    [0, 0],
    [1, 0],
    [0, 1],
    [-1, 1],
    [-1, 0],
    [0, -1],
    [1, -1],
    [2, 0],
    [-2, 0],
    [3, 0],
    [-3, 0],
    [4, 0],
    [-4, 0],
];

pub const GENES_PER_SITE: usize = 4;
pub const MAX_OFFSET: f64 = 0.25;
pub const MIN_AXIS: f64 = 0.05;
pub const MAX_AXIS: f64 = 0.45;
/// Minimum edge-to-edge spacing between holes after repair.
pub const CLEARANCE: f64 = 0.02;
/// Fitness of a genome whose simulation fails or shows no resonance.
pub const SENTINEL: f64 = -1e9;

/// Per-gene bounds: offsets in `[−0.25, 0.25]`, semi-axes in `[0.05, 0.45]`.
pub fn gene_bounds(i: usize) -> (f64, f64) {
    if i % GENES_PER_SITE < 2 {
        (-MAX_OFFSET, MAX_OFFSET)
    } else {
        (MIN_AXIS, MAX_AXIS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genome {
    pub sites: Vec<[i32; 2]>,
    /// `(dx, dy, rx, ry)` per site.
    pub genes: Vec<f64>,
}

impl Genome {
    /// Every site at its lattice position with the bulk radius.
    pub fn nominal(sites: &[[i32; 2]], radius: f64) -> Self {
        let r = radius.clamp(MIN_AXIS, MAX_AXIS);
        Genome {
            sites: sites.to_vec(),
            genes: sites.iter().flat_map(|_| [0.0, 0.0, r, r]).collect(),
        }
    }

    pub fn random(sites: &[[i32; 2]], rng: &mut impl Rng) -> Self {
        let genes = (0..sites.len() * GENES_PER_SITE)
            .map(|i| {
                let (lo, hi) = gene_bounds(i);
                rng.random_range(lo..=hi)
            })
            .collect();
        Genome { sites: sites.to_vec(), genes }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn within_bounds(&self) -> bool {
        self.genes.iter().enumerate().all(|(i, g)| {
            let (lo, hi) = gene_bounds(i);
            *g >= lo && *g <= hi
        })
    }

    fn clamp(&mut self) {
        for (i, g) in self.genes.iter_mut().enumerate() {
            let (lo, hi) = gene_bounds(i);
            *g = g.clamp(lo, hi);
        }
    }

    pub fn overrides(&self) -> Vec<HoleOverride> {
        self.sites
            .iter()
            .zip(self.genes.chunks(GENES_PER_SITE))
            .map(|(&site, g)| HoleOverride { site, dx: g[0], dy: g[1], rx: g[2], ry: g[3] })
            .collect()
    }
}

/// Support function of an axis-aligned ellipse in direction `u`.
fn support(rx: f64, ry: f64, u: Vec2) -> f64 {
    ((rx * u.x).powi(2) + (ry * u.y).powi(2)).sqrt()
}

/// Shrink genome holes until every pair of holes, including the nominal
/// holes of `spec`, is separated by at least [`CLEARANCE`] along the line
/// joining their centres (a sufficient condition for disjoint ellipses).
/// Both semi-axes of an offending genome hole shrink by the same factor, never
/// below [`MIN_AXIS`].  Out-of-range genes are clamped first.
pub fn repair(genome: &Genome, spec: &SlabSpec) -> Genome {
    let mut g = genome.clone();
    g.clamp();
    let mut probe = spec.clone();
    probe.holes = g.overrides();
    let holes = probe.hole_list();
    let index_of = |site: [i32; 2]| g.sites.iter().position(|s| *s == site);
    let mut axes: Vec<(f64, f64)> = holes.iter().map(|h| (h.rx, h.ry)).collect();
    let mine: Vec<Option<usize>> = holes.iter().map(|h| index_of(h.site)).collect();
    for _ in 0..64 {
        let mut changed = false;
        for a in 0..holes.len() {
            for b in a + 1..holes.len() {
                if mine[a].is_none() && mine[b].is_none() {
                    continue;
                }
                let d = holes[b].center - holes[a].center;
                let dist = d.norm();
                if dist > 2.0 * MAX_AXIS + CLEARANCE {
                    continue;
                }
                let u = d * (1.0 / dist);
                let (ha, hb) = (support(axes[a].0, axes[a].1, u), support(axes[b].0, axes[b].1, u));
                let excess = ha + hb + CLEARANCE - dist;
                if excess <= 1e-12 {
                    continue;
                }
                // spread the shrinkage over the genome holes of the pair
                let movable = mine[a].is_some() as usize as f64 * ha + mine[b].is_some() as usize as f64 * hb;
                let s = (1.0 - excess / movable).max(0.0);
                for (k, h) in [(a, ha), (b, hb)] {
                    if mine[k].is_some() && h > 0.0 {
                        axes[k].0 = (axes[k].0 * s).max(MIN_AXIS);
                        axes[k].1 = (axes[k].1 * s).max(MIN_AXIS);
                    }
                }
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    for (k, h) in holes.iter().enumerate() {
        if let Some(i) = mine[k] {
            debug_assert_eq!(g.sites[i], h.site);
            g.genes[i * GENES_PER_SITE + 2] = axes[k].0;
            g.genes[i * GENES_PER_SITE + 3] = axes[k].1;
        }
    }
    g
}

/// The slab described by a repaired genome.
pub fn decode(genome: &Genome, spec: &SlabSpec) -> Result<SlabSpec> {
    for s in &genome.sites {
        if hex_distance(*s) > spec.layers as i32 {
            return Err(Error::invalid("ga_optimizer", format!("site {s:?} lies outside the crystal")));
        }
    }
    let g = repair(genome, spec);
    let mut out = spec.clone();
    out.holes = g.overrides();
    Ok(out)
}

/// Smallest edge-to-edge clearance between any genome hole and any other
/// hole, measured along the line between centres.
pub fn min_clearance(genome: &Genome, spec: &SlabSpec) -> f64 {
    let mut probe = spec.clone();
    probe.holes = genome.overrides();
    let holes = probe.hole_list();
    let mut best = f64::INFINITY;
    for (a, ha) in holes.iter().enumerate() {
        let a_mine = genome.sites.contains(&ha.site);
        for hb in &holes[a + 1..] {
            if !a_mine && !genome.sites.contains(&hb.site) {
                continue;
            }
            let d = hb.center - ha.center;
            let dist = d.norm();
            let u = d * (1.0 / dist);
            best = best.min(dist - support(ha.rx, ha.ry, u) - support(hb.rx, hb.ry, u));
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population: usize,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    /// Standard deviation of a gene mutation, in units of `a`.
    pub sigma: f64,
    pub seed: u64,
    /// Generations to run; each breeds `population` offspring.
    pub generations: usize,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig { population: 10, mutation_rate: 0.15, crossover_rate: 0.85, sigma: 0.02, seed: 1, generations: 27 }
    }
}

impl GaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("ga_optimizer", m));
        if self.population < 2 {
            return bad(format!("population must be at least 2, got {}", self.population));
        }
        for (name, v) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma must be non-negative, got {}", self.sigma));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Individual {
    pub genome: Genome,
    pub fitness: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GenerationRecord {
    pub generation: usize,
    pub evaluations: usize,
    pub best: f64,
    pub mean: f64,
    pub best_genome: Vec<f64>,
    /// Seconds since the run (or its resumption) started.
    pub elapsed: f64,
}

impl GenerationRecord {
    /// Equality ignoring wall-clock time.
    pub fn same_as(&self, o: &GenerationRecord) -> bool {
        self.generation == o.generation
            && self.evaluations == o.evaluations
            && self.best.to_bits() == o.best.to_bits()
            && self.mean.to_bits() == o.mean.to_bits()
            && self.best_genome.iter().map(|x| x.to_bits()).eq(o.best_genome.iter().map(|x| x.to_bits()))
    }
}

fn sanitize(f: f64) -> f64 {
    if f.is_nan() {
        f64::NEG_INFINITY
    } else {
        f
    }
}

/// Complete optimizer state; round-trips exactly through a checkpoint.
#[derive(Clone, Debug)]
pub struct GaState {
    pub config: GaConfig,
    pub population: Vec<Individual>,
    pub generation: usize,
    pub evaluations: usize,
    pub log: Vec<GenerationRecord>,
    rng: ChaCha8Rng,
    started: Instant,
}

impl GaState {
    /// Evaluate the initial population.  With `initial = None` it is drawn
    /// uniformly within the gene bounds from the run's random stream.
    pub fn new(
        config: GaConfig,
        sites: &[[i32; 2]],
        initial: Option<Vec<Genome>>,
        fitness: &mut dyn FnMut(&Genome) -> f64,
    ) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let genomes = match initial {
            Some(g) => {
                if g.len() != config.population {
                    return Err(Error::invalid(
                        "ga_optimizer",
                        format!("initial population has {} genomes, expected {}", g.len(), config.population),
                    ));
                }
                g
            }
            None => (0..config.population).map(|_| Genome::random(sites, &mut rng)).collect(),
        };
        let population: Vec<Individual> = genomes
            .into_iter()
            .map(|genome| {
                let f = sanitize(fitness(&genome));
                Individual { genome, fitness: f }
            })
            .collect();
        let mut s = GaState {
            evaluations: population.len(),
            config,
            population,
            generation: 0,
            log: Vec::new(),
            rng,
            started: Instant::now(),
        };
        s.record();
        Ok(s)
    }

    pub fn best_index(&self) -> usize {
        let mut b = 0;
        for (i, p) in self.population.iter().enumerate() {
            if p.fitness > self.population[b].fitness {
                b = i;
            }
        }
        b
    }

    pub fn best(&self) -> &Individual {
        &self.population[self.best_index()]
    }

    fn record(&mut self) {
        let b = self.best().clone();
        let finite: Vec<f64> = self.population.iter().map(|p| p.fitness).collect();
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        self.log.push(GenerationRecord {
            generation: self.generation,
            evaluations: self.evaluations,
            best: b.fitness,
            mean,
            best_genome: b.genome.genes,
            elapsed: self.started.elapsed().as_secs_f64(),
        });
    }

    fn tournament(&mut self) -> usize {
        let n = self.population.len();
        let a = self.rng.random_range(0..n);
        let mut b = self.rng.random_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        if self.population[b].fitness > self.population[a].fitness {
            b
        } else {
            a
        }
    }

    fn offspring(&mut self) -> Genome {
        let pa = self.tournament();
        let pb = self.tournament();
        let mut child = self.population[pa].genome.clone();
        if self.rng.random::<f64>() < self.config.crossover_rate {
            let other = &self.population[pb].genome.genes;
            for (i, g) in child.genes.iter_mut().enumerate() {
                if self.rng.random::<bool>() {
                    *g = other[i];
                }
            }
        }
        let normal = Normal::new(0.0, self.config.sigma).expect("validated sigma");
        for g in child.genes.iter_mut() {
            if self.rng.random::<f64>() < self.config.mutation_rate {
                *g += normal.sample(&mut self.rng);
            }
        }
        child.clamp();
        child
    }

    /// Breed one generation.
    pub fn step(&mut self, fitness: &mut dyn FnMut(&Genome) -> f64) {
        for _ in 0..self.config.population {
            let child = self.offspring();
            let f = sanitize(fitness(&child));
            self.evaluations += 1;
            let best = self.best_index();
            let worst = (0..self.population.len())
                .filter(|&i| i != best)
                .min_by(|&a, &b| self.population[a].fitness.total_cmp(&self.population[b].fitness))
                .expect("population of at least two");
            self.population[worst] = Individual { genome: child, fitness: f };
        }
        self.generation += 1;
        self.record();
    }

    /// Run until `config.generations`, writing a checkpoint after every
    /// generation when `checkpoint` is given and reporting each record.
    pub fn run(
        &mut self,
        fitness: &mut dyn FnMut(&Genome) -> f64,
        checkpoint: Option<&Path>,
        progress: &mut dyn FnMut(&GenerationRecord),
    ) -> Result<()> {
        if self.generation == 0 && self.log.len() == 1 {
            progress(&self.log[0]);
        }
        while self.generation < self.config.generations {
            self.step(fitness);
            if let Some(p) = checkpoint {
                self.save(p)?;
            }
            progress(self.log.last().expect("log is never empty"));
        }
        Ok(())
    }
}

/// Run a fresh optimization to completion.
pub fn evolve(
    config: GaConfig,
    sites: &[[i32; 2]],
    initial: Option<Vec<Genome>>,
    fitness: &mut dyn FnMut(&Genome) -> f64,
) -> Result<GaState> {
    let mut s = GaState::new(config, sites, initial, fitness)?;
    s.run(fitness, None, &mut |_| {})?;
    Ok(s)
}

/// `−‖g − g*‖²`, a synthetic fitness with its optimum (zero) at `target`.
pub fn surrogate(target: &Genome) -> impl Fn(&Genome) -> f64 + '_ {
    move |g: &Genome| -g.genes.iter().zip(&target.genes).map(|(a, b)| (a - b).powi(2)).sum::<f64>()
}

/// Physical fitness `J = Q + β_I·I − β_V·V` of a slab geometry.
///
/// `Q` comes from the highest-Q resonance fitted in a reflection scan over
/// `window`; `I = |H(0)|² / max|H|²` and `V` (in `λ³`, `λ = a/f₀`) come from
/// the field at the resonance, restricted to the crystal.  A failed
/// simulation or a scan without resonance scores [`SENTINEL`].
#[derive(Clone, Debug, Serialize)]
pub struct SlabObjective {
    pub spec: SlabSpec,
    pub weights: CostWeights,
    /// Scan window in `a/λ`.
    pub window: [f64; 2],
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlabEvaluation {
    pub fitness: f64,
    pub resonance: Option<Resonance>,
    pub intensity: f64,
    /// Mode volume in units of `λ³`.
    pub volume: f64,
    /// Why the sentinel was returned, if it was.
    pub failure: Option<String>,
}

impl SlabObjective {
    pub fn evaluate(&self, genome: &Genome) -> SlabEvaluation {
        match self.try_evaluate(genome) {
            Ok(e) => e,
            Err(e) => SlabEvaluation {
                fitness: SENTINEL,
                resonance: None,
                intensity: 0.0,
                volume: 0.0,
                failure: Some(e.to_string()),
            },
        }
    }

    fn try_evaluate(&self, genome: &Genome) -> Result<SlabEvaluation> {
        let spec = decode(genome, &self.spec)?;
        let spectrum = scan_reflection(&spec, self.window, self.points)?;
        let Some(res) = find_resonances(&spectrum)
            .into_iter()
            .filter(|r| r.omega0 > self.window[0] && r.omega0 < self.window[1])
            .max_by(|a, b| a.q.total_cmp(&b.q))
        else {
            return Err(Error::NoFeature);
        };
        let CavityMetrics { volume, intensity, .. } = cavity_metrics(&spec, &res)?;
        Ok(SlabEvaluation {
            fitness: res.q + self.weights.beta_i * intensity - self.weights.beta_v * volume,
            resonance: Some(res),
            intensity,
            volume,
            failure: None,
        })
    }
}

// ---------------------------------------------------------------------------
// checkpoints

const MAGIC: &[u8; 8] = b"PHCGAST\0";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|x| self.f64(*x));
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.0.len() < N {
            return Err(Error::CorruptCheckpoint("unexpected end of file".into()));
        }
        let (a, b) = self.0.split_at(N);
        self.0 = b;
        Ok(a.try_into().expect("length checked"))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }
    fn usize(&mut self) -> Result<usize> {
        let v = self.u64()?;
        if v > 1 << 32 {
            return Err(Error::CorruptCheckpoint(format!("implausible count {v}")));
        }
        Ok(v as usize)
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        (0..n).map(|_| self.f64()).collect()
    }
}

impl GaState {
    /// Serialize to the versioned little-endian checkpoint format, ending in
    /// a SHA-256 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(CHECKPOINT_VERSION);
        let c = &self.config;
        w.usize(c.population);
        w.f64(c.mutation_rate);
        w.f64(c.crossover_rate);
        w.f64(c.sigma);
        w.u64(c.seed);
        w.usize(c.generations);
        w.usize(self.generation);
        w.usize(self.evaluations);
        w.0.extend_from_slice(&self.rng.get_seed());
        w.u64(self.rng.get_stream());
        w.0.extend_from_slice(&self.rng.get_word_pos().to_le_bytes());
        let sites = self.population.first().map(|p| p.genome.sites.clone()).unwrap_or_default();
        w.usize(sites.len());
        for s in &sites {
            w.u32(s[0] as u32);
            w.u32(s[1] as u32);
        }
        w.usize(self.population.len());
        for p in &self.population {
            w.f64s(&p.genome.genes);
            w.f64(p.fitness);
        }
        w.usize(self.log.len());
        for r in &self.log {
            w.usize(r.generation);
            w.usize(r.evaluations);
            w.f64(r.best);
            w.f64(r.mean);
            w.f64(r.elapsed);
            w.f64s(&r.best_genome);
        }
        let digest = Sha256::digest(&w.0);
        w.0.extend_from_slice(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 32 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::CorruptCheckpoint("not a checkpoint file".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("length checked"));
        if version != CHECKPOINT_VERSION {
            return Err(Error::CheckpointVersion { found: version, expected: CHECKPOINT_VERSION });
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::CorruptCheckpoint("checksum mismatch".into()));
        }
        let mut r = Reader(&body[12..]);
        let config = GaConfig {
            population: r.usize()?,
            mutation_rate: r.f64()?,
            crossover_rate: r.f64()?,
            sigma: r.f64()?,
            seed: r.u64()?,
            generations: r.usize()?,
        };
        config.validate().map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;
        let generation = r.usize()?;
        let evaluations = r.usize()?;
        let mut rng = ChaCha8Rng::from_seed(r.take::<32>()?);
        rng.set_stream(r.u64()?);
        rng.set_word_pos(u128::from_le_bytes(r.take::<16>()?));
        let n_sites = r.usize()?;
        let sites: Vec<[i32; 2]> = (0..n_sites)
            .map(|_| Ok([r.u32()? as i32, r.u32()? as i32]))
            .collect::<Result<_>>()?;
        let n = r.usize()?;
        let mut population = Vec::with_capacity(n);
        for _ in 0..n {
            let genes = r.f64s()?;
            if genes.len() != sites.len() * GENES_PER_SITE {
                return Err(Error::CorruptCheckpoint("genome length does not match the site list".into()));
            }
            population.push(Individual { genome: Genome { sites: sites.clone(), genes }, fitness: r.f64()? });
        }
        if population.len() != config.population {
            return Err(Error::CorruptCheckpoint("population size does not match the configuration".into()));
        }
        let m = r.usize()?;
        let mut log = Vec::with_capacity(m);
        for _ in 0..m {
            log.push(GenerationRecord {
                generation: r.usize()?,
                evaluations: r.usize()?,
                best: r.f64()?,
                mean: r.f64()?,
                elapsed: r.f64()?,
                best_genome: r.f64s()?,
            });
        }
        if !r.0.is_empty() {
            return Err(Error::CorruptCheckpoint("trailing bytes".into()));
        }
        Ok(GaState { config, population, generation, evaluations, log, rng, started: Instant::now() })
    }

    /// Write atomically: a temporary sibling file renamed over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}
