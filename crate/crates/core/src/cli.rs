//! Batch runs: execute one configured command and persist its artifacts and
//! a manifest that inventories them.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bulk::band_structure;
use crate::config::{Command, Fitness, RunConfig};
use crate::error::{Error, Result};
use crate::ga::{repair, surrogate, GaState, Genome, GenerationRecord, SlabObjective};
use crate::lattice::{build_reciprocal_basis, eta_fourier};
use crate::pipeline::{invert2d, invert2d_free_index, Invert2dOutcome, Invert2dParams};
use crate::planar::spectrum::{find_resonances, scan_reflection, Resonance};
use crate::planar::cavity_metrics;
use crate::planar::volume::FieldGrid3D;

/// Environment variable holding the worker-thread count.
pub const THREADS_ENV: &str = "PHC_THREADS";

/// Size the global worker pool from [`THREADS_ENV`], if set.
pub fn init_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .map_err(|_| Error::invalid("cli", format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::invalid("cli", e.to_string()))
}

/// Fixed 17-significant-digit rendering used in every CSV.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    let row: Vec<String> = values.into_iter().map(fmt_f64).collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub version: String,
    pub command: Command,
    pub seed: u64,
    /// The configuration as written.
    pub config: Value,
    /// The configuration with defaults filled in.
    pub resolved: Value,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub results: Value,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Write through a temporary sibling and rename into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Files emitted into the output directory.
struct Artifacts {
    dir: PathBuf,
    names: Vec<String>,
}

impl Artifacts {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts { dir: dir.to_path_buf(), names: Vec::new() })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.path(name), bytes)?;
        self.track(name);
        Ok(())
    }

    fn track(&mut self, name: &str) {
        if !self.names.iter().any(|n| n == name) {
            self.names.push(name.to_string());
        }
    }

    fn inventory(&self) -> Result<Vec<FileEntry>> {
        self.names
            .iter()
            .map(|n| {
                let bytes = fs::read(self.path(n))?;
                Ok(FileEntry { path: n.clone(), bytes: bytes.len() as u64, sha256: sha256_hex(&bytes) })
            })
            .collect()
    }
}

/// Execute the configured command, write its artifacts and the manifest into
/// `config.output`, and return the manifest.
pub fn run(config: &RunConfig) -> Result<RunManifest> {
    let start = Instant::now();
    let mut art = Artifacts::new(&config.output)?;
    let mut timings = BTreeMap::new();
    let results = match config.command {
        Command::Bands => run_bands(config, &mut art)?,
        Command::Invert2d => run_invert2d(config, &mut art)?,
        Command::PlanarScan => run_planar_scan(config, &mut art, &mut timings)?,
        Command::GaOpt => run_ga(config, &mut art, &mut timings)?,
    };
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        command: config.command,
        seed: config.seed,
        config: serde_json::to_value(&config.source)?,
        resolved: serde_json::to_value(config)?,
        timings,
        results,
        files: art.inventory()?,
    };
    write_atomic(&art.path(MANIFEST), &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(manifest)
}

fn run_bands(c: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let basis = build_reciprocal_basis(&c.lattice, c.solver.n_g)?;
    let eta = eta_fourier(&c.lattice, &basis);
    let bs = band_structure(&eta, &basis, c.solver.points_per_segment, c.solver.polarization, c.solver.bands)?;
    let nb = bs.bands.iter().map(Vec::len).min().unwrap_or(0);
    let mut csv = String::from("index,path,qx,qy");
    for b in 1..=nb {
        let _ = write!(csv, ",band_{b}");
    }
    csv.push('\n');
    for (i, (q, row)) in bs.path.iter().zip(&bs.bands).enumerate() {
        let mut vals = vec![i as f64, bs.path_coordinate[i], q.x, q.y];
        vals.extend(row[..nb].iter().map(|w| w / TAU));
        csv_row(&mut csv, vals);
    }
    art.write("bands.csv", csv.as_bytes())?;
    let gaps: Vec<Value> = bs
        .gaps()
        .iter()
        .map(|g| {
            json!({
                "lower_band": g.lower_band + 1,
                "low": g.low / TAU,
                "high": g.high / TAU,
                "midgap": g.midgap() / TAU,
                "relative_width": g.width() / g.midgap(),
            })
        })
        .collect();
    Ok(json!({ "polarization": bs.polarization, "path_points": bs.path.len(), "gaps": gaps }))
}

fn invert2d_params(c: &RunConfig) -> Invert2dParams {
    let o = &c.objective;
    Invert2dParams {
        lattice: c.lattice.clone(),
        n_g: c.solver.n_g,
        n_q: c.solver.n_q,
        n_bands: c.solver.n_bands,
        polarization: c.solver.polarization,
        domain_side: o.domain_side,
        weights: o.weights,
        selector: o.selector,
        budget: o.budget,
        omega_m: o.omega_m,
        tau: o.tau,
        peak_resolution: o.peak_resolution,
        contour_resolution: o.contour_resolution,
        contour_side: o.contour_side,
    }
}

/// ASCII matrix of a rasterized dielectric: a `#` header with the grid, then
/// one line per row from `y0` upwards.
fn eta_matrix(o: &Invert2dOutcome) -> String {
    let g = o.map.grid;
    let (nx, ny) = (g.nx(), g.ny());
    let mut s = format!(
        "# eta(x, y); nx {nx} ny {ny} x0 {} x1 {} y0 {} y1 {}; cell-centred samples, row j is y = y0 + (j + 1/2) dy\n",
        fmt_f64(g.x0),
        fmt_f64(g.x1),
        fmt_f64(g.y0),
        fmt_f64(g.y1)
    );
    for j in 0..ny {
        let row: Vec<String> = o.map.values[j * nx..(j + 1) * nx].iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

fn run_invert2d(c: &RunConfig, art: &mut Artifacts) -> Result<Value> {
    let p = invert2d_params(c);
    let (scan, o) = if c.objective.free_hole_index {
        let (scan, o) = invert2d_free_index(&p, &c.objective.hole_index_candidates)?;
        (Some(scan), o)
    } else {
        (None, invert2d(&p)?)
    };
    if let Some(scan) = &scan {
        let mut csv = String::from("hole_index,merit\n");
        for &(n, m) in scan {
            csv_row(&mut csv, [n, m]);
        }
        art.write("hole_index_scan.csv", csv.as_bytes())?;
    }
    art.write("eta.txt", eta_matrix(&o).as_bytes())?;
    let holes: Vec<Value> = o
        .map
        .holes
        .iter()
        .filter(|h| !h.touches_edge)
        .map(|h| {
            json!({
                "site": h.site,
                "center_x": h.center_x,
                "center_y": h.center_y,
                "major": h.major,
                "minor": h.minor,
                "angle": h.angle,
            })
        })
        .collect();
    art.write("holes.json", &serde_json::to_vec_pretty(&holes)?)?;
    Ok(json!({
        "hole_index": o.hole_index,
        "gap": o.gap,
        "omega_m": o.omega_m,
        "beta_I": o.variational.weights.beta_i,
        "beta_V": o.variational.weights.beta_v,
        "J": o.merit,
        "Lambda": o.variational.lambda,
        "L": o.q_proxy,
        "I": o.intensity,
        "V_a2": o.volume,
        "V_lambda2": o.volume_lambda2,
        "central_radius": o.central_radius,
        "recovered_hole_index": o.bulk_hole_index,
        "evaluations": o.evaluations,
        "solve": o.solve,
        "contours": holes,
    }))
}

/// Flat little-endian field file: magic, three `u64` dimensions, the three
/// axes as `f64`, then `(re, im)` pairs with `x` fastest.
pub fn field_bytes(f: &FieldGrid3D) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend_from_slice(b"PHCFLD1\0");
    for n in f.dims() {
        b.extend_from_slice(&(n as u64).to_le_bytes());
    }
    for ax in [&f.xs, &f.ys, &f.zs] {
        for v in ax.iter() {
            b.extend_from_slice(&v.to_le_bytes());
        }
    }
    for v in &f.values {
        b.extend_from_slice(&v.re.to_le_bytes());
        b.extend_from_slice(&v.im.to_le_bytes());
    }
    b
}

fn resonances_csv(rs: &[Resonance]) -> String {
    let mut csv = String::from("omega0,fwhm,q,depth,baseline,slope\n");
    for r in rs {
        csv_row(&mut csv, [r.omega0, r.fwhm, r.q, r.depth, r.baseline, r.slope]);
    }
    csv
}

fn run_planar_scan(c: &RunConfig, art: &mut Artifacts, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let spec = c.slab_spec();
    let t = Instant::now();
    let spectrum = scan_reflection(&spec, c.slab.window, c.slab.points)?;
    timings.insert("scan".into(), t.elapsed().as_secs_f64());
    let mut csv = String::from("omega,R,T\n");
    for i in 0..spectrum.len() {
        csv_row(&mut csv, [spectrum.frequencies[i], spectrum.reflectance[i], spectrum.transmittance[i]]);
    }
    art.write("spectrum.csv", csv.as_bytes())?;
    let [lo, hi] = c.slab.window;
    let resonances: Vec<Resonance> =
        find_resonances(&spectrum).into_iter().filter(|r| r.omega0 > lo && r.omega0 < hi).collect();
    art.write("resonances.csv", resonances_csv(&resonances).as_bytes())?;
    let mut results = json!({ "points": spectrum.len(), "resonances": resonances });
    let best = resonances.iter().max_by(|a, b| a.q.total_cmp(&b.q));
    if let (true, Some(r)) = (c.slab.field, best) {
        let t = Instant::now();
        let m = cavity_metrics(&spec, r)?;
        timings.insert("field".into(), t.elapsed().as_secs_f64());
        art.write("field.bin", &field_bytes(&m.field))?;
        let (volume, intensity) = (m.volume, m.intensity);
        let w = c.objective.weights;
        results["best"] = json!({
            "omega0": r.omega0,
            "Q": r.q,
            "V_lambda3": volume,
            "I": intensity,
            "J": r.q + w.beta_i * intensity - w.beta_v * volume,
        });
    }
    Ok(results)
}

fn ga_log_csv(log: &[GenerationRecord]) -> String {
    let genes = log.first().map_or(0, |r| r.best_genome.len());
    let mut csv = String::from("generation,evaluations,best,mean");
    for g in 0..genes {
        let _ = write!(csv, ",gene_{g}");
    }
    csv.push('\n');
    for r in log {
        let mut row = vec![r.generation as f64, r.evaluations as f64, r.best, r.mean];
        row.extend(&r.best_genome);
        csv_row(&mut csv, row);
    }
    csv
}

fn progress_line(r: &GenerationRecord) {
    println!(
        "generation {:>4}  evaluations {:>6}  best {:.6e}  mean {:.6e}  {:.1} s",
        r.generation, r.evaluations, r.best, r.mean, r.elapsed
    );
}

fn run_ga(c: &RunConfig, art: &mut Artifacts, timings: &mut BTreeMap<String, f64>) -> Result<Value> {
    let cfg = c.ga_config();
    let sites = &c.ga.sites;
    let spec = c.slab_spec();
    let objective = SlabObjective { spec: spec.clone(), weights: c.objective.weights, window: c.slab.window, points: c.slab.points };
    let target = Genome::random(sites, &mut ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed_0f_7a26e7));
    let quadratic = surrogate(&target);
    let mut fitness = |g: &Genome| -> f64 {
        match c.ga.fitness {
            Fitness::Surrogate => quadratic(g),
            Fitness::Slab => {
                let e = objective.evaluate(g);
                if let Some(why) = &e.failure {
                    log::debug!("genome scored the sentinel: {why}");
                }
                e.fitness
            }
        }
    };
    let ckpt = c.ga.checkpoint.as_ref().map(|n| art.path(n));
    let t = Instant::now();
    let mut state = match &ckpt {
        Some(p) if c.ga.resume && p.exists() => {
            let mut s = GaState::load(p)?;
            if GaConfigKey::of(&s.config) != GaConfigKey::of(&cfg) || s.population[0].genome.sites != *sites {
                return Err(Error::invalid("ga_optimizer", "checkpoint was written with different GA settings"));
            }
            s.config.generations = cfg.generations;
            log::info!("resuming from generation {}", s.generation);
            s
        }
        _ => GaState::new(cfg, sites, None, &mut fitness)?,
    };
    if let Some(p) = &ckpt {
        state.save(p)?;
    }
    state.run(&mut fitness, ckpt.as_deref(), &mut progress_line)?;
    timings.insert("evolve".into(), t.elapsed().as_secs_f64());
    if let Some(n) = &c.ga.checkpoint {
        art.track(n);
    }
    art.write("ga_log.csv", ga_log_csv(&state.log).as_bytes())?;
    let best = state.best().clone();
    let mut results = json!({
        "generations": state.generation,
        "evaluations": state.evaluations,
        "best_fitness": best.fitness,
        "fitness": c.ga.fitness,
    });
    let mut best_doc = json!({ "fitness": best.fitness, "sites": best.genome.sites, "genes": best.genome.genes });
    if c.ga.fitness == Fitness::Slab {
        let repaired = repair(&best.genome, &spec);
        best_doc["holes"] = serde_json::to_value(repaired.overrides())?;
        let e = objective.evaluate(&best.genome);
        results["best"] = json!({
            "Q": e.resonance.map(|r| r.q),
            "omega0": e.resonance.map(|r| r.omega0),
            "V_lambda3": e.volume,
            "I": e.intensity,
            "failure": e.failure,
        });
    } else {
        results["optimum_distance"] = json!((-best.fitness).sqrt());
    }
    art.write("best_genome.json", &serde_json::to_vec_pretty(&best_doc)?)?;
    Ok(results)
}

/// GA settings that must agree between a checkpoint and the resuming run.
#[derive(PartialEq)]
struct GaConfigKey(usize, u64, u64, u64, u64);

impl GaConfigKey {
    fn of(c: &crate::ga::GaConfig) -> Self {
        GaConfigKey(c.population, c.mutation_rate.to_bits(), c.crossover_rate.to_bits(), c.sigma.to_bits(), c.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    #[test]
    fn number_format_has_17_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_f64(-2.5), "-2.5000000000000000e0");
        assert_eq!(fmt_f64(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn surrogate_ga_run_writes_checkpoint_and_manifest() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let text = format!(
            "[run]\ncommand = \"ga-opt\"\noutput = {:?}\n[ga]\nfitness = \"surrogate\"\npopulation = 6\ngenerations = 1\n",
            dir.to_str().unwrap()
        );
        let m = run(&parse_config(&text).unwrap()).unwrap();
        let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
        assert!(names.contains(&"ga.ckpt") && names.contains(&"ga_log.csv"), "{names:?}");
        for f in &m.files {
            assert_eq!(sha256_hex(&fs::read(dir.join(&f.path)).unwrap()), f.sha256);
        }
        assert!(dir.join(MANIFEST).exists());
    }

    #[test]
    fn resume_with_other_settings_is_refused() {
        let tmp = tempfile::tempdir().unwrap();
        let dir = tmp.path();
        let text = |pop: usize| {
            format!(
                "[run]\ncommand = \"ga-opt\"\noutput = {:?}\n[ga]\nfitness = \"surrogate\"\npopulation = {pop}\ngenerations = 1\nresume = true\n",
                dir.to_str().unwrap()
            )
        };
        run(&parse_config(&text(4)).unwrap()).unwrap();
        assert!(run(&parse_config(&text(5)).unwrap()).is_err());
    }
}
