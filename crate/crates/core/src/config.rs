//! Sectioned run configuration.
//!
//! A run is described by a TOML file with the sections `[run]`, `[lattice]`,
//! `[solver]`, `[objective]`, `[slab]` and `[ga]`.  Parsing collects every
//! problem it finds (unknown keys, wrong types, out-of-range values, sections
//! missing for the chosen command) before reporting, and fills documented
//! defaults for everything left out.

use std::path::PathBuf;

use serde::Serialize;
use toml::{Table, Value};

use crate::bulk::Polarization;
use crate::error::{Error, Result};
use crate::ga::{GaConfig, DEFAULT_SITES};
use crate::inverter::Selector;
use crate::lattice::{LatticeSpec, LatticeType};
use crate::objective::CostWeights;
use crate::planar::{hex_distance, HoleOverride, Incidence, SlabSpec};

/// One problem found while validating a configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub key: String,
    pub message: String,
    pub suggestion: Option<String>,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.key, self.message)?;
        if let Some(s) = &self.suggestion {
            write!(f, " (did you mean `{s}`?)")?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Bands,
    Invert2d,
    PlanarScan,
    GaOpt,
}

impl Command {
    const NAMES: [&'static str; 4] = ["bands", "invert2d", "planar-scan", "ga-opt"];

    pub fn name(self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Invert2d => "invert2d",
            Command::PlanarScan => "planar-scan",
            Command::GaOpt => "ga-opt",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "bands" => Some(Command::Bands),
            "invert2d" => Some(Command::Invert2d),
            "planar-scan" => Some(Command::PlanarScan),
            "ga-opt" => Some(Command::GaOpt),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Fitness {
    /// Full slab simulation of every genome.
    Slab,
    /// Quadratic test function with a known optimum.
    Surrogate,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolverConfig {
    pub n_g: usize,
    pub n_q: usize,
    /// Bands per Bloch vector in the cavity expansion.
    pub n_bands: usize,
    pub polarization: Polarization,
    /// Path steps per leg of Γ–M–K–Γ.
    pub points_per_segment: usize,
    /// Bands reported by `bands`.
    pub bands: usize,
    /// Slab cells per `a`.
    pub mesh: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            n_g: 61,
            n_q: 61,
            n_bands: 6,
            polarization: Polarization::TE,
            points_per_segment: 16,
            bands: 8,
            mesh: 12.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ObjectiveConfig {
    pub weights: CostWeights,
    /// Cavity frequency in `a/λ`; `None` is midgap.
    pub omega_m: Option<f64>,
    pub selector: Selector,
    /// Eigenproblem solves allowed in the weight search.
    pub budget: usize,
    /// Relative singular-value cutoff of the defect solve.
    pub tau: f64,
    /// Scan the bulk hole index over `hole_index_candidates`.
    pub free_hole_index: bool,
    pub hole_index_candidates: Vec<f64>,
    /// Side of the square integration domain, in `a`.
    pub domain_side: f64,
    pub peak_resolution: f64,
    pub contour_resolution: f64,
    pub contour_side: f64,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            weights: CostWeights { beta_i: 1.0, beta_v: 1.0 },
            omega_m: None,
            selector: Selector::Confining,
            budget: 28,
            tau: 1e-8,
            free_hole_index: false,
            hole_index_candidates: (0..=12).map(|i| 1.0 + 0.1 * i as f64).collect(),
            domain_side: 10.0,
            peak_resolution: 8.0,
            contour_resolution: 32.0,
            contour_side: 6.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlabConfig {
    pub thickness: f64,
    pub layers: usize,
    pub padding: usize,
    pub absorber: f64,
    pub incidence: Incidence,
    /// Scan window in `a/λ`.
    pub window: [f64; 2],
    /// Uniform scan points before refinement.
    pub points: usize,
    /// Compute the field, mode volume and centre intensity of the sharpest
    /// resonance after a scan.
    pub field: bool,
    pub holes: Vec<HoleOverride>,
}

impl Default for SlabConfig {
    fn default() -> Self {
        SlabConfig {
            thickness: 0.75,
            layers: 8,
            padding: 5,
            absorber: 1.5,
            incidence: Incidence::InPlane,
            window: [0.25, 0.30],
            points: 41,
            field: true,
            holes: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GaSection {
    /// Population, rates and generation budget; the seed comes from `[run]`.
    pub config: GaConfig,
    pub fitness: Fitness,
    pub sites: Vec<[i32; 2]>,
    /// Checkpoint file name inside the output directory.
    pub checkpoint: Option<String>,
    /// Continue from an existing checkpoint instead of starting over.
    pub resume: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub output: PathBuf,
    pub seed: u64,
    pub lattice: LatticeSpec,
    pub solver: SolverConfig,
    pub objective: ObjectiveConfig,
    pub slab: SlabConfig,
    pub ga: GaSection,
    /// The parsed document, echoed into the run manifest.
    #[serde(skip)]
    pub source: Table,
}

impl RunConfig {
    /// The slab described by `[lattice]`, `[solver]` and `[slab]`.
    pub fn slab_spec(&self) -> SlabSpec {
        SlabSpec {
            lattice: self.lattice.clone(),
            thickness: self.slab.thickness,
            layers: self.slab.layers,
            holes: self.slab.holes.clone(),
            mesh: self.solver.mesh,
            padding: self.slab.padding,
            absorber: self.slab.absorber,
            incidence: self.slab.incidence,
        }
    }

    /// GA settings with the run seed applied.
    pub fn ga_config(&self) -> GaConfig {
        GaConfig { seed: self.seed, ..self.ga.config.clone() }
    }
}

const SECTIONS: [&str; 6] = ["run", "lattice", "solver", "objective", "slab", "ga"];

fn suggest<'a>(word: &str, candidates: impl IntoIterator<Item = &'a str>) -> Option<String> {
    let lw = word.to_ascii_lowercase();
    candidates
        .into_iter()
        .map(|c| (strsim::levenshtein(&lw, &c.to_ascii_lowercase()), c))
        .filter(|&(d, c)| d <= 2.max(c.len() / 3))
        .min_by_key(|&(d, _)| d)
        .map(|(_, c)| c.to_string())
}

#[derive(Default)]
struct Issues(Vec<ConfigIssue>);

impl Issues {
    fn push(&mut self, key: String, message: impl Into<String>) {
        self.0.push(ConfigIssue { key, message: message.into(), suggestion: None });
    }
}

/// Typed access to one section; remembers which keys were read so the rest
/// can be reported as unknown.
struct Section<'a> {
    name: &'static str,
    table: Option<&'a Table>,
    known: Vec<&'static str>,
}

impl<'a> Section<'a> {
    fn new(doc: &'a Table, name: &'static str, issues: &mut Issues) -> Self {
        let table = match doc.get(name) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(_) => {
                issues.push(name.into(), "must be a section");
                None
            }
        };
        Section { name, table, known: Vec::new() }
    }

    fn present(&self) -> bool {
        self.table.is_some()
    }

    fn key(&self, k: &str) -> String {
        format!("{}.{k}", self.name)
    }

    fn get(&mut self, k: &'static str) -> Option<&'a Value> {
        self.known.push(k);
        self.table.and_then(|t| t.get(k))
    }

    fn number(&mut self, k: &'static str, issues: &mut Issues) -> Option<f64> {
        match self.get(k)? {
            Value::Float(x) => Some(*x),
            Value::Integer(i) => Some(*i as f64),
            _ => {
                issues.push(self.key(k), "expected a number");
                None
            }
        }
    }

    fn f64(&mut self, k: &'static str, default: f64, ok: impl Fn(f64) -> bool, rule: &str, issues: &mut Issues) -> f64 {
        match self.number(k, issues) {
            None => default,
            Some(v) if v.is_finite() && ok(v) => v,
            Some(v) => {
                issues.push(self.key(k), format!("{rule}, got {v}"));
                default
            }
        }
    }

    fn usize(&mut self, k: &'static str, default: usize, min: usize, issues: &mut Issues) -> usize {
        match self.get(k) {
            None => default,
            Some(Value::Integer(i)) if *i >= min as i64 => *i as usize,
            Some(Value::Integer(i)) => {
                issues.push(self.key(k), format!("must be at least {min}, got {i}"));
                default
            }
            Some(_) => {
                issues.push(self.key(k), "expected an integer");
                default
            }
        }
    }

    fn bool(&mut self, k: &'static str, default: bool, issues: &mut Issues) -> bool {
        match self.get(k) {
            None => default,
            Some(Value::Boolean(b)) => *b,
            Some(_) => {
                issues.push(self.key(k), "expected true or false");
                default
            }
        }
    }

    fn str(&mut self, k: &'static str, issues: &mut Issues) -> Option<&'a str> {
        match self.get(k)? {
            Value::String(s) => Some(s.as_str()),
            _ => {
                issues.push(self.key(k), "expected a string");
                None
            }
        }
    }

    /// A string parsed by `FromStr`, reporting the parser's message.
    fn parsed<T: std::str::FromStr<Err = Error>>(&mut self, k: &'static str, default: T, issues: &mut Issues) -> T {
        match self.str(k, issues).map(str::parse::<T>) {
            None => default,
            Some(Ok(v)) => v,
            Some(Err(e)) => {
                issues.push(self.key(k), e.to_string());
                default
            }
        }
    }

    fn numbers(&mut self, k: &'static str, issues: &mut Issues) -> Option<Vec<f64>> {
        let Value::Array(a) = self.get(k)? else {
            issues.push(self.key(k), "expected an array of numbers");
            return None;
        };
        let v: Option<Vec<f64>> = a
            .iter()
            .map(|x| match x {
                Value::Float(f) => Some(*f),
                Value::Integer(i) => Some(*i as f64),
                _ => None,
            })
            .collect();
        if v.is_none() {
            issues.push(self.key(k), "expected an array of numbers");
        }
        v
    }

    fn sites(&mut self, k: &'static str, issues: &mut Issues) -> Option<Vec<[i32; 2]>> {
        let Value::Array(a) = self.get(k)? else {
            issues.push(self.key(k), "expected an array of [i, j] pairs");
            return None;
        };
        let v: Option<Vec<[i32; 2]>> = a.iter().map(site).collect();
        if v.is_none() {
            issues.push(self.key(k), "expected an array of [i, j] integer pairs");
        }
        v
    }

    fn finish(self, issues: &mut Issues) {
        let Some(t) = self.table else { return };
        for k in t.keys() {
            if !self.known.contains(&k.as_str()) {
                issues.0.push(ConfigIssue {
                    key: self.key(k),
                    message: "unknown key".into(),
                    suggestion: suggest(k, self.known.iter().copied()),
                });
            }
        }
    }
}

fn site(v: &Value) -> Option<[i32; 2]> {
    match v.as_array()?.as_slice() {
        [Value::Integer(i), Value::Integer(j)] => Some([i32::try_from(*i).ok()?, i32::try_from(*j).ok()?]),
        _ => None,
    }
}

fn hole_override(v: &Value, idx: usize, issues: &mut Issues) -> Option<HoleOverride> {
    let key = format!("slab.holes[{idx}]");
    let Some(t) = v.as_table() else {
        issues.push(key, "expected a table {site, dx, dy, rx, ry}");
        return None;
    };
    const KEYS: [&str; 5] = ["site", "dx", "dy", "rx", "ry"];
    for k in t.keys() {
        if !KEYS.contains(&k.as_str()) {
            issues.0.push(ConfigIssue {
                key: format!("{key}.{k}"),
                message: "unknown key".into(),
                suggestion: suggest(k, KEYS),
            });
        }
    }
    let Some(s) = t.get("site").and_then(site) else {
        issues.push(format!("{key}.site"), "required [i, j] integer pair");
        return None;
    };
    let num = |k: &str, default: Option<f64>, issues: &mut Issues| -> Option<f64> {
        match t.get(k) {
            None if default.is_some() => default,
            None => {
                issues.push(format!("{key}.{k}"), "required");
                None
            }
            Some(Value::Float(f)) => Some(*f),
            Some(Value::Integer(i)) => Some(*i as f64),
            Some(_) => {
                issues.push(format!("{key}.{k}"), "expected a number");
                None
            }
        }
    };
    let dx = num("dx", Some(0.0), issues)?;
    let dy = num("dy", Some(0.0), issues)?;
    let rx = num("rx", None, issues)?;
    let ry = num("ry", Some(rx), issues)?;
    for (k, r) in [("rx", rx), ("ry", ry)] {
        if !(0.0..0.5).contains(&r) {
            issues.push(format!("{key}.{k}"), format!("must lie in [0, 0.5), got {r}"));
            return None;
        }
    }
    if !(dx.abs() < 0.5 && dy.abs() < 0.5) {
        issues.push(key, "offsets must be below 0.5 in magnitude");
        return None;
    }
    Some(HoleOverride { site: s, dx, dy, rx, ry })
}

/// Parse and validate a configuration document.  On failure every problem
/// found is returned in `Error::Config`.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let doc: Table = text.parse().map_err(|e: toml::de::Error| {
        Error::Config(vec![ConfigIssue { key: "<document>".into(), message: e.message().to_string(), suggestion: None }])
    })?;
    let mut issues = Issues::default();
    for k in doc.keys() {
        if !SECTIONS.contains(&k.as_str()) {
            issues.0.push(ConfigIssue {
                key: k.clone(),
                message: "unknown section".into(),
                suggestion: suggest(k, SECTIONS),
            });
        }
    }

    let mut run = Section::new(&doc, "run", &mut issues);
    let command = match run.str("command", &mut issues) {
        None => {
            issues.push("run.command".into(), format!("required, one of {}", Command::NAMES.join(", ")));
            None
        }
        Some(c) => Command::parse(c).or_else(|| {
            issues.0.push(ConfigIssue {
                key: "run.command".into(),
                message: format!("unknown command `{c}`, expected one of {}", Command::NAMES.join(", ")),
                suggestion: suggest(c, Command::NAMES),
            });
            None
        }),
    };
    let output = PathBuf::from(run.str("output", &mut issues).unwrap_or("out"));
    let seed = match run.get("seed") {
        None => 1,
        Some(Value::Integer(i)) if *i >= 0 => *i as u64,
        Some(_) => {
            issues.push("run.seed".into(), "expected a non-negative integer");
            1
        }
    };
    run.finish(&mut issues);

    let mut lat = Section::new(&doc, "lattice", &mut issues);
    let lattice_type = lat.parsed("type", LatticeType::Hexagonal, &mut issues);
    let hole_radius = lat.f64("hole_radius", 0.3, |v| v > 0.0 && v < 0.5, "must lie in (0, 0.5)", &mut issues);
    let bulk_index = lat.f64("bulk_index", 3.4, |v| v >= 1.0, "must be at least 1", &mut issues);
    let hole_index = lat.f64("hole_index", 1.0, |v| v >= 1.0, "must be at least 1", &mut issues);
    let lattice_present = lat.present();
    lat.finish(&mut issues);
    let lattice = LatticeSpec { hole_radius, bulk_index, hole_index, lattice_type };

    let mut sol = Section::new(&doc, "solver", &mut issues);
    let d = SolverConfig::default();
    let solver = SolverConfig {
        n_g: sol.usize("n_g", d.n_g, 1, &mut issues),
        n_q: sol.usize("n_q", d.n_q, 1, &mut issues),
        n_bands: sol.usize("n_bands", d.n_bands, 1, &mut issues),
        polarization: sol.parsed("polarization", d.polarization, &mut issues),
        points_per_segment: sol.usize("points_per_segment", d.points_per_segment, 1, &mut issues),
        bands: sol.usize("bands", d.bands, 1, &mut issues),
        mesh: sol.f64("mesh", d.mesh, |v| v >= 8.0, "must be at least 8 cells per a", &mut issues),
    };
    sol.finish(&mut issues);

    let mut obj = Section::new(&doc, "objective", &mut issues);
    let d = ObjectiveConfig::default();
    let non_negative = |v: f64| v >= 0.0;
    let weights = CostWeights {
        beta_i: obj.f64("beta_I", d.weights.beta_i, non_negative, "must be >= 0", &mut issues),
        beta_v: obj.f64("beta_V", d.weights.beta_v, non_negative, "must be >= 0", &mut issues),
    };
    let omega_m = match obj.get("omega_m") {
        None => None,
        Some(Value::String(s)) if s == "midgap" => None,
        Some(Value::Float(f)) if *f > 0.0 && *f < 1.0 => Some(*f),
        Some(Value::Integer(_) | Value::Float(_)) => {
            issues.push("objective.omega_m".into(), "must lie in (0, 1) a/lambda");
            None
        }
        Some(_) => {
            issues.push("objective.omega_m".into(), "expected a number or \"midgap\"");
            None
        }
    };
    let objective = ObjectiveConfig {
        weights,
        omega_m,
        selector: obj.parsed("selector", d.selector, &mut issues),
        budget: obj.usize("budget", d.budget, 1, &mut issues),
        tau: obj.f64("tau", d.tau, |v| (0.0..1.0).contains(&v), "must lie in [0, 1)", &mut issues),
        free_hole_index: obj.bool("free_hole_index", d.free_hole_index, &mut issues),
        hole_index_candidates: match obj.numbers("hole_index_candidates", &mut issues) {
            Some(v) if v.is_empty() || v.iter().any(|&n| !(n >= 1.0)) => {
                issues.push("objective.hole_index_candidates".into(), "must be a non-empty list of indices >= 1");
                d.hole_index_candidates
            }
            Some(v) => v,
            None => d.hole_index_candidates,
        },
        domain_side: obj.f64("domain_side", d.domain_side, |v| v > 0.0, "must be positive", &mut issues),
        peak_resolution: obj.f64("peak_resolution", d.peak_resolution, |v| v > 0.0, "must be positive", &mut issues),
        contour_resolution: obj.f64(
            "contour_resolution",
            d.contour_resolution,
            |v| v > 0.0,
            "must be positive",
            &mut issues,
        ),
        contour_side: obj.f64("contour_side", d.contour_side, |v| v > 0.0, "must be positive", &mut issues),
    };
    let objective_present = obj.present();
    obj.finish(&mut issues);

    let mut sl = Section::new(&doc, "slab", &mut issues);
    let d = SlabConfig::default();
    let window = match sl.numbers("window", &mut issues) {
        None => d.window,
        Some(v) if v.len() == 2 && v[0] > 0.0 && v[1] > v[0] && v[1] < 1.0 => [v[0], v[1]],
        Some(_) => {
            issues.push("slab.window".into(), "must be [lo, hi] with 0 < lo < hi < 1");
            d.window
        }
    };
    let incidence = match sl.str("incidence", &mut issues) {
        None => d.incidence,
        Some("in_plane") => Incidence::InPlane,
        Some("vertical") => Incidence::Vertical,
        Some(s) => {
            issues.0.push(ConfigIssue {
                key: "slab.incidence".into(),
                message: format!("unknown incidence `{s}`, expected in_plane or vertical"),
                suggestion: suggest(s, ["in_plane", "vertical"]),
            });
            d.incidence
        }
    };
    let mut slab = SlabConfig {
        thickness: sl.f64("thickness", d.thickness, |v| v > 0.0, "must be positive", &mut issues),
        layers: sl.usize("layers", d.layers, 1, &mut issues),
        padding: sl.usize("padding", d.padding, 1, &mut issues),
        absorber: sl.f64("absorber", d.absorber, |v| v > 0.0, "must be positive", &mut issues),
        incidence,
        window,
        points: sl.usize("points", d.points, 5, &mut issues),
        field: sl.bool("field", d.field, &mut issues),
        holes: Vec::new(),
    };
    match sl.get("holes") {
        None => {}
        Some(Value::Array(a)) => {
            slab.holes = a.iter().enumerate().filter_map(|(i, v)| hole_override(v, i, &mut issues)).collect();
        }
        Some(_) => issues.push("slab.holes".into(), "expected an array of tables"),
    }
    for h in &slab.holes {
        if hex_distance(h.site) > slab.layers as i32 {
            issues.push("slab.holes".into(), format!("site {:?} lies outside {} layers", h.site, slab.layers));
        }
    }
    let slab_present = sl.present();
    sl.finish(&mut issues);

    let mut g = Section::new(&doc, "ga", &mut issues);
    let d = GaConfig::default();
    let probability = |v: f64| (0.0..=1.0).contains(&v);
    let config = GaConfig {
        population: g.usize("population", d.population, 2, &mut issues),
        mutation_rate: g.f64("mutation_rate", d.mutation_rate, probability, "must lie in [0, 1]", &mut issues),
        crossover_rate: g.f64("crossover_rate", d.crossover_rate, probability, "must lie in [0, 1]", &mut issues),
        sigma: g.f64("sigma", d.sigma, non_negative, "must be >= 0", &mut issues),
        seed,
        generations: g.usize("generations", d.generations, 0, &mut issues),
    };
    let fitness = match g.str("fitness", &mut issues) {
        None | Some("slab") => Fitness::Slab,
        Some("surrogate") => Fitness::Surrogate,
        Some(s) => {
            issues.0.push(ConfigIssue {
                key: "ga.fitness".into(),
                message: format!("unknown fitness `{s}`, expected slab or surrogate"),
                suggestion: suggest(s, ["slab", "surrogate"]),
            });
            Fitness::Slab
        }
    };
    let sites = g.sites("sites", &mut issues).unwrap_or_else(|| DEFAULT_SITES.to_vec());
    if sites.is_empty() {
        issues.push("ga.sites".into(), "must list at least one site");
    }
    for (i, s) in sites.iter().enumerate() {
        if sites[..i].contains(s) {
            issues.push("ga.sites".into(), format!("site {s:?} is listed twice"));
        }
        if fitness == Fitness::Slab && hex_distance(*s) > slab.layers as i32 {
            issues.push("ga.sites".into(), format!("site {s:?} lies outside {} layers", slab.layers));
        }
    }
    let checkpoint = match g.get("checkpoint") {
        None => Some("ga.ckpt".to_string()),
        Some(Value::String(s)) if s.is_empty() => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(Value::Boolean(false)) => None,
        Some(_) => {
            issues.push("ga.checkpoint".into(), "expected a file name (or \"\" to disable)");
            None
        }
    };
    let resume = g.bool("resume", false, &mut issues);
    if resume && checkpoint.is_none() {
        issues.push("ga.resume".into(), "requires a checkpoint file");
    }
    let ga_present = g.present();
    g.finish(&mut issues);
    let ga = GaSection { config, fitness, sites, checkpoint, resume };

    if let Some(c) = command {
        let mut required = vec![("lattice", lattice_present)];
        match c {
            Command::Bands => {}
            Command::Invert2d => required.push(("objective", objective_present)),
            Command::PlanarScan => required.push(("slab", slab_present)),
            Command::GaOpt => {
                required.push(("ga", ga_present));
                if ga.fitness == Fitness::Surrogate {
                    required.clear();
                    required.push(("ga", ga_present));
                } else {
                    required.push(("slab", slab_present));
                }
            }
        }
        for (name, present) in required {
            if !present {
                issues.push(name.into(), format!("section required by command `{}`", c.name()));
            }
        }
    }

    match command {
        Some(command) if issues.0.is_empty() => Ok(RunConfig {
            command,
            output,
            seed,
            lattice,
            solver,
            objective,
            slab,
            ga,
            source: doc,
        }),
        _ => Err(Error::Config(issues.0)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn issues(text: &str) -> Vec<ConfigIssue> {
        match parse_config(text) {
            Err(Error::Config(v)) => v,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_bands_config_gets_defaults() {
        let c = parse_config("[run]\ncommand = \"bands\"\n[lattice]\nhole_radius = 0.3\n").unwrap();
        assert_eq!(c.command, Command::Bands);
        assert_eq!(c.output, PathBuf::from("out"));
        assert_eq!(c.seed, 1);
        assert_eq!(c.lattice, LatticeSpec { hole_radius: 0.3, bulk_index: 3.4, hole_index: 1.0, lattice_type: LatticeType::Hexagonal });
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.objective, ObjectiveConfig::default());
    }

    #[test]
    fn negative_beta_names_the_key() {
        let v = issues("[run]\ncommand = \"invert2d\"\n[lattice]\n[objective]\nbeta_V = -1\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "objective.beta_V");
        assert!(v[0].message.contains(">= 0"), "{}", v[0].message);
    }

    #[test]
    fn misspelled_key_gets_a_suggestion() {
        let v = issues("[run]\ncommand = \"invert2d\"\n[lattice]\n[objective]\nbetaV = 2.0\n");
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].key, "objective.betaV");
        assert_eq!(v[0].suggestion.as_deref(), Some("beta_V"));
        assert!(v[0].to_string().contains("did you mean `beta_V`"));
    }

    #[test]
    fn all_problems_are_reported_together() {
        let v = issues(
            "[run]\ncommand = \"planar-scan\"\n[lattice]\nhole_radius = 0.7\n[solver]\nmesh = 4\nn_g = \"many\"\n[sovler]\n",
        );
        let keys: Vec<&str> = v.iter().map(|i| i.key.as_str()).collect();
        for k in ["lattice.hole_radius", "solver.mesh", "solver.n_g", "sovler", "slab"] {
            assert!(keys.contains(&k), "{k} missing from {keys:?}");
        }
        let s = v.iter().find(|i| i.key == "sovler").unwrap();
        assert_eq!(s.suggestion.as_deref(), Some("solver"));
    }

    #[test]
    fn unknown_command_is_suggested() {
        let v = issues("[run]\ncommand = \"band\"\n[lattice]\n");
        assert_eq!(v[0].suggestion.as_deref(), Some("bands"));
    }

    #[test]
    fn slab_holes_and_ga_sections_parse() {
        let c = parse_config(
            r#"
            [run]
            command = "ga-opt"
            seed = 7
            [lattice]
            [slab]
            layers = 4
            window = [0.26, 0.29]
            holes = [{ site = [0, 0], rx = 0.15 }, { site = [1, 0], dx = 0.02, rx = 0.2, ry = 0.25 }]
            [ga]
            population = 4
            generations = 2
            checkpoint = ""
            "#,
        )
        .unwrap();
        assert_eq!(c.slab.holes.len(), 2);
        assert_eq!(c.slab.holes[0].ry, 0.15);
        assert_eq!(c.slab.holes[1].dx, 0.02);
        assert_eq!(c.ga.sites.len(), 13);
        assert_eq!(c.ga.checkpoint, None);
        assert_eq!(c.ga_config().seed, 7);
        assert_eq!(c.slab_spec().layers, 4);
    }

    #[test]
    fn ga_sites_must_fit_the_crystal() {
        let v = issues("[run]\ncommand = \"ga-opt\"\n[lattice]\n[slab]\nlayers = 3\n[ga]\n");
        assert!(v.iter().any(|i| i.key == "ga.sites" && i.message.contains("[4, 0]")));
    }

    #[test]
    fn surrogate_ga_needs_only_its_section() {
        let c = parse_config("[run]\ncommand = \"ga-opt\"\n[ga]\nfitness = \"surrogate\"\n").unwrap();
        assert_eq!(c.ga.fitness, Fitness::Surrogate);
    }

    #[test]
    fn omega_m_accepts_midgap_or_a_frequency() {
        let base = "[run]\ncommand = \"invert2d\"\n[lattice]\n[objective]\n";
        assert_eq!(parse_config(&format!("{base}omega_m = \"midgap\"\n")).unwrap().objective.omega_m, None);
        assert_eq!(parse_config(&format!("{base}omega_m = 0.3\n")).unwrap().objective.omega_m, Some(0.3));
        assert_eq!(issues(&format!("{base}omega_m = 2.0\n"))[0].key, "objective.omega_m");
    }

    #[test]
    fn syntax_errors_are_config_errors() {
        assert!(matches!(parse_config("[run\n"), Err(Error::Config(_))));
    }
}
