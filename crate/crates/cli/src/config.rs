//! Run configuration: TOML text, `--set` overrides and validation.

use bloch_core::magnetic::{farey_fluxes, Flux};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Bands,
    Berry,
    Butterfly,
    Dynamics,
    Pump,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: Command,
    /// Worker threads; all cores when absent.
    pub threads: Option<usize>,
    pub lattice: Option<LatticeSpec>,
    pub potential: Option<PotentialSpec>,
    pub numeric: Option<NumericSpec>,
    pub butterfly: Option<ButterflySpec>,
    pub dynamics: Option<DynamicsSpec>,
    pub pump: Option<PumpSpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    /// Lattice vectors as rows.
    pub basis: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Harmonic {
    pub n: Vec<i32>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cosine {
    pub n: Vec<i32>,
    pub amp: f64,
}

/// Fourier coefficients of a real potential. Missing `-n` partners are
/// filled in as complex conjugates.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub harmonics: Vec<Harmonic>,
    #[serde(default)]
    pub cosines: Vec<Cosine>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSpec {
    pub cutoff: f64,
    pub grid: Vec<usize>,
    #[serde(default = "default_bands")]
    pub bands: usize,
    #[serde(default)]
    pub spin_orbit: bool,
    #[serde(default)]
    pub window: [usize; 2],
}

fn default_bands() -> usize {
    4
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButterflySpec {
    pub q_max: Option<i64>,
    /// Explicit `[p, q]` pairs; expanded from `q_max` when absent.
    pub fluxes: Option<Vec<[i64; 2]>>,
    pub grid: [usize; 2],
    /// Harper symbol; the square-lattice `2 cos K1 + 2 cos K2` when empty.
    #[serde(default)]
    pub symbol: Vec<Harmonic>,
    #[serde(default)]
    pub chern: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsSpec {
    pub epsilons: Vec<f64>,
    pub k0: Vec<f64>,
    pub x0: Option<Vec<f64>>,
    pub force: Option<Vec<f64>>,
    /// Uniform field normal to the plane, two dimensions only.
    #[serde(default)]
    pub magnetic: f64,
    #[serde(default = "one")]
    pub horizon: f64,
    #[serde(default = "default_sample_ds")]
    pub sample_ds: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    pub per_cell: Option<Vec<usize>>,
    #[serde(default = "default_width")]
    pub width_factor: f64,
    #[serde(default = "yes")]
    pub first_order: bool,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

fn default_sample_ds() -> f64 {
    1.0 / 64.0
}

fn default_dt() -> f64 {
    0.02
}

fn default_substeps() -> usize {
    4
}

fn default_width() -> f64 {
    0.3
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaChoice {
    Perturbative,
    FiniteDifference,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterpolationChoice {
    Linear,
    Trigonometric,
}

/// Sliding cosine `2 amp cos(g x - theta(t))` in one dimension.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSpec {
    pub amp: f64,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    #[serde(default = "one")]
    pub period: f64,
    #[serde(default = "yes")]
    pub ramp: bool,
    #[serde(default = "default_interpolation")]
    pub interpolation: InterpolationChoice,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Time nodes of the adiabatic (projector) calculation.
    #[serde(default = "default_times")]
    pub times: usize,
    #[serde(default = "default_theta")]
    pub theta: ThetaChoice,
}

fn default_snapshots() -> usize {
    16
}

fn default_interpolation() -> InterpolationChoice {
    InterpolationChoice::Trigonometric
}

fn default_steps() -> usize {
    1024
}

fn default_times() -> usize {
    32
}

fn default_theta() -> ThetaChoice {
    ThetaChoice::Perturbative
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub csv: Option<String>,
    pub json: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, self.line) {
            (Some(k), Some(l)) => write!(f, "line {l}, key `{k}`: {}", self.message),
            (Some(k), None) => write!(f, "key `{k}`: {}", self.message),
            (None, Some(l)) => write!(f, "line {l}: {}", self.message),
            (None, None) => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Applies `key=value` overrides to the document text. Values are read as
/// TOML and fall back to plain strings; dotted keys address tables.
pub fn apply_overrides(text: &str, overrides: &[String]) -> Result<String, ConfigError> {
    if overrides.is_empty() {
        return Ok(text.to_string());
    }
    let mut doc: toml_edit::DocumentMut = text.parse().map_err(|e: toml_edit::TomlError| ConfigError {
        key: None,
        line: e.span().map(|s| line_of_offset(text, s.start)),
        message: e.message().trim().to_string(),
    })?;
    for item in overrides {
        let (path, raw) = item.split_once('=').ok_or_else(|| ConfigError {
            key: Some(item.clone()),
            line: None,
            message: "override must look like key=value".into(),
        })?;
        let path: Vec<&str> = path.trim().split('.').collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError {
                key: Some(item.clone()),
                line: None,
                message: "empty key segment in override".into(),
            });
        }
        let value = raw
            .trim()
            .parse::<toml_edit::Value>()
            .unwrap_or_else(|_| toml_edit::Value::from(raw.trim()));
        let mut table = doc.as_table_mut();
        for seg in &path[..path.len() - 1] {
            let entry = table
                .entry(seg)
                .or_insert_with(|| toml_edit::Item::Table(toml_edit::Table::new()));
            table = entry.as_table_mut().ok_or_else(|| ConfigError {
                key: Some(path.join(".")),
                line: None,
                message: format!("`{seg}` is not a table"),
            })?;
        }
        table.insert(path[path.len() - 1], toml_edit::value(value));
    }
    Ok(doc.to_string())
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key` inside `[section]` (top level for an empty section).
fn locate(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.starts_with('[') {
            current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = t.split_once('=') {
                if k.trim() == key {
                    return Some(i + 1);
                }
            }
        }
    }
    None
}

struct Checker<'a> {
    text: &'a str,
}

impl Checker<'_> {
    fn fail<T>(&self, path: &str, message: impl Into<String>) -> Result<T, ConfigError> {
        let (section, key) = path.rsplit_once('.').unwrap_or(("", path));
        Err(ConfigError {
            key: Some(path.to_string()),
            line: locate(self.text, section, key),
            message: message.into(),
        })
    }

    fn positive(&self, path: &str, x: f64) -> Result<(), ConfigError> {
        if x > 0.0 && x.is_finite() {
            Ok(())
        } else {
            self.fail(path, format!("must be positive and finite, got {x}"))
        }
    }

    fn require<'b, T>(&self, block: &'b Option<T>, name: &str, command: Command) -> Result<&'b T, ConfigError> {
        block.as_ref().ok_or_else(|| ConfigError {
            key: Some(name.to_string()),
            line: None,
            message: format!("section [{name}] is required for `{}`", command.name()),
        })
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Bands => "bands",
            Command::Berry => "berry",
            Command::Butterfly => "butterfly",
            Command::Dynamics => "dynamics",
            Command::Pump => "pump",
        }
    }
}

/// Parses and validates a configuration; `butterfly.fluxes` is expanded
/// from `q_max` when not given.
pub fn parse_config(text: &str) -> Result<RunSpec, ConfigError> {
    let mut spec: RunSpec = toml::from_str(text).map_err(|e| {
        let message = e.message().to_string();
        let key = message
            .split('`')
            .nth(1)
            .filter(|_| message.contains("field"))
            .map(str::to_string);
        ConfigError {
            key,
            line: e.span().map(|s| line_of_offset(text, s.start)),
            message,
        }
    })?;
    validate(&mut spec, text)?;
    Ok(spec)
}

fn validate(spec: &mut RunSpec, text: &str) -> Result<(), ConfigError> {
    let c = Checker { text };
    let cmd = spec.command;
    if spec.threads == Some(0) {
        return c.fail("threads", "must be at least 1");
    }
    let mut dim = None;
    if let Some(lat) = &spec.lattice {
        let d = lat.basis.len();
        if !(1..=3).contains(&d) || lat.basis.iter().any(|r| r.len() != d) {
            return c.fail("lattice.basis", "needs d rows of length d with d in 1..=3");
        }
        if lat.basis.iter().flatten().any(|x| !x.is_finite()) {
            return c.fail("lattice.basis", "entries must be finite");
        }
        dim = Some(d);
    }
    if let Some(p) = &spec.potential {
        let d = dim.unwrap_or(0);
        for h in &p.harmonics {
            if h.n.len() != d {
                return c.fail("potential.harmonics", format!("index {:?} does not match dimension {d}", h.n));
            }
        }
        for h in &p.cosines {
            if h.n.len() != d {
                return c.fail("potential.cosines", format!("index {:?} does not match dimension {d}", h.n));
            }
        }
    }
    if cmd != Command::Butterfly {
        c.require(&spec.lattice, "lattice", cmd)?;
        let num = c.require(&spec.numeric, "numeric", cmd)?;
        let d = dim.unwrap_or(0);
        c.positive("numeric.cutoff", num.cutoff)?;
        if num.grid.len() != d || num.grid.contains(&0) {
            return c.fail("numeric.grid", format!("needs {d} positive sizes"));
        }
        if num.bands == 0 {
            return c.fail("numeric.bands", "must be at least 1");
        }
        if num.window[0] > num.window[1] || num.window[1] >= num.bands {
            return c.fail("numeric.window", "needs lo <= hi < bands");
        }
    }
    match cmd {
        Command::Bands => {
            c.require(&spec.potential, "potential", cmd)?;
        }
        Command::Berry => {
            c.require(&spec.potential, "potential", cmd)?;
            if dim.unwrap_or(0) > 2 {
                return c.fail("lattice.basis", "berry supports one and two dimensions");
            }
        }
        Command::Butterfly => {
            let b = c.require(&spec.butterfly, "butterfly", cmd)?;
            if b.grid.contains(&0) {
                return c.fail("butterfly.grid", "sizes must be positive");
            }
            for h in &b.symbol {
                if h.n.len() != 2 {
                    return c.fail("butterfly.symbol", "symbol indices have two components");
                }
            }
            let fluxes = match (&b.fluxes, b.q_max) {
                (Some(list), _) => {
                    for &[p, q] in list {
                        if let Err(e) = Flux::new(p, q) {
                            return c.fail("butterfly.fluxes", e.to_string());
                        }
                    }
                    list.clone()
                }
                (None, Some(q)) if q >= 1 => farey_fluxes(q).iter().map(|f| [f.p(), f.q()]).collect(),
                (None, Some(q)) => return c.fail("butterfly.q_max", format!("must be at least 1, got {q}")),
                (None, None) => return c.fail("butterfly.q_max", "either q_max or fluxes is required"),
            };
            spec.butterfly.as_mut().unwrap().fluxes = Some(fluxes);
        }
        Command::Dynamics => {
            c.require(&spec.potential, "potential", cmd)?;
            let dy = c.require(&spec.dynamics, "dynamics", cmd)?;
            let d = dim.unwrap_or(0);
            if dy.epsilons.is_empty() {
                return c.fail("dynamics.epsilons", "at least one value is required");
            }
            for &e in &dy.epsilons {
                c.positive("dynamics.epsilons", e)?;
            }
            let len_ok = |v: &Option<Vec<f64>>| v.as_ref().map_or(true, |v| v.len() == d);
            if dy.k0.len() != d {
                return c.fail("dynamics.k0", format!("needs {d} components"));
            }
            if !len_ok(&dy.x0) {
                return c.fail("dynamics.x0", format!("needs {d} components"));
            }
            if !len_ok(&dy.force) {
                return c.fail("dynamics.force", format!("needs {d} components"));
            }
            if dy.magnetic != 0.0 && d != 2 {
                return c.fail("dynamics.magnetic", "a magnetic field needs two dimensions");
            }
            c.positive("dynamics.horizon", dy.horizon)?;
            c.positive("dynamics.sample_ds", dy.sample_ds)?;
            c.positive("dynamics.dt", dy.dt)?;
            c.positive("dynamics.width_factor", dy.width_factor)?;
            if dy.substeps == 0 {
                return c.fail("dynamics.substeps", "must be at least 1");
            }
            if let Some(pc) = &dy.per_cell {
                if pc.len() != d || pc.contains(&0) {
                    return c.fail("dynamics.per_cell", format!("needs {d} positive sizes"));
                }
            }
            let num = spec.numeric.as_ref().unwrap();
            if num.window[0] != num.window[1] {
                return c.fail("numeric.window", "dynamics follows a single band");
            }
            if num.grid.iter().any(|n| n % 2 != 0) {
                return c.fail("numeric.grid", "wave-packet boxes need even cell counts");
            }
        }
        Command::Pump => {
            let p = c.require(&spec.pump, "pump", cmd)?;
            if dim != Some(1) {
                return c.fail("lattice.basis", "pumps are one-dimensional");
            }
            if !(p.amp >= 0.0 && p.amp.is_finite()) {
                return c.fail("pump.amp", "must be finite and non-negative");
            }
            c.positive("pump.period", p.period)?;
            if p.snapshots < 2 {
                return c.fail("pump.snapshots", "at least two snapshots are required");
            }
            if p.times < 2 {
                return c.fail("pump.times", "at least two time nodes are required");
            }
            if p.epsilons.is_empty() {
                return c.fail("pump.epsilons", "at least one value is required");
            }
            for &e in &p.epsilons {
                c.positive("pump.epsilons", e)?;
            }
            if p.steps == 0 || p.steps % p.times != 0 {
                return c.fail("pump.steps", format!("must be a positive multiple of times = {}", p.times));
            }
        }
    }
    Ok(())
}
