use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::estimators::{TestFunction, VarMethod, DEFAULT_EPS};
use crate::kernels::MAX_ORDER;
use crate::model::{builtin_model, ModelParams, ModelSpec, BUILTIN_MODELS};
use crate::solver::{InitDistribution, SolverConfig};

/// The named experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Density,
    Gradient,
    Lions,
    Bounds,
    Identities,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Simulate,
        Experiment::Density,
        Experiment::Gradient,
        Experiment::Lions,
        Experiment::Bounds,
        Experiment::Identities,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Simulate => "simulate",
            Self::Density => "density",
            Self::Gradient => "gradient",
            Self::Lions => "lions",
            Self::Bounds => "bounds",
            Self::Identities => "identities",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| Error::Config {
            line: None,
            field: "experiment".into(),
            message: format!("unknown experiment `{s}`, expected one of simulate, density, gradient, lions, bounds, identities"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub name: String,
    #[serde(flatten)]
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub s: f64,
    pub t: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { s: 0.0, t: 1.0 }
    }
}

/// Spatial box and series settings. Without `lo`/`hi` the box is chosen
/// from the start point and the model bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub n_space: usize,
    pub n_time: usize,
    /// Truncation order `M` of the series.
    pub order: usize,
    pub lo: Option<Vec<f64>>,
    pub hi: Option<Vec<f64>>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { n_space: 401, n_time: 8, order: 2, lo: None, hi: None }
    }
}

fn default_horizons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2, 0.4]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Particle counts at which the flow property is checked.
    pub sizes: Vec<usize>,
    /// Number of moment checkpoints after `s`.
    pub checkpoints: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { sizes: vec![1000, 10_000], checkpoints: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Start point; the origin when absent.
    pub x: Option<Vec<f64>>,
    /// Probe points for the closed-form comparison.
    pub probes: usize,
    /// Probes span `mean +- probe_sd` standard deviations along the first axis.
    pub probe_sd: f64,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { x: None, probes: 64, probe_sd: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientConfig {
    /// Start points; the origin and `e1 / 2` when absent.
    pub probes: Option<Vec<Vec<f64>>>,
    /// Direction `v`; `e1` when absent.
    pub direction: Option<Vec<f64>>,
    pub functions: Vec<String>,
    pub horizons: Vec<f64>,
    /// Step of the finite-difference oracle for models without a closed form.
    pub fd_h: f64,
}

impl Default for GradientConfig {
    fn default() -> Self {
        Self {
            probes: None,
            direction: None,
            functions: vec!["clipped".into(), "cos".into(), "step".into()],
            horizons: default_horizons(),
            fd_h: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LionsConfig {
    /// Test functions of the scaling probe.
    pub functions: Vec<String>,
    pub horizons: Vec<f64>,
    pub eps: Vec<f64>,
    /// Random smooth fields added to `phi = e1` in the scaling probe.
    pub random_phi: usize,
    /// Random smooth fields in the variation bound check.
    pub variation_phi: usize,
    pub variation_particles: usize,
}

impl Default for LionsConfig {
    fn default() -> Self {
        Self {
            functions: vec!["step".into()],
            horizons: default_horizons(),
            eps: DEFAULT_EPS.to_vec(),
            random_phi: 2,
            variation_phi: 5,
            variation_particles: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    /// Shift between the two laws of every pair.
    pub eps: f64,
    pub horizons: Vec<f64>,
    /// Sample size of the narrow Gaussian family.
    pub n_samples: usize,
    /// `parametrix`, `kde`, or absent for the automatic choice.
    pub method: Option<String>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { eps: 0.1, horizons: default_horizons(), n_samples: 1000, method: None }
    }
}

/// A fully resolved and validated run configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Option<Experiment>,
    pub output: PathBuf,
    pub model: ModelConfig,
    pub init: InitDistribution,
    pub time: TimeConfig,
    pub solver: SolverConfig,
    pub grid: GridConfig,
    pub simulate: SimulateConfig,
    pub density: DensityConfig,
    pub gradient: GradientConfig,
    pub lions: LionsConfig,
    pub bounds: BoundsConfig,
}

impl RunConfig {
    pub fn build_model(&self) -> Result<ModelSpec> {
        builtin_model(&self.model.name, &self.model.params)
    }

    pub fn dim(&self) -> usize {
        self.model.params.dim
    }

    pub fn span(&self) -> f64 {
        self.time.t - self.time.s
    }

    /// SHA-256 of the canonical TOML rendering.
    pub fn hash(&self) -> String {
        let text = toml::to_string(self).expect("run configs serialise to TOML");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs serialise to TOML")
    }

    pub fn test_functions(names: &[String], field: &str) -> Result<Vec<TestFunction>> {
        names
            .iter()
            .map(|n| {
                n.parse().map_err(|e: Error| Error::Config { line: None, field: field.into(), message: e.to_string() })
            })
            .collect()
    }

    pub fn var_method(&self) -> Result<Option<VarMethod>> {
        self.bounds.method.as_deref().map(str::parse).transpose()
    }
}

/// Reads a config file and applies `section.key=value` overrides, which win
/// over the file.
pub fn parse_config_file(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config { line: None, field: "config".into(), message: format!("{}: {e}", path.display()) })?;
    parse_config(&text, overrides)
}

/// Parses config text plus overrides into a validated [`RunConfig`].
pub fn parse_config(text: &str, overrides: &[String]) -> Result<RunConfig> {
    let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config {
        line: e.span().map(|s| line_at(text, s.start)),
        field: "syntax".into(),
        message: e.message().trim().to_string(),
    })?;
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let src = Source { text };

    let experiment = match table.remove("experiment") {
        None => None,
        Some(toml::Value::String(s)) => Some(s.parse::<Experiment>().map_err(|e| src.relocate(e, "", "experiment"))?),
        Some(_) => return Err(src.error("", "experiment", "expected a string")),
    };
    let output = match table.remove("output") {
        None => PathBuf::from("out"),
        Some(toml::Value::String(s)) => PathBuf::from(s),
        Some(_) => return Err(src.error("", "output", "expected a string")),
    };

    let mut model_table = match table.remove("model") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(src.error("", "model", "expected a table")),
        None => return Err(src.error("", "model.name", "missing field `name` in [model]")),
    };
    let name = match model_table.remove("name") {
        Some(toml::Value::String(s)) => s,
        Some(_) => return Err(src.error("model", "name", "expected a string")),
        None => return Err(src.error("model", "name", "missing field `name`")),
    };
    if !BUILTIN_MODELS.contains(&name.as_str()) {
        return Err(src.error("model", "name", &format!("unknown model `{name}`, expected one of {}", BUILTIN_MODELS.join(", "))));
    }
    let params: ModelParams = src.typed("model", toml::Value::Table(model_table))?;

    let init = match table.remove("init") {
        Some(v) => src.typed::<InitDistribution>("init", v)?,
        None => InitDistribution::Dirac { point: vec![0.0; params.dim] },
    };
    let time: TimeConfig = src.section(&mut table, "time")?;
    let solver: SolverConfig = src.section(&mut table, "solver")?;
    let grid: GridConfig = src.section(&mut table, "grid")?;
    let simulate: SimulateConfig = src.section(&mut table, "simulate")?;
    let density: DensityConfig = src.section(&mut table, "density")?;
    let gradient: GradientConfig = src.section(&mut table, "gradient")?;
    let lions: LionsConfig = src.section(&mut table, "lions")?;
    let bounds: BoundsConfig = src.section(&mut table, "bounds")?;
    if let Some(key) = table.keys().next() {
        return Err(src.error("", key, &format!("unknown key `{key}`")));
    }

    let cfg = RunConfig {
        experiment,
        output,
        model: ModelConfig { name, params },
        init,
        time,
        solver,
        grid,
        simulate,
        density,
        gradient,
        lions,
        bounds,
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn range(field: &str, invariant: &str) -> Error {
    Error::ConfigRange { field: field.into(), invariant: invariant.into() }
}

fn check_dim(field: &str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(range(field, &format!("length == model.dim ({d})")));
    }
    Ok(())
}

fn check_horizons(field: &str, hs: &[f64]) -> Result<()> {
    if hs.is_empty() || hs.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
        return Err(range(field, "non-empty, every horizon > 0"));
    }
    Ok(())
}

/// Range checks across sections.
fn validate(cfg: &RunConfig) -> Result<()> {
    cfg.solver.validate().map_err(|e| match e {
        Error::ConfigRange { field, invariant } => Error::ConfigRange { field: format!("solver.{field}"), invariant },
        other => other,
    })?;
    let p = &cfg.model.params;
    builtin_model(&cfg.model.name, p).map_err(|e| match e {
        Error::InvalidParameter { name, reason } => range(&format!("model.{name}"), &reason),
        other => other,
    })?;
    let d = p.dim;
    if !(cfg.time.s.is_finite() && cfg.time.t.is_finite() && cfg.time.t > cfg.time.s) {
        return Err(range("time.t", "t > s"));
    }
    cfg.init.validate().map_err(|e| match e {
        Error::InvalidParameter { reason, .. } => range("init", &reason),
        other => other,
    })?;
    if cfg.init.dim() != d {
        return Err(range("init", &format!("dimension == model.dim ({d})")));
    }
    let g = &cfg.grid;
    if g.n_space < 16 {
        return Err(range("grid.n_space", "n_space >= 16"));
    }
    if g.n_time == 0 {
        return Err(range("grid.n_time", "n_time >= 1"));
    }
    if g.order > MAX_ORDER {
        return Err(range("grid.order", &format!("order <= {MAX_ORDER}")));
    }
    match (&g.lo, &g.hi) {
        (None, None) => {}
        (Some(lo), Some(hi)) => {
            check_dim("grid.lo", lo, d)?;
            check_dim("grid.hi", hi, d)?;
            if lo.iter().zip(hi).any(|(a, b)| !(a < b)) {
                return Err(range("grid.hi", "lo < hi on every axis"));
            }
        }
        _ => return Err(range("grid.lo", "lo and hi given together")),
    }
    if cfg.simulate.sizes.is_empty() || cfg.simulate.sizes.contains(&0) {
        return Err(range("simulate.sizes", "non-empty, every size >= 1"));
    }
    if cfg.simulate.checkpoints == 0 {
        return Err(range("simulate.checkpoints", "checkpoints >= 1"));
    }
    if let Some(x) = &cfg.density.x {
        check_dim("density.x", x, d)?;
    }
    if cfg.density.probes < 2 {
        return Err(range("density.probes", "probes >= 2"));
    }
    if !(cfg.density.probe_sd > 0.0) {
        return Err(range("density.probe_sd", "probe_sd > 0"));
    }
    if let Some(ps) = &cfg.gradient.probes {
        if ps.is_empty() {
            return Err(range("gradient.probes", "at least one probe"));
        }
        for x in ps {
            check_dim("gradient.probes", x, d)?;
        }
    }
    if let Some(v) = &cfg.gradient.direction {
        check_dim("gradient.direction", v, d)?;
    }
    RunConfig::test_functions(&cfg.gradient.functions, "gradient.functions")?;
    check_horizons("gradient.horizons", &cfg.gradient.horizons)?;
    if !(cfg.gradient.fd_h > 0.0) {
        return Err(range("gradient.fd_h", "fd_h > 0"));
    }
    RunConfig::test_functions(&cfg.lions.functions, "lions.functions")?;
    check_horizons("lions.horizons", &cfg.lions.horizons)?;
    let eps = &cfg.lions.eps;
    if eps.len() < 2 || eps.iter().any(|e| !(*e > 0.0)) || eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(range("lions.eps", "at least two steps, positive and strictly decreasing"));
    }
    if cfg.lions.variation_particles == 0 {
        return Err(range("lions.variation_particles", "variation_particles >= 1"));
    }
    if !(cfg.bounds.eps > 0.0 && cfg.bounds.eps.is_finite()) {
        return Err(range("bounds.eps", "eps > 0"));
    }
    check_horizons("bounds.horizons", &cfg.bounds.horizons)?;
    if cfg.bounds.n_samples < 2 {
        return Err(range("bounds.n_samples", "n_samples >= 2"));
    }
    cfg.var_method().map_err(|_| range("bounds.method", "method is parametrix or kde"))?;
    Ok(())
}

/// `section.key=value`; the value is read as a TOML value, or as a bare
/// string when it is not one.
fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let bad = |msg: &str| Error::Config { line: None, field: spec.into(), message: msg.into() };
    let (path, raw) = spec.split_once('=').ok_or_else(|| bad("expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(bad("empty key"));
    }
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key is present"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| bad(&format!("`{k}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), value);
    Ok(())
}

fn line_at(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Locates keys in the original text for error messages.
struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    /// Line of `key` inside `[section]` (top level for an empty section), or
    /// of the section header when the key is absent.
    fn line_of(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        let mut header = None;
        for (i, line) in self.text.lines().enumerate() {
            let l = line.trim();
            if let Some(inner) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
                current = inner.trim().to_string();
                if current == section {
                    header = Some(i + 1);
                }
                continue;
            }
            if current == section {
                if let Some(rest) = l.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        header
    }

    fn field(section: &str, key: &str) -> String {
        if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        }
    }

    fn error(&self, section: &str, key: &str, message: &str) -> Error {
        Error::Config { line: self.line_of(section, key), field: Self::field(section, key), message: message.into() }
    }

    fn relocate(&self, e: Error, section: &str, key: &str) -> Error {
        match e {
            Error::Config { message, .. } => self.error(section, key, &message),
            other => other,
        }
    }

    fn typed<T: DeserializeOwned>(&self, section: &str, value: toml::Value) -> Result<T> {
        T::deserialize(value).map_err(|e| {
            let message = e.message().trim().to_string();
            let key = message.split('`').nth(1).unwrap_or("").to_string();
            if key.is_empty() {
                Error::Config { line: self.line_of(section, ""), field: section.into(), message }
            } else {
                self.error(section, &key, &message)
            }
        })
    }

    fn section<T: DeserializeOwned + Default>(&self, table: &mut toml::Table, name: &str) -> Result<T> {
        match table.remove(name) {
            None => Ok(T::default()),
            Some(v @ toml::Value::Table(_)) => self.typed(name, v),
            Some(_) => Err(self.error("", name, "expected a table")),
        }
    }
}
