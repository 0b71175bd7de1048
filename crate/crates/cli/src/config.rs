//! TOML experiment configuration, flag overrides and field validation.

use std::fmt;
use std::path::{Path, PathBuf};

use randcover::frostman::{ChildFloor, FrostmanError, TreeConfig};
use randcover::measures::MeasureModel;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A field-level configuration error; always reported with exit status 2.
#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

pub fn field_err(field: impl Into<String>, reason: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), reason: reason.into() }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Number of replicated seeds, `seed..seed + seeds`.
    pub seeds: u64,
    pub out: PathBuf,
    pub model: ModelSection,
    pub cover: CoverSection,
    pub spectrum: SpectrumSection,
    pub hull: HullSection,
    pub tree: TreeSection,
    pub example: ExampleSection,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            seed: 0,
            seeds: 1,
            out: PathBuf::from("out"),
            model: ModelSection::default(),
            cover: CoverSection::default(),
            spectrum: SpectrumSection::default(),
            hull: HullSection::default(),
            tree: TreeSection::default(),
            example: ExampleSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// `uniform`, `cantor`, `bernoulli` or `example`.
    pub name: String,
    pub dim: usize,
    pub lambda: f64,
    pub beta: f64,
    pub k_max: u32,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection { name: "uniform".into(), dim: 1, lambda: 1.0 / 6.0, beta: 1.3, k_max: 40 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverSection {
    pub alpha: f64,
    /// `power` (`r_n = n^-alpha`) or `half-power` (`r_n = (2n)^-alpha / 2`).
    pub schedule: String,
    /// Defaults to `2^(j_max + 1)`.
    pub n_max: Option<u64>,
    pub j_min: u32,
    pub j_max: u32,
}

impl Default for CoverSection {
    fn default() -> Self {
        CoverSection { alpha: 2.0, schedule: "power".into(), n_max: None, j_min: 4, j_max: 12 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumSection {
    pub level_min: u32,
    pub level_max: u32,
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
    pub eps: f64,
    /// Reservoir size for models without an exact oracle.
    pub samples: usize,
    /// Discrepancy used by the lower bound curve.
    pub delta: f64,
}

impl Default for SpectrumSection {
    fn default() -> Self {
        SpectrumSection {
            level_min: 4,
            level_max: 12,
            s_min: 0.0,
            s_max: 1.5,
            s_step: 0.005,
            eps: 0.05,
            samples: 1_000_000,
            delta: 0.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct HullSection {
    /// `s,value` CSV; defaults to the model's analytic F curve.
    pub input: Option<PathBuf>,
    pub s_min: f64,
    pub s_max: f64,
    pub s_step: f64,
}

impl Default for HullSection {
    fn default() -> Self {
        HullSection { input: None, s_min: 0.0, s_max: 1.5, s_step: 0.005 }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSection {
    pub alpha: f64,
    pub eps: f64,
    pub t: f64,
    /// Uniformity exponent; defaults to the model's built-in value.
    pub s: Option<f64>,
    pub c: Option<f64>,
    pub u: Option<f64>,
    pub max_generation: u32,
    /// `growing` or a fixed minimum child count.
    pub child_floor: String,
    pub n0: u64,
    pub node_budget: u64,
    pub samples: usize,
}

impl Default for TreeSection {
    fn default() -> Self {
        TreeSection {
            alpha: 2.0,
            eps: 0.1,
            t: 0.05,
            s: None,
            c: None,
            u: None,
            max_generation: 1,
            child_floor: "growing".into(),
            n0: randcover::frostman::DEFAULT_N0,
            node_budget: randcover::frostman::DEFAULT_NODE_BUDGET,
            samples: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExampleSection {
    /// Values of `1/alpha` at which the covering dimension is estimated.
    pub inv_alphas: Vec<f64>,
    pub j_min: u32,
    pub j_max: u32,
    /// Allowed distance between the mean estimate and `F-bar(1/alpha)`.
    pub tol: f64,
    /// Samples for the fattened-Cantor masses.
    pub mass_samples: usize,
    pub mass_j_max: u32,
    /// Reservoir size for local dimensions.
    pub samples: usize,
    pub local_points: usize,
    pub level_min: u32,
    pub level_max: u32,
    pub min_hits: u64,
    pub local_tol: f64,
}

impl Default for ExampleSection {
    fn default() -> Self {
        ExampleSection {
            inv_alphas: vec![0.3, 0.7],
            j_min: 4,
            j_max: 12,
            tol: 0.08,
            mass_samples: 1_000_000,
            mass_j_max: 8,
            samples: 1_000_000,
            local_points: 20,
            level_min: 4,
            level_max: 20,
            min_hits: 64,
            local_tol: 0.05,
        }
    }
}

/// Flag values that override config fields one-for-one.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub seeds: Option<u64>,
    pub out: Option<PathBuf>,
    pub alpha: Option<f64>,
    pub model: Option<String>,
    pub n_max: Option<u64>,
    pub j_min: Option<u32>,
    pub j_max: Option<u32>,
    pub levels: Option<(u32, u32)>,
    pub eps: Option<f64>,
    pub input: Option<PathBuf>,
    pub t: Option<f64>,
    pub s: Option<f64>,
    pub max_generation: Option<u32>,
    pub child_floor: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SimulateCover,
    EstimateDim,
    Spectrum,
    Hull,
    TreeCertify,
    ExampleVerify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SimulateCover => "simulate-cover",
            Command::EstimateDim => "estimate-dim",
            Command::Spectrum => "spectrum",
            Command::Hull => "hull",
            Command::TreeCertify => "tree-certify",
            Command::ExampleVerify => "example-verify",
        }
    }
}

pub fn load(path: Option<&Path>) -> Result<Config, ConfigError> {
    let Some(path) = path else {
        return Ok(Config::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| field_err("config", format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| field_err(toml_field(&e), e.message().to_string()))
}

/// Best-effort dotted field name for a TOML error.
fn toml_field(e: &toml::de::Error) -> String {
    let msg = e.message();
    if let Some(rest) = msg.strip_prefix("unknown field `") {
        if let Some(end) = rest.find('`') {
            return rest[..end].to_string();
        }
    }
    "config".to_string()
}

/// Parse `LO..HI` (inclusive).
pub fn parse_levels(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected LO..HI, got `{s}`"))?;
    let lo = a.trim().parse::<u32>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<u32>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

impl Config {
    pub fn apply(&mut self, cmd: Command, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.seeds {
            self.seeds = v;
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = &o.model {
            self.model.name = v.clone();
        }
        if let Some(v) = o.alpha {
            match cmd {
                Command::TreeCertify => self.tree.alpha = v,
                _ => self.cover.alpha = v,
            }
        }
        if let Some(v) = o.n_max {
            self.cover.n_max = Some(v);
        }
        let (j_min, j_max) = match cmd {
            Command::ExampleVerify => (&mut self.example.j_min, &mut self.example.j_max),
            _ => (&mut self.cover.j_min, &mut self.cover.j_max),
        };
        if let Some(v) = o.j_min {
            *j_min = v;
        }
        if let Some(v) = o.j_max {
            *j_max = v;
        }
        if let Some((lo, hi)) = o.levels {
            match cmd {
                Command::ExampleVerify => (self.example.level_min, self.example.level_max) = (lo, hi),
                _ => (self.spectrum.level_min, self.spectrum.level_max) = (lo, hi),
            }
        }
        if let Some(v) = o.eps {
            match cmd {
                Command::TreeCertify => self.tree.eps = v,
                _ => self.spectrum.eps = v,
            }
        }
        if let Some(v) = &o.input {
            self.hull.input = Some(v.clone());
        }
        if let Some(v) = o.t {
            self.tree.t = v;
        }
        if let Some(v) = o.s {
            self.tree.s = Some(v);
        }
        if let Some(v) = o.max_generation {
            self.tree.max_generation = v;
        }
        if let Some(v) = &o.child_floor {
            self.tree.child_floor = v.clone();
        }
    }

    /// TOML echo of the resolved configuration.
    pub fn echo(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// SHA-256 of the command and the resolved configuration, ignoring the
    /// output directory.
    pub fn digest(&self, cmd: Command) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let mut h = Sha256::new();
        h.update(cmd.name().as_bytes());
        h.update(b"\n");
        h.update(c.echo().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn seed_list(&self) -> Vec<u64> {
        (0..self.seeds).map(|i| self.seed.wrapping_add(i)).collect()
    }

    pub fn build_model(&self) -> Result<MeasureModel, ConfigError> {
        let m = &self.model;
        let built = match m.name.as_str() {
            "uniform" => MeasureModel::uniform_box(m.dim).map_err(|e| ("model.dim", e)),
            "cantor" => Ok(MeasureModel::cantor()),
            "bernoulli" => MeasureModel::bernoulli(m.lambda).map_err(|e| ("model.lambda", e)),
            "example" => MeasureModel::example(m.lambda, m.beta, m.k_max).map_err(|e| match &e {
                randcover::measures::MeasureError::InvalidParameter { field, .. } => {
                    (model_field(field), e)
                }
                _ => ("model", e),
            }),
            other => {
                return Err(field_err(
                    "model.name",
                    format!("unknown model `{other}`; expected uniform, cantor, bernoulli or example"),
                ))
            }
        };
        built.map_err(|(f, e)| field_err(f, e.to_string()))
    }

    pub fn child_floor(&self) -> Result<ChildFloor, ConfigError> {
        let v = self.tree.child_floor.trim();
        if v == "growing" {
            return Ok(ChildFloor::Growing);
        }
        match v.parse::<usize>() {
            Ok(m) if m >= 2 => Ok(ChildFloor::AtLeast(m)),
            _ => Err(field_err("tree.child_floor", format!("expected `growing` or an integer >= 2, got `{v}`"))),
        }
    }

    /// Checks every field the command reads.
    pub fn validate(&self, cmd: Command) -> Result<MeasureModel, ConfigError> {
        if self.seeds == 0 {
            return Err(field_err("seeds", "must be at least 1"));
        }
        let model = self.build_model()?;
        match cmd {
            Command::SimulateCover | Command::EstimateDim => self.validate_cover()?,
            Command::Spectrum => self.validate_spectrum()?,
            Command::Hull => grid_check("hull", self.hull.s_min, self.hull.s_max, self.hull.s_step)?,
            Command::TreeCertify => {
                self.validate_tree()?;
                self.tree_config(&model)?;
            }
            Command::ExampleVerify => self.validate_example(&model)?,
        }
        Ok(model)
    }

    fn validate_cover(&self) -> Result<(), ConfigError> {
        let c = &self.cover;
        positive("cover.alpha", c.alpha)?;
        if !matches!(c.schedule.as_str(), "power" | "half-power") {
            return Err(field_err("cover.schedule", format!("expected power or half-power, got `{}`", c.schedule)));
        }
        windows_check("cover", c.j_min, c.j_max)?;
        if let Some(n) = c.n_max {
            let need = 1u64 << (c.j_max + 1);
            if n < need {
                return Err(field_err("cover.n_max", format!("must be at least 2^(j_max+1) = {need}, got {n}")));
            }
        }
        Ok(())
    }

    fn validate_spectrum(&self) -> Result<(), ConfigError> {
        let s = &self.spectrum;
        levels_check("spectrum", s.level_min, s.level_max, 3)?;
        grid_check("spectrum", s.s_min, s.s_max, s.s_step)?;
        if !(s.eps >= 2.0 * s.s_step * (1.0 - 1e-9) && s.eps.is_finite()) {
            return Err(field_err("spectrum.eps", format!("must be at least 2 s_step = {}", 2.0 * s.s_step)));
        }
        if s.samples == 0 {
            return Err(field_err("spectrum.samples", "must be positive"));
        }
        if !(s.delta >= 0.0 && s.delta.is_finite()) {
            return Err(field_err("spectrum.delta", "must be nonnegative"));
        }
        Ok(())
    }

    fn validate_tree(&self) -> Result<(), ConfigError> {
        let t = &self.tree;
        positive("tree.alpha", t.alpha)?;
        positive("tree.eps", t.eps)?;
        positive("tree.t", t.t)?;
        if let Some(s) = t.s {
            positive("tree.s", s)?;
        }
        if let Some(c) = t.c {
            positive("tree.c", c)?;
        }
        if t.c.is_some() != t.s.is_some() {
            return Err(field_err("tree.c", "c and s must be given together"));
        }
        if let Some(u) = t.u {
            positive("tree.u", u)?;
        }
        if t.max_generation == 0 {
            return Err(field_err("tree.max_generation", "must be at least 1"));
        }
        if t.samples == 0 {
            return Err(field_err("tree.samples", "must be positive"));
        }
        self.child_floor()?;
        Ok(())
    }

    /// The tree configuration with its uniformity exponent `s`, validated
    /// against the model; `tree.t` must lie below `s`.
    pub fn tree_config(&self, model: &MeasureModel) -> Result<(TreeConfig, f64), ConfigError> {
        let t = &self.tree;
        let mut tc = TreeConfig::new(model.clone(), t.alpha, t.eps, t.max_generation, self.seed);
        tc.u = t.u;
        tc.uniformity = t.c.zip(t.s);
        tc.n0 = t.n0;
        tc.node_budget = t.node_budget;
        tc.child_floor = self.child_floor()?;
        tc.reservoir_size = t.samples;
        let tree_err = |e: FrostmanError| match e {
            FrostmanError::InvalidParameter { field, reason } => field_err(format!("tree.{field}"), reason),
            other => field_err("tree", other.to_string()),
        };
        tc.validate().map_err(tree_err)?;
        let (_, s) = tc.resolved_uniformity().map_err(tree_err)?;
        if t.t >= s {
            return Err(field_err("tree.t", format!("must be below s = {s}, got {}", t.t)));
        }
        Ok((tc, s))
    }

    fn validate_example(&self, model: &MeasureModel) -> Result<(), ConfigError> {
        if !matches!(model, MeasureModel::Example(_)) {
            return Err(field_err("model.name", "example-verify needs model `example`"));
        }
        let e = &self.example;
        if e.inv_alphas.is_empty() {
            return Err(field_err("example.inv_alphas", "must not be empty"));
        }
        for &x in &e.inv_alphas {
            if !(x > 0.0 && x.is_finite()) {
                return Err(field_err("example.inv_alphas", format!("values must be positive, got {x}")));
            }
        }
        windows_check("example", e.j_min, e.j_max)?;
        positive("example.tol", e.tol)?;
        positive("example.local_tol", e.local_tol)?;
        if e.mass_samples == 0 {
            return Err(field_err("example.mass_samples", "must be positive"));
        }
        if e.mass_j_max == 0 || e.mass_j_max > 30 {
            return Err(field_err("example.mass_j_max", "must lie in 1..=30"));
        }
        if e.samples == 0 {
            return Err(field_err("example.samples", "must be positive"));
        }
        levels_check("example", e.level_min, e.level_max, randcover::spectra::LOCAL_WINDOW as u32)?;
        Ok(())
    }

    pub fn schedule(&self, alpha: f64) -> randcover::covering::Schedule {
        use randcover::covering::Schedule;
        match self.cover.schedule.as_str() {
            "half-power" => Schedule::HalfPower(alpha),
            _ => Schedule::Power(alpha),
        }
    }

    pub fn n_max(&self, j_max: u32) -> u64 {
        self.cover.n_max.unwrap_or(1u64 << (j_max + 1))
    }
}

fn model_field(f: &str) -> &'static str {
    match f {
        "lambda" => "model.lambda",
        "beta" => "model.beta",
        "k_max" => "model.k_max",
        _ => "model",
    }
}

fn positive(field: &str, v: f64) -> Result<(), ConfigError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(field_err(field, format!("must be positive and finite, got {v}")))
    }
}

fn windows_check(section: &str, j_min: u32, j_max: u32) -> Result<(), ConfigError> {
    if j_max >= 40 {
        return Err(field_err(format!("{section}.j_max"), format!("must be below 40, got {j_max}")));
    }
    if j_max < j_min + 2 {
        return Err(field_err(format!("{section}.j_max"), format!("need j_max >= j_min + 2 for three windows, got {j_min}..{j_max}")));
    }
    Ok(())
}

fn levels_check(section: &str, lo: u32, hi: u32, need: u32) -> Result<(), ConfigError> {
    if hi > 60 {
        return Err(field_err(format!("{section}.level_max"), format!("must be at most 60, got {hi}")));
    }
    if hi + 1 < lo + need {
        return Err(field_err(format!("{section}.level_max"), format!("need at least {need} levels, got {lo}..{hi}")));
    }
    Ok(())
}

fn grid_check(section: &str, lo: f64, hi: f64, step: f64) -> Result<(), ConfigError> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(field_err(format!("{section}.s_min"), "grid ends must be finite"));
    }
    positive(&format!("{section}.s_step"), step)?;
    if hi < lo + step {
        return Err(field_err(format!("{section}.s_max"), format!("must exceed s_min + s_step, got {lo}..{hi}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = Config::default();
        for cmd in [Command::SimulateCover, Command::EstimateDim, Command::Spectrum, Command::Hull, Command::TreeCertify] {
            c.validate(cmd).unwrap();
        }
        assert_eq!(c.validate(Command::ExampleVerify).unwrap_err().field, "model.name");
    }

    #[test]
    fn zero_alpha_names_field() {
        let mut c = Config::default();
        c.apply(Command::EstimateDim, &Overrides { alpha: Some(0.0), ..Default::default() });
        assert_eq!(c.validate(Command::EstimateDim).unwrap_err().field, "cover.alpha");
        c.apply(Command::TreeCertify, &Overrides { alpha: Some(0.0), ..Default::default() });
        assert_eq!(c.validate(Command::TreeCertify).unwrap_err().field, "tree.alpha");
    }

    #[test]
    fn toml_round_trip_and_unknown_field() {
        let c: Config = toml::from_str("seed = 7\n[cover]\nalpha = 1.25\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.cover.alpha, 1.25);
        let back: Config = toml::from_str(&c.echo()).unwrap();
        assert_eq!(back.echo(), c.echo());
        let err = toml::from_str::<Config>("[cover]\nalhpa = 2\n").unwrap_err();
        assert_eq!(toml_field(&err), "alhpa");
    }

    #[test]
    fn digest_ignores_out() {
        let mut a = Config::default();
        let d = a.digest(Command::Hull);
        a.out = PathBuf::from("elsewhere");
        assert_eq!(a.digest(Command::Hull), d);
        assert_ne!(a.digest(Command::Spectrum), d);
    }

    #[test]
    fn levels_and_floor() {
        assert_eq!(parse_levels("8..16").unwrap(), (8, 16));
        assert!(parse_levels("8-16").is_err());
        let mut c = Config::default();
        c.tree.child_floor = "1".into();
        assert_eq!(c.child_floor().unwrap_err().field, "tree.child_floor");
        c.tree.child_floor = "4".into();
        assert_eq!(c.child_floor().unwrap(), ChildFloor::AtLeast(4));
    }
}
