//! TOML run and generator configurations.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use modechoice_core::models::ModelSpec;
use modechoice_core::synth::GeneratorConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::ColumnMap;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Long CSV; relative paths resolve against the config file.
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    /// Defaults to the short name of the model type.
    #[serde(default)]
    pub name: Option<String>,
    #[serde(flatten)]
    pub spec: ModelSpec,
}

impl NamedModel {
    pub fn name(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.spec.default_name().to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    /// Keep each person's observations in one fold.
    pub person_level: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 10, person_level: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PdRequest {
    /// Wide column name, e.g. `tt_pt`.
    pub column: String,
    /// Alternative whose probability is averaged.
    pub target: String,
    /// Explicit grid; otherwise `points` evenly spaced values over the
    /// observed range.
    #[serde(default)]
    pub grid: Option<Vec<f64>>,
    #[serde(default)]
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    MarginalEffect,
    Elasticity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensitivityRequest {
    /// Label used in reports and value-of-time ratios.
    pub variable: String,
    pub column: String,
    pub target: String,
    pub measure: Measure,
    /// Absolute change for marginal effects, relative change for elasticities.
    pub delta: f64,
    /// Unit of an absolute change, e.g. `min`.
    #[serde(default)]
    pub unit: Option<String>,
    /// Also report the variant with out-of-range rows removed.
    #[serde(default)]
    pub constrained: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValueOfTime {
    /// Variable whose marginal effect is the unit of account.
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InterpretConfig {
    pub importance: bool,
    /// Models to interpret; all when absent.
    pub models: Option<Vec<String>>,
    pub pd: Vec<PdRequest>,
    pub sensitivity: Vec<SensitivityRequest>,
    pub value_of_time: Option<ValueOfTime>,
}

impl Default for InterpretConfig {
    fn default() -> Self {
        InterpretConfig { importance: true, models: None, pd: Vec::new(), sensitivity: Vec::new(), value_of_time: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    pub models: Vec<NamedModel>,
    #[serde(default)]
    pub crossval: CvConfig,
    #[serde(default)]
    pub interpret: InterpretConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads `path`, resolving the data path against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::from_toml(&text).with_context(|| format!("in {}", path.display()))?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.models.is_empty() {
            bail!("no models configured");
        }
        let names: Vec<String> = self.models.iter().map(NamedModel::name).collect();
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                bail!("duplicate model name `{n}`");
            }
            if n.is_empty() || !n.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                bail!("model name `{n}` must be non-empty and use only letters, digits, `_` or `-`");
            }
        }
        if self.crossval.k < 2 {
            bail!("crossval.k must be at least 2, got {}", self.crossval.k);
        }
        if let Some(sel) = &self.interpret.models {
            for m in sel {
                if !names.contains(m) {
                    bail!("interpret.models names unknown model `{m}`");
                }
            }
        }
        for s in &self.interpret.sensitivity {
            if !(s.delta.is_finite() && s.delta != 0.0) {
                bail!("sensitivity `{}`: delta must be finite and nonzero", s.variable);
            }
        }
        if let Some(v) = &self.interpret.value_of_time {
            let ok = self
                .interpret
                .sensitivity
                .iter()
                .any(|s| s.variable == v.reference && s.measure == Measure::MarginalEffect);
            if !ok {
                bail!("value_of_time.reference `{}` has no marginal-effect request", v.reference);
            }
        }
        Ok(())
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(NamedModel::name).collect()
    }

    /// Hash of everything that determines results (the output directory is
    /// excluded).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        hash_json(&c)
    }
}

pub fn hash_json<T: Serialize>(v: &T) -> String {
    let bytes = serde_json::to_vec(v).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub generator: GeneratorConfig,
}

impl SynthConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: SynthConfig = toml::from_str(&text).with_context(|| format!("in {}", path.display()))?;
        cfg.generator.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = r#"
seed = 7

[data]
path = "data.csv"

[[models]]
type = "mnl"
[models.utility]
terms = [{ feature = "x", coef = "b_x" }]
constants = [{ alt = "alt1", coef = "asc1" }]

[[models]]
type = "random_forest"
n_trees = 50

[[models]]
name = "forest2"
type = "random_forest"

[crossval]
k = 5

[[interpret.sensitivity]]
variable = "wait"
column = "x_alt1"
target = "alt1"
measure = "marginal_effect"
delta = 2
unit = "min"

[interpret.value_of_time]
reference = "wait"
"#;

    #[test]
    fn parses_with_defaults() {
        let c = RunConfig::from_toml(CFG).unwrap();
        assert_eq!(c.model_names(), vec!["mnl", "rf", "forest2"]);
        match &c.models[2].spec {
            ModelSpec::RandomForest { n_trees, mtry, .. } => assert_eq!((*n_trees, *mtry), (500, 12)),
            _ => panic!(),
        }
        assert!(c.interpret.importance);
        assert_eq!(c.data.columns.obs_id, "obs_id");
    }

    #[test]
    fn validation() {
        assert!(RunConfig::from_toml(&CFG.replace("k = 5", "k = 1")).is_err());
        assert!(RunConfig::from_toml(&CFG.replace("\"forest2\"", "\"rf\"")).is_err());
        assert!(RunConfig::from_toml(&CFG.replace("reference = \"wait\"", "reference = \"tt\"")).is_err());
        assert!(RunConfig::from_toml(&CFG.replace("[crossval]", "[crossval]\nfolds = 3")).is_err());
    }

    #[test]
    fn fingerprint_ignores_output_directory() {
        let a = RunConfig::from_toml(CFG).unwrap();
        let mut b = a.clone();
        b.out = Some("elsewhere".into());
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.crossval.k = 3;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
