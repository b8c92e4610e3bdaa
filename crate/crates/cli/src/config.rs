//! Resolved run configurations: a JSON file overlaid with command-line flags.

use std::path::{Path, PathBuf};

use irisforge::eval::{UtilityConfig, PAIR_BUDGET};
use irisforge::models::{ClassifierConfig, NetConfig};
use irisforge::toydata::ToyConfig;
use irisforge::training::TrainConfig;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const SNAPSHOT_FILE: &str = "resolved_config.json";

fn default_ids() -> usize {
    20
}
fn default_styles() -> usize {
    10
}
fn default_size() -> usize {
    64
}
fn default_synth_ids() -> usize {
    50
}
fn default_synth_styles() -> usize {
    5
}
fn default_budget() -> usize {
    PAIR_BUDGET
}
fn default_label() -> String {
    "data".into()
}
fn default_fraction() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MakeToyConfig {
    pub seed: u64,
    pub out: PathBuf,
    #[serde(default = "default_ids")]
    pub ids: usize,
    #[serde(default = "default_styles")]
    pub styles: usize,
    #[serde(default = "default_size")]
    pub size: usize,
    #[serde(default)]
    pub toy: ToyConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PretrainConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: PathBuf,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub classifier: ClassifierConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: PathBuf,
    /// Bundle with a frozen classifier.
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub checkpoint: PathBuf,
    /// Manifest of the images identities are minted from.
    pub source: PathBuf,
    #[serde(default = "default_synth_ids")]
    pub ids: usize,
    #[serde(default = "default_synth_styles")]
    pub styles: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub manifest: PathBuf,
    #[serde(default = "default_label")]
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UniquenessConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub real: PathBuf,
    pub synth: PathBuf,
    /// Defaults to `provenance.json` next to the synthetic manifest.
    #[serde(default)]
    pub provenance: Option<PathBuf>,
    #[serde(default = "default_budget")]
    pub pair_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UtilityRunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub synth: PathBuf,
    /// Real training manifest; with `test`, used as given.
    #[serde(default)]
    pub real_train: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Real manifest split by identity when `real_train`/`test` are absent.
    #[serde(default)]
    pub real: Option<PathBuf>,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub utility: UtilityConfig,
}

/// Set `value` at a dotted key, creating intermediate objects.
fn set_path(root: &mut Map<String, Value>, key: &str, value: Value) {
    match key.split_once('.') {
        None => {
            root.insert(key.to_string(), value);
        }
        Some((head, rest)) => {
            let entry = root.entry(head.to_string()).or_insert_with(|| Value::Object(Map::new()));
            if !entry.is_object() {
                *entry = Value::Object(Map::new());
            }
            set_path(entry.as_object_mut().expect("object"), rest, value);
        }
    }
}

/// Flag overrides keyed by dotted config path.
#[derive(Default)]
pub struct Overrides(Vec<(&'static str, Value)>);

impl Overrides {
    pub fn set<T: Serialize>(&mut self, key: &'static str, value: &Option<T>) -> &mut Self {
        if let Some(v) = value {
            self.0.push((key, serde_json::to_value(v).expect("flag values serialize")));
        }
        self
    }
}

/// Read the optional config file, apply flag overrides and deserialize.
pub fn resolve<R: DeserializeOwned>(file: Option<&Path>, overrides: &Overrides) -> Result<R, CliError> {
    let mut root = match file {
        None => Map::new(),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
            match serde_json::from_str(&text) {
                Ok(Value::Object(map)) => map,
                Ok(_) => return Err(CliError::Usage(format!("config {} must be a JSON object", path.display()))),
                Err(e) => return Err(CliError::Usage(format!("invalid config {}: {e}", path.display()))),
            }
        }
    };
    for (key, value) in &overrides.0 {
        set_path(&mut root, key, value.clone());
    }
    serde_json::from_value(Value::Object(root)).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
}

pub fn write_snapshot<T: Serialize>(out: &Path, cfg: &T) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Runtime(irisforge::error::io_err(out)(e)))?;
    let path = out.join(SNAPSHOT_FILE);
    let text = serde_json::to_string_pretty(cfg).expect("configs serialize");
    std::fs::write(&path, text).map_err(|e| CliError::Runtime(irisforge::error::io_err(&path)(e)))
}
