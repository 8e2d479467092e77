//! Run configuration: one JSON file, `--set` dotted-path overrides, and
//! seed derivation.
//!
//! Every section is optional; commands demand what they need. `--set a.b=v`
//! edits the JSON tree before deserialization, parsing `v` as JSON when it
//! is valid JSON and as a bare string otherwise, so
//! `--set noise.pattern=mixture` and `--set train.epochs=300` both work.
//!
//! `--seed N` rederives the per-section seeds as
//! `substream(N, fnv1a64(section))` for sections "train" and "noise",
//! overriding whatever the file says; one flag reseeds the whole run while
//! keeping the sections' streams independent.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use hdst_core::noise::NoiseSpec;
use hdst_core::rng::{fnv1a64, substream};
use hdst_core::tensor::LrSchedule;
use hdst_core::ModelConfig;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<ModelConfig>,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub clean: Option<PathBuf>,
    #[serde(default)]
    pub noisy: Option<PathBuf>,
    #[serde(default = "d_patch")]
    pub patch_size: usize,
    #[serde(default = "d_patch")]
    pub stride: usize,
    #[serde(default)]
    pub augment: bool,
    /// Square tile edge for whole-cube inference.
    #[serde(default = "d_tile")]
    pub tile: usize,
    #[serde(default = "d_overlap")]
    pub overlap: usize,
}

fn d_patch() -> usize {
    64
}
fn d_tile() -> usize {
    64
}
fn d_overlap() -> usize {
    16
}

impl Default for DataConfig {
    fn default() -> DataConfig {
        DataConfig {
            clean: None,
            noisy: None,
            patch_size: d_patch(),
            stride: d_patch(),
            augment: false,
            tile: d_tile(),
            overlap: d_overlap(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "d_epochs")]
    pub epochs: u64,
    #[serde(default = "d_batch")]
    pub batch_size: usize,
    #[serde(default = "d_lr")]
    pub lr: LrSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub checkpoint: Option<PathBuf>,
    #[serde(default = "d_interval")]
    pub checkpoint_interval: u64,
    #[serde(default)]
    pub loss_log: Option<PathBuf>,
    #[serde(default)]
    pub resume: bool,
}

fn d_epochs() -> u64 {
    100
}
fn d_batch() -> usize {
    4
}
fn d_lr() -> LrSchedule {
    LrSchedule::constant(1e-4)
}
fn d_interval() -> u64 {
    50
}

impl Default for TrainSection {
    fn default() -> TrainSection {
        TrainSection {
            epochs: d_epochs(),
            batch_size: d_batch(),
            lr: d_lr(),
            seed: 0,
            checkpoint: None,
            checkpoint_interval: d_interval(),
            loss_log: None,
            resume: false,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Dynamic range; defaults to the reference cube's maximum.
    #[serde(default)]
    pub peak: Option<f64>,
    /// Report path prefix; `.json` and `.txt` are appended.
    #[serde(default)]
    pub report: Option<PathBuf>,
    /// Cube under test; defaults to the denoise output in `--out`.
    #[serde(default)]
    pub test: Option<PathBuf>,
    /// Ground truth; defaults to `data.clean`.
    #[serde(default)]
    pub reference: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<RunConfig> {
        let mut tree: Value = match path {
            Some(p) => {
                let text = fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        for kv in sets {
            apply_set(&mut tree, kv)?;
        }
        let mut cfg: RunConfig =
            serde_json::from_value(tree).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(seed) = seed {
            cfg.train.seed = substream(seed, fnv1a64("train"));
            if let Some(noise) = &mut cfg.noise {
                noise.seed = substream(seed, fnv1a64("noise"));
            }
        }
        cfg.train.lr.validate()?;
        if let Some(model) = &cfg.model {
            model.validate()?;
        }
        if let Some(noise) = &cfg.noise {
            noise.validate()?;
        }
        Ok(cfg)
    }

    pub fn model_required(&self) -> Result<&ModelConfig> {
        self.model
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `model` section".into()))
    }

    pub fn noise_required(&self) -> Result<&NoiseSpec> {
        self.noise
            .as_ref()
            .ok_or_else(|| CliError::Config("missing `noise` section".into()))
    }
}

pub fn path_required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| CliError::Config(format!("missing `{key}` path")))
}

fn apply_set(tree: &mut Value, kv: &str) -> Result<()> {
    let (key, raw) = kv
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set expects key=value, got {kv:?}")))?;
    let leaf: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.into()));
    let mut cursor = tree;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let map = cursor.as_object_mut().ok_or_else(|| {
            CliError::Config(format!("--set {key}: {part} is not an object"))
        })?;
        if i + 1 == parts.len() {
            map.insert((*part).to_string(), leaf);
            return Ok(());
        }
        cursor = map
            .entry(*part)
            .or_insert_with(|| Value::Object(Default::default()));
    }
    Err(CliError::Config(format!("--set {key}: empty key")))
}
