//! Experiment configuration: one JSON document with data, sampling, model,
//! training and evaluation sections. Unknown keys are rejected everywhere.

use std::path::Path;

use pgdl_core::model::ModelConfig;
use pgdl_core::sampling::AcsPolicy;
use pgdl_core::train::{AdamConfig, LossWeights, TrainConfig, TrainSeeds};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub height: usize,
    pub width: usize,
    pub coils: usize,
    pub n_train: usize,
    pub n_test: usize,
    /// Complex Gaussian noise std per component on the fully sampled k-space.
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { height: 64, width: 64, coils: 4, n_train: 100, n_test: 20, noise_sigma: 0.01, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pattern {
    #[default]
    Uniform,
    Random,
}

/// The part of the sampling section that defines the acquired mask Ω.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub pattern: Pattern,
    pub accel: usize,
    pub n_acs: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplingConfig {
    pub pattern: Pattern,
    /// Acceleration rate R.
    pub accel: usize,
    pub n_acs: usize,
    /// Subsets per slice during training; 1 is conventional training.
    pub k: usize,
    pub rho: f64,
    pub acs_policy: AcsPolicy,
    /// Seeds random parent masks and the training subsets.
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        Self { pattern: Pattern::Uniform, accel: 4, n_acs: 8, k: 1, rho: 0.6, acs_policy: AcsPolicy::KeepAcs, seed: 0 }
    }
}

impl SamplingConfig {
    pub fn acquisition(&self) -> Acquisition {
        Acquisition { pattern: self.pattern, accel: self.accel, n_acs: self.n_acs, seed: self.seed }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub lr: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub resample_masks: bool,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    pub loss: LossWeights,
    pub adam: AdamConfig,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            epochs: 30,
            batch_size: 1,
            resample_masks: false,
            init_seed: 0,
            shuffle_seed: 0,
            loss: LossWeights::default(),
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Root for `compare` outputs; relative paths resolve against `PGDL_OUTPUT_ROOT`.
    pub output_dir: String,
    pub cg_sense_iters: usize,
    pub cg_sense_lambda: f64,
    /// Mask counts swept by `compare`.
    pub compare_k: Vec<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { output_dir: "runs".into(), cg_sense_iters: 30, cg_sense_lambda: 0.0, compare_k: vec![1, 3, 5, 7] }
    }
}

fn default_model() -> ModelConfig {
    ModelConfig { blocks: 1, features: 8, ..ModelConfig::default() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub sampling: SamplingConfig,
    #[serde(default = "default_model")]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub eval: EvalConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataConfig::default(),
            sampling: SamplingConfig::default(),
            model: default_model(),
            train: TrainSection::default(),
            eval: EvalConfig::default(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.height < 16 || d.width < 16 {
            return Err(bad(format!("images must be at least 16×16, got {}×{}", d.height, d.width)));
        }
        if d.coils == 0 {
            return Err(bad("coils must be at least 1"));
        }
        if !(d.noise_sigma >= 0.0 && d.noise_sigma.is_finite()) {
            return Err(bad(format!("noise_sigma {} must be non-negative", d.noise_sigma)));
        }
        let s = &self.sampling;
        if s.accel == 0 || s.n_acs > d.width {
            return Err(bad(format!("accel {} / n_acs {} invalid for width {}", s.accel, s.n_acs, d.width)));
        }
        if self.eval.cg_sense_iters == 0 || !(self.eval.cg_sense_lambda >= 0.0) {
            return Err(bad("cg_sense_iters must be ≥ 1 and cg_sense_lambda ≥ 0"));
        }
        if self.eval.compare_k.iter().any(|&k| k == 0) {
            return Err(bad("compare_k entries must be ≥ 1"));
        }
        self.train_config().validate().map_err(|e| bad(e.to_string()))
    }

    /// The training configuration with `k` subsets per slice.
    pub fn train_config_with_k(&self, k: usize) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            k,
            rho: self.sampling.rho,
            acs_policy: self.sampling.acs_policy,
            lr: t.lr,
            epochs: t.epochs,
            batch_size: t.batch_size,
            resample_masks: t.resample_masks,
            seeds: TrainSeeds { init: t.init_seed, mask: self.sampling.seed, shuffle: t.shuffle_seed },
            loss: t.loss,
            adam: t.adam,
            model: self.model.clone(),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        self.train_config_with_k(self.sampling.k)
    }

    /// Parses a JSON document, applies `key.path=value` overrides and validates.
    pub fn from_json(text: &str, overrides: &[String]) -> Result<Self> {
        let mut value: Value = serde_json::from_str(text).map_err(|e| bad(format!("invalid JSON: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|e| bad(format!("{}: {e}", p.display())))?,
            None => "{}".to_string(),
        };
        Self::from_json(&text, overrides)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Sets `a.b.c` in a JSON object. The value is parsed as JSON when possible,
/// otherwise taken as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| bad(format!("override `{assignment}` lacks `=`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let keys: Vec<&str> = path.split('.').collect();
    for (i, key) in keys.iter().enumerate() {
        let obj = node.as_object_mut().ok_or_else(|| bad(format!("`{path}`: `{key}` is not inside an object")))?;
        if i + 1 == keys.len() {
            obj.insert((*key).to_string(), value);
            return Ok(());
        }
        node = obj.entry((*key).to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    Err(bad("empty override path"))
}
