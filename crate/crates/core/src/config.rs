//! Training, kernel and evaluation configuration with materialized defaults.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{parse_mode_for, CalendarSpec, EmbeddingMode, Letter};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PositionalKind {
    Fixed,
    Learnable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    /// Unit time difference in seconds.
    pub tau_secs: f64,
    pub freq_base: f64,
    pub positional: PositionalKind,
    pub calendar: CalendarSpec,
    pub gaussian_mu: f64,
    pub gaussian_sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            tau_secs: 3600.0,
            freq_base: 10000.0,
            positional: PositionalKind::Learnable,
            calendar: CalendarSpec::default(),
            gaussian_mu: 0.0,
            gaussian_sigma: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LnsrConfig {
    /// First regularized layer, 1-based.
    pub first_layer: usize,
    /// Weight applied to every regularized layer unless `layer_weights` is given.
    pub layer_weight: f64,
    /// Optional explicit weights for layers `first_layer..=L`.
    pub layer_weights: Vec<f64>,
    /// Initial noise scale of the noisy input projection.
    pub sigma_init: f64,
    /// Euclidean bound on each sampled noise draw.
    pub delta: f64,
    /// Noise draws averaged per step.
    pub samples: usize,
}

impl Default for LnsrConfig {
    fn default() -> Self {
        Self { first_layer: 1, layer_weight: 1.0, layer_weights: Vec::new(), sigma_init: 0.017, delta: 5.0, samples: 1 }
    }
}

impl LnsrConfig {
    /// Weight of each layer `1..=layers`; zero below `first_layer`.
    pub fn weights(&self, layers: usize) -> Vec<f64> {
        (1..=layers)
            .map(|l| {
                if l < self.first_layer {
                    0.0
                } else if self.layer_weights.is_empty() {
                    self.layer_weight
                } else {
                    self.layer_weights[l - self.first_layer]
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub init: u64,
    pub shuffle: u64,
    pub dropout: u64,
    pub noise: u64,
    pub negatives: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self { init: 1, shuffle: 1, dropout: 1, noise: 1, negatives: 1 }
    }
}

impl Seeds {
    /// Drives every training stream from one seed; evaluation negatives stay fixed.
    pub fn with_training_seed(&self, seed: u64) -> Self {
        Self { init: seed, shuffle: seed, dropout: seed, noise: seed, negatives: self.negatives }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub negatives: usize,
    pub ks: Vec<usize>,
    /// Sample negatives outside the user's history (otherwise only the target is excluded).
    pub exclude_history: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { negatives: 100, ks: vec![1, 5, 10], exclude_history: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub path: Option<String>,
    pub format: Option<String>,
    pub min_count: usize,
    /// Keep only the first `max_users` users (in first-appearance order).
    pub max_users: Option<usize>,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self { path: None, format: None, min_count: 5, max_users: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: String,
    pub d_model: usize,
    /// Per-head width; `None` means `d_model / heads`.
    pub head_dim: Option<usize>,
    pub layers: usize,
    pub d_ff: usize,
    pub max_len: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub dropout: f64,
    /// Weight of the noise-stability term in the objective.
    pub lambda: f64,
    pub lnsr: LnsrConfig,
    pub kernels: KernelConfig,
    pub seeds: Seeds,
    pub eval: EvalConfig,
    pub data: DataConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: "p-s-l-e".into(),
            d_model: 64,
            head_dim: None,
            layers: 2,
            d_ff: 256,
            max_len: 50,
            batch_size: 128,
            epochs: 20,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            dropout: 0.2,
            lambda: 0.1,
            lnsr: LnsrConfig::default(),
            kernels: KernelConfig::default(),
            seeds: Seeds::default(),
            eval: EvalConfig::default(),
            data: DataConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn embedding_mode(&self) -> Result<EmbeddingMode> {
        parse_mode_for(&self.mode, self.d_model, self.head_dim)
    }

    pub fn head_width(&self) -> Result<usize> {
        self.embedding_mode()?.head_width(self.d_model, self.head_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, why: String| Err(Error::Config(format!("{key}: {why}")));
        let mode = self.embedding_mode().map_err(|e| Error::Config(format!("mode: {}", e.message())))?;
        let d_h = mode.head_width(self.d_model, self.head_dim)?;
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad("lambda", format!("{} outside [0, 1]", self.lambda));
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate", format!("{} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout", format!("{} outside [0, 1)", self.dropout));
        }
        if self.d_model == 0 || self.d_ff == 0 || self.layers == 0 {
            return bad("d_model/d_ff/layers", "must be positive".into());
        }
        if self.max_len < 2 {
            return bad("max_len", format!("{} < 2", self.max_len));
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive".into());
        }
        if (mode.has(Letter::B) || mode.has(Letter::S)) && d_h % 2 != 0 {
            return bad("head_dim", format!("periodic kernels need an even head width, got {d_h}"));
        }
        if mode.has(Letter::T) && d_h < self.kernels.calendar.units.len() {
            return bad("kernels.calendar.units", format!("{} units do not fit head width {d_h}", self.kernels.calendar.units.len()));
        }
        if mode.has(Letter::T) && self.kernels.calendar.units.is_empty() {
            return bad("kernels.calendar.units", "at least one unit required".into());
        }
        if !(self.kernels.tau_secs > 0.0) {
            return bad("kernels.tau_secs", format!("{} must be positive", self.kernels.tau_secs));
        }
        if !(self.kernels.freq_base > 1.0) {
            return bad("kernels.freq_base", format!("{} must exceed 1", self.kernels.freq_base));
        }
        if !(self.kernels.gaussian_sigma > 0.0) {
            return bad("kernels.gaussian_sigma", "must be positive".into());
        }
        let l = &self.lnsr;
        if l.first_layer < 1 || l.first_layer > self.layers {
            return bad("lnsr.first_layer", format!("{} outside 1..={}", l.first_layer, self.layers));
        }
        if !l.layer_weights.is_empty() && l.layer_weights.len() != self.layers - l.first_layer + 1 {
            return bad("lnsr.layer_weights", format!("expected {} weights", self.layers - l.first_layer + 1));
        }
        if l.layer_weight < 0.0 || l.layer_weights.iter().any(|w| !(*w >= 0.0)) {
            return bad("lnsr.layer_weights", "weights must be nonnegative".into());
        }
        if !(l.delta > 0.0) {
            return bad("lnsr.delta", "must be positive".into());
        }
        if !(l.sigma_init >= 0.0) {
            return bad("lnsr.sigma_init", "must be nonnegative".into());
        }
        if l.samples == 0 {
            return bad("lnsr.samples", "must be positive".into());
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return bad("eval.ks", "cutoffs must be positive".into());
        }
        if self.data.min_count == 0 {
            return bad("data.min_count", "must be positive".into());
        }
        Ok(())
    }
}
