//! Central finite-difference verification of the full objective's gradient.

use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::corpus::{Event, SequenceBatch};
use crate::encoder::NoiseDraw;
use crate::error::Result;
use crate::exec::Sequential;
use crate::model::{Model, ModelConfig};
use crate::rng::{stream, Purpose};
use crate::training::{batch_objective, sample_draws, ObjectiveSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorError {
    pub name: String,
    pub rel_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorError>,
    pub worst: f64,
    pub worst_tensor: String,
    pub n_scalars: usize,
}

impl GradcheckReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.worst < tol
    }
}

/// `d_model 8`, two layers, `N = 4`, nine items plus padding, every kernel family and noise.
pub fn tiny_config() -> TrainConfig {
    let mut c = TrainConfig { mode: "p-b-s-l-r-o".into(), d_model: 8, head_dim: Some(2), layers: 2, d_ff: 12, max_len: 4, batch_size: 2, dropout: 0.0, lambda: 0.5, ..TrainConfig::default() };
    c.lnsr.layer_weights = alloc::vec![0.7, 1.3];
    c.lnsr.delta = 1.0;
    c.kernels.gaussian_sigma = 1.5;
    c.kernels.gaussian_mu = 0.5;
    c
}

pub const TINY_ITEMS: usize = 9;

/// Two rows: one full, one left-padded.
pub fn tiny_batch() -> SequenceBatch {
    let ev = |item: u32, h: i64| Event { item, timestamp: 1_500_000_000 + h * 3_700 };
    let a = [ev(3, 0), ev(7, 2), ev(1, 3), ev(9, 11), ev(4, 12)];
    let b = [ev(2, 5), ev(5, 30), ev(8, 31)];
    SequenceBatch::from_rows(&[(1, &a), (2, &b)], 4)
}

pub fn tiny_model(cfg: &TrainConfig, seed: u64) -> Result<Model> {
    let mut model = Model::new(ModelConfig::from_train(cfg, TINY_ITEMS, 1_500_000_000)?, seed)?;
    // Generic (non-symmetric, non-zero) values so every term contributes.
    let mut rng = stream(seed, Purpose::Init, 1, 0);
    let names: Vec<String> = model.params.names().to_vec();
    for (name, t) in names.iter().zip(model.params.tensors_mut()) {
        let noisy_scale = name.starts_with("noisy.sigma");
        for v in t.data_mut() {
            let u: f64 = rng.random();
            if noisy_scale {
                *v = 0.05 + 0.2 * u;
            } else {
                *v += 0.6 * (u - 0.5);
            }
        }
    }
    Ok(model)
}

/// Compares analytic gradients of `task + λ·R` with central differences at every scalar.
/// Each tensor's error is `‖g − ĝ‖ / max(‖g‖, ‖ĝ‖, 1e-10)`.
pub fn gradcheck(model: &Model, batch: &SequenceBatch, lambda: f64, layer_weights: &[f64], draws: &[NoiseDraw], h: f64) -> Result<GradcheckReport> {
    let spec = ObjectiveSpec { lambda, layer_weights, draws, dropout: 0.0, dropout_seed: 0, step: 0 };
    let analytic = batch_objective(model, batch, &spec, &Sequential)?.grads;
    let mut probe = model.clone();
    let mut tensors = Vec::new();
    let mut n_scalars = 0;
    for (t, g) in analytic.iter().enumerate() {
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for k in 0..g.len() {
            let orig = probe.params.tensors()[t].data()[k];
            probe.params.tensors_mut()[t].data_mut()[k] = orig + h;
            let up = batch_objective(&probe, batch, &spec, &Sequential)?.total(lambda);
            probe.params.tensors_mut()[t].data_mut()[k] = orig - h;
            let down = batch_objective(&probe, batch, &spec, &Sequential)?.total(lambda);
            probe.params.tensors_mut()[t].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = g.data()[k];
            diff += (a - numeric) * (a - numeric);
            na += a * a;
            nn += numeric * numeric;
            n_scalars += 1;
        }
        let denom = libm::sqrt(na).max(libm::sqrt(nn)).max(1e-10);
        tensors.push(TensorError { name: model.params.names()[t].clone(), rel_error: libm::sqrt(diff) / denom });
    }
    let (worst_tensor, worst) = tensors.iter().fold((String::new(), 0.0), |acc, e| if e.rel_error > acc.1 { (e.name.clone(), e.rel_error) } else { acc });
    Ok(GradcheckReport { tensors, worst, worst_tensor, n_scalars })
}

/// The built-in check: tiny model, tiny batch, one fixed noise draw, `h = 1e-5`.
pub fn builtin_gradcheck() -> Result<GradcheckReport> {
    let cfg = tiny_config();
    let model = tiny_model(&cfg, 11)?;
    let draws = sample_draws(cfg.d_model, 1, cfg.lnsr.delta, 5, 0);
    gradcheck(&model, &tiny_batch(), cfg.lambda, &cfg.lnsr.weights(cfg.layers), &draws, 1e-5)
}
