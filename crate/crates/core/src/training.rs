//! Objective, optimizer and training loop.
//!
//! Each step runs a clean pass and, when the noise regularizer is active, one
//! perturbed pass per noise draw through the noisy input projection. The loss is
//! the mean next-item cross-entropy over real positions plus `λ` times the
//! weighted per-token squared distance between clean and perturbed layer outputs.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::config::{OptimizerKind, TrainConfig};
use crate::corpus::{make_batches, Event, SequenceBatch, SplitCorpus};
use crate::encoder::{attention_mask, bind, Dropout, NoiseDraw};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, Protocol, Target};
use crate::exec::{Clock, Executor};
use crate::matrix::Matrix;
use crate::model::{Model, ModelConfig, ParamStore};
use crate::noisereg::sample_noise;
use crate::rng::{stream, Purpose};
use crate::tape::Tape;

/// Rows per reduction chunk; fixed so sums do not depend on the executor.
const CHUNK: usize = 8;

/// Mean cross-entropy over real target positions, softmax over items `1..|V|`.
///
/// `logits[b]` is `N×|V|`; `targets` is `B×N` flattened with `0` at padded positions.
pub fn task_loss(logits: &[Matrix], targets: &[u32], pad_mask: &[bool]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let n = logits.first().map_or(0, |m| m.rows());
    for (b, l) in logits.iter().enumerate() {
        for r in 0..n {
            let idx = b * n + r;
            if !pad_mask[idx] {
                continue;
            }
            let t = targets[idx] as usize;
            if t == 0 || t >= l.cols() {
                return Err(Error::Protocol(format!("target {t} at real position {idx} outside 1..{}", l.cols())));
            }
            let row = &l.row(r)[1..];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + libm::log(row.iter().map(|v| libm::exp(v - max)).sum::<f64>());
            total += lse - l.get(r, t);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Protocol("batch has no real targets".into()));
    }
    Ok(total / count as f64)
}

/// Everything a batch objective needs besides parameters and data.
#[derive(Clone, Debug)]
pub struct ObjectiveSpec<'a> {
    pub lambda: f64,
    pub layer_weights: &'a [f64],
    pub draws: &'a [NoiseDraw],
    pub dropout: f64,
    pub dropout_seed: u64,
    pub step: u64,
}

/// Value and gradient of the objective over one batch.
#[derive(Clone, Debug)]
pub struct BatchGradient {
    pub task_loss: f64,
    pub lnsr: f64,
    pub grads: Vec<Matrix>,
}

impl BatchGradient {
    pub fn total(&self, lambda: f64) -> f64 {
        self.task_loss + lambda * self.lnsr
    }

    pub fn grad_norms(&self) -> Vec<f64> {
        self.grads.iter().map(|g| libm::sqrt(g.sum_squares())).collect()
    }
}

struct Partial {
    ce: f64,
    r: f64,
    grads: Option<Vec<Matrix>>,
}

fn row_objective(model: &Model, batch: &SequenceBatch, b: usize, spec: &ObjectiveSpec<'_>, n_tok: f64, acc: &mut Partial) -> Result<()> {
    let seq = batch.row(b);
    let real: Vec<usize> = (0..seq.len()).filter(|&i| seq.real[i]).collect();
    if real.is_empty() {
        return Ok(());
    }
    let targets: Vec<usize> = real.iter().map(|&i| batch.row_targets(b)[i] as usize).collect();
    let mut tape = Tape::new();
    let vars = bind(&mut tape, &model.params);
    let inputs = model.kernel_inputs(&mut tape, &vars, &seq)?;
    let mask = Rc::new(attention_mask(&seq.real));
    let mut dropout = Dropout::new(spec.dropout, stream(spec.dropout_seed, Purpose::Dropout, spec.step, b as u64));
    let clean = model.encode(&mut tape, &vars, &seq, &inputs, &mask, None, None, &mut dropout);
    let h = tape.gather(clean.hidden, real.clone());
    let logits = tape.matmul_t(h, vars[model.layout.item_emb.index()]);
    let mut total = tape.cross_entropy(logits, targets, 1.0 / n_tok);
    acc.ce += tape.value(total).item();
    if spec.lambda > 0.0 && model.mode.noise_enabled() && !spec.draws.is_empty() {
        let per = 1.0 / (n_tok * spec.draws.len() as f64);
        for draw in spec.draws {
            dropout.rewind();
            let noisy = model.encode(&mut tape, &vars, &seq, &inputs, &mask, Some(draw), None, &mut dropout);
            for (l, &w) in spec.layer_weights.iter().enumerate() {
                if w == 0.0 {
                    continue;
                }
                let d = tape.sub(noisy.taps[l], clean.taps[l]);
                let d = tape.gather(d, real.clone());
                let term = tape.sum_squares(d, w * per);
                acc.r += tape.value(term).item();
                let term = tape.scale(term, spec.lambda);
                total = tape.add(total, term);
            }
        }
    }
    let mut grads = tape.backward(total);
    let sums = acc.grads.get_or_insert_with(|| model.params.tensors().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect());
    for (i, s) in sums.iter_mut().enumerate() {
        if let Some(g) = grads.take(vars[i]) {
            s.add_assign(&g);
        }
    }
    Ok(())
}

/// Objective and gradient over a batch; rows are reduced in fixed chunks, in order.
pub fn batch_objective<E: Executor>(model: &Model, batch: &SequenceBatch, spec: &ObjectiveSpec<'_>, exec: &E) -> Result<BatchGradient> {
    let n_tok = batch.n_real();
    if n_tok == 0 {
        return Err(Error::Protocol("batch has no real targets".into()));
    }
    if spec.layer_weights.len() != model.layout.layers.len() {
        return Err(Error::Shape(format!("{} layer weights for {} layers", spec.layer_weights.len(), model.layout.layers.len())));
    }
    let chunks = batch.batch_size.div_ceil(CHUNK);
    let partials = exec.map(chunks, |c| {
        let mut acc = Partial { ce: 0.0, r: 0.0, grads: None };
        for b in c * CHUNK..((c + 1) * CHUNK).min(batch.batch_size) {
            row_objective(model, batch, b, spec, n_tok as f64, &mut acc)?;
        }
        Ok::<_, Error>(acc)
    });
    let mut out = BatchGradient {
        task_loss: 0.0,
        lnsr: 0.0,
        grads: model.params.tensors().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
    };
    for p in partials {
        let p = p?;
        out.task_loss += p.ce;
        out.lnsr += p.r;
        if let Some(g) = p.grads {
            for (o, g) in out.grads.iter_mut().zip(&g) {
                o.add_assign(g);
            }
        }
    }
    Ok(out)
}

/// Noise draws for one step, each clipped to Euclidean norm `delta` as a whole.
pub fn sample_draws(d: usize, samples: usize, delta: f64, seed: u64, step: u64) -> Vec<NoiseDraw> {
    (0..samples)
        .map(|s| {
            let mut rng = stream(seed, Purpose::Noise, step, s as u64);
            let mut eps = sample_noise(d * d + d, &mut rng, delta);
            let eps_b = eps.split_off(d * d);
            NoiseDraw { eps_w: Matrix::from_vec(d, d, eps), eps_b: Matrix::from_vec(1, d, eps_b) }
        })
        .collect()
}

/// Adam (with bias correction) or plain SGD.
#[derive(Clone, Debug, PartialEq)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub steps: u64,
    pub m: Vec<Matrix>,
    pub v: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, params: &ParamStore) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate: {learning_rate} must be positive")));
        }
        let zeros = || -> Vec<Matrix> {
            match kind {
                OptimizerKind::Adam => params.tensors().iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
                OptimizerKind::Sgd => Vec::new(),
            }
        };
        Ok(Self { kind, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, steps: 0, m: zeros(), v: zeros() })
    }

    pub fn step(&mut self, params: &mut [Matrix], grads: &[Matrix]) {
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, d) in p.data_mut().iter_mut().zip(g.data()) {
                        *x -= lr * d;
                    }
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (self.beta1, self.beta2);
                let c1 = 1.0 - libm::pow(b1, self.steps as f64);
                let c2 = 1.0 - libm::pow(b2, self.steps as f64);
                for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
                    let (p, m, v) = (p.data_mut(), m.data_mut(), v.data_mut());
                    for i in 0..p.len() {
                        let d = g.data()[i];
                        m[i] = b1 * m[i] + (1.0 - b1) * d;
                        v[i] = b2 * v[i] + (1.0 - b2) * d * d;
                        p[i] -= lr * (m[i] / c1) / (libm::sqrt(v[i] / c2) + self.epsilon);
                    }
                }
            }
        }
    }
}

pub fn make_optimizer(cfg: &TrainConfig, params: &ParamStore) -> Result<Optimizer> {
    Optimizer::new(cfg.optimizer, cfg.learning_rate, params)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub task_loss: f64,
    pub lnsr: f64,
}

/// One optimizer step on `task_loss + λ·R`; streams are keyed by the global `step`.
pub fn train_step<E: Executor>(model: &mut Model, opt: &mut Optimizer, batch: &SequenceBatch, cfg: &TrainConfig, step: u64, exec: &E) -> Result<StepStats> {
    let weights = cfg.lnsr.weights(cfg.layers);
    let draws = if cfg.lambda > 0.0 && model.mode.noise_enabled() {
        sample_draws(cfg.d_model, cfg.lnsr.samples, cfg.lnsr.delta, cfg.seeds.noise, step)
    } else {
        Vec::new()
    };
    let spec = ObjectiveSpec { lambda: cfg.lambda, layer_weights: &weights, draws: &draws, dropout: cfg.dropout, dropout_seed: cfg.seeds.dropout, step };
    let bg = batch_objective(model, batch, &spec, exec)?;
    let total = bg.total(cfg.lambda);
    if !total.is_finite() || bg.grads.iter().any(|g| !g.is_finite()) {
        let norms = bg.grad_norms();
        let mut worst: Vec<(String, f64)> = model.params.names().iter().cloned().zip(norms).collect();
        worst.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(core::cmp::Ordering::Less));
        worst.truncate(5);
        return Err(Error::Numerical(format!(
            "step {step}: non-finite objective (task {}, lnsr {}, lambda {}); largest gradient norms {:?}",
            bg.task_loss, bg.lnsr, cfg.lambda, worst
        )));
    }
    opt.step(model.params.tensors_mut(), &bg.grads);
    Ok(StepStats { task_loss: bg.task_loss, lnsr: bg.lnsr })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub task_loss: f64,
    pub lnsr: f64,
    pub val_ndcg10: f64,
    pub wall_clock_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub checkpoint_id: String,
}

/// Best-validation model with its optimizer state, plus the report.
#[derive(Clone, Debug)]
pub struct Fitted {
    pub model: Model,
    pub optimizer: Optimizer,
    pub report: TrainReport,
}

pub fn checkpoint_id(params: &ParamStore) -> String {
    format!("{:016x}", params.fingerprint())
}

/// Trains for `cfg.epochs` epochs over the corpus' training prefixes, keeping the
/// parameters with the best validation NDCG@10 (ties keep the earlier epoch).
pub fn fit<E: Executor, C: Clock>(cfg: &TrainConfig, corpus: &SplitCorpus, exec: &E, clock: &C) -> Result<Fitted> {
    cfg.validate()?;
    if corpus.users.is_empty() {
        return Err(Error::EmptyCorpus("no users with at least three interactions".into()));
    }
    let mut model = Model::new(ModelConfig::from_train(cfg, corpus.n_items, corpus.min_timestamp)?, cfg.seeds.init)?;
    let mut opt = make_optimizer(cfg, &model.params)?;
    let rows: Vec<(u32, &[Event])> = corpus.users.iter().map(|u| (u.user, u.train.as_slice())).collect();
    let mut eval_cfg = cfg.eval.clone();
    if !eval_cfg.ks.contains(&10) {
        eval_cfg.ks.push(10);
    }
    let mut best: Option<(f64, Model, Optimizer)> = None;
    let mut report = TrainReport { epochs: Vec::new(), best_epoch: None, checkpoint_id: String::new() };
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        let start = clock.seconds();
        let batches = make_batches(&rows, cfg.max_len, cfg.batch_size, cfg.seeds.shuffle, epoch as u64)?;
        let (mut loss, mut r, mut n) = (0.0, 0.0, 0usize);
        for batch in &batches {
            let s = train_step(&mut model, &mut opt, batch, cfg, step, exec)?;
            loss += s.task_loss;
            r += s.lnsr;
            n += 1;
            step += 1;
        }
        let val = evaluate(&model, corpus, &eval_cfg, cfg.seeds.negatives, Target::Validation, Protocol::Standard, exec)?;
        let ndcg10 = val.ndcg[&10];
        let denom = n.max(1) as f64;
        report.epochs.push(EpochRecord { epoch: epoch + 1, task_loss: loss / denom, lnsr: r / denom, val_ndcg10: ndcg10, wall_clock_secs: clock.seconds() - start });
        if best.as_ref().is_none_or(|(b, _, _)| ndcg10 > *b) {
            best = Some((ndcg10, model.clone(), opt.clone()));
            report.best_epoch = Some(epoch + 1);
        }
    }
    let (model, optimizer) = match best {
        Some((_, m, o)) => (m, o),
        None => (model, opt),
    };
    report.checkpoint_id = checkpoint_id(&model.params);
    Ok(Fitted { model, optimizer, report })
}
