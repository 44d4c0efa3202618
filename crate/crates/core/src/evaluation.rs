//! Ranking metrics, the leave-one-out protocol, span-masking robustness and
//! multi-seed aggregation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::config::{EvalConfig, TrainConfig};
use crate::corpus::{sample_negatives, Event, SeqInput, SplitCorpus};
use crate::error::{Error, Result};
use crate::exec::{Clock, Executor};
use crate::model::Model;
use crate::rng::{stream, Purpose};

/// Scores candidate items given one left-padded input row.
pub trait Scorer: Sync {
    fn max_len(&self) -> usize;
    fn score(&self, input: &SeqInput, candidates: &[u32]) -> Result<Vec<f64>>;
}

impl Scorer for Model {
    fn max_len(&self) -> usize {
        self.config.max_len
    }

    fn score(&self, input: &SeqInput, candidates: &[u32]) -> Result<Vec<f64>> {
        let last = input.last_real().ok_or_else(|| Error::Protocol("input has no real position".into()))?;
        let hidden = self.hidden_states(input)?;
        let h = hidden.row(last);
        let table = self.item_table();
        Ok(candidates.iter().map(|&c| table.row(c as usize).iter().zip(h).map(|(a, b)| a * b).sum()).collect())
    }
}

/// Scores items by their frequency in the training sequences.
#[derive(Clone, Debug)]
pub struct Popularity {
    counts: Vec<f64>,
    max_len: usize,
}

impl Popularity {
    pub fn fit(corpus: &SplitCorpus, max_len: usize) -> Self {
        let mut counts = alloc::vec![0.0; corpus.n_items + 1];
        for u in &corpus.users {
            for e in &u.train {
                counts[e.item as usize] += 1.0;
            }
        }
        Self { counts, max_len }
    }
}

impl Scorer for Popularity {
    fn max_len(&self) -> usize {
        self.max_len
    }

    fn score(&self, _input: &SeqInput, candidates: &[u32]) -> Result<Vec<f64>> {
        Ok(candidates.iter().map(|&c| self.counts.get(c as usize).copied().unwrap_or(0.0)).collect())
    }
}

/// `1 +` the number of candidates scoring strictly higher than the target, plus
/// the number of other candidates tied with it.
pub fn rank_of_target(scores: &[f64], target: usize) -> Result<usize> {
    let t = *scores.get(target).ok_or_else(|| Error::Protocol(format!("target index {target} not among {} candidates", scores.len())))?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite candidate score".into()));
    }
    Ok(1 + scores.iter().enumerate().filter(|&(i, &s)| i != target && s >= t).count())
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / libm::log2(rank as f64 + 1.0)
    } else {
        0.0
    }
}

pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Protocol {
    Standard,
    Ood { fraction: f64 },
}

/// Which held-out item is ranked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Validation,
    Test,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricStd {
    pub ndcg: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ndcg: BTreeMap<usize, f64>,
    pub recall: BTreeMap<usize, f64>,
    pub n_users: usize,
    pub protocol: Protocol,
    pub seeds: Vec<u64>,
    /// Population standard deviation across seeds; present iff at least two seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std: Option<MetricStd>,
}

/// Length of the masked span for a sequence of `len` real positions.
pub fn span_len(len: usize, fraction: f64) -> usize {
    let raw = libm::ceil(fraction * len as f64 - 1e-9);
    if raw <= 0.0 {
        0
    } else {
        (raw as usize).min(len.saturating_sub(1))
    }
}

/// Marks a contiguous span of real positions as padding; the span never reaches
/// the most recent position. Returns the masked `(start, len)` in real-position units.
pub fn mask_span(input: &mut SeqInput, fraction: f64, seed: u64, user: u32) -> (usize, usize) {
    let positions: Vec<usize> = (0..input.len()).filter(|&i| input.real[i]).collect();
    let span = span_len(positions.len(), fraction);
    if span == 0 {
        return (0, 0);
    }
    let start = stream(seed, Purpose::Mask, user as u64, 0).random_range(0..=positions.len() - 1 - span);
    for &p in &positions[start..start + span] {
        input.items[p] = 0;
        input.real[p] = false;
    }
    (start, span)
}

fn context_and_target(corpus: &SplitCorpus, i: usize, target: Target) -> (Vec<Event>, u32) {
    let u = &corpus.users[i];
    match target {
        Target::Validation => (u.train.clone(), u.val_target.item),
        Target::Test => (u.test_context(), u.test_target.item),
    }
}

fn excluded(corpus: &SplitCorpus, i: usize, target_item: u32, cfg: &EvalConfig) -> BTreeSet<u32> {
    if cfg.exclude_history {
        corpus.users[i].history()
    } else {
        BTreeSet::from([target_item])
    }
}

fn seed_for(target: Target, seed: u64) -> u64 {
    match target {
        Target::Test => seed,
        Target::Validation => seed ^ 0x5641_4c49_4441_5445,
    }
}

/// Per-user target rank, or `None` when the user is skipped.
fn user_rank<S: Scorer>(scorer: &S, corpus: &SplitCorpus, i: usize, cfg: &EvalConfig, seed: u64, target: Target, protocol: Protocol) -> Result<Option<usize>> {
    let (context, target_item) = context_and_target(corpus, i, target);
    let user = corpus.users[i].user;
    let mut input = SeqInput::from_events(&context, scorer.max_len());
    if let Protocol::Ood { fraction } = protocol {
        if input.n_real() < 2 {
            return Ok(None);
        }
        mask_span(&mut input, fraction, seed, user);
    }
    let negatives = sample_negatives(user, cfg.negatives, corpus.n_items as u32, &excluded(corpus, i, target_item, cfg), seed_for(target, seed))?;
    let mut candidates = Vec::with_capacity(negatives.len() + 1);
    candidates.push(target_item);
    candidates.extend(negatives);
    let scores = scorer.score(&input, &candidates)?;
    rank_of_target(&scores, 0).map(Some)
}

/// Mean NDCG@k and Recall@k over users; negatives and masking spans are keyed by `seed`.
pub fn evaluate<S: Scorer, E: Executor>(scorer: &S, corpus: &SplitCorpus, cfg: &EvalConfig, seed: u64, target: Target, protocol: Protocol, exec: &E) -> Result<MetricsReport> {
    if let Protocol::Ood { fraction } = protocol {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::Config(format!("mask fraction {fraction} must lie in [0, 1)")));
        }
    }
    let ranks = exec.map(corpus.users.len(), |i| user_rank(scorer, corpus, i, cfg, seed, target, protocol));
    let mut ndcg: BTreeMap<usize, f64> = cfg.ks.iter().map(|&k| (k, 0.0)).collect();
    let mut recall = ndcg.clone();
    let mut n_users = 0;
    for r in ranks {
        let Some(rank) = r? else { continue };
        n_users += 1;
        for &k in &cfg.ks {
            *ndcg.get_mut(&k).unwrap() += ndcg_at_k(rank, k);
            *recall.get_mut(&k).unwrap() += recall_at_k(rank, k);
        }
    }
    if n_users == 0 {
        return Err(Error::EmptyCorpus("no users to evaluate".into()));
    }
    for v in ndcg.values_mut().chain(recall.values_mut()) {
        *v /= n_users as f64;
    }
    Ok(MetricsReport { ndcg, recall, n_users, protocol, seeds: alloc::vec![seed], std: None })
}

/// Test-set evaluation with a contiguous fraction of each input masked out.
pub fn ood_mask_eval<S: Scorer, E: Executor>(scorer: &S, corpus: &SplitCorpus, cfg: &EvalConfig, fraction: f64, seed: u64, exec: &E) -> Result<MetricsReport> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("mask fraction {fraction} must lie in (0, 1)")));
    }
    evaluate(scorer, corpus, cfg, seed, Target::Test, Protocol::Ood { fraction }, exec)
}

/// Per-metric mean and population standard deviation over per-seed reports.
pub fn aggregate(reports: &[MetricsReport], seeds: &[u64]) -> Result<MetricsReport> {
    let first = reports.first().ok_or_else(|| Error::Protocol("no reports to aggregate".into()))?;
    let n = reports.len() as f64;
    let stat = |pick: &dyn Fn(&MetricsReport) -> &BTreeMap<usize, f64>| {
        let mut mean = BTreeMap::new();
        let mut std = BTreeMap::new();
        for &k in pick(first).keys() {
            let vals: Vec<f64> = reports.iter().map(|r| pick(r)[&k]).collect();
            let m = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            mean.insert(k, m);
            std.insert(k, libm::sqrt(var));
        }
        (mean, std)
    };
    let (ndcg, ndcg_std) = stat(&|r| &r.ndcg);
    let (recall, recall_std) = stat(&|r| &r.recall);
    Ok(MetricsReport {
        ndcg,
        recall,
        n_users: first.n_users,
        protocol: first.protocol,
        seeds: seeds.to_vec(),
        std: (reports.len() >= 2).then_some(MetricStd { ndcg: ndcg_std, recall: recall_std }),
    })
}

/// Result of a multi-seed study: per-seed reports and their aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MultiSeedReport {
    pub per_seed: Vec<MetricsReport>,
    pub aggregate: MetricsReport,
}

/// Fits and tests one model per seed; the seed drives init, shuffling, dropout and noise.
pub fn multiseed_eval<E: Executor, C: Clock>(cfg: &TrainConfig, corpus: &SplitCorpus, seeds: &[u64], exec: &E, clock: &C) -> Result<MultiSeedReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("multiseed needs at least two seeds (got {})", seeds.len())));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &s in seeds {
        let mut c = cfg.clone();
        c.seeds = cfg.seeds.with_training_seed(s);
        let fitted = crate::training::fit(&c, corpus, exec, clock)?;
        let mut report = evaluate(&fitted.model, corpus, &c.eval, c.seeds.negatives, Target::Test, Protocol::Standard, exec)?;
        report.seeds = alloc::vec![s];
        per_seed.push(report);
    }
    let aggregate = aggregate(&per_seed, seeds)?;
    Ok(MultiSeedReport { per_seed, aggregate })
}
