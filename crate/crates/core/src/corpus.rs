//! Interaction logs to per-user chronological sequences, leave-one-out
//! splits, padded training batches and evaluation negatives.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};

/// One `(user, item, timestamp)` event; timestamps are seconds since the epoch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: impl Into<String>, item: impl Into<String>, timestamp: i64) -> Result<Self> {
        let (user, item) = (user.into(), item.into());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Ingest(format!("empty user or item id (user {user:?}, item {item:?})")));
        }
        if timestamp < 0 {
            return Err(Error::Ingest(format!("negative timestamp {timestamp}")));
        }
        Ok(Self { user, item, timestamp })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    /// Dense item index in `1..=n_items`; 0 is padding.
    pub item: u32,
    pub timestamp: i64,
}

/// Filtered corpus: dense vocabularies plus one chronological event list per user.
///
/// User `u` (1-based) owns `sequences[u - 1]`; item `i` maps back to `item_ids[i - 1]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserSequences {
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub sequences: Vec<Vec<Event>>,
}

impl UserSequences {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_actions(&self) -> usize {
        self.sequences.iter().map(Vec::len).sum()
    }

    pub fn min_timestamp(&self) -> i64 {
        self.sequences.iter().flatten().map(|e| e.timestamp).min().unwrap_or(0)
    }

    pub fn max_timestamp(&self) -> i64 {
        self.sequences.iter().flatten().map(|e| e.timestamp).max().unwrap_or(0)
    }

    /// Builds a corpus directly from dense sequences (item indices already in `1..=n_items`).
    pub fn from_dense(n_items: usize, sequences: Vec<Vec<Event>>) -> Self {
        Self {
            user_ids: (1..=sequences.len()).map(|u| format!("{u}")).collect(),
            item_ids: (1..=n_items).map(|i| format!("{i}")).collect(),
            sequences,
        }
    }

    /// Keeps only the first `n` users, re-indexing items to the ones they touch.
    pub fn take_users(&self, n: usize) -> Self {
        let mut remap: BTreeMap<u32, u32> = BTreeMap::new();
        let mut item_ids = Vec::new();
        let mut sequences = Vec::new();
        for seq in self.sequences.iter().take(n) {
            let mapped = seq
                .iter()
                .map(|e| {
                    let next = remap.len() as u32 + 1;
                    let idx = *remap.entry(e.item).or_insert_with(|| {
                        item_ids.push(self.item_ids[e.item as usize - 1].clone());
                        next
                    });
                    Event { item: idx, timestamp: e.timestamp }
                })
                .collect();
            sequences.push(mapped);
        }
        Self { user_ids: self.user_ids.iter().take(n).cloned().collect(), item_ids, sequences }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub n_users: usize,
    pub n_items: usize,
    pub n_actions: usize,
    pub avg_length: f64,
}

/// Iterative `min_count`-core filter, chronological per-user ordering and
/// first-appearance dense indexing.
pub fn build_sequences(interactions: &[Interaction], min_count: usize) -> Result<UserSequences> {
    if min_count == 0 {
        return Err(Error::Config("min_count must be at least 1".into()));
    }
    let mut user_intern: BTreeMap<&str, usize> = BTreeMap::new();
    let mut item_intern: BTreeMap<&str, usize> = BTreeMap::new();
    let mut rows = Vec::with_capacity(interactions.len());
    for it in interactions {
        let next_u = user_intern.len();
        let u = *user_intern.entry(it.user.as_str()).or_insert(next_u);
        let next_i = item_intern.len();
        let i = *item_intern.entry(it.item.as_str()).or_insert(next_i);
        rows.push((u, i));
    }

    let mut alive = vec![true; rows.len()];
    loop {
        let mut user_count = vec![0usize; user_intern.len()];
        let mut item_count = vec![0usize; item_intern.len()];
        for (&(u, i), _) in rows.iter().zip(&alive).filter(|(_, a)| **a) {
            user_count[u] += 1;
            item_count[i] += 1;
        }
        let mut changed = false;
        for (&(u, i), a) in rows.iter().zip(alive.iter_mut()) {
            if *a && (user_count[u] < min_count || item_count[i] < min_count) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut user_dense: Vec<Option<u32>> = vec![None; user_intern.len()];
    let mut item_dense: Vec<Option<u32>> = vec![None; item_intern.len()];
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut sequences: Vec<Vec<Event>> = Vec::new();
    for ((&(u, i), it), _) in rows.iter().zip(interactions).zip(&alive).filter(|(_, a)| **a) {
        let du = *user_dense[u].get_or_insert_with(|| {
            user_ids.push(it.user.clone());
            sequences.push(Vec::new());
            user_ids.len() as u32
        });
        let di = *item_dense[i].get_or_insert_with(|| {
            item_ids.push(it.item.clone());
            item_ids.len() as u32
        });
        sequences[du as usize - 1].push(Event { item: di, timestamp: it.timestamp });
    }
    if sequences.is_empty() {
        return Err(Error::EmptyCorpus(format!(
            "no interactions survive min_count = {min_count} filtering ({} raw records)",
            interactions.len()
        )));
    }
    for seq in &mut sequences {
        seq.sort_by_key(|e| e.timestamp);
    }
    Ok(UserSequences { user_ids, item_ids, sequences })
}

pub fn dataset_stats(sequences: &UserSequences) -> DatasetStats {
    let n_users = sequences.n_users();
    let n_actions = sequences.n_actions();
    DatasetStats {
        n_users,
        n_items: sequences.n_items(),
        n_actions,
        avg_length: if n_users == 0 { 0.0 } else { n_actions as f64 / n_users as f64 },
    }
}

/// Leave-one-out split of one user's sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct Split<'a> {
    pub train: &'a [Event],
    pub val_target: Event,
    pub test_target: Event,
}

impl Split<'_> {
    /// Model input when predicting the validation target.
    pub fn val_context(&self) -> &[Event] {
        self.train
    }
}

/// `None` when the sequence has fewer than three events.
pub fn split_leave_one_out(seq: &[Event]) -> Option<Split<'_>> {
    let n = seq.len();
    if n < 3 {
        return None;
    }
    Some(Split { train: &seq[..n - 2], val_target: seq[n - 2], test_target: seq[n - 1] })
}

/// Owned per-user leave-one-out data.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSplit {
    /// Dense 1-based user index.
    pub user: u32,
    pub train: Vec<Event>,
    pub val_target: Event,
    pub test_target: Event,
}

impl UserSplit {
    /// Everything before the test target.
    pub fn test_context(&self) -> Vec<Event> {
        let mut ctx = self.train.clone();
        ctx.push(self.val_target);
        ctx
    }

    pub fn history(&self) -> BTreeSet<u32> {
        self.train.iter().map(|e| e.item).chain([self.val_target.item, self.test_target.item]).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitCorpus {
    pub users: Vec<UserSplit>,
    pub skipped: usize,
    pub n_items: usize,
    pub min_timestamp: i64,
}

pub fn split_corpus(sequences: &UserSequences) -> SplitCorpus {
    let mut users = Vec::new();
    let mut skipped = 0;
    for (u, seq) in sequences.sequences.iter().enumerate() {
        match split_leave_one_out(seq) {
            Some(s) => users.push(UserSplit {
                user: u as u32 + 1,
                train: s.train.to_vec(),
                val_target: s.val_target,
                test_target: s.test_target,
            }),
            None => skipped += 1,
        }
    }
    SplitCorpus { users, skipped, n_items: sequences.n_items(), min_timestamp: sequences.min_timestamp() }
}

/// Padded `B×N` batch; rows are left-padded so the last column holds the most recent event.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceBatch {
    pub batch_size: usize,
    pub max_len: usize,
    pub users: Vec<u32>,
    pub items: Vec<u32>,
    pub times: Vec<i64>,
    pub pad_mask: Vec<bool>,
    pub targets: Vec<u32>,
}

/// One model input row: items, timestamps and real-token flags, all of length `N`.
#[derive(Clone, Debug, PartialEq)]
pub struct SeqInput {
    pub items: Vec<u32>,
    pub times: Vec<i64>,
    pub real: Vec<bool>,
}

impl SeqInput {
    /// Left-pads the most recent `max_len` events. Pad slots copy the earliest kept
    /// timestamp so calendar lookups stay in range.
    pub fn from_events(events: &[Event], max_len: usize) -> Self {
        let kept = &events[events.len().saturating_sub(max_len)..];
        let pad = max_len - kept.len();
        let fill = kept.first().map_or(0, |e| e.timestamp);
        let mut items = vec![0; pad];
        let mut times = vec![fill; pad];
        let mut real = vec![false; pad];
        for e in kept {
            items.push(e.item);
            times.push(e.timestamp);
            real.push(true);
        }
        Self { items, times, real }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn n_real(&self) -> usize {
        self.real.iter().filter(|r| **r).count()
    }

    /// Index of the most recent real position.
    pub fn last_real(&self) -> Option<usize> {
        self.real.iter().rposition(|r| *r)
    }
}

impl SequenceBatch {
    pub fn row(&self, b: usize) -> SeqInput {
        let span = b * self.max_len..(b + 1) * self.max_len;
        SeqInput {
            items: self.items[span.clone()].to_vec(),
            times: self.times[span.clone()].to_vec(),
            real: self.pad_mask[span].to_vec(),
        }
    }

    pub fn row_targets(&self, b: usize) -> &[u32] {
        &self.targets[b * self.max_len..(b + 1) * self.max_len]
    }

    pub fn n_real(&self) -> usize {
        self.pad_mask.iter().filter(|r| **r).count()
    }

    /// Assembles a batch from `(user, events)` rows; each row keeps its most recent
    /// `max_len + 1` events, inputs are the first `max_len` of those and targets the next item.
    pub fn from_rows(rows: &[(u32, &[Event])], max_len: usize) -> Self {
        let mut batch = SequenceBatch {
            batch_size: rows.len(),
            max_len,
            users: Vec::with_capacity(rows.len()),
            items: Vec::with_capacity(rows.len() * max_len),
            times: Vec::with_capacity(rows.len() * max_len),
            pad_mask: Vec::with_capacity(rows.len() * max_len),
            targets: Vec::with_capacity(rows.len() * max_len),
        };
        for (user, events) in rows {
            let kept = &events[events.len().saturating_sub(max_len + 1)..];
            let inputs = &kept[..kept.len() - 1];
            let input = SeqInput::from_events(inputs, max_len);
            let pad = max_len - inputs.len();
            batch.users.push(*user);
            batch.items.extend(&input.items);
            batch.times.extend(&input.times);
            batch.pad_mask.extend(&input.real);
            batch.targets.extend(core::iter::repeat_n(0, pad));
            batch.targets.extend(kept[1..].iter().map(|e| e.item));
        }
        batch
    }
}

/// Deterministic epoch batching: user order is shuffled by `(seed, epoch)`;
/// rows with fewer than two events have no target and are dropped.
pub fn make_batches(train: &[(u32, &[Event])], max_len: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<SequenceBatch>> {
    if max_len < 2 || batch_size == 0 {
        return Err(Error::Config(format!("need max_len >= 2 and batch_size >= 1 (got {max_len}, {batch_size})")));
    }
    let mut rows: Vec<(u32, &[Event])> = train.iter().filter(|(_, ev)| ev.len() >= 2).copied().collect();
    rows.shuffle(&mut stream(seed, Purpose::Shuffle, epoch, 0));
    Ok(rows.chunks(batch_size).map(|chunk| SequenceBatch::from_rows(chunk, max_len)).collect())
}

/// `n` distinct items drawn uniformly from `1..=vocab_size` minus `exclude`,
/// deterministic in `(user, seed)`.
pub fn sample_negatives(user: u32, n: usize, vocab_size: u32, exclude: &BTreeSet<u32>, seed: u64) -> Result<Vec<u32>> {
    let excluded_in_vocab = exclude.range(1..=vocab_size).count();
    let available = vocab_size as usize - excluded_in_vocab;
    if available < n {
        return Err(Error::Protocol(format!(
            "user {user}: only {available} candidate negatives for {n} requested"
        )));
    }
    let mut rng = stream(seed, Purpose::Negatives, user as u64, 0);
    if 2 * n >= available {
        let mut pool: Vec<u32> = (1..=vocab_size).filter(|i| !exclude.contains(i)).collect();
        let (chosen, _) = pool.partial_shuffle(&mut rng, n);
        return Ok(chosen.to_vec());
    }
    let mut chosen = BTreeSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let cand = rng.random_range(1..=vocab_size);
        if !exclude.contains(&cand) && chosen.insert(cand) {
            out.push(cand);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(items: &[u32]) -> Vec<Event> {
        items.iter().enumerate().map(|(k, &i)| Event { item: i, timestamp: k as i64 * 10 }).collect()
    }

    #[test]
    fn interaction_validation() {
        assert!(Interaction::new("", "i", 0).is_err());
        assert!(Interaction::new("u", "i", -1).is_err());
        assert!(Interaction::new("u1", "i1", 0).is_ok());
    }

    #[test]
    fn threshold_boundary_user_is_kept() {
        let raw: Vec<_> = (0..5).map(|k| Interaction::new("u", alloc::format!("i{k}"), k).unwrap()).collect();
        let seqs = build_sequences(&raw, 1).unwrap();
        assert_eq!(seqs.sequences[0].len(), 5);
        let stats = dataset_stats(&seqs);
        assert_eq!((stats.n_users, stats.n_items, stats.n_actions), (1, 5, 5));
        assert_eq!(stats.avg_length, 5.0);
    }

    #[test]
    fn filtering_reaches_fixpoint_and_empty_corpus_errors() {
        // u3 only has one event on item c, dropping c leaves u2 below threshold.
        let mut raw = Vec::new();
        for k in 0..2 {
            raw.push(Interaction::new("u1", "a", k).unwrap());
            raw.push(Interaction::new("u1", "b", k).unwrap());
            raw.push(Interaction::new("u2", "a", k).unwrap());
            raw.push(Interaction::new("u2", "b", k).unwrap());
        }
        raw.push(Interaction::new("u2", "c", 9).unwrap());
        let seqs = build_sequences(&raw, 2).unwrap();
        assert_eq!(seqs.n_items(), 2);
        assert_eq!(seqs.n_users(), 2);
        assert!(matches!(build_sequences(&raw, 10), Err(Error::EmptyCorpus(_))));
        assert!(matches!(build_sequences(&raw, 0), Err(Error::Config(_))));
    }

    #[test]
    fn ties_keep_input_order() {
        let raw = [
            Interaction::new("u", "x", 5).unwrap(),
            Interaction::new("u", "y", 1).unwrap(),
            Interaction::new("u", "z", 5).unwrap(),
        ];
        let seqs = build_sequences(&raw, 1).unwrap();
        let order: Vec<&str> = seqs.sequences[0].iter().map(|e| seqs.item_ids[e.item as usize - 1].as_str()).collect();
        assert_eq!(order, ["y", "x", "z"]);
        // first-appearance indexing
        assert_eq!(seqs.item_ids, ["x", "y", "z"]);
    }

    #[test]
    fn leave_one_out_examples() {
        let s = ev(&[1, 2, 3, 4]);
        let split = split_leave_one_out(&s).unwrap();
        assert_eq!(split.train.iter().map(|e| e.item).collect::<Vec<_>>(), [1, 2]);
        assert_eq!((split.val_target.item, split.test_target.item), (3, 4));
        let s = ev(&[1, 2, 3]);
        let split = split_leave_one_out(&s).unwrap();
        assert_eq!(split.train.len(), 1);
        assert_eq!((split.val_target.item, split.test_target.item), (2, 3));
        assert!(split_leave_one_out(&ev(&[1, 2])).is_none());
    }

    #[test]
    fn batch_shift_and_left_pad() {
        let s = ev(&[7, 8, 9]);
        let b = SequenceBatch::from_rows(&[(1, &s)], 4);
        assert_eq!(b.items, [0, 0, 7, 8]);
        assert_eq!(b.targets, [0, 0, 8, 9]);
        assert_eq!(b.pad_mask, [false, false, true, true]);
    }

    #[test]
    fn batch_truncates_to_most_recent_events() {
        let s = ev(&[1, 2, 3, 4, 5, 6, 7, 8, 9, 10]);
        let b = SequenceBatch::from_rows(&[(1, &s)], 4);
        assert_eq!(b.items, [6, 7, 8, 9]);
        assert_eq!(b.targets, [7, 8, 9, 10]);
    }

    #[test]
    fn batches_are_deterministic_and_skip_short_rows() {
        let seqs: Vec<Vec<Event>> = (0..10).map(|u| ev(&[u + 1, u + 2, u + 3])).collect();
        let mut rows: Vec<(u32, &[Event])> = seqs.iter().enumerate().map(|(u, s)| (u as u32 + 1, s.as_slice())).collect();
        let short = ev(&[1]);
        rows.push((99, &short));
        let a = make_batches(&rows, 4, 3, 11, 0).unwrap();
        let b = make_batches(&rows, 4, 3, 11, 0).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|x| x.batch_size).sum::<usize>(), 10);
        assert!(make_batches(&rows, 1, 3, 11, 0).is_err());
        assert!(make_batches(&[], 4, 3, 11, 0).unwrap().is_empty());
    }

    #[test]
    fn forced_singleton_negative() {
        let history: BTreeSet<u32> = (1..=100).collect();
        assert_eq!(sample_negatives(3, 1, 101, &history, 5).unwrap(), [101]);
        assert!(matches!(sample_negatives(3, 2, 101, &history, 5), Err(Error::Protocol(_))));
    }

    #[test]
    fn negatives_distinct_and_disjoint() {
        let history: BTreeSet<u32> = (1..=3416).step_by(7).collect();
        let a = sample_negatives(42, 100, 3416, &history, 9).unwrap();
        let b = sample_negatives(42, 100, 3416, &history, 9).unwrap();
        assert_eq!(a, b);
        let set: BTreeSet<u32> = a.iter().copied().collect();
        assert_eq!(set.len(), 100);
        assert!(set.is_disjoint(&history));
        assert!(set.iter().all(|i| (1..=3416).contains(i)));
    }
}
