use std::collections::HashMap;

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;

use super::distance::{tail, EditScratch, DEFAULT_MAX_LEN};
use super::representation::{EvalPair, RepEntry, TrainRepresentation};
use crate::error::{Error, Result};
use crate::rng;
use crate::ItemId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasureOptions {
    /// Evaluation pairs drawn (without replacement) per measurement.
    pub eval_budget: usize,
    /// Negative targets drawn per evaluation pair for discrimination.
    pub neg_targets: usize,
    /// Distance truncation length.
    pub max_len: usize,
}

impl Default for MeasureOptions {
    fn default() -> Self {
        MeasureOptions { eval_budget: 500, neg_targets: 100, max_len: DEFAULT_MAX_LEN }
    }
}

/// Indices of the evaluation pairs to use, ascending. Takes everything
/// without touching `rng` when the budget covers the whole set.
fn choose<R: Rng + ?Sized>(n: usize, budget: usize, rng: &mut R) -> Vec<usize> {
    if budget >= n {
        return (0..n).collect();
    }
    let mut picked = index::sample(rng, n, budget).into_vec();
    picked.sort_unstable();
    picked
}

fn group_similarity<'a>(
    members: impl Iterator<Item = &'a RepEntry>,
    query: &[ItemId],
    max_len: usize,
    scratch: &mut EditScratch,
) -> f64 {
    members.map(|e| e.weight * scratch.similarity(&e.input, query, max_len)).sum()
}

/// Weighted similarity of each held-out input to the training inputs that
/// share its target, averaged over a seeded subset of `eval`.
///
/// Returns `(alignment, coverage)`; pairs whose target never occurs in `rep`
/// are skipped and lower the coverage.
pub fn alignment<R: Rng + ?Sized>(
    rep: &TrainRepresentation,
    eval: &[EvalPair],
    opts: &MeasureOptions,
    rng: &mut R,
) -> Result<(f64, f64)> {
    if opts.eval_budget == 0 {
        return Err(Error::InvalidArgument("evaluation budget must be at least 1".into()));
    }
    let chosen = choose(eval.len(), opts.eval_budget, rng);
    let covered: Vec<usize> = chosen.iter().copied().filter(|&i| rep.has_target(eval[i].target)).collect();
    if covered.is_empty() {
        return Err(Error::NoOverlappingTargets);
    }
    let values: Vec<f64> = covered
        .par_iter()
        .map_init(EditScratch::new, |scratch, &i| {
            let pair = &eval[i];
            group_similarity(rep.group(pair.target), &pair.input, opts.max_len, scratch)
        })
        .collect();
    let coverage = covered.len() as f64 / chosen.len() as f64;
    Ok((values.iter().sum::<f64>() / values.len() as f64, coverage))
}

/// Mean weighted similarity of each held-out input to training inputs of up
/// to `neg_targets` other targets, averaged over a seeded subset of `eval`.
///
/// With the same generator state as [`alignment`] the same evaluation subset
/// is used. Negative targets for pair `i` come from stream `i` of a seed drawn
/// after the subset, so the value does not depend on thread count.
pub fn discrimination<R: Rng + ?Sized>(
    rep: &TrainRepresentation,
    eval: &[EvalPair],
    opts: &MeasureOptions,
    rng: &mut R,
) -> Result<f64> {
    if opts.eval_budget == 0 || opts.neg_targets == 0 {
        return Err(Error::InvalidArgument("evaluation and negative budgets must be at least 1".into()));
    }
    if rep.n_targets() < 2 {
        return Err(Error::TooFewTargets(rep.n_targets()));
    }
    let chosen = choose(eval.len(), opts.eval_budget, rng);
    if chosen.is_empty() {
        return Err(Error::InvalidArgument("no evaluation pairs".into()));
    }
    let neg_seed = rng::child_seed(rng);
    let targets: Vec<ItemId> = rep.targets().collect();
    let values: Vec<f64> = chosen
        .par_iter()
        .map_init(EditScratch::new, |scratch, &i| {
            let pair = &eval[i];
            let negatives: Vec<ItemId> = targets.iter().copied().filter(|&t| t != pair.target).collect();
            let picked: Vec<ItemId> = if opts.neg_targets >= negatives.len() {
                negatives
            } else {
                let mut r = rng::stream(neg_seed, i as u64);
                let mut ix = index::sample(&mut r, negatives.len(), opts.neg_targets).into_vec();
                ix.sort_unstable();
                ix.into_iter().map(|k| negatives[k]).collect()
            };
            let total: f64 = picked
                .iter()
                .map(|&t| group_similarity(rep.group(t), &pair.input, opts.max_len, scratch))
                .sum();
            total / picked.len() as f64
        })
        .collect();
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Top-`count` most similar training entries for a query, pruned with the
/// length and multiset-overlap upper bounds on similarity.
///
/// Entries are kept sorted by descending similarity; equal similarities keep
/// entry order.
#[derive(Clone, Debug)]
pub struct NeighborIndex {
    sorted: Vec<Vec<ItemId>>,
    max_len: usize,
}

impl NeighborIndex {
    pub fn new(rep: &TrainRepresentation, max_len: usize) -> Self {
        let sorted = rep
            .entries()
            .iter()
            .map(|e| {
                let mut s = tail(&e.input, max_len).to_vec();
                s.sort_unstable();
                s
            })
            .collect();
        NeighborIndex { sorted, max_len }
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// `(entry index, similarity)` of the `count` nearest entries.
    pub fn query(&self, rep: &TrainRepresentation, query: &[ItemId], count: usize, scratch: &mut EditScratch) -> Vec<(usize, f64)> {
        let q = tail(query, self.max_len);
        if q.is_empty() || count == 0 {
            return Vec::new();
        }
        let mut q_sorted = q.to_vec();
        q_sorted.sort_unstable();
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(count + 1);
        for (ix, entry) in rep.entries().iter().enumerate() {
            let e_sorted = &self.sorted[ix];
            let longest = e_sorted.len().max(q.len());
            if best.len() == count {
                let floor = best[count - 1].1;
                let len_bound = e_sorted.len().min(q.len()) as f64 / longest as f64;
                if len_bound <= floor {
                    continue;
                }
                let overlap_bound = multiset_overlap(e_sorted, &q_sorted) as f64 / longest as f64;
                if overlap_bound <= floor {
                    continue;
                }
            }
            let sim = scratch.similarity(&entry.input, q, self.max_len);
            if best.len() == count && sim <= best[count - 1].1 {
                continue;
            }
            let pos = best.partition_point(|&(_, s)| s >= sim);
            best.insert(pos, (ix, sim));
            best.truncate(count);
        }
        best
    }
}

fn multiset_overlap(a: &[ItemId], b: &[ItemId]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Training entry closest to `query` under normalised edit distance; ties go
/// to the earlier entry.
pub fn nearest_neighbor<'r>(rep: &'r TrainRepresentation, query: &[ItemId], max_len: usize) -> Option<&'r RepEntry> {
    let index = NeighborIndex::new(rep, max_len);
    index
        .query(rep, query, 1, &mut EditScratch::new())
        .first()
        .map(|&(ix, _)| &rep.entries()[ix])
}

/// Fraction of evaluation pairs whose nearest training input's target is
/// among the model's first `k` predictions.
pub fn nn_recall_at_k(
    predictions: &HashMap<Vec<ItemId>, Vec<ItemId>>,
    rep: &TrainRepresentation,
    eval: &[EvalPair],
    k: usize,
    max_len: usize,
) -> Result<f64> {
    if eval.is_empty() || k == 0 {
        return Err(Error::InvalidArgument("NN-Recall needs evaluation pairs and k >= 1".into()));
    }
    let index = NeighborIndex::new(rep, max_len);
    let mut scratch = EditScratch::new();
    let mut hits = 0usize;
    for (i, pair) in eval.iter().enumerate() {
        let ranked = match predictions.get(&pair.input) {
            Some(r) if r.len() >= k => r,
            _ => return Err(Error::MissingPrediction(i)),
        };
        let nn = index.query(rep, &pair.input, 1, &mut scratch);
        if let Some(&(ix, _)) = nn.first() {
            if ranked[..k].contains(&rep.entries()[ix].target) {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / eval.len() as f64)
}
