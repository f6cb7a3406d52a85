//! Reference recommenders with closed-form training, and NDCG / Recall.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::SplitCorpus;
use crate::diagnostics::{eval_pairs, EditScratch, NeighborIndex, Stage, TargetHistogram, TrainRepresentation, DEFAULT_MAX_LEN};
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::TrainingPair;
use crate::ItemId;

pub const DEFAULT_NEIGHBORS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Popularity,
    Markov1,
    Knn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Popularity => "popularity",
            ModelKind::Markov1 => "markov1",
            ModelKind::Knn => "knn",
        })
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "popularity" | "pop" => Ok(ModelKind::Popularity),
            "markov1" | "markov" => Ok(ModelKind::Markov1),
            "knn" => Ok(ModelKind::Knn),
            _ => Err(Error::UnknownName { what: "model", value: s.to_string() }),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ReferenceModel {
    Popularity(TargetHistogram),
    Markov1 {
        rows: HashMap<ItemId, TargetHistogram>,
        fallback: TargetHistogram,
    },
    Knn {
        rep: TrainRepresentation,
        index: NeighborIndex,
        neighbor_count: usize,
    },
}

/// Ranks sparse scores: descending score, ties by smaller item index.
fn rank_scores(scores: impl IntoIterator<Item = (ItemId, f64)>, k: usize) -> Vec<ItemId> {
    let mut v: Vec<(ItemId, f64)> = scores.into_iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    v.truncate(k);
    v.into_iter().map(|(i, _)| i).collect()
}

pub fn train_reference_model(kind: ModelKind, pairs: &[TrainingPair], neighbor_count: usize) -> Result<ReferenceModel> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty pair set".into()));
    }
    Ok(match kind {
        ModelKind::Popularity => ReferenceModel::Popularity(TargetHistogram::from_weights(pairs.iter().map(|p| (p.target, p.weight)))),
        ModelKind::Markov1 => {
            let mut acc: HashMap<ItemId, Vec<(ItemId, f64)>> = HashMap::new();
            for p in pairs {
                if let Some(&last) = p.input.last() {
                    acc.entry(last).or_default().push((p.target, p.weight));
                }
            }
            let rows = acc.into_iter().map(|(k, v)| (k, TargetHistogram::from_weights(v))).collect();
            let fallback = TargetHistogram::from_weights(pairs.iter().map(|p| (p.target, p.weight)));
            ReferenceModel::Markov1 { rows, fallback }
        }
        ModelKind::Knn => {
            if neighbor_count == 0 {
                return Err(Error::InvalidArgument("knn needs at least one neighbour".into()));
            }
            let rep = TrainRepresentation::from_pairs(pairs)?;
            let index = NeighborIndex::new(&rep, DEFAULT_MAX_LEN);
            ReferenceModel::Knn { rep, index, neighbor_count }
        }
    })
}

impl ReferenceModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            ReferenceModel::Popularity(_) => ModelKind::Popularity,
            ReferenceModel::Markov1 { .. } => ModelKind::Markov1,
            ReferenceModel::Knn { .. } => ModelKind::Knn,
        }
    }

    /// Positive scores of candidate items for input `x`.
    pub fn scores(&self, x: &[ItemId], scratch: &mut EditScratch) -> Vec<(ItemId, f64)> {
        match self {
            ReferenceModel::Popularity(h) => h.iter().collect(),
            ReferenceModel::Markov1 { rows, fallback } => {
                let row = x.last().and_then(|last| rows.get(last)).unwrap_or(fallback);
                row.iter().collect()
            }
            ReferenceModel::Knn { rep, index, neighbor_count } => {
                // the neighbour's share of its target group stands in for its pair weight
                let mut acc: BTreeMap<ItemId, f64> = BTreeMap::new();
                for (ix, sim) in index.query(rep, x, *neighbor_count, scratch) {
                    let e = &rep.entries()[ix];
                    *acc.entry(e.target).or_insert(0.0) += sim * e.mass;
                }
                acc.into_iter().filter(|&(_, s)| s > 0.0).collect()
            }
        }
    }

    pub fn predict_top_k(&self, x: &[ItemId], k: usize) -> Vec<ItemId> {
        self.predict_with(x, k, &mut EditScratch::new())
    }

    fn predict_with(&self, x: &[ItemId], k: usize, scratch: &mut EditScratch) -> Vec<ItemId> {
        rank_scores(self.scores(x, scratch), k)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Metrics {
    pub ndcg: f64,
    pub recall: f64,
}

/// `(ndcg@K, recall@K)` for a single relevant item.
pub fn ndcg_recall(predictions: &[ItemId], truth: ItemId, ks: &[usize]) -> BTreeMap<usize, Metrics> {
    let rank = predictions.iter().position(|&p| p == truth).map(|r| r + 1);
    hit_metrics(rank, ks)
}

fn hit_metrics(rank: Option<usize>, ks: &[usize]) -> BTreeMap<usize, Metrics> {
    ks.iter()
        .map(|&k| {
            let m = match rank {
                Some(r) if r <= k => Metrics { ndcg: 1.0 / ((r + 1) as f64).log2(), recall: 1.0 },
                _ => Metrics::default(),
            };
            (k, m)
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct EvalResult {
    pub per_k: BTreeMap<usize, Metrics>,
    pub n_eval: usize,
}

impl EvalResult {
    fn average(rows: &[BTreeMap<usize, Metrics>], ks: &[usize]) -> Self {
        let n = rows.len();
        let per_k = ks
            .iter()
            .map(|&k| {
                let (mut ndcg, mut recall) = (0.0, 0.0);
                for r in rows {
                    ndcg += r[&k].ndcg;
                    recall += r[&k].recall;
                }
                let d = n.max(1) as f64;
                (k, Metrics { ndcg: ndcg / d, recall: recall / d })
            })
            .collect();
        EvalResult { per_k, n_eval: n }
    }

    pub fn ndcg(&self, k: usize) -> Option<f64> {
        self.per_k.get(&k).map(|m| m.ndcg)
    }

    pub fn recall(&self, k: usize) -> Option<f64> {
        self.per_k.get(&k).map(|m| m.recall)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Rank the truth against this many uniform negatives instead of the
    /// whole catalogue.
    pub negatives: Option<usize>,
    pub seed: u64,
}

/// Per held-out pair: `(user position, truth, metrics)`.
pub fn evaluate_per_user(
    model: &ReferenceModel,
    split: &SplitCorpus,
    stage: Stage,
    ks: &[usize],
    opts: EvalOptions,
) -> Result<Vec<(usize, ItemId, BTreeMap<usize, Metrics>)>> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("cutoffs must be non-empty and >= 1".into()));
    }
    let max_k = *ks.iter().max().unwrap();
    let n_items = split.items.len();
    if let Some(neg) = opts.negatives {
        if neg == 0 || neg >= n_items {
            return Err(Error::InvalidArgument(format!("negative count {neg} must be in 1..{n_items}")));
        }
    }
    let pairs = eval_pairs(split, stage);
    Ok(pairs
        .par_iter()
        .map_init(EditScratch::new, |scratch, pair| {
            let rank = match opts.negatives {
                None => {
                    let top = model.predict_with(&pair.input, max_k, scratch);
                    top.iter().position(|&p| p == pair.target).map(|r| r + 1)
                }
                Some(neg) => {
                    let scores: HashMap<ItemId, f64> = model.scores(&pair.input, scratch).into_iter().collect();
                    let score = |i: ItemId| scores.get(&i).copied().unwrap_or(0.0);
                    let mut r = rng::stream(opts.seed, pair.user as u64);
                    // uniform over items other than the truth
                    let drawn = index::sample(&mut r, n_items - 1, neg);
                    let truth = pair.target;
                    let ts = score(truth);
                    let above = drawn
                        .iter()
                        .map(|d| if d as ItemId >= truth { d as ItemId + 1 } else { d as ItemId })
                        .filter(|&i| {
                            let s = score(i);
                            s > ts || (s == ts && i < truth)
                        })
                        .count();
                    Some(above + 1)
                }
            };
            (pair.user, pair.target, hit_metrics(rank, ks))
        })
        .collect())
}

pub fn evaluate(model: &ReferenceModel, split: &SplitCorpus, stage: Stage, ks: &[usize], opts: EvalOptions) -> Result<EvalResult> {
    let rows: Vec<BTreeMap<usize, Metrics>> =
        evaluate_per_user(model, split, stage, ks, opts)?.into_iter().map(|(_, _, m)| m).collect();
    Ok(EvalResult::average(&rows, ks))
}

/// Splits items into `groups` equal-sized bands by training popularity
/// (occurrences in the training sequences), least popular first; ties by
/// item index. Returns the group of every item index.
pub fn popularity_groups(split: &SplitCorpus, groups: usize) -> Result<Vec<usize>> {
    let n = split.items.len();
    if groups == 0 || groups > n.max(1) {
        return Err(Error::InvalidArgument(format!("group count {groups} must be in 1..={n}")));
    }
    let mut counts = vec![0usize; n];
    for seq in &split.train {
        for &i in &seq.items {
            counts[i as usize] += 1;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| counts[a].cmp(&counts[b]).then(a.cmp(&b)));
    let mut group_of = vec![0; n];
    for (rank, &item) in order.iter().enumerate() {
        group_of[item] = rank * groups / n;
    }
    Ok(group_of)
}

/// Metrics restricted to held-out pairs whose truth falls in each popularity
/// group, least popular group first.
pub fn evaluate_by_popularity(
    model: &ReferenceModel,
    split: &SplitCorpus,
    stage: Stage,
    ks: &[usize],
    opts: EvalOptions,
    groups: usize,
) -> Result<Vec<EvalResult>> {
    let group_of = popularity_groups(split, groups)?;
    let rows = evaluate_per_user(model, split, stage, ks, opts)?;
    Ok((0..groups)
        .map(|g| {
            let members: Vec<BTreeMap<usize, Metrics>> = rows
                .iter()
                .filter(|(_, truth, _)| group_of.get(*truth as usize) == Some(&g))
                .map(|(_, _, m)| m.clone())
                .collect();
            EvalResult::average(&members, ks)
        })
        .collect())
}
