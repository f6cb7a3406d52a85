use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ItemId;

/// Probability of each item appearing as a prediction target. Only items with
/// positive mass are stored.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TargetHistogram {
    probs: BTreeMap<ItemId, f64>,
}

impl TargetHistogram {
    /// Normalises non-negative masses, dropping zeros. An all-zero input gives
    /// an empty histogram.
    pub fn from_weights(weights: impl IntoIterator<Item = (ItemId, f64)>) -> Self {
        let mut acc = BTreeMap::new();
        for (item, w) in weights {
            if w > 0.0 {
                *acc.entry(item).or_insert(0.0) += w;
            }
        }
        let total: f64 = acc.values().sum();
        if total > 0.0 {
            for v in acc.values_mut() {
                *v /= total;
            }
        }
        TargetHistogram { probs: acc }
    }

    pub fn from_items(items: impl IntoIterator<Item = ItemId>) -> Self {
        Self::from_weights(items.into_iter().map(|i| (i, 1.0)))
    }

    pub fn get(&self, item: ItemId) -> f64 {
        self.probs.get(&item).copied().unwrap_or(0.0)
    }

    pub fn support_size(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ItemId, f64)> + '_ {
        self.probs.iter().map(|(&i, &p)| (i, p))
    }

    pub fn total(&self) -> f64 {
        self.probs.values().sum()
    }

    /// Items by descending probability, ties by ascending index.
    pub fn ranked(&self) -> Vec<ItemId> {
        let mut items: Vec<(ItemId, f64)> = self.iter().collect();
        items.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        items.into_iter().map(|(i, _)| i).collect()
    }

    /// Dense vector over `0..n_items`.
    pub fn to_dense(&self, n_items: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_items];
        for (i, p) in self.iter() {
            if (i as usize) < n_items {
                out[i as usize] = p;
            }
        }
        out
    }

    /// Total-variation distance `½ Σ |p - q|`.
    pub fn tv(&self, other: &TargetHistogram) -> f64 {
        let mut keys: Vec<ItemId> = self.probs.keys().chain(other.probs.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        0.5 * keys.iter().map(|&k| (self.get(k) - other.get(k)).abs()).sum::<f64>()
    }
}

/// `KL(p || q')` where `q'(y) = (q(y) + eps) / (1 + eps * |I|)`.
///
/// The universe size `|I|` is `n_items`, widened to cover every item in
/// either histogram. Terms with `p(y) = 0` contribute nothing.
pub fn kl_divergence(p: &TargetHistogram, q: &TargetHistogram, epsilon: f64, n_items: usize) -> Result<f64> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("smoothing epsilon must be >= 0, got {epsilon}")));
    }
    let max_item = p.iter().chain(q.iter()).map(|(i, _)| i as usize + 1).max().unwrap_or(0);
    let mut keys: Vec<ItemId> = p.iter().chain(q.iter()).map(|(i, _)| i).collect();
    keys.sort_unstable();
    keys.dedup();
    let universe = n_items.max(max_item).max(keys.len());
    let denom = 1.0 + epsilon * universe as f64;
    let mut kl = 0.0;
    for (y, py) in p.iter() {
        let qy = (q.get(y) + epsilon) / denom;
        if qy <= 0.0 {
            return Err(Error::InfiniteDivergence { item: y });
        }
        kl += py * (py / qy).ln();
    }
    // Gibbs: rounding can leave tiny negatives for p == q
    Ok(kl.max(0.0))
}
