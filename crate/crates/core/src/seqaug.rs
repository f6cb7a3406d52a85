//! Input-level augmentation baselines. Operators rewrite a pair's input and
//! never touch its target.
//!
//! Delete and replace are true deletion and substitution; positions are drawn
//! uniformly over the input.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::sampler::TrainingPair;
use crate::ItemId;

/// Attempts at a non-empty draw before [`sample_items`] keeps a single item.
const SAMPLE_RETRIES: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AugKind {
    Insert,
    Delete,
    Replace,
    Reorder,
    Sample,
}

impl fmt::Display for AugKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AugKind::Insert => "insert",
            AugKind::Delete => "delete",
            AugKind::Replace => "replace",
            AugKind::Reorder => "reorder",
            AugKind::Sample => "sample",
        })
    }
}

impl FromStr for AugKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "insert" => Ok(AugKind::Insert),
            "delete" => Ok(AugKind::Delete),
            "replace" => Ok(AugKind::Replace),
            "reorder" => Ok(AugKind::Reorder),
            "sample" => Ok(AugKind::Sample),
            _ => Err(Error::UnknownName { what: "augmentation", value: s.to_string() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SeqAugSpec {
    pub kind: AugKind,
    /// Reorder window; `None` means `max(2, |x| / 5)` capped at `|x|`.
    pub delta: Option<usize>,
    /// Retention probability for `Sample`.
    pub omega: f64,
}

impl SeqAugSpec {
    pub fn new(kind: AugKind) -> Self {
        SeqAugSpec { kind, delta: None, omega: 0.9 }
    }

    pub fn apply<R: Rng + ?Sized>(&self, x: &[ItemId], universe: &[ItemId], rng: &mut R) -> Result<Vec<ItemId>> {
        match self.kind {
            AugKind::Insert => insert(x, universe, rng),
            AugKind::Delete => Ok(delete(x, rng)),
            AugKind::Replace => replace(x, universe, rng),
            AugKind::Reorder => {
                let delta = self.delta.unwrap_or_else(|| default_delta(x.len()));
                reorder(x, delta, rng)
            }
            AugKind::Sample => sample_items(x, self.omega, rng),
        }
    }
}

pub fn default_delta(len: usize) -> usize {
    (len / 5).max(2).min(len.max(1))
}

/// Inserts `item` before the 1-based `position` (`1..=|x|`).
pub fn insert_at(x: &[ItemId], item: ItemId, position: usize) -> Vec<ItemId> {
    assert!((1..=x.len()).contains(&position), "insert position out of range");
    let mut out = Vec::with_capacity(x.len() + 1);
    out.extend_from_slice(&x[..position - 1]);
    out.push(item);
    out.extend_from_slice(&x[position - 1..]);
    out
}

/// Removes the item at 1-based `position`.
pub fn delete_at(x: &[ItemId], position: usize) -> Vec<ItemId> {
    let mut out = x.to_vec();
    out.remove(position - 1);
    out
}

/// Substitutes the item at 1-based `position`.
pub fn replace_at(x: &[ItemId], position: usize, item: ItemId) -> Vec<ItemId> {
    let mut out = x.to_vec();
    out[position - 1] = item;
    out
}

/// Uniform random item inserted before a uniform position in `1..=|x|`.
pub fn insert<R: Rng + ?Sized>(x: &[ItemId], universe: &[ItemId], rng: &mut R) -> Result<Vec<ItemId>> {
    if universe.is_empty() {
        return Err(Error::InvalidArgument("insert needs a non-empty item universe".into()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("insert needs a non-empty input".into()));
    }
    let item = universe[rng.random_range(0..universe.len())];
    let position = rng.random_range(1..=x.len());
    Ok(insert_at(x, item, position))
}

/// Removes one uniformly chosen item. A length-1 input is returned unchanged
/// with a warning, since an empty input cannot form a pair.
pub fn delete<R: Rng + ?Sized>(x: &[ItemId], rng: &mut R) -> Vec<ItemId> {
    if x.len() < 2 {
        log::warn!("delete skipped: input of length {} cannot shrink", x.len());
        return x.to_vec();
    }
    let position = rng.random_range(1..=x.len());
    delete_at(x, position)
}

pub fn replace<R: Rng + ?Sized>(x: &[ItemId], universe: &[ItemId], rng: &mut R) -> Result<Vec<ItemId>> {
    if universe.is_empty() {
        return Err(Error::InvalidArgument("replace needs a non-empty item universe".into()));
    }
    if x.is_empty() {
        return Err(Error::InvalidArgument("replace needs a non-empty input".into()));
    }
    let position = rng.random_range(1..=x.len());
    let item = universe[rng.random_range(0..universe.len())];
    Ok(replace_at(x, position, item))
}

/// Shuffles one uniformly placed window of `delta` items.
pub fn reorder<R: Rng + ?Sized>(x: &[ItemId], delta: usize, rng: &mut R) -> Result<Vec<ItemId>> {
    if delta == 0 || delta > x.len() {
        return Err(Error::InvalidArgument(format!("reorder window {delta} not in 1..={}", x.len())));
    }
    let mut out = x.to_vec();
    let start = rng.random_range(0..=x.len() - delta);
    out[start..start + delta].shuffle(rng);
    Ok(out)
}

/// Keeps each item independently with probability `omega`.
pub fn sample_items<R: Rng + ?Sized>(x: &[ItemId], omega: f64, rng: &mut R) -> Result<Vec<ItemId>> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::InvalidArgument(format!("retention probability {omega} not in (0, 1)")));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    for _ in 0..SAMPLE_RETRIES {
        let kept: Vec<ItemId> = x.iter().copied().filter(|_| rng.random::<f64>() < omega).collect();
        if !kept.is_empty() {
            return Ok(kept);
        }
    }
    Ok(vec![x[rng.random_range(0..x.len())]])
}

/// Applies one operator draw to every pair's input.
pub fn augment_pairs<R: Rng + ?Sized>(
    pairs: &[TrainingPair],
    spec: &SeqAugSpec,
    universe: &[ItemId],
    rng: &mut R,
) -> Result<Vec<TrainingPair>> {
    pairs
        .iter()
        .map(|p| {
            Ok(TrainingPair { input: spec.apply(&p.input, universe, rng)?, ..p.clone() })
        })
        .collect()
}

/// `true` if `small` can be obtained from `big` by deleting items.
pub fn is_subsequence(small: &[ItemId], big: &[ItemId]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.any(|b| b == s))
}
