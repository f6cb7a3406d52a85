use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::Serialize;

use crate::corpus::{SplitCorpus, UserSequence};
use crate::error::{Error, Result};
use crate::sampler::{AugConfig, PairSampler, TrainingPair};
use crate::ItemId;

/// One distinct `(input, target)` of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct RepEntry {
    pub input: Vec<ItemId>,
    pub target: ItemId,
    /// Summed pair weight, normalised over the whole set.
    pub mass: f64,
    /// `mass` normalised within the entry's target group (`C_y`).
    pub weight: f64,
}

/// A training set grouped by target.
///
/// Identical `(input, target)` pairs are merged by adding their weights, so
/// the per-target weights realise `1 / |C_y|` for uniformly weighted pair
/// multisets. Entries keep first-appearance order.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainRepresentation {
    entries: Vec<RepEntry>,
    by_target: BTreeMap<ItemId, Vec<usize>>,
    n_pairs: usize,
    samples: Option<usize>,
}

impl TrainRepresentation {
    pub fn from_pairs(pairs: &[TrainingPair]) -> Result<Self> {
        let mut index: HashMap<(&[ItemId], ItemId), usize> = HashMap::new();
        let mut entries: Vec<RepEntry> = Vec::new();
        for pair in pairs.iter().filter(|p| p.weight > 0.0 && !p.input.is_empty()) {
            let slot = *index.entry((pair.input.as_slice(), pair.target)).or_insert_with(|| {
                entries.push(RepEntry { input: pair.input.clone(), target: pair.target, mass: 0.0, weight: 0.0 });
                entries.len() - 1
            });
            entries[slot].mass += pair.weight;
        }
        if entries.is_empty() {
            return Err(Error::InvalidArgument("training representation needs at least one weighted pair".into()));
        }
        let total: f64 = entries.iter().map(|e| e.mass).sum();
        let mut by_target: BTreeMap<ItemId, Vec<usize>> = BTreeMap::new();
        for (ix, e) in entries.iter_mut().enumerate() {
            e.mass /= total;
            by_target.entry(e.target).or_default().push(ix);
        }
        for members in by_target.values() {
            let group: f64 = members.iter().map(|&ix| entries[ix].mass).sum();
            for &ix in members {
                entries[ix].weight = entries[ix].mass / group;
            }
        }
        Ok(TrainRepresentation { entries, by_target, n_pairs: pairs.len(), samples: None })
    }

    /// Every pair with positive probability under `config`, weighted by it.
    pub fn from_config_exact(config: AugConfig, seqs: &[UserSequence]) -> Result<Self> {
        Self::from_pairs(&PairSampler::new(config, seqs)?.support())
    }

    /// `samples` seeded draws from `config`, merged with unit weights.
    pub fn from_monte_carlo<R: Rng>(config: AugConfig, seqs: &[UserSequence], samples: usize, rng: &mut R) -> Result<Self> {
        if samples == 0 {
            return Err(Error::InvalidArgument("Monte-Carlo representation needs at least one sample".into()));
        }
        let sampler = PairSampler::new(config, seqs)?;
        let pairs: Vec<TrainingPair> = sampler.epoch(samples, rng).collect();
        let mut rep = Self::from_pairs(&pairs)?;
        rep.samples = Some(samples);
        Ok(rep)
    }

    pub fn entries(&self) -> &[RepEntry] {
        &self.entries
    }

    /// Distinct targets in ascending order.
    pub fn targets(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.by_target.keys().copied()
    }

    pub fn n_targets(&self) -> usize {
        self.by_target.len()
    }

    /// Members of `C_y`, empty when `y` never occurs as a target.
    pub fn group(&self, target: ItemId) -> impl Iterator<Item = &RepEntry> + '_ {
        self.by_target.get(&target).into_iter().flatten().map(move |&ix| &self.entries[ix])
    }

    pub fn has_target(&self, target: ItemId) -> bool {
        self.by_target.contains_key(&target)
    }

    /// Number of pairs consumed (before merging).
    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Draw count for Monte-Carlo representations.
    pub fn samples(&self) -> Option<usize> {
        self.samples
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Val,
    Test,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Val => "val",
            Stage::Test => "test",
        })
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "val" | "valid" | "validation" => Ok(Stage::Val),
            "test" => Ok(Stage::Test),
            _ => Err(Error::UnknownName { what: "stage", value: s.to_string() }),
        }
    }
}

/// A held-out `(input, target)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EvalPair {
    pub user: usize,
    pub input: Vec<ItemId>,
    pub target: ItemId,
}

/// Validation pairs are `(train, val)`; test pairs are `(train + val, test)`.
pub fn eval_pairs(split: &SplitCorpus, stage: Stage) -> Vec<EvalPair> {
    split
        .train
        .iter()
        .enumerate()
        .map(|(u, seq)| match stage {
            Stage::Val => EvalPair { user: u, input: seq.items.clone(), target: split.val_target[u] },
            Stage::Test => {
                let mut input = seq.items.clone();
                input.push(split.val_target[u]);
                EvalPair { user: u, input, target: split.test_target[u] }
            }
        })
        .filter(|p| !p.input.is_empty())
        .collect()
}
