//! Synthetic populations with position-dependent item distributions and
//! total-variation experiments on the training-target distribution.
//!
//! Every user has exactly `n` training items; the item at position `k` is
//! drawn from `p_k` independently of everything else, and the held-out
//! targets come from `p_{n+1}`. The recency bias at position `k` is
//! `delta_k = TV(p_k, p_{n+1})`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{SplitCorpus, UserSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::rng;
use crate::sampler::{target_weights, ExtExponent, ProbVector};
use crate::ItemId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileKind {
    UniformIdentical,
    LinearRecency,
    RandomDirichlet,
}

impl fmt::Display for ProfileKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileKind::UniformIdentical => "uniform-identical",
            ProfileKind::LinearRecency => "linear-recency",
            ProfileKind::RandomDirichlet => "random-dirichlet",
        })
    }
}

impl FromStr for ProfileKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "uniform-identical" | "uniform" => Ok(ProfileKind::UniformIdentical),
            "linear-recency" => Ok(ProfileKind::LinearRecency),
            "random-dirichlet" | "dirichlet" => Ok(ProfileKind::RandomDirichlet),
            _ => Err(Error::UnknownName { what: "profile", value: s.to_string() }),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BiasProfile {
    pub kind: ProfileKind,
    /// Mixing strength in `[0, 1]`; ignored by `UniformIdentical`.
    pub strength: f64,
}

impl BiasProfile {
    pub fn new(kind: ProfileKind, strength: f64) -> Self {
        BiasProfile { kind, strength }
    }

    pub fn uniform() -> Self {
        BiasProfile { kind: ProfileKind::UniformIdentical, strength: 0.0 }
    }
}

/// Which positional weights the training-target estimator uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetWeighting {
    /// `w_k ∝ k^beta` over `k = 2..=n`.
    #[default]
    Theorem,
    /// `w_k ∝ (k - 1)^beta`, as the pair sampler draws target positions.
    Sampler,
}

impl FromStr for TargetWeighting {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "theorem" => Ok(TargetWeighting::Theorem),
            "sampler" => Ok(TargetWeighting::Sampler),
            _ => Err(Error::UnknownName { what: "weighting", value: s.to_string() }),
        }
    }
}

impl fmt::Display for TargetWeighting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetWeighting::Theorem => "theorem",
            TargetWeighting::Sampler => "sampler",
        })
    }
}

/// Per-position item distributions `p_1..p_{n+1}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PositionModel {
    pub n: usize,
    pub item_count: usize,
    /// `p[k - 1]` is the distribution at position `k`; `p[n]` is the
    /// held-out target distribution.
    pub p: Vec<Vec<f64>>,
}

impl PositionModel {
    /// Builds a model from explicit distributions, checking normalisation.
    pub fn from_distributions(p: Vec<Vec<f64>>) -> Result<Self> {
        if p.len() < 3 {
            return Err(Error::InvalidArgument("a position model needs n >= 2".into()));
        }
        let item_count = p[0].len();
        if item_count < 2 {
            return Err(Error::InvalidArgument("a position model needs at least 2 items".into()));
        }
        for (k, dist) in p.iter().enumerate() {
            if dist.len() != item_count {
                return Err(Error::InvalidArgument(format!("position {} has {} items, expected {item_count}", k + 1, dist.len())));
            }
            let total: f64 = dist.iter().sum();
            if dist.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(format!("position {} is not a distribution", k + 1)));
            }
        }
        Ok(PositionModel { n: p.len() - 1, item_count, p })
    }

    /// Distribution at 1-based position `k`.
    pub fn position(&self, k: usize) -> &[f64] {
        &self.p[k - 1]
    }

    pub fn target(&self) -> &[f64] {
        &self.p[self.n]
    }

    /// `delta_k` for `k = 1..=n`.
    pub fn deltas(&self) -> Vec<f64> {
        (1..=self.n).map(|k| tv_distance(self.position(k), self.target())).collect()
    }
}

fn dirichlet_one<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = (0..len).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|x| x / total).collect()
}

fn mix(a: &[f64], b: &[f64], c: f64) -> Vec<f64> {
    let raw: Vec<f64> = a.iter().zip(b).map(|(x, y)| (1.0 - c) * x + c * y).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|x| x / total).collect()
}

/// Uniform over the `floor(len / 2)` items with the least mass in `target`,
/// ties to the smaller index.
fn low_mass_contaminant(target: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..target.len()).collect();
    order.sort_by(|&a, &b| target[a].total_cmp(&target[b]).then(a.cmp(&b)));
    let half = (target.len() / 2).max(1);
    let mut q = vec![0.0; target.len()];
    for &i in &order[..half] {
        q[i] = 1.0 / half as f64;
    }
    q
}

pub fn make_position_model<R: Rng + ?Sized>(
    n: usize,
    item_count: usize,
    profile: BiasProfile,
    rng: &mut R,
) -> Result<PositionModel> {
    if n < 2 || item_count < 2 {
        return Err(Error::InvalidArgument(format!("need n >= 2 and at least 2 items, got n = {n}, items = {item_count}")));
    }
    let s = profile.strength;
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::InvalidArgument(format!("strength must be finite and >= 0, got {s}")));
    }
    if profile.kind != ProfileKind::UniformIdentical && s > 1.0 {
        return Err(Error::OutOfRange(format!("strength {s} gives a mixing weight above 1")));
    }
    let p = match profile.kind {
        ProfileKind::UniformIdentical => vec![vec![1.0 / item_count as f64; item_count]; n + 1],
        ProfileKind::LinearRecency => {
            let target = dirichlet_one(item_count, rng);
            let q = low_mass_contaminant(&target);
            let mut p: Vec<Vec<f64>> = (1..=n)
                .map(|k| mix(&target, &q, s * (n + 1 - k) as f64 / n as f64))
                .collect();
            p.push(target);
            p
        }
        ProfileKind::RandomDirichlet => {
            let target = dirichlet_one(item_count, rng);
            let mut p: Vec<Vec<f64>> = (1..=n).map(|_| mix(&target, &dirichlet_one(item_count, rng), s)).collect();
            p.push(target);
            p
        }
    };
    Ok(PositionModel { n, item_count, p })
}

fn samplers(model: &PositionModel) -> Vec<ProbVector> {
    model
        .p
        .iter()
        .map(|dist| ProbVector::from_weights(dist.iter().copied().enumerate()).expect("position distributions are normalised"))
        .collect()
}

/// Per user: `n` training items then the validation and test targets.
fn sample_rows<R: Rng + ?Sized>(model: &PositionModel, m: usize, rng: &mut R) -> Vec<Vec<ItemId>> {
    let dists = samplers(model);
    (0..m)
        .map(|_| {
            let mut row: Vec<ItemId> = dists.iter().map(|d| d.sample(rng) as ItemId).collect();
            row.push(dists[model.n].sample(rng) as ItemId);
            row
        })
        .collect()
}

/// Samples `m` users. Item `i{j}` has index `j` and user `u{u}` sits at
/// split position `u`. Validation and test targets are both drawn from
/// `p_{n+1}`.
pub fn sample_population<R: Rng + ?Sized>(model: &PositionModel, m: usize, rng: &mut R) -> Result<SplitCorpus> {
    if m == 0 {
        return Err(Error::InvalidArgument("population needs at least one user".into()));
    }
    let rows = sample_rows(model, m, rng);
    let mut items = Vocabulary::new();
    for j in 0..model.item_count {
        items.intern(&format!("i{j}"));
    }
    let mut users = Vocabulary::new();
    let mut train = Vec::with_capacity(m);
    let mut val_target = Vec::with_capacity(m);
    let mut test_target = Vec::with_capacity(m);
    for (u, row) in rows.into_iter().enumerate() {
        let user = users.intern(&format!("u{u}"));
        // row = p_1..p_n, p_{n+1} (test), extra p_{n+1} draw (val)
        test_target.push(row[model.n]);
        val_target.push(row[model.n + 1]);
        train.push(UserSequence { user, items: row[..model.n].to_vec() });
    }
    Ok(SplitCorpus { train, val_target, test_target, users, items, dropped_users: 0, dropped_interactions: 0 })
}

/// Population with a per-user taste: each user picks `taste` distinct items
/// uniformly and draws every position (training, validation and test)
/// uniformly from them. Every position has the same uniform marginal, so
/// `delta_k = 0`, while items of one user are dependent.
pub fn sample_taste_population<R: Rng + ?Sized>(
    n: usize,
    item_count: usize,
    taste: usize,
    m: usize,
    rng: &mut R,
) -> Result<SplitCorpus> {
    if n < 1 || m == 0 || taste == 0 || taste > item_count {
        return Err(Error::InvalidArgument(format!("invalid taste population n = {n}, items = {item_count}, taste = {taste}, m = {m}")));
    }
    let mut items = Vocabulary::new();
    for j in 0..item_count {
        items.intern(&format!("i{j}"));
    }
    let mut users = Vocabulary::new();
    let mut train = Vec::with_capacity(m);
    let mut val_target = Vec::with_capacity(m);
    let mut test_target = Vec::with_capacity(m);
    for u in 0..m {
        let liked = rand::seq::index::sample(rng, item_count, taste).into_vec();
        let mut draw = || liked[rng.random_range(0..taste)] as ItemId;
        let seq: Vec<ItemId> = (0..n).map(|_| draw()).collect();
        val_target.push(draw());
        test_target.push(draw());
        train.push(UserSequence { user: users.intern(&format!("u{u}")), items: seq });
    }
    Ok(SplitCorpus { train, val_target, test_target, users, items, dropped_users: 0, dropped_interactions: 0 })
}

/// Total variation distance between two dense distributions; a shorter
/// slice is padded with zeros.
pub fn tv_distance(p: &[f64], q: &[f64]) -> f64 {
    let len = p.len().max(q.len());
    let at = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
    0.5 * (0..len).map(|i| (at(p, i) - at(q, i)).abs()).sum::<f64>()
}

/// Weights over target positions `k = 2..=n`, indexed by `k`.
pub fn position_weights(n: usize, beta: ExtExponent, weighting: TargetWeighting) -> ProbVector {
    match weighting {
        TargetWeighting::Sampler => target_weights(n, beta),
        TargetWeighting::Theorem => {
            let entries: Vec<(usize, f64)> = (2..=n).map(|k| (k, k as f64)).collect();
            ProbVector::power_law(&entries, beta)
        }
    }
}

/// `sum_k w_k p_k` over `k = 2..=n`.
pub fn expected_train_target_dist(beta: ExtExponent, model: &PositionModel, weighting: TargetWeighting) -> Vec<f64> {
    let weights = position_weights(model.n, beta, weighting);
    let mut out = vec![0.0; model.item_count];
    for (k, w) in weights.iter() {
        for (o, p) in out.iter_mut().zip(model.position(k)) {
            *o += w * p;
        }
    }
    out
}

/// Weighted histogram of realised training targets: every user adds `w_k`
/// at the item in position `k`, and the total is divided by the number of
/// users.
pub fn empirical_target_dist(
    train: &[UserSequence],
    item_count: usize,
    beta: ExtExponent,
    weighting: TargetWeighting,
) -> Result<Vec<f64>> {
    let n = train.first().map_or(0, |s| s.len());
    if n < 2 || train.iter().any(|s| s.len() != n) {
        return Err(Error::InvalidArgument("all sequences must share one length >= 2".into()));
    }
    let weights = position_weights(n, beta, weighting);
    let mut out = vec![0.0; item_count];
    for seq in train {
        for (k, w) in weights.iter() {
            let item = seq.items[k - 1] as usize;
            if item >= item_count {
                return Err(Error::OutOfRange(format!("item {item} outside 0..{item_count}")));
            }
            out[item] += w;
        }
    }
    let m = train.len() as f64;
    out.iter_mut().for_each(|x| *x /= m);
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialTv {
    pub trial: usize,
    /// TV(empirical histogram, p_{n+1}).
    pub tv_empirical: f64,
    /// TV(empirical histogram, expected training-target distribution).
    pub tv_expected: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvSummary {
    pub beta: ExtExponent,
    pub m: usize,
    pub weighting: TargetWeighting,
    pub trials: Vec<TrialTv>,
    pub mean: f64,
    pub std: f64,
    /// TV(expected training-target distribution, p_{n+1}).
    pub bias: f64,
}

impl TvSummary {
    pub fn tv_values(&self) -> Vec<f64> {
        self.trials.iter().map(|t| t.tv_empirical).collect()
    }
}

/// Runs `trials` independent populations of `m` users. Trial `t` uses
/// stream `t` of `seed`, so trial `t` sees the same population whatever
/// `beta` is.
pub fn tv_experiment(
    beta: ExtExponent,
    model: &PositionModel,
    m: usize,
    trials: usize,
    weighting: TargetWeighting,
    seed: u64,
) -> Result<TvSummary> {
    if trials == 0 || m == 0 {
        return Err(Error::InvalidArgument("need at least one trial and one user".into()));
    }
    let expected = expected_train_target_dist(beta, model, weighting);
    let results: Vec<TrialTv> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::stream(seed, trial as u64);
            let split = sample_population(model, m, &mut r)?;
            let empirical = empirical_target_dist(&split.train, model.item_count, beta, weighting)?;
            Ok(TrialTv {
                trial,
                tv_empirical: tv_distance(&empirical, model.target()),
                tv_expected: tv_distance(&empirical, &expected),
            })
        })
        .collect::<Result<_>>()?;
    let values: Vec<f64> = results.iter().map(|t| t.tv_empirical).collect();
    Ok(TvSummary {
        beta,
        m,
        weighting,
        mean: crate::stats::mean(&values),
        std: crate::stats::std_dev(&values),
        trials: results,
        bias: tv_distance(&expected, model.target()),
    })
}
