//! Three-step pair sampling.
//!
//! A pair is identified by `(u, k, j)`: user position `u`, 1-based target
//! position `k` in `2..=|s|` and 1-based input start `j` in `1..k`. Its
//! probability factorises as
//!
//! ```text
//! p(u, k, j) = p_alpha(u) * p_beta(k | u) * p_gamma(j | k, u)
//! p_alpha(u)       ∝ (|s_u| - 1)^alpha
//! p_beta(k | u)    ∝ (k - 1)^beta
//! p_gamma(j | k, u) ∝ j^gamma
//! ```
//!
//! Infinite exponents are point masses (or uniform over ties for users) on the
//! largest / smallest base and never go through `powf`.

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus::UserSequence;
use crate::diagnostics::TargetHistogram;
use crate::error::{Error, Result};
use crate::rng;
use crate::ItemId;

/// A sampling exponent on the extended real line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ExtExponent {
    Finite(f64),
    PosInf,
    NegInf,
}

impl ExtExponent {
    pub fn is_finite(self) -> bool {
        matches!(self, ExtExponent::Finite(_))
    }

    /// Total order key: -inf < finite < +inf.
    fn order_key(self) -> (i8, f64) {
        match self {
            ExtExponent::NegInf => (-1, 0.0),
            ExtExponent::Finite(v) => (0, v),
            ExtExponent::PosInf => (1, 0.0),
        }
    }

    /// Bit-level key for grouping configurations by exponent value.
    pub fn key(self) -> (i8, u64) {
        let (tag, v) = self.order_key();
        // normalise -0.0
        (tag, if v == 0.0 { 0 } else { v.to_bits() })
    }
}

impl PartialOrd for ExtExponent {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        self.order_key().partial_cmp(&other.order_key())
    }
}

impl From<f64> for ExtExponent {
    fn from(v: f64) -> Self {
        if v == f64::INFINITY {
            ExtExponent::PosInf
        } else if v == f64::NEG_INFINITY {
            ExtExponent::NegInf
        } else {
            ExtExponent::Finite(v)
        }
    }
}

impl fmt::Display for ExtExponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtExponent::Finite(v) => write!(f, "{v}"),
            ExtExponent::PosInf => f.write_str("inf"),
            ExtExponent::NegInf => f.write_str("-inf"),
        }
    }
}

impl FromStr for ExtExponent {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" | "+infinity" | "∞" | "+∞" => return Ok(ExtExponent::PosInf),
            "-inf" | "-infinity" | "-∞" => return Ok(ExtExponent::NegInf),
            _ => {}
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(ExtExponent::Finite(v)),
            _ => Err(Error::UnknownName { what: "exponent", value: s.to_string() }),
        }
    }
}

impl Serialize for ExtExponent {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ExtExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(ExtExponent::Finite(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// The `(alpha, beta, gamma)` triple defining a sampling strategy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub alpha: ExtExponent,
    pub beta: ExtExponent,
    pub gamma: ExtExponent,
}

impl AugConfig {
    pub fn new(alpha: impl Into<ExtExponent>, beta: impl Into<ExtExponent>, gamma: impl Into<ExtExponent>) -> Self {
        AugConfig { alpha: alpha.into(), beta: beta.into(), gamma: gamma.into() }
    }
}

impl fmt::Display for AugConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.alpha, self.beta, self.gamma)
    }
}

impl FromStr for AugConfig {
    type Err = Error;

    /// Accepts `a,b,g` with optional surrounding parentheses, or a strategy name.
    fn from_str(s: &str) -> Result<Self> {
        if let Ok(strategy) = s.parse::<Strategy>() {
            return Ok(recast_config(strategy));
        }
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts: Vec<&str> = inner.split(',').collect();
        if parts.len() != 3 {
            return Err(Error::UnknownName { what: "configuration", value: s.to_string() });
        }
        Ok(AugConfig { alpha: parts[0].parse()?, beta: parts[1].parse()?, gamma: parts[2].parse()? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    LastTarget,
    MultiTarget,
    SlideWindow,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::LastTarget, Strategy::MultiTarget, Strategy::SlideWindow];

    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::LastTarget => "LT",
            Strategy::MultiTarget => "MT",
            Strategy::SlideWindow => "SW",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "").as_str() {
            "lt" | "lasttarget" => Ok(Strategy::LastTarget),
            "mt" | "multitarget" => Ok(Strategy::MultiTarget),
            "sw" | "slidewindow" | "slidingwindow" => Ok(Strategy::SlideWindow),
            _ => Err(Error::UnknownStrategy(s.to_string())),
        }
    }
}

/// Exponents under which each classical strategy is a special case.
pub fn recast_config(strategy: Strategy) -> AugConfig {
    use ExtExponent::*;
    match strategy {
        Strategy::LastTarget => AugConfig { alpha: Finite(0.0), beta: PosInf, gamma: NegInf },
        Strategy::MultiTarget => AugConfig { alpha: Finite(1.0), beta: Finite(0.0), gamma: NegInf },
        Strategy::SlideWindow => AugConfig { alpha: Finite(2.0), beta: Finite(1.0), gamma: Finite(0.0) },
    }
}

/// Like [`recast_config`] but from a strategy name.
pub fn recast_config_by_name(name: &str) -> Result<AugConfig> {
    Ok(recast_config(name.parse()?))
}

/// One `(input, target)` training sample drawn from a user's sequence.
///
/// `user` is the position of the sequence in the slice it was drawn from;
/// `k` and `j` are 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub user: usize,
    pub k: usize,
    pub j: usize,
    pub input: Vec<ItemId>,
    pub target: ItemId,
    pub weight: f64,
}

impl TrainingPair {
    fn from_positions(seqs: &[UserSequence], user: usize, k: usize, j: usize, weight: f64) -> Self {
        let items = &seqs[user].items;
        TrainingPair { user, k, j, input: items[j - 1..k - 1].to_vec(), target: items[k - 1], weight }
    }
}

/// A finite distribution over indices, sampled by inverse CDF.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbVector {
    indices: Vec<usize>,
    probs: Vec<f64>,
    cumulative: Vec<f64>,
}

/// Finite exponents beyond this magnitude are weighted in log space.
const LOG_SPACE_EXPONENT: f64 = 8.0;
/// Bases beyond this are weighted in log space.
const LOG_SPACE_BASE: f64 = 1000.0;

impl ProbVector {
    pub fn point_mass(index: usize) -> Self {
        ProbVector { indices: vec![index], probs: vec![1.0], cumulative: vec![1.0] }
    }

    /// Normalises non-negative weights; zero-weight entries are dropped.
    pub fn from_weights(entries: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let (indices, weights): (Vec<usize>, Vec<f64>) =
            entries.into_iter().filter(|&(_, w)| w > 0.0).unzip();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArgument("non-finite weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if indices.is_empty() || total <= 0.0 {
            return Err(Error::InvalidArgument("distribution has no positive weight".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(Self::from_normalized(indices, probs))
    }

    fn from_normalized(indices: Vec<usize>, probs: Vec<f64>) -> Self {
        let mut acc = 0.0;
        let cumulative = probs
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        ProbVector { indices, probs, cumulative }
    }

    fn uniform(indices: Vec<usize>) -> Self {
        let p = 1.0 / indices.len() as f64;
        let probs = vec![p; indices.len()];
        Self::from_normalized(indices, probs)
    }

    /// `p(i) ∝ base_i^exponent` over `(index, base)` pairs with bases >= 1.
    ///
    /// `+inf` keeps the entries with the largest base (uniformly), `-inf` the
    /// smallest.
    pub fn power_law(entries: &[(usize, f64)], exponent: ExtExponent) -> Self {
        assert!(!entries.is_empty(), "power_law over an empty support");
        match exponent {
            ExtExponent::PosInf | ExtExponent::NegInf => {
                let pick = |a: f64, b: f64| if exponent == ExtExponent::PosInf { a.max(b) } else { a.min(b) };
                let best = entries.iter().map(|&(_, b)| b).reduce(pick).unwrap();
                Self::uniform(entries.iter().filter(|&&(_, b)| b == best).map(|&(i, _)| i).collect())
            }
            ExtExponent::Finite(e) if e == 0.0 => Self::uniform(entries.iter().map(|&(i, _)| i).collect()),
            ExtExponent::Finite(e) => {
                let max_base = entries.iter().map(|&(_, b)| b).fold(0.0, f64::max);
                let weights: Vec<f64> = if e.abs() > LOG_SPACE_EXPONENT || max_base > LOG_SPACE_BASE {
                    let logs: Vec<f64> = entries.iter().map(|&(_, b)| e * b.ln()).collect();
                    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    logs.iter().map(|l| (l - top).exp()).collect()
                } else {
                    entries.iter().map(|&(_, b)| b.powf(e)).collect()
                };
                let total: f64 = weights.iter().sum();
                let indices = entries.iter().map(|&(i, _)| i).collect();
                Self::from_normalized(indices, weights.iter().map(|w| w / total).collect())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn is_point_mass(&self) -> bool {
        self.indices.len() == 1
    }

    /// Probability of `index` (zero when outside the support).
    pub fn prob(&self, index: usize) -> f64 {
        // indices are ascending for every constructor used in this crate
        match self.indices.binary_search(&index) {
            Ok(pos) => self.probs[pos],
            Err(_) => self
                .indices
                .iter()
                .position(|&i| i == index)
                .map_or(0.0, |pos| self.probs[pos]),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().copied().zip(self.probs.iter().copied())
    }

    /// Draws one index with a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random::<f64>() * self.cumulative[self.cumulative.len() - 1];
        let pos = self.cumulative.partition_point(|&c| c <= u);
        self.indices[pos.min(self.indices.len() - 1)]
    }

    /// Mean of the index under this distribution.
    pub fn mean_index(&self) -> f64 {
        self.iter().map(|(i, p)| i as f64 * p).sum()
    }
}

/// Distribution over user positions: `p(u) ∝ (|s_u| - 1)^alpha`.
/// Users with fewer than two items get zero mass.
pub fn user_weights(seqs: &[UserSequence], alpha: ExtExponent) -> Result<ProbVector> {
    let entries: Vec<(usize, f64)> = seqs
        .iter()
        .enumerate()
        .filter(|(_, s)| s.len() >= 2)
        .map(|(u, s)| (u, (s.len() - 1) as f64))
        .collect();
    if entries.is_empty() {
        return Err(Error::NoEligibleUser);
    }
    Ok(ProbVector::power_law(&entries, alpha))
}

/// Distribution over target positions `k ∈ 2..=seq_len`: `p(k) ∝ (k - 1)^beta`.
pub fn target_weights(seq_len: usize, beta: ExtExponent) -> ProbVector {
    assert!(seq_len >= 2, "target_weights needs a sequence of length >= 2");
    let entries: Vec<(usize, f64)> = (2..=seq_len).map(|k| (k, (k - 1) as f64)).collect();
    ProbVector::power_law(&entries, beta)
}

/// Distribution over input starts `j ∈ 1..k`: `p(j) ∝ j^gamma`.
pub fn input_weights(k: usize, gamma: ExtExponent) -> ProbVector {
    assert!(k >= 2, "input_weights needs a target position >= 2");
    let entries: Vec<(usize, f64)> = (1..k).map(|j| (j, j as f64)).collect();
    ProbVector::power_law(&entries, gamma)
}

/// Precomputed sampler for one configuration over one corpus.
///
/// Target and input distributions are built lazily per sequence length /
/// target position and shared between threads.
pub struct PairSampler<'a> {
    config: AugConfig,
    seqs: &'a [UserSequence],
    users: ProbVector,
    targets: Vec<OnceLock<ProbVector>>,
    inputs: Vec<OnceLock<ProbVector>>,
}

impl<'a> PairSampler<'a> {
    pub fn new(config: AugConfig, seqs: &'a [UserSequence]) -> Result<Self> {
        let users = user_weights(seqs, config.alpha)?;
        let max_len = seqs.iter().map(UserSequence::len).max().unwrap_or(0);
        Ok(PairSampler {
            config,
            seqs,
            users,
            targets: (0..=max_len).map(|_| OnceLock::new()).collect(),
            inputs: (0..=max_len).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn config(&self) -> AugConfig {
        self.config
    }

    pub fn sequences(&self) -> &'a [UserSequence] {
        self.seqs
    }

    pub fn users(&self) -> &ProbVector {
        &self.users
    }

    pub fn targets(&self, seq_len: usize) -> &ProbVector {
        self.targets[seq_len].get_or_init(|| target_weights(seq_len, self.config.beta))
    }

    pub fn inputs(&self, k: usize) -> &ProbVector {
        self.inputs[k].get_or_init(|| input_weights(k, self.config.gamma))
    }

    /// `p_alpha(u) * p_beta(k|u) * p_gamma(j|k,u)`.
    ///
    /// Users with fewer than two items have probability zero for any `(k, j)`.
    pub fn joint(&self, u: usize, k: usize, j: usize) -> Result<f64> {
        let seq = self
            .seqs
            .get(u)
            .ok_or_else(|| Error::OutOfRange(format!("user {u} of {}", self.seqs.len())))?;
        if seq.len() < 2 {
            return Ok(0.0);
        }
        if !(2..=seq.len()).contains(&k) {
            return Err(Error::OutOfRange(format!("target position {k} not in 2..={}", seq.len())));
        }
        if !(1..k).contains(&j) {
            return Err(Error::OutOfRange(format!("start position {j} not in 1..{k}")));
        }
        Ok(self.users.prob(u) * self.targets(seq.len()).prob(k) * self.inputs(k).prob(j))
    }

    /// Draws `u`, then `k`, then `j`, one uniform variate per step.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> TrainingPair {
        let u = self.users.sample(rng);
        let k = self.targets(self.seqs[u].len()).sample(rng);
        let j = self.inputs(k).sample(rng);
        TrainingPair::from_positions(self.seqs, u, k, j, 1.0)
    }

    pub fn epoch<'s, R: Rng>(&'s self, count: usize, rng: &'s mut R) -> impl Iterator<Item = TrainingPair> + 's {
        (0..count).map(move |_| self.draw(rng))
    }

    /// Every `(u, k, j)` with positive probability, weighted by its joint
    /// probability, in `(u, k, j)` ascending order.
    pub fn support(&self) -> Vec<TrainingPair> {
        let mut out = Vec::new();
        for (u, pu) in self.users.iter() {
            let len = self.seqs[u].len();
            for (k, pk) in self.targets(len).iter() {
                for (j, pj) in self.inputs(k).iter() {
                    out.push(TrainingPair::from_positions(self.seqs, u, k, j, pu * pk * pj));
                }
            }
        }
        out
    }
}

pub fn joint_probability(config: AugConfig, seqs: &[UserSequence], u: usize, k: usize, j: usize) -> Result<f64> {
    PairSampler::new(config, seqs)?.joint(u, k, j)
}

pub fn sample_pair<R: Rng + ?Sized>(config: AugConfig, seqs: &[UserSequence], rng: &mut R) -> Result<TrainingPair> {
    Ok(PairSampler::new(config, seqs)?.draw(rng))
}

/// `count` independent draws in draw order.
pub fn sample_epoch<R: Rng>(config: AugConfig, seqs: &[UserSequence], count: usize, rng: &mut R) -> Result<Vec<TrainingPair>> {
    if count == 0 {
        return Err(Error::InvalidArgument("epoch size must be at least 1".into()));
    }
    let sampler = PairSampler::new(config, seqs)?;
    Ok(sampler.epoch(count, rng).collect())
}

/// Draws `count` pairs split over `streams` independent generator streams.
/// The result is the concatenation of the streams in stream order, so it
/// depends only on `(seed, streams)`.
pub fn sample_epoch_parallel(
    config: AugConfig,
    seqs: &[UserSequence],
    count: usize,
    seed: u64,
    streams: usize,
) -> Result<Vec<TrainingPair>> {
    if count == 0 {
        return Err(Error::InvalidArgument("epoch size must be at least 1".into()));
    }
    let streams = streams.max(1);
    let sampler = PairSampler::new(config, seqs)?;
    let shards: Vec<Vec<TrainingPair>> = (0..streams)
        .into_par_iter()
        .map(|s| {
            let n = count / streams + usize::from(s < count % streams);
            let mut r = rng::stream(seed, s as u64);
            sampler.epoch(n, &mut r).collect()
        })
        .collect();
    Ok(shards.into_iter().flatten().collect())
}

/// Number of pairs Multi-Target would produce; the default epoch volume.
pub fn default_epoch_size(seqs: &[UserSequence]) -> usize {
    seqs.iter().map(|s| s.len().saturating_sub(1)).sum()
}

/// All pairs of a classical strategy in `(user, k, j)` order, each weighted
/// `1 / total`.
pub fn enumerate_strategy(seqs: &[UserSequence], strategy: Strategy) -> Result<Vec<TrainingPair>> {
    let mut out = Vec::new();
    for (u, seq) in seqs.iter().enumerate() {
        let n = seq.len();
        if n < 2 {
            continue;
        }
        match strategy {
            Strategy::LastTarget => out.push(TrainingPair::from_positions(seqs, u, n, 1, 0.0)),
            Strategy::MultiTarget => {
                for k in 2..=n {
                    out.push(TrainingPair::from_positions(seqs, u, k, 1, 0.0));
                }
            }
            Strategy::SlideWindow => {
                for k in 2..=n {
                    for j in 1..k {
                        out.push(TrainingPair::from_positions(seqs, u, k, j, 0.0));
                    }
                }
            }
        }
    }
    if out.is_empty() {
        return Err(Error::NoEligibleUser);
    }
    let w = 1.0 / out.len() as f64;
    for pair in &mut out {
        pair.weight = w;
    }
    Ok(out)
}

/// Closed-form pair count of a strategy.
pub fn strategy_pair_count(seqs: &[UserSequence], strategy: Strategy) -> usize {
    seqs.iter()
        .map(|s| s.len())
        .filter(|&n| n >= 2)
        .map(|n| match strategy {
            Strategy::LastTarget => 1,
            Strategy::MultiTarget => n - 1,
            Strategy::SlideWindow => n * (n - 1) / 2,
        })
        .sum()
}

/// Marginal distribution of the target item under `config`; `gamma` plays no role.
pub fn exact_target_distribution(config: AugConfig, seqs: &[UserSequence]) -> Result<TargetHistogram> {
    let users = user_weights(seqs, config.alpha)?;
    let mut mass = std::collections::BTreeMap::<ItemId, f64>::new();
    for (u, pu) in users.iter() {
        let items = &seqs[u].items;
        for (k, pk) in target_weights(items.len(), config.beta).iter() {
            *mass.entry(items[k - 1]).or_insert(0.0) += pu * pk;
        }
    }
    Ok(TargetHistogram::from_weights(mass))
}

/// Expected `(u, k, j)` position under `config`, used for the monotone-bias
/// checks: returns `(E[|s_u|], E[k], E[j])`.
pub fn expected_positions(config: AugConfig, seqs: &[UserSequence]) -> Result<(f64, f64, f64)> {
    let sampler = PairSampler::new(config, seqs)?;
    let (mut len, mut kk, mut jj) = (0.0, 0.0, 0.0);
    for (u, pu) in sampler.users().iter() {
        let n = seqs[u].len();
        len += pu * n as f64;
        for (k, pk) in sampler.targets(n).iter() {
            kk += pu * pk * k as f64;
            jj += pu * pk * sampler.inputs(k).mean_index();
        }
    }
    Ok((len, kk, jj))
}
