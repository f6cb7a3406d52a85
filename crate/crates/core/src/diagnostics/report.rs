use std::fmt;
use std::io::Write;

use serde::Serialize;

use super::histogram::{kl_divergence, TargetHistogram};
use super::measures::{alignment, discrimination, MeasureOptions};
use super::representation::{eval_pairs, Stage, TrainRepresentation};
use crate::corpus::SplitCorpus;
use crate::error::Result;
use crate::io::fmt_f64;
use crate::rng;
use crate::sampler::{enumerate_strategy, exact_target_distribution, AugConfig, Strategy};

/// How the training side of alignment/discrimination is built.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RepresentationSource {
    /// Every pair with positive probability, weighted by it.
    #[default]
    Exact,
    /// Seeded draws from the configuration.
    MonteCarlo(usize),
    /// A classical strategy's enumerated pairs (ignores the configuration).
    Enumerated(Strategy),
}

impl fmt::Display for RepresentationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RepresentationSource::Exact => f.write_str("exact"),
            RepresentationSource::MonteCarlo(n) => write!(f, "mc:{n}"),
            RepresentationSource::Enumerated(s) => write!(f, "enum:{s}"),
        }
    }
}

impl std::str::FromStr for RepresentationSource {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        if t == "exact" {
            return Ok(RepresentationSource::Exact);
        }
        if let Some(n) = t.strip_prefix("mc:") {
            if let Ok(n) = n.parse::<usize>() {
                return Ok(RepresentationSource::MonteCarlo(n));
            }
        }
        if let Some(name) = t.strip_prefix("enum:") {
            return Ok(RepresentationSource::Enumerated(name.parse()?));
        }
        Err(crate::error::Error::UnknownName { what: "representation", value: s.to_string() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagOptions {
    pub measure: MeasureOptions,
    /// Additive smoothing of the held-out target histogram.
    pub epsilon: f64,
    /// Which held-out targets to compare against; validation by default so
    /// configuration choice never looks at test targets.
    pub stage: Stage,
    pub source: RepresentationSource,
}

impl Default for DiagOptions {
    fn default() -> Self {
        DiagOptions {
            measure: MeasureOptions::default(),
            epsilon: 1e-9,
            stage: Stage::Val,
            source: RepresentationSource::Exact,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagReport {
    pub config: String,
    pub kl: f64,
    pub alignment: f64,
    pub discrimination: f64,
    /// `alignment / discrimination`; infinite when discrimination is zero.
    pub ad_ratio: f64,
    pub coverage: f64,
    pub seed: u64,
    pub stage: Stage,
    pub representation: String,
    pub eval_budget: usize,
    pub neg_targets: usize,
    pub epsilon: f64,
    pub max_len: usize,
}

impl DiagReport {
    pub const CSV_HEADER: [&'static str; 7] = ["config", "kl", "alignment", "discrimination", "ad_ratio", "coverage", "seed"];

    pub fn csv_row(&self) -> [String; 7] {
        [
            self.config.clone(),
            fmt_f64(self.kl),
            fmt_f64(self.alignment),
            fmt_f64(self.discrimination),
            fmt_f64(self.ad_ratio),
            fmt_f64(self.coverage),
            self.seed.to_string(),
        ]
    }
}

pub fn write_reports_csv<W: Write>(reports: &[DiagReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DiagReport::CSV_HEADER)?;
    for r in reports {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn ratio(a: f64, d: f64) -> f64 {
    if d > 0.0 {
        a / d
    } else if a > 0.0 {
        f64::INFINITY
    } else {
        f64::NAN
    }
}

pub(crate) fn held_out_histogram(split: &SplitCorpus, stage: Stage) -> TargetHistogram {
    match stage {
        Stage::Val => TargetHistogram::from_items(split.val_target.iter().copied()),
        Stage::Test => TargetHistogram::from_items(split.test_target.iter().copied()),
    }
}

pub(crate) fn build_representation(
    config: AugConfig,
    split: &SplitCorpus,
    source: RepresentationSource,
    seed: u64,
) -> Result<TrainRepresentation> {
    match source {
        RepresentationSource::Exact => TrainRepresentation::from_config_exact(config, &split.train),
        RepresentationSource::MonteCarlo(n) => {
            TrainRepresentation::from_monte_carlo(config, &split.train, n, &mut rng::stream(seed, 1))
        }
        RepresentationSource::Enumerated(s) => TrainRepresentation::from_pairs(&enumerate_strategy(&split.train, s)?),
    }
}

/// KL of the configuration's training targets against held-out targets, plus
/// alignment and discrimination on held-out pairs of the same stage.
///
/// Alignment and discrimination share one evaluation subset derived from
/// `seed`; Monte-Carlo representations use a separate stream of it.
pub fn diagnostics_report(config: AugConfig, split: &SplitCorpus, opts: &DiagOptions, seed: u64) -> Result<DiagReport> {
    let train_targets = exact_target_distribution(config, &split.train)?;
    let held_out = held_out_histogram(split, opts.stage);
    let kl = kl_divergence(&train_targets, &held_out, opts.epsilon, split.items.len())?;
    let rep = build_representation(config, split, opts.source, seed)?;
    let eval = eval_pairs(split, opts.stage);
    let (a, coverage) = alignment(&rep, &eval, &opts.measure, &mut rng::stream(seed, 0))?;
    let d = discrimination(&rep, &eval, &opts.measure, &mut rng::stream(seed, 0))?;
    Ok(DiagReport {
        config: config.to_string(),
        kl,
        alignment: a,
        discrimination: d,
        ad_ratio: ratio(a, d),
        coverage,
        seed,
        stage: opts.stage,
        representation: opts.source.to_string(),
        eval_budget: opts.measure.eval_budget,
        neg_targets: opts.measure.neg_targets,
        epsilon: opts.epsilon,
        max_len: opts.measure.max_len,
    })
}
