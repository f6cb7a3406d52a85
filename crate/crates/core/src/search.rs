//! Two-stage configuration filter.
//!
//! Stage 1 keeps the configurations whose training targets are closest (KL)
//! to the validation targets. Stage 2 ranks the survivors by alignment
//! (higher is better) and discrimination (lower is better) and keeps the
//! `top_k` with the smallest `max(rank_A, rank_D)`.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::SplitCorpus;
use crate::diagnostics::{
    alignment, build_representation, discrimination, eval_pairs, held_out_histogram, kl_divergence, DiagOptions,
};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::rng;
use crate::sampler::{exact_target_distribution, AugConfig, ExtExponent};

pub const DEFAULT_ALPHAS: [f64; 5] = [-2.0, -1.0, 0.0, 1.0, 2.0];
pub const DEFAULT_BETAS: [f64; 5] = [-1.0, 0.0, 1.0, 2.0, f64::INFINITY];
pub const DEFAULT_GAMMAS: [f64; 4] = [f64::NEG_INFINITY, -1.0, 0.0, 1.0];

/// Cartesian product with `alpha` outermost and `gamma` innermost.
pub fn grid(alphas: &[ExtExponent], betas: &[ExtExponent], gammas: &[ExtExponent]) -> Vec<AugConfig> {
    let mut out = Vec::with_capacity(alphas.len() * betas.len() * gammas.len());
    for &alpha in alphas {
        for &beta in betas {
            for &gamma in gammas {
                out.push(AugConfig { alpha, beta, gamma });
            }
        }
    }
    out
}

/// The 5 x 5 x 4 public-data grid (100 configurations).
pub fn default_grid() -> Vec<AugConfig> {
    let ext = |v: &[f64]| v.iter().copied().map(ExtExponent::from).collect::<Vec<_>>();
    grid(&ext(&DEFAULT_ALPHAS), &ext(&DEFAULT_BETAS), &ext(&DEFAULT_GAMMAS))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchOptions {
    /// Percentage of the grid kept by the KL stage, in `(0, 100]`.
    pub r_pct: f64,
    pub top_k: usize,
    pub diag: DiagOptions,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions { r_pct: 20.0, top_k: 10, diag: DiagOptions::default(), seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchRow {
    /// Position in the input grid.
    pub index: usize,
    pub config: AugConfig,
    pub kl: f64,
    pub alignment: Option<f64>,
    pub discrimination: Option<f64>,
    pub rank_a: Option<usize>,
    pub rank_d: Option<usize>,
    pub score: Option<usize>,
    pub kept_stage1: bool,
    pub kept_stage2: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SearchReport {
    /// One row per grid configuration, in grid order.
    pub rows: Vec<SearchRow>,
    /// Grid indices of the selected configurations, best first.
    pub selected: Vec<usize>,
    pub r_pct: f64,
    pub top_k: usize,
    pub seed: u64,
}

impl SearchReport {
    pub fn selected_configs(&self) -> Vec<AugConfig> {
        self.selected.iter().map(|&i| self.rows[i].config).collect()
    }

    pub fn survivors(&self) -> impl Iterator<Item = &SearchRow> {
        self.rows.iter().filter(|r| r.kept_stage1)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "index", "config", "alpha", "beta", "gamma", "kl", "alignment", "discrimination", "rank_a", "rank_d", "score",
            "kept_stage1", "kept_stage2",
        ])?;
        let opt_f = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.index.to_string(),
                r.config.to_string(),
                r.config.alpha.to_string(),
                r.config.beta.to_string(),
                r.config.gamma.to_string(),
                fmt_f64(r.kl),
                opt_f(r.alignment),
                opt_f(r.discrimination),
                opt_u(r.rank_a),
                opt_u(r.rank_d),
                opt_u(r.score),
                r.kept_stage1.to_string(),
                r.kept_stage2.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `ceil(n * r / 100)`.
pub fn stage1_count(n: usize, r_pct: f64) -> usize {
    ((n as f64) * r_pct / 100.0 - 1e-9).ceil().max(1.0) as usize
}

/// Dense ranks (ties share a rank, ranks are consecutive from 1).
pub fn dense_rank(values: &[f64], descending: bool) -> Vec<usize> {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| if descending { b.total_cmp(a) } else { a.total_cmp(b) });
    distinct.dedup();
    values
        .iter()
        .map(|v| distinct.iter().position(|d| d == v).unwrap() + 1)
        .collect()
}

/// Grid indices surviving the KL stage.
///
/// Configurations sharing `(alpha, beta)` have the same target distribution
/// and are kept or dropped together: groups are taken in `(KL, first grid
/// index)` order until at least `count` configurations are kept.
pub fn kl_stage(grid: &[AugConfig], kl: &[f64], count: usize) -> Vec<usize> {
    let mut order: Vec<(ExtKey, usize)> = Vec::new();
    let mut members: HashMap<ExtKey, Vec<usize>> = HashMap::new();
    for (i, c) in grid.iter().enumerate() {
        let key = (c.alpha.key(), c.beta.key());
        members.entry(key).or_insert_with(|| {
            order.push((key, i));
            Vec::new()
        }).push(i);
    }
    order.sort_by(|a, b| kl[a.1].total_cmp(&kl[b.1]).then(a.1.cmp(&b.1)));
    let mut kept = Vec::new();
    for (key, _) in order {
        if kept.len() >= count {
            break;
        }
        kept.extend_from_slice(&members[&key]);
    }
    kept.sort_unstable();
    kept
}

type ExtKey = ((i8, u64), (i8, u64));

/// Ranks survivors and returns `(rank_a, rank_d, score)` per survivor plus the
/// selected survivor positions, best first. Ties in score go to lower KL,
/// then to the earlier grid index.
pub fn trade_off_stage(
    alignments: &[f64],
    discriminations: &[f64],
    kls: &[f64],
    grid_index: &[usize],
    top_k: usize,
) -> (Vec<(usize, usize, usize)>, Vec<usize>) {
    let rank_a = dense_rank(alignments, true);
    let rank_d = dense_rank(discriminations, false);
    let ranks: Vec<(usize, usize, usize)> =
        rank_a.iter().zip(&rank_d).map(|(&a, &d)| (a, d, a.max(d))).collect();
    let mut order: Vec<usize> = (0..alignments.len()).collect();
    order.sort_by(|&x, &y| {
        ranks[x].2.cmp(&ranks[y].2).then(kls[x].total_cmp(&kls[y])).then(grid_index[x].cmp(&grid_index[y]))
    });
    order.truncate(top_k);
    (ranks, order)
}

pub fn filter_configs(grid: &[AugConfig], split: &SplitCorpus, opts: &SearchOptions) -> Result<SearchReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty configuration grid".into()));
    }
    if !(opts.r_pct > 0.0 && opts.r_pct <= 100.0) {
        return Err(Error::InvalidArgument(format!("r must be in (0, 100], got {}", opts.r_pct)));
    }
    let n1 = stage1_count(grid.len(), opts.r_pct);
    if opts.top_k == 0 || opts.top_k > n1 {
        return Err(Error::InvalidArgument(format!("k must be in 1..={n1}, got {}", opts.top_k)));
    }

    // KL once per (alpha, beta); gamma does not move the targets.
    let held_out = held_out_histogram(split, opts.diag.stage);
    let mut groups: Vec<(ExtKey, AugConfig)> = Vec::new();
    for c in grid {
        let key = (c.alpha.key(), c.beta.key());
        if !groups.iter().any(|(k, _)| *k == key) {
            groups.push((key, *c));
        }
    }
    let group_kl: Vec<f64> = groups
        .par_iter()
        .map(|(_, c)| {
            let p = exact_target_distribution(*c, &split.train)?;
            kl_divergence(&p, &held_out, opts.diag.epsilon, split.items.len())
        })
        .collect::<Result<_>>()?;
    let kl: Vec<f64> = grid
        .iter()
        .map(|c| {
            let key = (c.alpha.key(), c.beta.key());
            group_kl[groups.iter().position(|(k, _)| *k == key).unwrap()]
        })
        .collect();

    let survivors = kl_stage(grid, &kl, n1);
    let eval = eval_pairs(split, opts.diag.stage);
    let measured: Vec<(f64, f64)> = survivors
        .par_iter()
        .map(|&i| {
            let rep = build_representation(grid[i], split, opts.diag.source, opts.seed)?;
            let (a, _) = alignment(&rep, &eval, &opts.diag.measure, &mut rng::stream(opts.seed, 0))?;
            let d = discrimination(&rep, &eval, &opts.diag.measure, &mut rng::stream(opts.seed, 0))?;
            Ok((a, d))
        })
        .collect::<Result<_>>()?;

    let a: Vec<f64> = measured.iter().map(|m| m.0).collect();
    let d: Vec<f64> = measured.iter().map(|m| m.1).collect();
    let skl: Vec<f64> = survivors.iter().map(|&i| kl[i]).collect();
    let (ranks, picked) = trade_off_stage(&a, &d, &skl, &survivors, opts.top_k);

    let mut rows: Vec<SearchRow> = grid
        .iter()
        .enumerate()
        .map(|(i, &config)| SearchRow {
            index: i,
            config,
            kl: kl[i],
            alignment: None,
            discrimination: None,
            rank_a: None,
            rank_d: None,
            score: None,
            kept_stage1: false,
            kept_stage2: false,
        })
        .collect();
    for (pos, &i) in survivors.iter().enumerate() {
        let row = &mut rows[i];
        row.kept_stage1 = true;
        row.alignment = Some(a[pos]);
        row.discrimination = Some(d[pos]);
        row.rank_a = Some(ranks[pos].0);
        row.rank_d = Some(ranks[pos].1);
        row.score = Some(ranks[pos].2);
    }
    let selected: Vec<usize> = picked.iter().map(|&pos| survivors[pos]).collect();
    for &i in &selected {
        rows[i].kept_stage2 = true;
    }
    Ok(SearchReport { rows, selected, r_pct: opts.r_pct, top_k: opts.top_k, seed: opts.seed })
}
