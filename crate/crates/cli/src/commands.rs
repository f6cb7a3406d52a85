use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use genpas::corpus::{
    build_sequences, corpus_stats, leave_one_out_split, load_interactions, read_vocabulary, InputFormat, SPLIT_FILE,
    VOCAB_FILE,
};
use genpas::diagnostics::{diagnostics_report, write_reports_csv, DiagOptions, MeasureOptions, RepresentationSource, Stage};
use genpas::evaluator::{evaluate, evaluate_by_popularity, train_reference_model, EvalOptions, ModelKind, DEFAULT_NEIGHBORS};
use genpas::io::{fmt_f64, read_pairs_jsonl, write_pairs_jsonl};
use genpas::rng;
use genpas::sampler::{default_epoch_size, enumerate_strategy, recast_config, sample_epoch_parallel, AugConfig, ExtExponent, Strategy};
use genpas::search::{default_grid, filter_configs, grid, SearchOptions};
use genpas::seqaug::{augment_pairs, AugKind, SeqAugSpec};
use genpas::theorylab::{make_position_model, tv_experiment, BiasProfile, ProfileKind, TargetWeighting};
use genpas::{ItemId, SplitCorpus};

use crate::manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "genpas", version, about = "Training-pair sampling, diagnostics and configuration search for next-item recommendation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Dataset statistics of an interaction log or a split directory.
    Stats(StatsArgs),
    /// Leave-one-out split of an interaction log.
    Split(SplitArgs),
    /// All pairs of a classical strategy.
    Enumerate(EnumerateArgs),
    /// Seeded pair draws from an (alpha, beta, gamma) configuration.
    Sample(SampleArgs),
    /// KL, alignment and discrimination of configurations.
    Diagnose(DiagnoseArgs),
    /// Two-stage configuration filter over a grid.
    Search(SearchArgs),
    /// Total-variation experiment on a synthetic population.
    Theory(TheoryArgs),
    /// Train and evaluate a reference recommender on a pair file.
    Eval(EvalArgs),
    /// Apply an input-level augmentation to a pair file.
    Augment(AugmentArgs),
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    /// Interaction log (tsv, csv or jsonl) or split directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    format: Option<String>,
    /// Collapse runs of identical consecutive items.
    #[arg(long)]
    dedup: bool,
    /// JSON report path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    format: Option<String>,
    #[arg(long)]
    dedup: bool,
    /// Users with fewer raw interactions are dropped.
    #[arg(long, default_value_t = 4)]
    min_len: usize,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EnumerateArgs {
    /// LT, MT or SW.
    #[arg(long)]
    strategy: String,
    /// Split directory.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    /// Strategy name or `alpha,beta,gamma` (inf / -inf allowed).
    #[arg(long, allow_hyphen_values = true)]
    config: String,
    #[arg(long = "in")]
    input: PathBuf,
    /// Number of draws; defaults to the Multi-Target pair count.
    #[arg(long)]
    count: Option<usize>,
    /// Independent generator streams.
    #[arg(long, default_value_t = 1)]
    streams: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Clone)]
pub struct MeasureArgs {
    /// `val` or `test` held-out targets.
    #[arg(long, default_value = "val")]
    stage: String,
    #[arg(long, default_value_t = 1e-9)]
    epsilon: f64,
    #[arg(long, default_value_t = 500)]
    eval_budget: usize,
    #[arg(long, default_value_t = 100)]
    neg_targets: usize,
    #[arg(long, default_value_t = 512)]
    max_len: usize,
    /// `exact`, `mc:N` or `enum:LT|MT|SW`.
    #[arg(long, default_value = "exact")]
    representation: String,
}

impl MeasureArgs {
    fn options(&self) -> anyhow::Result<DiagOptions> {
        Ok(DiagOptions {
            measure: MeasureOptions { eval_budget: self.eval_budget, neg_targets: self.neg_targets, max_len: self.max_len },
            epsilon: self.epsilon,
            stage: self.stage.parse()?,
            source: self.representation.parse::<RepresentationSource>()?,
        })
    }
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// Repeatable; defaults to the three classical strategies.
    #[arg(long, allow_hyphen_values = true)]
    config: Vec<String>,
    #[command(flatten)]
    measure: MeasureArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `.json` writes JSON, anything else CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SearchArgs {
    #[arg(long = "in")]
    input: PathBuf,
    /// `default` or `alphas;betas;gammas` with comma-separated values.
    #[arg(long, default_value = "default", allow_hyphen_values = true)]
    grid: String,
    /// Percentage kept by the KL stage.
    #[arg(long = "r", default_value_t = 20.0)]
    r_pct: f64,
    /// Configurations kept by the trade-off stage.
    #[arg(long = "k", default_value_t = 10)]
    top_k: usize,
    #[command(flatten)]
    measure: MeasureArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct TheoryArgs {
    /// uniform-identical, linear-recency or random-dirichlet.
    #[arg(long)]
    profile: String,
    #[arg(long, default_value_t = 0.0)]
    strength: f64,
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    items: usize,
    #[arg(long, default_value_t = 1000)]
    m: usize,
    #[arg(long, allow_hyphen_values = true, default_value = "0")]
    beta: String,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// `theorem` (k^beta) or `sampler` ((k-1)^beta).
    #[arg(long, default_value = "theorem")]
    weighting: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// popularity, markov1 or knn.
    #[arg(long)]
    model: String,
    #[arg(long)]
    pairs: PathBuf,
    /// Split directory or its split.jsonl.
    #[arg(long)]
    split: PathBuf,
    /// Comma-separated cutoffs.
    #[arg(long = "k", default_value = "5,10")]
    ks: String,
    /// Rank against this many sampled negatives instead of every item.
    #[arg(long = "neg")]
    negatives: Option<usize>,
    #[arg(long, default_value = "test")]
    stage: String,
    #[arg(long, default_value_t = DEFAULT_NEIGHBORS)]
    neighbors: usize,
    /// Also report metrics per popularity group.
    #[arg(long)]
    group_by_popularity: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AugmentArgs {
    /// insert, delete, replace, reorder or sample.
    #[arg(long)]
    op: String,
    #[arg(long)]
    pairs: PathBuf,
    #[arg(long)]
    split: PathBuf,
    /// Reorder window.
    #[arg(long)]
    delta: Option<usize>,
    /// Retention probability for sample.
    #[arg(long, default_value_t = 0.9)]
    omega: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

pub fn run(cli: Cli, argv: &[String]) -> anyhow::Result<()> {
    match cli.command {
        Command::Stats(a) => stats(a, argv),
        Command::Split(a) => split(a, argv),
        Command::Enumerate(a) => enumerate(a, argv),
        Command::Sample(a) => sample(a, argv),
        Command::Diagnose(a) => diagnose(a, argv),
        Command::Search(a) => search(a, argv),
        Command::Theory(a) => theory(a, argv),
        Command::Eval(a) => eval(a, argv),
        Command::Augment(a) => augment(a, argv),
    }
}

fn format_of(path: &Path, explicit: &Option<String>) -> anyhow::Result<InputFormat> {
    Ok(match explicit {
        Some(f) => f.parse()?,
        None => InputFormat::from_path(path),
    })
}

/// A split directory, or a split file with `vocab.jsonl` beside it.
fn load_split(path: &Path) -> anyhow::Result<SplitCorpus> {
    let (dir, file) = if path.is_dir() { (path.to_path_buf(), path.join(SPLIT_FILE)) } else {
        (path.parent().map(Path::to_path_buf).unwrap_or_default(), path.to_path_buf())
    };
    let vocab = read_vocabulary(BufReader::new(
        File::open(dir.join(VOCAB_FILE)).with_context(|| format!("opening {}", dir.join(VOCAB_FILE).display()))?,
    ))?;
    let split = SplitCorpus::read_records(BufReader::new(File::open(&file).with_context(|| format!("opening {}", file.display()))?), vocab)?;
    Ok(split)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn finish(mut manifest: Manifest, out: &Path) -> anyhow::Result<()> {
    manifest.output(out);
    manifest.write(out)?;
    Ok(())
}

fn parse_config(s: &str) -> anyhow::Result<AugConfig> {
    Ok(s.parse::<AugConfig>()?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|v| v.trim().parse::<T>().map_err(|e| anyhow::anyhow!("bad {what} `{v}`: {e}")))
        .collect()
}

fn stats(a: StatsArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("stats", argv, None);
    manifest.input(&a.input)?;
    let report = if a.input.is_dir() {
        corpus_stats(&load_split(&a.input)?.full_sequences())?
    } else {
        let log = load_interactions(&a.input, format_of(&a.input, &a.format)?)?;
        corpus_stats(&build_sequences(&log, a.dedup).sequences)?
    };
    write_json(&a.out, &report)?;
    println!("{}", serde_json::to_string(&report)?);
    finish(manifest, &a.out)
}

fn split(a: SplitArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("split", argv, None);
    manifest.input(&a.input)?;
    let log = load_interactions(&a.input, format_of(&a.input, &a.format)?)?;
    let corpus = build_sequences(&log, a.dedup);
    let split = leave_one_out_split(&corpus, a.min_len)?;
    split.write_dir(&a.out)?;
    log::info!("kept {} users, dropped {} ({} interactions)", split.n_users(), split.dropped_users, split.dropped_interactions);
    println!(
        "{{\"users\":{},\"dropped_users\":{},\"dropped_interactions\":{}}}",
        split.n_users(),
        split.dropped_users,
        split.dropped_interactions
    );
    finish(manifest, &a.out)
}

fn write_pairs(path: &Path, pairs: &[genpas::TrainingPair], split: &SplitCorpus) -> anyhow::Result<()> {
    let mut out = create(path)?;
    write_pairs_jsonl(pairs, split, &mut out)?;
    out.flush()?;
    Ok(())
}

fn enumerate(a: EnumerateArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("enumerate", argv, None);
    manifest.input(&a.input)?;
    let strategy: Strategy = a.strategy.parse()?;
    let split = load_split(&a.input)?;
    let pairs = enumerate_strategy(&split.train, strategy)?;
    write_pairs(&a.out, &pairs, &split)?;
    println!("{}", pairs.len());
    finish(manifest, &a.out)
}

fn sample(a: SampleArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("sample", argv, Some(a.seed));
    manifest.input(&a.input)?;
    let config = parse_config(&a.config)?;
    let split = load_split(&a.input)?;
    let count = a.count.unwrap_or_else(|| default_epoch_size(&split.train));
    let pairs = sample_epoch_parallel(config, &split.train, count, a.seed, a.streams)?;
    write_pairs(&a.out, &pairs, &split)?;
    finish(manifest, &a.out)
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn diagnose(a: DiagnoseArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("diagnose", argv, Some(a.seed));
    manifest.input(&a.input)?;
    let split = load_split(&a.input)?;
    let opts = a.measure.options()?;
    let configs: Vec<AugConfig> = if a.config.is_empty() {
        Strategy::ALL.iter().map(|&s| recast_config(s)).collect()
    } else {
        a.config.iter().map(|c| parse_config(c)).collect::<anyhow::Result<_>>()?
    };
    let reports = configs
        .iter()
        .map(|&c| diagnostics_report(c, &split, &opts, a.seed).with_context(|| format!("configuration {c}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if is_json(&a.out) {
        write_json(&a.out, &reports)?;
    } else {
        let mut out = create(&a.out)?;
        write_reports_csv(&reports, &mut out)?;
        out.flush()?;
    }
    finish(manifest, &a.out)
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<AugConfig>> {
    if spec.eq_ignore_ascii_case("default") {
        return Ok(default_grid());
    }
    let parts: Vec<&str> = spec.split(';').collect();
    if parts.len() != 3 {
        bail!("grid must be `default` or `alphas;betas;gammas`, got `{spec}`");
    }
    let axis = |s: &str| parse_list::<ExtExponent>(s, "exponent");
    Ok(grid(&axis(parts[0])?, &axis(parts[1])?, &axis(parts[2])?))
}

fn search(a: SearchArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("search", argv, Some(a.seed));
    manifest.input(&a.input)?;
    let split = load_split(&a.input)?;
    let configs = parse_grid(&a.grid)?;
    let opts = SearchOptions { r_pct: a.r_pct, top_k: a.top_k, diag: a.measure.options()?, seed: a.seed };
    let report = filter_configs(&configs, &split, &opts)?;
    if is_json(&a.out) {
        write_json(&a.out, &report)?;
    } else {
        let mut out = create(&a.out)?;
        report.write_csv(&mut out)?;
        out.flush()?;
    }
    for c in report.selected_configs() {
        println!("{c}");
    }
    finish(manifest, &a.out)
}

fn theory(a: TheoryArgs, argv: &[String]) -> anyhow::Result<()> {
    let manifest = Manifest::new("theory", argv, Some(a.seed));
    let profile = BiasProfile::new(a.profile.parse::<ProfileKind>()?, a.strength);
    let beta: ExtExponent = a.beta.parse()?;
    let weighting: TargetWeighting = a.weighting.parse()?;
    let mut model_rng = rng::seeded(a.seed);
    let model = make_position_model(a.n, a.items, profile, &mut model_rng)?;
    let summary = tv_experiment(beta, &model, a.m, a.trials, weighting, rng::child_seed(&mut model_rng))?;
    let mut out = create(&a.out)?;
    writeln!(out, "trial,tv_empirical,tv_expected")?;
    for t in &summary.trials {
        writeln!(out, "{},{},{}", t.trial, fmt_f64(t.tv_empirical), fmt_f64(t.tv_expected))?;
    }
    out.flush()?;
    println!("{{\"mean\":{},\"std\":{},\"bias\":{}}}", fmt_f64(summary.mean), fmt_f64(summary.std), fmt_f64(summary.bias));
    finish(manifest, &a.out)
}

#[derive(serde::Serialize)]
struct EvalOutput {
    model: ModelKind,
    stage: Stage,
    negatives: Option<usize>,
    seed: u64,
    metrics: genpas::EvalResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    popularity_groups: Option<Vec<genpas::EvalResult>>,
}

fn read_pairs(path: &Path, split: &SplitCorpus) -> anyhow::Result<Vec<genpas::TrainingPair>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(read_pairs_jsonl(BufReader::new(file), split)?)
}

fn eval(a: EvalArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("eval", argv, Some(a.seed));
    manifest.input(&a.pairs)?;
    manifest.input(&a.split)?;
    let split = load_split(&a.split)?;
    let pairs = read_pairs(&a.pairs, &split)?;
    let kind: ModelKind = a.model.parse()?;
    let stage: Stage = a.stage.parse()?;
    let ks: Vec<usize> = parse_list(&a.ks, "cutoff")?;
    let model = train_reference_model(kind, &pairs, a.neighbors)?;
    let opts = EvalOptions { negatives: a.negatives, seed: a.seed };
    let metrics = evaluate(&model, &split, stage, &ks, opts)?;
    let popularity_groups = match a.group_by_popularity {
        Some(g) => Some(evaluate_by_popularity(&model, &split, stage, &ks, opts, g)?),
        None => None,
    };
    let output = EvalOutput { model: kind, stage, negatives: a.negatives, seed: a.seed, metrics, popularity_groups };
    write_json(&a.out, &output)?;
    finish(manifest, &a.out)
}

fn augment(a: AugmentArgs, argv: &[String]) -> anyhow::Result<()> {
    let mut manifest = Manifest::new("augment", argv, Some(a.seed));
    manifest.input(&a.pairs)?;
    manifest.input(&a.split)?;
    let split = load_split(&a.split)?;
    let pairs = read_pairs(&a.pairs, &split)?;
    let kind: AugKind = a.op.parse()?;
    let spec = SeqAugSpec { kind, delta: a.delta, omega: a.omega };
    let universe: Vec<ItemId> = (0..split.items.len() as ItemId).collect();
    let out_pairs = augment_pairs(&pairs, &spec, &universe, &mut rng::seeded(a.seed))?;
    write_pairs(&a.out, &out_pairs, &split)?;
    finish(manifest, &a.out)
}
