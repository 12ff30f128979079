//! Command-line pipeline: each subcommand runs one stage over on-disk
//! artifacts, `run` chains them all from a config file.

pub mod config;
pub mod manifest;
pub mod stages;

use std::collections::BTreeMap;
use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use txnet::dataset::{AssembleOptions, FeatureMatrix};
use txnet::eval::ClassReport;
use txnet::gbdt::BoostedEnsemble;
use txnet::ingest::{load_candles, load_social, load_transactions, LoadOptions, TxFormat};
use txnet::netprops::NetPropsConfig;
use txnet::synth;
use txnet::ta::{TaFeatures, WARMUP_ROWS};

use config::{label_mode_name, parse_label_mode, GridSpec, IntervalPolicy, ModelFamily, RunConfig};
use manifest::Outputs;

#[derive(Debug, Parser)]
#[command(
    name = "txnet",
    version,
    about = "Transaction-network features and trend classification"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a transaction file and write the normalized log and address dictionary.
    Ingest(IngestArgs),
    /// Cut the transaction span into similarity-driven intervals.
    Slice(SliceArgs),
    /// Network features per day or per interval.
    GraphMetrics(GraphArgs),
    /// Technical indicators from daily candles.
    Ta(TaArgs),
    /// Align feature families and label next-day trends.
    Dataset(DatasetArgs),
    /// Grid-search and fit a model on the training rows.
    Train(TrainArgs),
    /// Score a model on the test rows.
    Evaluate(EvaluateArgs),
    /// Compare evaluated models and render the summary figures.
    Report(ReportArgs),
    /// Run every stage from a config file.
    Run(RunArgs),
    /// Write a small synthetic input set and a matching config.
    Fixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    #[arg(long, default_value_t = txnet::ingest::DEFAULT_MAX_REJECT_RATIO)]
    pub max_reject_ratio: f64,
    #[arg(long)]
    pub drop_zero_value: bool,
    #[arg(long)]
    pub drop_self_loops: bool,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            max_reject_ratio: self.max_reject_ratio,
            drop_zero_value: self.drop_zero_value,
            drop_self_loops: self.drop_self_loops,
        }
    }

    fn describe(&self, m: &mut BTreeMap<String, String>) {
        m.insert("max_reject_ratio".into(), self.max_reject_ratio.to_string());
        m.insert("drop_zero_value".into(), self.drop_zero_value.to_string());
        m.insert("drop_self_loops".into(), self.drop_self_loops.to_string());
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub transactions: PathBuf,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[arg(long)]
    pub transactions: PathBuf,
    /// Daily candles for the similarity-versus-price diagnostics.
    #[arg(long)]
    pub candles: Option<PathBuf>,
    #[arg(long, default_value_t = txnet::slicing::DEFAULT_MIN_DAYS)]
    pub min_days: usize,
    #[arg(long, default_value_t = txnet::slicing::DEFAULT_MAX_DAYS)]
    pub max_days: usize,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GraphArgs {
    #[arg(long)]
    pub transactions: PathBuf,
    /// `intervals.csv` from `slice`; daily snapshots when absent.
    #[arg(long)]
    pub intervals: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    pub louvain_seed: u64,
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TaArgs {
    #[arg(long)]
    pub candles: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub candles: PathBuf,
    /// `network/features.csv` from `graph-metrics`.
    #[arg(long)]
    pub network: Option<PathBuf>,
    /// `ta/features.csv` from `ta`.
    #[arg(long)]
    pub ta: Option<PathBuf>,
    /// Raw social series (`date,tweet_count,trend_score`).
    #[arg(long)]
    pub social: Option<PathBuf>,
    #[arg(long, default_value_t = txnet::dataset::DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, default_value = "next_return")]
    pub label_mode: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// `bm` or `fm`.
    #[arg(long)]
    pub model: String,
    #[arg(long)]
    pub train_end: NaiveDate,
    /// `preset` or `key:v1,v2;key:v1...`.
    #[arg(long, default_value = "preset")]
    pub grid: String,
    #[arg(long, default_value_t = 3)]
    pub folds: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub matrix: PathBuf,
    /// `model.json` from `train`.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub train_end: NaiveDate,
    #[arg(long, default_value_t = 5)]
    pub permutation_repeats: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// `report.json` files from `evaluate`.
    #[arg(long = "report", required = true)]
    pub reports: Vec<PathBuf>,
    /// `model.json` files whose hyperparameters are tabulated.
    #[arg(long = "model")]
    pub models: Vec<PathBuf>,
    /// Feature matrix for the correlation network.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` overrides applied after the config file.
    #[arg(long = "set")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn execute(cli: Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring worker pool")?;
    }
    match cli.command {
        Command::Ingest(a) => cmd_ingest(&a),
        Command::Slice(a) => cmd_slice(&a),
        Command::GraphMetrics(a) => cmd_graph(&a),
        Command::Ta(a) => cmd_ta(&a),
        Command::Dataset(a) => cmd_dataset(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Run(a) => cmd_run(&a),
        Command::Fixture(a) => write_fixture(&a.out, a.seed),
    }
}

fn settings(pairs: &[(&str, String)]) -> BTreeMap<String, String> {
    pairs
        .iter()
        .map(|(k, v)| (k.to_string(), v.clone()))
        .collect()
}

fn file_name(p: &Path) -> String {
    p.file_name()
        .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

fn cmd_ingest(a: &IngestArgs) -> Result<()> {
    let mut cfg = settings(&[("transactions", file_name(&a.transactions))]);
    a.load.describe(&mut cfg);
    let mut out = Outputs::create(&a.out, "ingest", cfg, &[("transactions", &a.transactions)])?;
    let r = load_transactions(
        &a.transactions,
        TxFormat::from_path(&a.transactions),
        &a.load.options(),
    )
    .map_err(Into::into)
    .and_then(|log| stages::ingest(&mut out, &log));
    out.finish(r)
}

fn cmd_slice(a: &SliceArgs) -> Result<()> {
    let mut cfg = settings(&[
        ("transactions", file_name(&a.transactions)),
        (
            "candles",
            a.candles.as_deref().map(file_name).unwrap_or_default(),
        ),
        ("min_days", a.min_days.to_string()),
        ("max_days", a.max_days.to_string()),
    ]);
    a.load.describe(&mut cfg);
    let mut inputs = vec![("transactions", a.transactions.as_path())];
    if let Some(c) = &a.candles {
        inputs.push(("candles", c));
    }
    let mut out = Outputs::create(&a.out, "slice", cfg, &inputs)?;
    let r = (|| {
        let log = load_transactions(
            &a.transactions,
            TxFormat::from_path(&a.transactions),
            &a.load.options(),
        )?;
        let candles = a.candles.as_ref().map(load_candles).transpose()?;
        stages::slice(&mut out, &log, candles.as_ref(), a.min_days, a.max_days).map(|_| ())
    })();
    out.finish(r)
}

fn cmd_graph(a: &GraphArgs) -> Result<()> {
    let mut cfg = settings(&[
        ("transactions", file_name(&a.transactions)),
        (
            "intervals",
            a.intervals.as_deref().map(file_name).unwrap_or_default(),
        ),
        ("louvain_seed", a.louvain_seed.to_string()),
    ]);
    a.load.describe(&mut cfg);
    let mut inputs = vec![("transactions", a.transactions.as_path())];
    if let Some(i) = &a.intervals {
        inputs.push(("intervals", i));
    }
    let mut out = Outputs::create(&a.out, "graph-metrics", cfg, &inputs)?;
    out.seed("louvain", a.louvain_seed);
    let r = (|| {
        let log = load_transactions(
            &a.transactions,
            TxFormat::from_path(&a.transactions),
            &a.load.options(),
        )?;
        let intervals = a
            .intervals
            .as_ref()
            .map(|p| stages::read_intervals(&std::fs::read_to_string(p)?))
            .transpose()?;
        let np = NetPropsConfig {
            louvain_seed: a.louvain_seed,
            ..NetPropsConfig::default()
        };
        stages::graph_metrics(&mut out, &log, intervals.as_deref(), &np).map(|_| ())
    })();
    out.finish(r)
}

fn cmd_ta(a: &TaArgs) -> Result<()> {
    let cfg = settings(&[("candles", file_name(&a.candles))]);
    let mut out = Outputs::create(&a.out, "ta", cfg, &[("candles", &a.candles)])?;
    let r = load_candles(&a.candles)
        .map_err(Into::into)
        .and_then(|c| stages::technical(&mut out, &c).map(|_| ()));
    out.finish(r)
}

fn cmd_dataset(a: &DatasetArgs) -> Result<()> {
    if a.threshold.is_nan() || a.threshold <= 0.0 {
        bail!("threshold must be positive");
    }
    let opts = AssembleOptions {
        threshold: a.threshold,
        label_mode: parse_label_mode(&a.label_mode)?,
        warmup_rows: WARMUP_ROWS,
    };
    let name = |p: &Option<PathBuf>| p.as_deref().map(file_name).unwrap_or_default();
    let cfg = settings(&[
        ("candles", file_name(&a.candles)),
        ("network", name(&a.network)),
        ("ta", name(&a.ta)),
        ("social", name(&a.social)),
        ("threshold", a.threshold.to_string()),
        ("label_mode", label_mode_name(opts.label_mode).into()),
    ]);
    let mut inputs = vec![("candles", a.candles.as_path())];
    for (k, p) in [
        ("network", &a.network),
        ("ta", &a.ta),
        ("social", &a.social),
    ] {
        if let Some(p) = p {
            inputs.push((k, p));
        }
    }
    let mut out = Outputs::create(&a.out, "dataset", cfg, &inputs)?;
    let r = (|| {
        let candles = load_candles(&a.candles)?;
        let network = a
            .network
            .as_ref()
            .map(|p| txnet::netprops::read_csv(File::open(p)?).map_err(anyhow::Error::from))
            .transpose()?;
        let technical =
            a.ta.as_ref()
                .map(|p| TaFeatures::read_csv(File::open(p)?).map_err(anyhow::Error::from))
                .transpose()?;
        let social = a
            .social
            .as_ref()
            .map(load_social)
            .transpose()?
            .map(|s| s.features());
        stages::dataset(
            &mut out,
            &candles,
            network.as_deref(),
            technical.as_ref(),
            social.as_ref(),
            &opts,
        )
        .map(|_| ())
    })();
    out.finish(r)
}

fn read_matrix(p: &Path) -> Result<FeatureMatrix> {
    let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
    Ok(FeatureMatrix::read_csv(f)?)
}

fn read_model(p: &Path) -> Result<BoostedEnsemble> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    Ok(BoostedEnsemble::from_json(&text)?)
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let family: ModelFamily = a.model.parse()?;
    let grid: GridSpec = a.grid.parse()?;
    let cfg = settings(&[
        ("matrix", file_name(&a.matrix)),
        ("model", family.name().into()),
        ("train_end", a.train_end.to_string()),
        ("grid", grid.to_string()),
        ("folds", a.folds.to_string()),
        ("seed", a.seed.to_string()),
    ]);
    let mut out = Outputs::create(&a.out, "train", cfg, &[("matrix", &a.matrix)])?;
    let r = read_matrix(&a.matrix).and_then(|m| {
        let g = grid.grid(&family.preset(a.seed));
        stages::train(&mut out, &m, family, &g, a.folds, a.seed, a.train_end).map(|_| ())
    });
    out.finish(r)
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let cfg = settings(&[
        ("matrix", file_name(&a.matrix)),
        ("model", file_name(&a.model)),
        ("train_end", a.train_end.to_string()),
        ("permutation_repeats", a.permutation_repeats.to_string()),
    ]);
    let mut out = Outputs::create(
        &a.out,
        "evaluate",
        cfg,
        &[("matrix", &a.matrix), ("model", &a.model)],
    )?;
    let r = (|| {
        let m = read_matrix(&a.matrix)?;
        let model = read_model(&a.model)?;
        stages::evaluate(&mut out, &m, &model, a.train_end, a.permutation_repeats).map(|_| ())
    })();
    out.finish(r)
}

fn read_report(p: &Path) -> Result<(ModelFamily, ClassReport)> {
    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
    let v: serde_json::Value = serde_json::from_str(&text)?;
    let family: ModelFamily = v["model"]
        .as_str()
        .context("report has no model field")?
        .parse()?;
    let report: ClassReport =
        serde_json::from_value(v["report"].clone()).context("report field")?;
    Ok((family, report))
}

fn cmd_report(a: &ReportArgs) -> Result<()> {
    let mut cfg = settings(&[
        (
            "matrix",
            a.matrix.as_deref().map(file_name).unwrap_or_default(),
        ),
        ("alpha", a.alpha.to_string()),
    ]);
    let mut inputs: Vec<(String, &Path)> = Vec::new();
    for (i, p) in a.reports.iter().enumerate() {
        cfg.insert(format!("report.{i}"), file_name(p));
        inputs.push((format!("report.{i}"), p));
    }
    for (i, p) in a.models.iter().enumerate() {
        cfg.insert(format!("model.{i}"), file_name(p));
        inputs.push((format!("model.{i}"), p));
    }
    if let Some(m) = &a.matrix {
        inputs.push(("matrix".into(), m));
    }
    let inputs: Vec<(&str, &Path)> = inputs.iter().map(|(k, p)| (k.as_str(), *p)).collect();
    let mut out = Outputs::create(&a.out, "report", cfg, &inputs)?;
    let r = (|| {
        let reports = a
            .reports
            .iter()
            .map(|p| read_report(p))
            .collect::<Result<Vec<_>>>()?;
        let configs = a
            .models
            .iter()
            .map(|p| read_model(p).map(|m| (stages::family_of(&m), m.config)))
            .collect::<Result<Vec<_>>>()?;
        let matrix = a.matrix.as_deref().map(read_matrix).transpose()?;
        stages::report(&mut out, &reports, &configs, matrix.as_ref(), a.alpha)
    })();
    out.finish(r)
}

fn cmd_run(a: &RunArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    for o in &a.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(s) = a.seed {
        cfg.seed = Some(s);
    }
    if let Some(o) = &a.out {
        cfg.out = Some(o.clone());
    }
    run_pipeline(&cfg)
}

/// Every stage in order. Artifacts written before a failure stay listed in
/// the manifest, which then names the failing stage.
pub fn run_pipeline(cfg: &RunConfig) -> Result<()> {
    let out_dir = cfg.require(&cfg.out, "out")?;
    let tx_path = cfg.require(&cfg.transactions, "transactions")?;
    let candles_path = cfg.require(&cfg.candles, "candles")?;
    cfg.require(&cfg.seed, "seed")?;
    cfg.require(&cfg.train_end, "train_end")?;
    let mut inputs = vec![
        ("transactions", tx_path.as_path()),
        ("candles", candles_path.as_path()),
    ];
    if let Some(s) = &cfg.social {
        inputs.push(("social", s));
    }
    let mut out = Outputs::create(out_dir, "run", cfg.canonical(), &inputs)?;
    let r = pipeline(&mut out, cfg);
    out.finish(r)
}

fn pipeline(out: &mut Outputs, cfg: &RunConfig) -> Result<()> {
    let seed = cfg.seed.expect("checked");
    let train_end = cfg.train_end.expect("checked");
    out.stage("load");
    let tx_path = cfg.transactions.as_ref().expect("checked");
    let load = LoadOptions {
        max_reject_ratio: cfg.max_reject_ratio,
        drop_zero_value: cfg.drop_zero_value,
        drop_self_loops: cfg.drop_self_loops,
    };
    let log = load_transactions(tx_path, TxFormat::from_path(tx_path), &load)?;
    let candles = load_candles(cfg.candles.as_ref().expect("checked"))?;
    let social = cfg
        .social
        .as_ref()
        .map(load_social)
        .transpose()?
        .map(|s| s.features());

    stages::ingest(out, &log)?;
    let intervals = match cfg.interval {
        IntervalPolicy::Daily => None,
        IntervalPolicy::Dynamic { min_days, max_days } => Some(stages::slice(
            out,
            &log,
            Some(&candles),
            min_days,
            max_days,
        )?),
    };
    out.seed("louvain", cfg.louvain_seed);
    let np = NetPropsConfig {
        louvain_seed: cfg.louvain_seed,
        ..NetPropsConfig::default()
    };
    let network = stages::graph_metrics(out, &log, intervals.as_deref(), &np)?;
    let technical = stages::technical(out, &candles)?;
    let opts = AssembleOptions {
        threshold: cfg.threshold,
        label_mode: cfg.label_mode,
        warmup_rows: WARMUP_ROWS,
    };
    let matrix = stages::dataset(
        out,
        &candles,
        Some(&network),
        Some(&technical),
        social.as_ref(),
        &opts,
    )?;

    let mut reports = Vec::new();
    let mut configs = Vec::new();
    for &family in &cfg.models {
        let grid = cfg.grid.grid(&family.preset(seed));
        let t = stages::train(out, &matrix, family, &grid, cfg.folds, seed, train_end)?;
        let report = stages::evaluate(out, &matrix, &t.model, train_end, cfg.permutation_repeats)?;
        configs.push((family, t.model.config));
        reports.push((family, report));
    }
    stages::report(out, &reports, &configs, Some(&matrix), cfg.alpha)
}

/// First transaction day of the generated fixture plus this many days ends training.
pub const FIXTURE_TRAIN_DAYS: u64 = 79;

/// Write synthetic transactions, candles, social rows and a run config into `dir`.
pub fn write_fixture(dir: &Path, seed: u64) -> Result<()> {
    let cfg = settings(&[("seed", seed.to_string())]);
    let mut out = Outputs::create(dir, "fixture", cfg, &[])?;
    out.seed("fixture", seed);
    let r = (|| {
        let f = synth::fixture(seed);
        let mut tx = Vec::new();
        std::io::copy(&mut synth::TxCsvReader::new(f.tx), &mut tx)?;
        out.write("transactions.csv", &tx)?;
        let mut buf = Vec::new();
        txnet::ingest::write_candles_csv(&f.candles, &mut buf)?;
        out.write("candles.csv", &buf)?;
        let mut buf = Vec::new();
        txnet::ingest::write_social_csv(&f.social, &mut buf)?;
        out.write("social.csv", &buf)?;
        let train_end = f.tx.start + chrono::Days::new(FIXTURE_TRAIN_DAYS);
        let config = format!(
            "# Synthetic demo inputs: {} transaction days.\n\
             transactions = transactions.csv\n\
             candles = candles.csv\n\
             social = social.csv\n\
             interval = daily\n\
             threshold = 0.01\n\
             train_end = {train_end}\n\
             models = bm,fm\n\
             grid = preset\n\
             folds = 3\n\
             seed = {seed}\n",
            synth::FIXTURE_TX_DAYS
        );
        out.write("config.txt", config.as_bytes())?;
        Ok(())
    })();
    out.finish(r)
}
