//! Pipeline stages. Each takes loaded inputs, writes its artifacts under a
//! fixed sub-directory of the output, and returns what later stages need.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::Serialize;
use txnet::dataset::{assemble, AssembleOptions, FeatureMatrix, Sources, Trend};
use txnet::eval::{self, svg, ClassReport};
use txnet::gbdt::{
    fit, grid_search, permutation_importance, BoostConfig, BoostedEnsemble, GridResult,
    ImportanceKind, PermutationMetric, Samples,
};
use txnet::graph::{build_snapshot, daily_snapshots, DayRange};
use txnet::ingest::{date_of_day, day_of_date, CandleSeries, SocialFeatures, TransactionLog};
use txnet::netprops::{self, NetPropsConfig, NetworkFeatures};
use txnet::slicing::{day_event_sets, similarity_vs_price, slice_events};
use txnet::stats::pearson;
use txnet::ta::{self, TaFeatures};

use crate::config::ModelFamily;
use crate::manifest::Outputs;

fn to_csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

#[derive(Debug, Serialize)]
struct IngestSummary {
    rows_read: usize,
    records: usize,
    rejected: usize,
    dropped: usize,
    was_unordered: bool,
    addresses: usize,
    first_day: Option<NaiveDate>,
    last_day: Option<NaiveDate>,
    /// The first rejected rows, `line: reason`.
    reject_samples: Vec<String>,
}

pub fn ingest(out: &mut Outputs, log: &TransactionLog) -> Result<()> {
    out.stage("ingest");
    let span = log.day_span();
    let summary = IngestSummary {
        rows_read: log.rows_read,
        records: log.len(),
        rejected: log.rejects.len(),
        dropped: log.dropped,
        was_unordered: log.was_unordered,
        addresses: log.book.len(),
        first_day: span.map(|s| date_of_day(s.0)),
        last_day: span.map(|s| date_of_day(s.1)),
        reject_samples: log
            .rejects
            .iter()
            .take(20)
            .map(|r| format!("{}: {:?}", r.line, r.reason))
            .collect(),
    };
    let tx = to_csv_bytes(|b| Ok(txnet::ingest::write_transactions_csv(log, b)?))?;
    out.write("ingest/transactions.csv", &tx)?;
    let nodes = to_csv_bytes(|b| Ok(txnet::graph::write_node_dictionary(&log.book, b)?))?;
    out.write("ingest/nodes.csv", &nodes)?;
    out.write_json("ingest/summary.json", &summary)?;
    Ok(())
}

fn tx_span(log: &TransactionLog) -> Result<DayRange> {
    let (a, b) = log.day_span().context("no transactions after ingest")?;
    Ok(DayRange::new(a, b))
}

#[derive(Debug, Serialize)]
struct SlicePlan {
    min_days: usize,
    max_days: usize,
    intervals: Vec<DayRange>,
    similarity_scores: Vec<f64>,
    partial_tail: Option<DayRange>,
    /// Pearson r and p-value of similarity against mean close, when prices cover the span.
    similarity_price: Option<(f64, f64)>,
}

/// Dynamic intervals over the transaction span.
pub fn slice(
    out: &mut Outputs,
    log: &TransactionLog,
    candles: Option<&CandleSeries>,
    min_days: usize,
    max_days: usize,
) -> Result<Vec<DayRange>> {
    out.stage("slice");
    let span = tx_span(log)?;
    let events = day_event_sets(&log.records, span);
    let plan = slice_events(&events, min_days, max_days)?;
    let to_range =
        |(a, b): (usize, usize)| DayRange::new(span.start + a as i64, span.start + b as i64 - 1);
    let intervals: Vec<DayRange> = plan.intervals().map(to_range).collect();

    let mut csv = String::from("start,end,days,similarity\n");
    for (i, r) in intervals.iter().enumerate() {
        let sim = i
            .checked_sub(1)
            .map_or_else(String::new, |j| plan.similarity_scores[j].to_string());
        let _ = writeln!(csv, "{},{},{},{sim}", r.start_date(), r.end_date(), r.len());
    }
    out.write("slice/intervals.csv", csv.as_bytes())?;

    let closes: Option<Vec<f64>> = candles.and_then(|c| {
        let by_date: BTreeMap<NaiveDate, f64> = c.bars.iter().map(|b| (b.date, b.close)).collect();
        (span.start..=span.end)
            .map(|d| by_date.get(&date_of_day(d)).copied())
            .collect()
    });
    let mut correlation = None;
    if let Some(closes) = closes {
        let (sim, price) = similarity_vs_price(&plan, &closes)?;
        correlation = pearson(&sim, &price).ok();
        out.write(
            "slice/similarity_price.svg",
            svg::similarity_price_chart(&sim, &price).as_bytes(),
        )?;
    }
    out.write_json(
        "slice/plan.json",
        &SlicePlan {
            min_days,
            max_days,
            intervals: intervals.clone(),
            similarity_scores: plan.similarity_scores.clone(),
            partial_tail: plan.partial_tail.map(to_range),
            similarity_price: correlation,
        },
    )?;
    Ok(intervals)
}

/// Read `start,end,...` interval rows as written by [`slice`].
pub fn read_intervals(text: &str) -> Result<Vec<DayRange>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let mut cells = line.split(',');
        let mut date = || -> Result<i64> {
            let cell = cells.next().unwrap_or("");
            let d: NaiveDate = cell
                .trim()
                .parse()
                .with_context(|| format!("intervals line {}: bad date {cell:?}", i + 1))?;
            Ok(day_of_date(d))
        };
        let (a, b) = (date()?, date()?);
        if b < a {
            bail!("intervals line {}: end before start", i + 1);
        }
        out.push(DayRange::new(a, b));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct NetworkSummary {
    snapshots: usize,
    pagerank_not_converged: Vec<DayRange>,
}

/// Network features per day, or per given interval.
pub fn graph_metrics(
    out: &mut Outputs,
    log: &TransactionLog,
    intervals: Option<&[DayRange]>,
    cfg: &NetPropsConfig,
) -> Result<Vec<NetworkFeatures>> {
    out.stage("graph-metrics");
    let snapshots = match intervals {
        None => daily_snapshots(&log.records, Some(tx_span(log)?)),
        Some(iv) => iv
            .iter()
            .map(|&r| build_snapshot(&log.records, r))
            .collect(),
    };
    let features = netprops::compute_all(&snapshots, cfg);
    let csv = to_csv_bytes(|b| Ok(netprops::write_csv(&features, b)?))?;
    out.write("network/features.csv", &csv)?;
    out.write_json(
        "network/summary.json",
        &NetworkSummary {
            snapshots: features.len(),
            pagerank_not_converged: features
                .iter()
                .filter(|f| !f.pagerank_converged)
                .map(|f| f.interval)
                .collect(),
        },
    )?;
    Ok(features)
}

pub fn technical(out: &mut Outputs, candles: &CandleSeries) -> Result<TaFeatures> {
    out.stage("ta");
    let f = ta::compute(&candles.bars)?;
    let csv = to_csv_bytes(|b| Ok(f.write_csv(b)?))?;
    out.write("ta/features.csv", &csv)?;
    Ok(f)
}

/// Align the families on dates and label them. Interval features are spread
/// over the following days until the next interval completes.
pub fn dataset(
    out: &mut Outputs,
    candles: &CandleSeries,
    network: Option<&[NetworkFeatures]>,
    technical: Option<&TaFeatures>,
    social: Option<&SocialFeatures>,
    opts: &AssembleOptions,
) -> Result<FeatureMatrix> {
    out.stage("dataset");
    let daily = network.map(|n| {
        let start = n.iter().map(|f| f.interval.end).min().unwrap_or(0);
        let end = n.iter().map(|f| f.interval.end).max().unwrap_or(0);
        netprops::daily_view(n, DayRange::new(start, end))
    });
    let (matrix, imputation) = assemble(
        Sources {
            candles: &candles.bars,
            network: daily.as_deref(),
            technical,
            social,
        },
        opts,
    )?;
    let csv = to_csv_bytes(|b| Ok(matrix.write_csv(b)?))?;
    out.write("dataset/matrix.csv", &csv)?;
    out.write_json("dataset/report.json", &matrix.report(opts, &imputation))?;
    Ok(matrix)
}

#[derive(Debug, Serialize)]
struct TrainSummary {
    model: &'static str,
    train_end: NaiveDate,
    train_rows: usize,
    features: Vec<String>,
    folds: usize,
    /// `None` when the grid holds a single configuration and no search ran.
    grid: Option<GridResult>,
    chosen: BoostConfig,
}

pub struct Trained {
    pub family: ModelFamily,
    pub model: BoostedEnsemble,
}

/// Grid-search on the training rows, then fit the chosen configuration on all of them.
pub fn train(
    out: &mut Outputs,
    matrix: &FeatureMatrix,
    family: ModelFamily,
    grid: &txnet::gbdt::ParamGrid,
    folds: usize,
    seed: u64,
    train_end: NaiveDate,
) -> Result<Trained> {
    out.stage(&format!("train-{}", family.name()));
    out.seed(&format!("train.{}", family.name()), seed);
    let (train, _) = matrix.select_families(family.families()).split(train_end)?;
    let data = Samples::from_matrix(&train)?;
    let (chosen, search) = if grid.len() == 1 {
        (grid.configs(seed)[0], None)
    } else {
        let r = grid_search(&data, grid, folds, seed)?;
        (r.best, Some(r))
    };
    let model = fit(&data, &chosen)?;
    let dir = format!("models/{}", family.name());
    out.write(&format!("{dir}/model.json"), model.to_json()?.as_bytes())?;
    out.write_json(
        &format!("{dir}/train.json"),
        &TrainSummary {
            model: family.label(),
            train_end,
            train_rows: data.n_rows(),
            features: data.names.clone(),
            folds,
            grid: search,
            chosen,
        },
    )?;
    let mut csv = String::from("feature");
    for k in ImportanceKind::ALL {
        let _ = write!(csv, ",{}", k.name());
    }
    csv.push('\n');
    let all: Vec<Vec<(String, f64)>> = ImportanceKind::ALL
        .iter()
        .map(|&k| model.importances(k))
        .collect();
    for (j, name) in model.feature_names.iter().enumerate() {
        csv.push_str(name);
        for imp in &all {
            let _ = write!(csv, ",{}", imp[j].1);
        }
        csv.push('\n');
    }
    out.write(&format!("{dir}/importance.csv"), csv.as_bytes())?;
    out.write(
        &format!("{dir}/importance_gain.svg"),
        svg::importance_chart(&format!("{} gain importance", family.label()), &all[0]).as_bytes(),
    )?;
    Ok(Trained { family, model })
}

/// Which model family a feature schema belongs to.
pub fn family_of(model: &BoostedEnsemble) -> ModelFamily {
    if model.feature_names.iter().any(|n| n.starts_with("np.")) {
        ModelFamily::Fm
    } else {
        ModelFamily::Bm
    }
}

#[derive(Debug, Serialize)]
pub struct EvalOutput {
    pub model: String,
    pub train_end: NaiveDate,
    pub test_rows: usize,
    pub n_features: usize,
    pub report: ClassReport,
    pub permutation_accuracy: Vec<txnet::gbdt::PermutationScore>,
}

/// Score the model on rows after `train_end`.
pub fn evaluate(
    out: &mut Outputs,
    matrix: &FeatureMatrix,
    model: &BoostedEnsemble,
    train_end: NaiveDate,
    permutation_repeats: usize,
) -> Result<ClassReport> {
    let family = family_of(model);
    out.stage(&format!("evaluate-{}", family.name()));
    let (_, test) = matrix.split(train_end)?;
    let data = Samples::from_matrix(&test)?.select(&model.feature_names)?;
    let pred = model.predict(&data)?;
    let predicted: Vec<Trend> = pred
        .labels
        .iter()
        .map(|&i| Trend::from_index(i).expect("three classes"))
        .collect();
    let report = eval::score(&predicted, &test.labels)?;
    let permutation = if permutation_repeats > 0 {
        out.seed(&format!("permutation.{}", family.name()), model.config.seed);
        permutation_importance(
            model,
            &data,
            PermutationMetric::Accuracy,
            permutation_repeats,
            model.config.seed,
        )?
    } else {
        Vec::new()
    };

    let dir = format!("models/{}", family.name());
    let mut csv = String::from("date,actual,predicted,p_down,p_flat,p_up\n");
    for (i, p) in pred.probabilities.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            test.dates[i],
            test.labels[i].value(),
            predicted[i].value(),
            p[0],
            p[1],
            p[2]
        );
    }
    out.write(&format!("{dir}/predictions.csv"), csv.as_bytes())?;
    let label = family.label();
    out.write(
        &format!("{dir}/metrics.svg"),
        svg::metrics_chart(&[(label, &report)]).as_bytes(),
    )?;
    out.write(
        &format!("{dir}/confusion.svg"),
        svg::confusion_chart(&[(label, &report)]).as_bytes(),
    )?;
    out.write_json(
        &format!("{dir}/report.json"),
        &EvalOutput {
            model: label.into(),
            train_end,
            test_rows: test.n_rows(),
            n_features: data.n_features(),
            report: report.clone(),
            permutation_accuracy: permutation,
        },
    )?;
    Ok(report)
}

type ParamFormatter = fn(&BoostConfig) -> String;

/// Table of the hyperparameters each model was trained with, one column per model.
pub fn hyperparameter_table(models: &[(&str, &BoostConfig)]) -> String {
    let rows: [(&str, ParamFormatter); 7] = [
        ("n_estimators", |c| c.n_estimators.to_string()),
        ("max_depth", |c| c.max_depth.to_string()),
        ("colsample_bytree", |c| c.colsample_bytree.to_string()),
        ("min_child_weight", |c| c.min_child_weight.to_string()),
        ("learning_rate", |c| c.learning_rate.to_string()),
        ("gamma", |c| c.gamma.to_string()),
        ("subsample", |c| c.subsample.to_string()),
    ];
    let mut s = format!("{:<18}", "parameter");
    for (name, _) in models {
        let _ = write!(s, "{name:>10}");
    }
    s.push('\n');
    for (param, get) in rows {
        let _ = write!(s, "{param:<18}");
        for (_, c) in models {
            let _ = write!(s, "{:>10}", get(c));
        }
        s.push('\n');
    }
    s
}

/// Comparison artifacts: delta report, combined charts, hyperparameter table
/// and the feature-correlation network.
pub fn report(
    out: &mut Outputs,
    reports: &[(ModelFamily, ClassReport)],
    configs: &[(ModelFamily, BoostConfig)],
    matrix: Option<&FeatureMatrix>,
    alpha: f64,
) -> Result<()> {
    out.stage("report");
    let labelled: Vec<(&str, &ClassReport)> = reports.iter().map(|(f, r)| (f.label(), r)).collect();
    out.write(
        "report/metrics.svg",
        svg::metrics_chart(&labelled).as_bytes(),
    )?;
    out.write(
        "report/confusion.svg",
        svg::confusion_chart(&labelled).as_bytes(),
    )?;
    let base = reports.iter().find(|(f, _)| *f == ModelFamily::Bm);
    let full = reports.iter().find(|(f, _)| *f == ModelFamily::Fm);
    if let (Some((_, b)), Some((_, f))) = (base, full) {
        out.write_json("report/delta.json", &eval::compare(b, f)?)?;
    }
    if !configs.is_empty() {
        let cols: Vec<(&str, &BoostConfig)> = configs.iter().map(|(f, c)| (f.label(), c)).collect();
        out.write(
            "report/hyperparameters.txt",
            hyperparameter_table(&cols).as_bytes(),
        )?;
    }
    if let Some(m) = matrix {
        let net = eval::correlation_network(m, alpha)?;
        out.write(
            "report/correlation_network.svg",
            svg::network_chart(&net).as_bytes(),
        )?;
        out.write_json("report/correlation_network.json", &net)?;
    }
    Ok(())
}
