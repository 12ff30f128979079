//! Aligned daily feature matrix, trend labels and chronological split.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{CandleBar, SocialFeatures};
use crate::netprops::NetworkFeatures;
use crate::ta::{TaFeatures, WARMUP_ROWS};

pub const DEFAULT_THRESHOLD: f64 = 0.01;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("feature sources share no labelled dates")]
    EmptyIntersection,
    #[error("split date {0} leaves the {1} side empty")]
    EmptySplit(NaiveDate, &'static str),
    #[error("column {name} has {got} values, expected {expected}")]
    Shape {
        name: String,
        got: usize,
        expected: usize,
    },
    #[error("unknown column family in {0:?}")]
    UnknownFamily(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, DatasetError>;

/// Next-day price direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trend {
    Down,
    Flat,
    Up,
}

impl Trend {
    pub const ALL: [Trend; 3] = [Trend::Down, Trend::Flat, Trend::Up];

    /// Class index `0, 1, 2` for Down, Flat, Up.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    /// `-1, 0, +1`.
    pub fn value(self) -> i8 {
        self as i8 - 1
    }

    pub fn from_value(v: i8) -> Option<Self> {
        match v {
            -1 => Some(Trend::Down),
            0 => Some(Trend::Flat),
            1 => Some(Trend::Up),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Trend::Down => "down",
            Trend::Flat => "flat",
            Trend::Up => "up",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    Network,
    Technical,
    Social,
}

impl Family {
    pub fn prefix(self) -> &'static str {
        match self {
            Family::Network => "np",
            Family::Technical => "ta",
            Family::Social => "sm",
        }
    }

    pub fn from_prefix(p: &str) -> Option<Self> {
        match p {
            "np" => Some(Family::Network),
            "ta" => Some(Family::Technical),
            "sm" => Some(Family::Social),
            _ => None,
        }
    }

    /// Family of a `family.name` column label.
    pub fn of_column(name: &str) -> Option<Self> {
        name.split_once('.').and_then(|(p, _)| Self::from_prefix(p))
    }
}

/// Variable a column belongs to. Multi-output indicators (the EMA set, MACD
/// and its signal, the volatility windows, Bollinger distances, degree
/// moments, PageRank moments, modularity and community count) count as one
/// variable.
pub fn variable_group(column: &str) -> &str {
    let bare = column.split_once('.').map_or(column, |(_, b)| b);
    match bare {
        "ema_7" | "ema_25" | "ema_99" => "ema",
        "macd" | "macd_signal" => "macd",
        "volatility_7" | "volatility_14" | "volatility_21" => "volatility",
        "bb_width_pct" | "bb_close_to_upper_pct" | "bb_close_to_lower_pct" => "bollinger",
        "degree_mean" | "degree_std" => "degree",
        "pagerank_mean" | "pagerank_std" => "pagerank",
        "modularity" | "n_communities" => "modularity",
        other => other,
    }
}

/// `ln(p[t+1] / p[t])`; one value fewer than prices.
pub fn log_return(close: &[f64]) -> Result<Vec<f64>> {
    if let Some((index, &value)) = close
        .iter()
        .enumerate()
        .find(|(_, &p)| p <= 0.0 || !p.is_finite())
    {
        return Err(DatasetError::NonPositivePrice { index, value });
    }
    Ok(close.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

pub fn label(r: f64, threshold: f64) -> Trend {
    if r > threshold {
        Trend::Up
    } else if r < -threshold {
        Trend::Down
    } else {
        Trend::Flat
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum LabelMode {
    /// Threshold on the next-day log return `r[t+1]`.
    #[default]
    NextReturn,
    /// Threshold on the change `r[t+1] - r[t]`.
    ReturnChange,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub family: Family,
    pub values: Vec<f64>,
}

/// Per-column imputation counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Imputation {
    pub forward_filled: BTreeMap<String, usize>,
    /// Missing values before a column's first observation, set to 0.
    pub leading_zero_filled: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub dates: Vec<NaiveDate>,
    pub columns: Vec<Column>,
    pub labels: Vec<Trend>,
    /// The return each label was derived from.
    pub target_returns: Vec<f64>,
    pub split_point: Option<NaiveDate>,
}

/// Sidecar metadata written next to `matrix.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub n_rows: usize,
    pub n_columns: usize,
    pub n_variables: usize,
    pub warmup_rows: usize,
    pub threshold: f64,
    pub label_mode: LabelMode,
    pub first_date: Option<NaiveDate>,
    pub last_date: Option<NaiveDate>,
    pub split_date: Option<NaiveDate>,
    pub label_counts: BTreeMap<String, usize>,
    pub imputation: Imputation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssembleOptions {
    pub threshold: f64,
    pub label_mode: LabelMode,
    pub warmup_rows: usize,
}

impl Default for AssembleOptions {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_THRESHOLD,
            label_mode: LabelMode::NextReturn,
            warmup_rows: WARMUP_ROWS,
        }
    }
}

/// Sources for [`assemble`]. Every family is optional except the candles,
/// which supply the labels.
#[derive(Debug, Clone, Copy)]
pub struct Sources<'a> {
    pub candles: &'a [CandleBar],
    pub network: Option<&'a [NetworkFeatures]>,
    pub technical: Option<&'a TaFeatures>,
    pub social: Option<&'a SocialFeatures>,
}

type Keyed = BTreeMap<NaiveDate, Vec<Option<f64>>>;

/// Inner-join the families on date, attach labels, impute.
///
/// TA rows within the warm-up are excluded. Days whose label needs a close
/// that is not in the candles (the last day, gaps) are dropped. Missing
/// values are forward-filled down each column; values before a column's
/// first observation become 0.
pub fn assemble(src: Sources<'_>, opts: &AssembleOptions) -> Result<(FeatureMatrix, Imputation)> {
    let close: BTreeMap<NaiveDate, f64> = src.candles.iter().map(|b| (b.date, b.close)).collect();
    if let Some((index, b)) = src.candles.iter().enumerate().find(|(_, b)| b.close <= 0.0) {
        return Err(DatasetError::NonPositivePrice {
            index,
            value: b.close,
        });
    }
    let ret = |d: NaiveDate| -> Option<f64> {
        let prev = d.pred_opt()?;
        Some((close.get(&d)? / close.get(&prev)?).ln())
    };
    let target = |d: NaiveDate| -> Option<f64> {
        let next = d.succ_opt()?;
        match opts.label_mode {
            LabelMode::NextReturn => ret(next),
            LabelMode::ReturnChange => Some(ret(next)? - ret(d)?),
        }
    };

    let mut names: Vec<(String, Family)> = Vec::new();
    let mut tables: Vec<Keyed> = Vec::new();
    if let Some(net) = src.network {
        names.extend(
            NetworkFeatures::COLUMNS
                .iter()
                .map(|c| (format!("np.{c}"), Family::Network)),
        );
        tables.push(
            net.iter()
                .map(|f| (f.interval.start_date(), f.values().to_vec()))
                .collect(),
        );
    }
    if let Some(ta) = src.technical {
        names.extend(
            TaFeatures::COLUMNS
                .iter()
                .map(|c| (format!("ta.{c}"), Family::Technical)),
        );
        let cols: Vec<Vec<Option<f64>>> = (0..TaFeatures::COLUMNS.len())
            .map(|i| ta.column(i))
            .collect();
        tables.push(
            ta.dates
                .iter()
                .enumerate()
                .skip(opts.warmup_rows)
                .map(|(t, &d)| (d, cols.iter().map(|c| c[t]).collect()))
                .collect(),
        );
    }
    if let Some(sm) = src.social {
        names.push(("sm.tweet_count_pct".into(), Family::Social));
        names.push(("sm.trend_score_pct".into(), Family::Social));
        tables.push(
            sm.dates
                .iter()
                .enumerate()
                .map(|(t, &d)| (d, vec![sm.tweet_count_pct[t], sm.trend_score_pct[t]]))
                .collect(),
        );
    }

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut targets = Vec::new();
    for &d in close.keys() {
        if tables.iter().all(|t| t.contains_key(&d)) {
            if let Some(r) = target(d) {
                dates.push(d);
                targets.push(r);
            }
        }
    }
    if dates.is_empty() {
        return Err(DatasetError::EmptyIntersection);
    }

    let mut imputation = Imputation::default();
    let mut columns = Vec::with_capacity(names.len());
    let mut offset = 0;
    for table in &tables {
        let width = table.values().next().map_or(0, Vec::len);
        for j in 0..width {
            let (name, family) = names[offset + j].clone();
            let raw: Vec<Option<f64>> = dates
                .iter()
                .map(|d| table[d][j].filter(|v| v.is_finite()))
                .collect();
            let (values, filled, leading) = forward_fill(&raw);
            if filled > 0 {
                imputation.forward_filled.insert(name.clone(), filled);
            }
            if leading > 0 {
                imputation.leading_zero_filled.insert(name.clone(), leading);
            }
            columns.push(Column {
                name,
                family,
                values,
            });
        }
        offset += width;
    }
    let labels = targets.iter().map(|&r| label(r, opts.threshold)).collect();
    Ok((
        FeatureMatrix {
            dates,
            columns,
            labels,
            target_returns: targets,
            split_point: None,
        },
        imputation,
    ))
}

/// Returns the filled column, the forward-fill count and the leading-gap count.
fn forward_fill(raw: &[Option<f64>]) -> (Vec<f64>, usize, usize) {
    let (mut filled, mut leading) = (0, 0);
    let mut last = None;
    let values = raw
        .iter()
        .map(|v| match (v, last) {
            (Some(x), _) => {
                last = Some(*x);
                *x
            }
            (None, Some(prev)) => {
                filled += 1;
                prev
            }
            (None, None) => {
                leading += 1;
                0.0
            }
        })
        .collect();
    (values, filled, leading)
}

impl FeatureMatrix {
    pub fn new(dates: Vec<NaiveDate>, columns: Vec<Column>, labels: Vec<Trend>) -> Result<Self> {
        for c in &columns {
            if c.values.len() != dates.len() {
                return Err(DatasetError::Shape {
                    name: c.name.clone(),
                    got: c.values.len(),
                    expected: dates.len(),
                });
            }
        }
        if labels.len() != dates.len() {
            return Err(DatasetError::Shape {
                name: "label".into(),
                got: labels.len(),
                expected: dates.len(),
            });
        }
        let target_returns = vec![f64::NAN; dates.len()];
        Ok(Self {
            dates,
            columns,
            labels,
            target_returns,
            split_point: None,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|c| c.name == name)
    }

    /// Distinct variables among the columns.
    pub fn n_variables(&self) -> usize {
        let groups: std::collections::BTreeSet<(Family, &str)> = self
            .columns
            .iter()
            .map(|c| (c.family, variable_group(&c.name)))
            .collect();
        groups.len()
    }

    pub fn label_indices(&self) -> Vec<usize> {
        self.labels.iter().map(|l| l.index()).collect()
    }

    pub fn column_values(&self) -> Vec<Vec<f64>> {
        self.columns.iter().map(|c| c.values.clone()).collect()
    }

    /// Columns of the given families, in their current order.
    pub fn select_families(&self, families: &[Family]) -> Self {
        self.filter_columns(|c| families.contains(&c.family))
    }

    pub fn select_columns(&self, names: &[String]) -> Self {
        self.filter_columns(|c| names.contains(&c.name))
    }

    fn filter_columns(&self, keep: impl Fn(&Column) -> bool) -> Self {
        Self {
            columns: self.columns.iter().filter(|c| keep(c)).cloned().collect(),
            ..self.clone()
        }
    }

    fn rows(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dates: self.dates[range.clone()].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    values: c.values[range.clone()].to_vec(),
                    ..c.clone()
                })
                .collect(),
            labels: self.labels[range.clone()].to_vec(),
            target_returns: self.target_returns[range].to_vec(),
            split_point: self.split_point,
        }
    }

    /// Rows dated on or before `train_end` train, the rest test.
    pub fn split(&self, train_end: NaiveDate) -> Result<(Self, Self)> {
        let cut = self.dates.partition_point(|&d| d <= train_end);
        if cut == 0 {
            return Err(DatasetError::EmptySplit(train_end, "train"));
        }
        if cut == self.n_rows() {
            return Err(DatasetError::EmptySplit(train_end, "test"));
        }
        let mut train = self.rows(0..cut);
        let mut test = self.rows(cut..self.n_rows());
        train.split_point = Some(train_end);
        test.split_point = Some(train_end);
        Ok((train, test))
    }

    pub fn label_counts(&self) -> BTreeMap<String, usize> {
        let mut m: BTreeMap<String, usize> = Trend::ALL
            .iter()
            .map(|t| (t.name().to_string(), 0))
            .collect();
        for l in &self.labels {
            *m.get_mut(l.name()).expect("all classes present") += 1;
        }
        m
    }

    pub fn report(&self, opts: &AssembleOptions, imputation: &Imputation) -> DatasetReport {
        DatasetReport {
            n_rows: self.n_rows(),
            n_columns: self.n_columns(),
            n_variables: self.n_variables(),
            warmup_rows: opts.warmup_rows,
            threshold: opts.threshold,
            label_mode: opts.label_mode,
            first_date: self.dates.first().copied(),
            last_date: self.dates.last().copied(),
            split_date: self.split_point,
            label_counts: self.label_counts(),
            imputation: imputation.clone(),
        }
    }

    /// `date,<columns...>,label` with labels as -1/0/1. Floats use the
    /// shortest round-trip representation.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["date".to_string()];
        header.extend(self.column_names());
        header.push("label".into());
        out.write_record(&header)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            rec.push(self.labels[i].value().to_string());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let header = rdr.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[0] != "date" || &header[n - 1] != "label" {
            return Err(DatasetError::Parse {
                line: 1,
                message: "expected date,...,label header".into(),
            });
        }
        let mut columns = Vec::new();
        for name in header.iter().take(n - 1).skip(1) {
            let family =
                Family::of_column(name).ok_or_else(|| DatasetError::UnknownFamily(name.into()))?;
            columns.push(Column {
                name: name.into(),
                family,
                values: Vec::new(),
            });
        }
        let (mut dates, mut labels) = (Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |message: String| DatasetError::Parse { line, message };
            dates.push(
                rec[0]
                    .parse::<NaiveDate>()
                    .map_err(|e| bad(e.to_string()))?,
            );
            for (j, c) in columns.iter_mut().enumerate() {
                c.values
                    .push(rec[j + 1].parse::<f64>().map_err(|e| bad(e.to_string()))?);
            }
            let v: i8 = rec[n - 1]
                .parse()
                .map_err(|e: std::num::ParseIntError| bad(e.to_string()))?;
            labels.push(Trend::from_value(v).ok_or_else(|| bad(format!("label {v}")))?);
        }
        Self::new(dates, columns, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::DayRange;
    use crate::ingest::day_of_date;

    fn d(s: &str) -> NaiveDate {
        s.parse().unwrap()
    }

    fn candles(closes: &[f64]) -> Vec<CandleBar> {
        closes
            .iter()
            .enumerate()
            .map(|(i, &c)| CandleBar {
                date: d("2020-01-01") + chrono::Days::new(i as u64),
                open: c,
                high: c,
                low: c,
                close: c,
                volume: 1.0,
            })
            .collect()
    }

    #[test]
    fn log_return_cases() {
        assert_eq!(log_return(&[5.0, 5.0, 5.0]).unwrap(), vec![0.0, 0.0]);
        let r = log_return(&[100.0, 102.0]).unwrap()[0];
        assert!((r - 0.019_802_627_296_179_7).abs() < 1e-15);
        assert!(matches!(
            log_return(&[1.0, -1.0]),
            Err(DatasetError::NonPositivePrice { index: 1, .. })
        ));
    }

    #[test]
    fn labels_at_threshold() {
        assert_eq!(label(0.019803, 0.01), Trend::Up);
        assert_eq!(label(0.0, 0.01), Trend::Flat);
        assert_eq!(label((0.989f64).ln(), 0.01), Trend::Down);
        assert_eq!(label(0.01, 0.01), Trend::Flat);
        assert_eq!(label(-0.01, 0.01), Trend::Flat);
    }

    #[test]
    fn trend_encodings() {
        for t in Trend::ALL {
            assert_eq!(Trend::from_index(t.index()), Some(t));
            assert_eq!(Trend::from_value(t.value()), Some(t));
        }
        assert_eq!(Trend::Down.value(), -1);
        assert_eq!(Trend::Up.index(), 2);
    }

    #[test]
    fn variable_groups() {
        assert_eq!(variable_group("ta.ema_25"), "ema");
        assert_eq!(variable_group("np.reciprocity"), "reciprocity");
        assert_eq!(
            Family::of_column("sm.trend_score_pct"),
            Some(Family::Social)
        );
        assert_eq!(Family::of_column("x.y"), None);
    }

    fn net_rows(start: &str, n: usize) -> Vec<NetworkFeatures> {
        (0..n)
            .map(|i| {
                let day = day_of_date(d(start)) + i as i64;
                let mut f = crate::netprops::compute_features(
                    &crate::graph::GraphSnapshot::empty(DayRange::day(day), 1),
                    &Default::default(),
                );
                f.degree_mean = Some(i as f64);
                f
            })
            .collect()
    }

    #[test]
    fn assemble_joins_labels_and_fills() {
        let bars = candles(&[100.0, 102.0, 100.0, 100.5, 99.0, 99.0]);
        let mut net = net_rows("2020-01-01", 6);
        net[3].degree_mean = None;
        let src = Sources {
            candles: &bars,
            network: Some(&net),
            technical: None,
            social: None,
        };
        let opts = AssembleOptions::default();
        let (m, imp) = assemble(src, &opts).unwrap();
        // the last day has no next close
        assert_eq!(m.n_rows(), 5);
        assert_eq!(
            m.labels,
            vec![
                Trend::Up,
                Trend::Down,
                Trend::Flat,
                Trend::Down,
                Trend::Flat
            ]
        );
        let deg = &m.column("np.degree_mean").unwrap().values;
        assert_eq!(deg[3], deg[2]);
        assert_eq!(imp.forward_filled["np.degree_mean"], 1);
        // empty snapshots never have an assortativity
        assert_eq!(imp.leading_zero_filled["np.assortativity"], 5);
        assert_eq!(m.column("np.assortativity").unwrap().values, vec![0.0; 5]);
    }

    #[test]
    fn return_change_mode() {
        let bars = candles(&[100.0, 102.0, 104.0, 104.0]);
        let net = net_rows("2020-01-01", 4);
        let src = Sources {
            candles: &bars,
            network: Some(&net),
            technical: None,
            social: None,
        };
        let opts = AssembleOptions {
            label_mode: LabelMode::ReturnChange,
            ..Default::default()
        };
        let (m, _) = assemble(src, &opts).unwrap();
        // the first day has no previous return, the last no next close
        assert_eq!(m.dates, vec![d("2020-01-02"), d("2020-01-03")]);
        assert_eq!(m.labels, vec![Trend::Flat, Trend::Down]);
    }

    #[test]
    fn disjoint_sources_fail() {
        let bars = candles(&[1.0, 2.0, 3.0]);
        let net = net_rows("2021-01-01", 3);
        let src = Sources {
            candles: &bars,
            network: Some(&net),
            technical: None,
            social: None,
        };
        assert!(matches!(
            assemble(src, &AssembleOptions::default()),
            Err(DatasetError::EmptyIntersection)
        ));
    }

    fn small() -> FeatureMatrix {
        let dates: Vec<NaiveDate> = (0..5)
            .map(|i| d("2020-03-01") + chrono::Days::new(i))
            .collect();
        let cols = vec![
            Column {
                name: "ta.rsi".into(),
                family: Family::Technical,
                values: vec![1.0, 2.5, -3.0, 0.1, 1e-300],
            },
            Column {
                name: "np.reciprocity".into(),
                family: Family::Network,
                values: vec![0.0; 5],
            },
        ];
        FeatureMatrix::new(
            dates,
            cols,
            vec![Trend::Up, Trend::Flat, Trend::Down, Trend::Up, Trend::Flat],
        )
        .unwrap()
    }

    #[test]
    fn split_by_date() {
        let m = small();
        let (tr, te) = m.split(d("2020-03-04")).unwrap();
        assert_eq!((tr.n_rows(), te.n_rows()), (4, 1));
        let mut joined = tr.dates.clone();
        joined.extend(&te.dates);
        assert_eq!(joined, m.dates);
        assert!(matches!(
            m.split(d("2020-02-01")),
            Err(DatasetError::EmptySplit(_, "train"))
        ));
        assert!(matches!(
            m.split(d("2020-03-05")),
            Err(DatasetError::EmptySplit(_, "test"))
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let m = small();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.dates, m.dates);
        assert_eq!(back.columns, m.columns);
        assert_eq!(back.labels, m.labels);
    }

    #[test]
    fn family_selection() {
        let m = small();
        assert_eq!(
            m.select_families(&[Family::Network]).column_names(),
            vec!["np.reciprocity"]
        );
        assert_eq!(m.n_variables(), 2);
    }
}
