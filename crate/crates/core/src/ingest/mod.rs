//! Loading and validation of the three raw input streams.
//!
//! Transactions are interned on load: every address string is mapped to a
//! dense [`AddressId`] in order of first appearance in the file, so the same
//! file always yields the same ids. Records are then stably sorted by
//! timestamp.

mod remote;

pub use remote::{parse_binance_klines, parse_etherscan_txlist};
#[cfg(feature = "remote")]
pub use remote::{BinanceClient, EtherscanClient};

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, Days, NaiveDate};
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Fraction of malformed transaction rows tolerated before a load aborts.
pub const DEFAULT_MAX_REJECT_RATIO: f64 = 0.01;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),
    #[error("{rejected} of {total} rows rejected, above the {max_ratio} tolerance")]
    TooManyRejects {
        rejected: usize,
        total: usize,
        max_ratio: f64,
    },
    #[error("line {line}: {message}")]
    InvalidRow { line: u64, message: String },
    #[error("malformed response: {0}")]
    Response(String),
    #[cfg(feature = "remote")]
    #[error("http error: {0}")]
    Http(#[from] reqwest::Error),
}

pub type Result<T> = std::result::Result<T, IngestError>;

/// Dense per-run identifier of an address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AddressId(pub u32);

impl AddressId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Interning table between address strings and [`AddressId`]s.
#[derive(Debug, Clone, Default)]
pub struct AddressBook {
    ids: FxHashMap<Box<str>, u32>,
    names: Vec<Box<str>>,
}

impl AddressBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, address: &str) -> AddressId {
        if let Some(&id) = self.ids.get(address) {
            return AddressId(id);
        }
        let id = u32::try_from(self.names.len()).expect("more than u32::MAX addresses");
        let boxed: Box<str> = address.into();
        self.ids.insert(boxed.clone(), id);
        self.names.push(boxed);
        AddressId(id)
    }

    pub fn get(&self, address: &str) -> Option<AddressId> {
        self.ids.get(address).map(|&id| AddressId(id))
    }

    pub fn name(&self, id: AddressId) -> &str {
        &self.names[id.index()]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One on-chain transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransactionRecord {
    /// UTC epoch seconds.
    pub timestamp: i64,
    pub source: AddressId,
    pub target: AddressId,
    /// Amount in base units (wei).
    pub value: u128,
}

impl TransactionRecord {
    /// Day number since the Unix epoch (UTC).
    #[inline]
    pub fn day(&self) -> i64 {
        self.timestamp.div_euclid(86_400)
    }

    pub fn is_self_loop(&self) -> bool {
        self.source == self.target
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum RejectReason {
    BadTimestamp(String),
    BadAddress(String),
    NegativeValue(String),
    BadValue(String),
    MissingField,
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowReject {
    /// 1-based line number in the source file (header is line 1 for CSV).
    pub line: u64,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxFormat {
    Csv,
    Jsonl,
}

impl TxFormat {
    /// Guess from the file extension; anything other than `.jsonl`/`.json` is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") | Some("ndjson") => TxFormat::Jsonl,
            _ => TxFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub max_reject_ratio: f64,
    pub drop_zero_value: bool,
    pub drop_self_loops: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            max_reject_ratio: DEFAULT_MAX_REJECT_RATIO,
            drop_zero_value: false,
            drop_self_loops: false,
        }
    }
}

/// A validated, timestamp-ordered transaction stream plus its address table.
#[derive(Debug, Clone, Default)]
pub struct TransactionLog {
    pub book: AddressBook,
    pub records: Vec<TransactionRecord>,
    pub rejects: Vec<RowReject>,
    /// Data rows read, including rejected and dropped ones.
    pub rows_read: usize,
    /// Rows that were valid but removed by the zero-value / self-loop filters.
    pub dropped: usize,
    /// Whether the input needed re-sorting.
    pub was_unordered: bool,
}

impl TransactionLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Validate and intern one raw row; does not sort.
    pub fn push_raw(
        &mut self,
        timestamp: &str,
        from: &str,
        to: &str,
        value: &str,
    ) -> std::result::Result<TransactionRecord, RejectReason> {
        let timestamp = parse_timestamp(timestamp)?;
        let from = normalize_address(from)?;
        let to = normalize_address(to)?;
        let value = parse_value(value)?;
        let rec = TransactionRecord {
            timestamp,
            source: self.book.intern(&from),
            target: self.book.intern(&to),
            value,
        };
        self.records.push(rec);
        Ok(rec)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Stable sort by timestamp, remembering whether anything moved.
    pub fn sort(&mut self) {
        self.was_unordered |= self
            .records
            .windows(2)
            .any(|w| w[0].timestamp > w[1].timestamp);
        if self.was_unordered {
            self.records.sort_by_key(|r| r.timestamp);
        }
    }

    /// Records as `(timestamp, from, to, value)` with resolved address strings.
    pub fn resolved(&self) -> impl Iterator<Item = (i64, &str, &str, u128)> + '_ {
        self.records.iter().map(|r| {
            (
                r.timestamp,
                self.book.name(r.source),
                self.book.name(r.target),
                r.value,
            )
        })
    }

    /// First and last UTC day covered by the records.
    pub fn day_span(&self) -> Option<(i64, i64)> {
        Some((self.records.first()?.day(), self.records.last()?.day()))
    }

    fn apply_filters(&mut self, opts: &LoadOptions) {
        let before = self.records.len();
        self.records.retain(|r| {
            !(opts.drop_zero_value && r.value == 0) && !(opts.drop_self_loops && r.is_self_loop())
        });
        self.dropped += before - self.records.len();
    }

    fn check_rejects(&self, opts: &LoadOptions) -> Result<()> {
        let rejected = self.rejects.len();
        if self.rows_read > 0 && rejected as f64 > opts.max_reject_ratio * self.rows_read as f64 {
            return Err(IngestError::TooManyRejects {
                rejected,
                total: self.rows_read,
                max_ratio: opts.max_reject_ratio,
            });
        }
        Ok(())
    }
}

fn parse_timestamp(raw: &str) -> std::result::Result<i64, RejectReason> {
    match raw.trim().parse::<i64>() {
        Ok(t) if t > 0 => Ok(t),
        _ => Err(RejectReason::BadTimestamp(raw.to_string())),
    }
}

/// Lowercase `0x`-prefixed hex, 1..=64 digits.
fn normalize_address(raw: &str) -> std::result::Result<String, RejectReason> {
    let s = raw.trim();
    let digits = s
        .strip_prefix("0x")
        .or_else(|| s.strip_prefix("0X"))
        .ok_or_else(|| RejectReason::BadAddress(raw.to_string()))?;
    if digits.is_empty() || digits.len() > 64 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(RejectReason::BadAddress(raw.to_string()));
    }
    let mut out = String::with_capacity(digits.len() + 2);
    out.push_str("0x");
    out.extend(digits.chars().map(|c| c.to_ascii_lowercase()));
    Ok(out)
}

fn parse_value(raw: &str) -> std::result::Result<u128, RejectReason> {
    let s = raw.trim();
    if s.starts_with('-') {
        return Err(RejectReason::NegativeValue(raw.to_string()));
    }
    s.parse::<u128>()
        .map_err(|_| RejectReason::BadValue(raw.to_string()))
}

pub fn load_transactions(
    path: impl AsRef<Path>,
    format: TxFormat,
    opts: &LoadOptions,
) -> Result<TransactionLog> {
    let file = File::open(path.as_ref())?;
    read_transactions(BufReader::with_capacity(1 << 20, file), format, opts)
}

/// Parse a transaction stream from any reader.
pub fn read_transactions<R: Read>(
    reader: R,
    format: TxFormat,
    opts: &LoadOptions,
) -> Result<TransactionLog> {
    let mut log = match format {
        TxFormat::Csv => read_tx_csv(reader)?,
        TxFormat::Jsonl => read_tx_jsonl(BufReader::new(reader))?,
    };
    log.check_rejects(opts)?;
    log.apply_filters(opts);
    log.sort();
    Ok(log)
}

fn column_index(headers: &csv::ByteRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim_ascii() == name.as_bytes())
        .ok_or_else(|| IngestError::MissingColumn(name.to_string()))
}

fn read_tx_csv<R: Read>(reader: R) -> Result<TransactionLog> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .buffer_capacity(1 << 20)
        .from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let cols = [
        column_index(&headers, "timestamp")?,
        column_index(&headers, "from")?,
        column_index(&headers, "to")?,
        column_index(&headers, "value")?,
    ];
    let mut log = TransactionLog::new();
    let mut row = csv::ByteRecord::new();
    let mut line = 1u64;
    loop {
        match rdr.read_byte_record(&mut row) {
            Ok(false) => break,
            Ok(true) => {}
            Err(e) => {
                line += 1;
                log.rows_read += 1;
                log.rejects.push(RowReject {
                    line,
                    reason: RejectReason::Malformed(e.to_string()),
                });
                continue;
            }
        }
        line += 1;
        log.rows_read += 1;
        let field = |i: usize| row.get(cols[i]).and_then(|b| std::str::from_utf8(b).ok());
        let outcome = match (field(0), field(1), field(2), field(3)) {
            (Some(ts), Some(from), Some(to), Some(value)) => {
                log.push_raw(ts, from, to, value).map(|_| ())
            }
            _ => Err(RejectReason::MissingField),
        };
        if let Err(reason) = outcome {
            log.rejects.push(RowReject { line, reason });
        }
    }
    Ok(log)
}

fn json_scalar(v: Option<&serde_json::Value>) -> Option<String> {
    match v? {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn read_tx_jsonl<R: BufRead>(reader: R) -> Result<TransactionLog> {
    let mut log = TransactionLog::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i as u64 + 1;
        log.rows_read += 1;
        let outcome = match serde_json::from_str::<serde_json::Value>(&line) {
            Ok(obj) => {
                let get = |k: &str| json_scalar(obj.get(k));
                match (get("timestamp"), get("from"), get("to"), get("value")) {
                    (Some(ts), Some(from), Some(to), Some(value)) => {
                        log.push_raw(&ts, &from, &to, &value).map(|_| ())
                    }
                    _ => Err(RejectReason::MissingField),
                }
            }
            Err(e) => Err(RejectReason::Malformed(e.to_string())),
        };
        if let Err(reason) = outcome {
            log.rejects.push(RowReject {
                line: lineno,
                reason,
            });
        }
    }
    Ok(log)
}

/// Write the stream in the canonical CSV layout (`timestamp,from,to,value`).
pub fn write_transactions_csv<W: Write>(log: &TransactionLog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "from", "to", "value"])?;
    for (ts, from, to, value) in log.resolved() {
        w.write_record([
            ts.to_string().as_str(),
            from,
            to,
            value.to_string().as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily OHLCV row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandleBar {
    pub date: NaiveDate,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl CandleBar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let vals = [self.open, self.high, self.low, self.close, self.volume];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite value".into());
        }
        if self.high < self.low {
            return Err(format!("high {} below low {}", self.high, self.low));
        }
        if self.low > self.open.min(self.close) {
            return Err(format!("low {} above min(open, close)", self.low));
        }
        if self.high < self.open.max(self.close) {
            return Err(format!("high {} below max(open, close)", self.high));
        }
        if self.volume < 0.0 {
            return Err(format!("negative volume {}", self.volume));
        }
        Ok(())
    }
}

/// Date-sorted candles plus the calendar days missing between first and last bar.
#[derive(Debug, Clone, Default)]
pub struct CandleSeries {
    pub bars: Vec<CandleBar>,
    pub gaps: Vec<NaiveDate>,
}

impl CandleSeries {
    pub fn from_bars(mut bars: Vec<CandleBar>) -> Result<Self> {
        for b in &bars {
            b.validate().map_err(|message| IngestError::InvalidRow {
                line: 0,
                message: format!("{}: {message}", b.date),
            })?;
        }
        bars.sort_by_key(|b| b.date);
        if let Some(w) = bars.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(IngestError::InvalidRow {
                line: 0,
                message: format!("duplicate date {}", w[0].date),
            });
        }
        let gaps = missing_days(bars.iter().map(|b| b.date));
        Ok(Self { bars, gaps })
    }

    pub fn closes(&self) -> Vec<f64> {
        self.bars.iter().map(|b| b.close).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.bars.iter().map(|b| b.date).collect()
    }

    /// Keep bars dated on or before `last`.
    pub fn truncated(&self, last: NaiveDate) -> Self {
        let bars: Vec<_> = self
            .bars
            .iter()
            .copied()
            .filter(|b| b.date <= last)
            .collect();
        let gaps = missing_days(bars.iter().map(|b| b.date));
        Self { bars, gaps }
    }
}

fn missing_days(dates: impl Iterator<Item = NaiveDate>) -> Vec<NaiveDate> {
    let mut gaps = Vec::new();
    let mut prev: Option<NaiveDate> = None;
    for d in dates {
        if let Some(p) = prev {
            let mut cur = p + Days::new(1);
            while cur < d {
                gaps.push(cur);
                cur = cur + Days::new(1);
            }
        }
        prev = Some(d);
    }
    gaps
}

fn parse_date(raw: &str) -> std::result::Result<NaiveDate, String> {
    NaiveDate::parse_from_str(raw.trim(), "%Y-%m-%d").map_err(|e| format!("bad date `{raw}`: {e}"))
}

fn parse_f64(raw: &str, what: &str) -> std::result::Result<f64, String> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| format!("bad {what} `{raw}`"))
}

fn csv_rows<R: Read>(
    reader: R,
    columns: &[&str],
    mut each: impl FnMut(u64, &[&str]) -> std::result::Result<(), String>,
) -> Result<()> {
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let headers = rdr.byte_headers()?.clone();
    let idx = columns
        .iter()
        .map(|c| column_index(&headers, c))
        .collect::<Result<Vec<_>>>()?;
    let mut line = 1u64;
    for rec in rdr.records() {
        let rec = rec?;
        line += 1;
        let fields: Vec<&str> = idx.iter().map(|&i| rec.get(i).unwrap_or("")).collect();
        each(line, &fields).map_err(|message| IngestError::InvalidRow { line, message })?;
    }
    Ok(())
}

pub fn load_candles(path: impl AsRef<Path>) -> Result<CandleSeries> {
    read_candles(File::open(path.as_ref())?)
}

/// Parse `date,open,high,low,close,volume`. Any invalid bar is fatal.
pub fn read_candles<R: Read>(reader: R) -> Result<CandleSeries> {
    let mut bars = Vec::new();
    csv_rows(
        reader,
        &["date", "open", "high", "low", "close", "volume"],
        |_, f| {
            let bar = CandleBar {
                date: parse_date(f[0])?,
                open: parse_f64(f[1], "open")?,
                high: parse_f64(f[2], "high")?,
                low: parse_f64(f[3], "low")?,
                close: parse_f64(f[4], "close")?,
                volume: parse_f64(f[5], "volume")?,
            };
            bar.validate()?;
            bars.push(bar);
            Ok(())
        },
    )?;
    CandleSeries::from_bars(bars)
}

pub fn write_candles_csv<W: Write>(bars: &[CandleBar], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "open", "high", "low", "close", "volume"])?;
    for b in bars {
        w.write_record([
            b.date.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Daily social-media activity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SocialRow {
    pub date: NaiveDate,
    pub tweet_count: u64,
    pub trend_score: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SocialSeries {
    pub rows: Vec<SocialRow>,
}

/// Percentage-change features derived from a [`SocialSeries`].
#[derive(Debug, Clone, PartialEq)]
pub struct SocialFeatures {
    pub dates: Vec<NaiveDate>,
    pub tweet_count_pct: Vec<Option<f64>>,
    pub trend_score_pct: Vec<Option<f64>>,
    /// Days synthesized by forward fill.
    pub filled_days: usize,
}

impl SocialSeries {
    pub fn from_rows(mut rows: Vec<SocialRow>) -> Result<Self> {
        rows.sort_by_key(|r| r.date);
        if let Some(w) = rows.windows(2).find(|w| w[0].date == w[1].date) {
            return Err(IngestError::InvalidRow {
                line: 0,
                message: format!("duplicate social date {}", w[0].date),
            });
        }
        if let Some(r) = rows
            .iter()
            .find(|r| !(r.trend_score >= 0.0 && r.trend_score.is_finite()))
        {
            return Err(IngestError::InvalidRow {
                line: 0,
                message: format!("invalid trend score on {}", r.date),
            });
        }
        Ok(Self { rows })
    }

    /// Contiguous daily rows, missing days copied from the previous day.
    pub fn forward_filled(&self) -> (Vec<SocialRow>, usize) {
        let mut out: Vec<SocialRow> = Vec::with_capacity(self.rows.len());
        let mut filled = 0;
        for row in &self.rows {
            if let Some(&prev) = out.last() {
                let mut d = prev.date + Days::new(1);
                while d < row.date {
                    out.push(SocialRow { date: d, ..prev });
                    filled += 1;
                    d = d + Days::new(1);
                }
            }
            out.push(*row);
        }
        (out, filled)
    }

    pub fn features(&self) -> SocialFeatures {
        let (rows, filled_days) = self.forward_filled();
        let tweets: Vec<f64> = rows.iter().map(|r| r.tweet_count as f64).collect();
        let trend: Vec<f64> = rows.iter().map(|r| r.trend_score).collect();
        SocialFeatures {
            dates: rows.iter().map(|r| r.date).collect(),
            tweet_count_pct: pct_change(&tweets),
            trend_score_pct: pct_change(&trend),
            filled_days,
        }
    }
}

pub fn load_social(path: impl AsRef<Path>) -> Result<SocialSeries> {
    read_social(File::open(path.as_ref())?)
}

pub fn read_social<R: Read>(reader: R) -> Result<SocialSeries> {
    let mut rows = Vec::new();
    csv_rows(reader, &["date", "tweet_count", "trend_score"], |_, f| {
        let tweet_count = f[1]
            .trim()
            .parse::<u64>()
            .map_err(|_| format!("bad tweet_count `{}`", f[1]))?;
        rows.push(SocialRow {
            date: parse_date(f[0])?,
            tweet_count,
            trend_score: parse_f64(f[2], "trend_score")?,
        });
        Ok(())
    })?;
    SocialSeries::from_rows(rows)
}

pub fn write_social_csv<W: Write>(rows: &[SocialRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "tweet_count", "trend_score"])?;
    for r in rows {
        w.write_record([
            r.date.to_string(),
            r.tweet_count.to_string(),
            r.trend_score.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Day-over-day relative change. The first element, and any day whose
/// previous value is zero or non-finite, is `None`.
pub fn pct_change(series: &[f64]) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(series.len());
    if series.is_empty() {
        return out;
    }
    out.push(None);
    for w in series.windows(2) {
        let (prev, cur) = (w[0], w[1]);
        out.push(if prev == 0.0 || !prev.is_finite() || !cur.is_finite() {
            None
        } else {
            Some((cur - prev) / prev)
        });
    }
    out
}

/// UTC calendar date of an epoch day number.
pub fn date_of_day(day: i64) -> NaiveDate {
    DateTime::from_timestamp(day * 86_400, 0)
        .expect("day within chrono range")
        .date_naive()
}

/// Epoch day number of a calendar date.
pub fn day_of_date(date: NaiveDate) -> i64 {
    date.and_hms_opt(0, 0, 0)
        .expect("midnight exists")
        .and_utc()
        .timestamp()
        .div_euclid(86_400)
}
