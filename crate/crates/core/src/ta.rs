//! Technical-analysis indicator family computed from daily candles.
//!
//! Recursive indicators (EMA, MACD, RSI, OBV) are defined from the first
//! bar; windowed ones are `None` until their window is full. The first
//! [`WARMUP_ROWS`] rows are masked downstream.

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::ingest::{pct_change, CandleBar};
use crate::table;

pub const RSI_WINDOW: usize = 14;
pub const ATR_WINDOW: usize = 14;
pub const BOLLINGER_WINDOW: usize = 21;
pub const BOLLINGER_K: f64 = 2.0;
pub const VOLATILITY_WINDOWS: [usize; 3] = [7, 14, 21];
/// Rows dropped at the start of the matrix: the longest indicator window (EMA 99).
pub const WARMUP_ROWS: usize = 99;

#[derive(Debug, Error, PartialEq)]
pub enum TaError {
    #[error("non-positive price {value} at index {index}")]
    NonPositivePrice { index: usize, value: f64 },
    #[error("series lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty series")]
    Empty,
    #[error("window must be at least 1")]
    ZeroWindow,
}

pub type Result<T> = std::result::Result<T, TaError>;

/// Exponential moving average with `α = 2 / (window + 1)`, seeded by `x[0]`.
pub fn ema(x: &[f64], window: usize) -> Vec<f64> {
    let alpha = 2.0 / (window as f64 + 1.0);
    let mut out = Vec::with_capacity(x.len());
    let mut prev = match x.first() {
        Some(&v) => v,
        None => return out,
    };
    for &v in x {
        prev += alpha * (v - prev);
        out.push(prev);
    }
    out
}

/// `(ema12 - ema26, ema9 of that difference)`.
pub fn macd(close: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let fast = ema(close, 12);
    let slow = ema(close, 26);
    let line: Vec<f64> = fast.iter().zip(&slow).map(|(a, b)| a - b).collect();
    let signal = ema(&line, 9);
    (line, signal)
}

/// Wilder RSI. Index `t` is defined for `t >= window`; the seed averages are
/// the plain means of the first `window` changes.
pub fn rsi(close: &[f64], window: usize) -> Vec<Option<f64>> {
    let n = close.len();
    let mut out = vec![None; n];
    if window == 0 || n <= window {
        return out;
    }
    let w = window as f64;
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..=window {
        let d = close[t] - close[t - 1];
        gain += d.max(0.0);
        loss += (-d).max(0.0);
    }
    gain /= w;
    loss /= w;
    out[window] = Some(rsi_value(gain, loss));
    for t in window + 1..n {
        let d = close[t] - close[t - 1];
        gain = (gain * (w - 1.0) + d.max(0.0)) / w;
        loss = (loss * (w - 1.0) + (-d).max(0.0)) / w;
        out[t] = Some(rsi_value(gain, loss));
    }
    out
}

fn rsi_value(gain: f64, loss: f64) -> f64 {
    if loss == 0.0 {
        if gain == 0.0 {
            50.0
        } else {
            100.0
        }
    } else {
        (100.0 - 100.0 / (1.0 + gain / loss)).clamp(0.0, 100.0)
    }
}

/// On-balance volume starting at 0.
pub fn obv(close: &[f64], volume: &[f64]) -> Result<Vec<f64>> {
    if close.len() != volume.len() {
        return Err(TaError::LengthMismatch(close.len(), volume.len()));
    }
    let mut out = Vec::with_capacity(close.len());
    let mut acc = 0.0;
    for t in 0..close.len() {
        if t > 0 {
            if close[t] > close[t - 1] {
                acc += volume[t];
            } else if close[t] < close[t - 1] {
                acc -= volume[t];
            }
        }
        out.push(acc);
    }
    Ok(out)
}

/// `ln(p[t] / p[t-1])` for `t >= 1`; index 0 is `None`.
pub fn log_returns(close: &[f64]) -> Result<Vec<Option<f64>>> {
    if let Some((index, &value)) = close
        .iter()
        .enumerate()
        .find(|(_, &p)| p <= 0.0 || !p.is_finite())
    {
        return Err(TaError::NonPositivePrice { index, value });
    }
    Ok((0..close.len())
        .map(|t| (t > 0).then(|| (close[t] / close[t - 1]).ln()))
        .collect())
}

fn window_mean_std(w: &[f64], ddof: f64) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.iter().sum::<f64>() / n;
    let ss: f64 = w.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (n - ddof)).sqrt())
}

/// Rolling sample std of log returns over `window` returns; defined for `t >= window`.
pub fn volatility(close: &[f64], window: usize) -> Result<Vec<Option<f64>>> {
    if window == 0 {
        return Err(TaError::ZeroWindow);
    }
    let r: Vec<f64> = log_returns(close)?
        .into_iter()
        .map(|x| x.unwrap_or(0.0))
        .collect();
    Ok((0..close.len())
        .map(|t| {
            (t >= window && window >= 2).then(|| window_mean_std(&r[t + 1 - window..=t], 1.0).1)
        })
        .collect())
}

/// True range; the first bar uses `high - low` only.
pub fn true_range(bars: &[CandleBar]) -> Vec<f64> {
    bars.iter()
        .enumerate()
        .map(|(t, b)| {
            let hl = b.high - b.low;
            if t == 0 {
                hl
            } else {
                let pc = bars[t - 1].close;
                hl.max((b.high - pc).abs()).max((b.low - pc).abs())
            }
        })
        .collect()
}

/// Rolling mean of the true range over `n` bars; defined for `t >= n - 1`.
pub fn atr(bars: &[CandleBar], n: usize) -> Vec<Option<f64>> {
    let tr = true_range(bars);
    rolling(&tr, n, |w| w.iter().sum::<f64>() / w.len() as f64)
}

fn rolling(x: &[f64], n: usize, f: impl Fn(&[f64]) -> f64) -> Vec<Option<f64>> {
    (0..x.len())
        .map(|t| (n >= 1 && t + 1 >= n).then(|| f(&x[t + 1 - n..=t])))
        .collect()
}

/// Bollinger band distances, in percent of the middle band.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Bollinger {
    /// `(upper - lower) / mid * 100`
    pub width_pct: Vec<Option<f64>>,
    /// `(upper - close) / mid * 100`
    pub close_to_upper_pct: Vec<Option<f64>>,
    /// `(close - lower) / mid * 100`
    pub close_to_lower_pct: Vec<Option<f64>>,
}

/// Middle band = SMA over `window`; bands at `± k` population std.
pub fn bollinger(close: &[f64], window: usize, k: f64) -> Bollinger {
    let mut out = Bollinger::default();
    for t in 0..close.len() {
        let v = (window >= 1 && t + 1 >= window)
            .then(|| window_mean_std(&close[t + 1 - window..=t], 0.0))
            .filter(|(mid, _)| *mid != 0.0)
            .map(|(mid, sd)| {
                let (up, low) = (mid + k * sd, mid - k * sd);
                (
                    (up - low) / mid * 100.0,
                    (up - close[t]) / mid * 100.0,
                    (close[t] - low) / mid * 100.0,
                )
            });
        out.width_pct.push(v.map(|v| v.0));
        out.close_to_upper_pct.push(v.map(|v| v.1));
        out.close_to_lower_pct.push(v.map(|v| v.2));
    }
    out
}

/// `(close - open, high - low)`.
pub fn price_trend_and_range(bar: &CandleBar) -> (f64, f64) {
    (bar.close - bar.open, bar.high - bar.low)
}

/// Every indicator, one entry per bar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaFeatures {
    pub dates: Vec<NaiveDate>,
    pub price_trend: Vec<f64>,
    pub ema_7: Vec<f64>,
    pub ema_25: Vec<f64>,
    pub ema_99: Vec<f64>,
    pub macd: Vec<f64>,
    pub macd_signal: Vec<f64>,
    pub rsi: Vec<Option<f64>>,
    pub volume: Vec<f64>,
    pub volume_trend: Vec<Option<f64>>,
    pub obv: Vec<f64>,
    pub volatility_7: Vec<Option<f64>>,
    pub volatility_14: Vec<Option<f64>>,
    pub volatility_21: Vec<Option<f64>>,
    pub atr: Vec<Option<f64>>,
    pub price_range: Vec<f64>,
    pub bb_width_pct: Vec<Option<f64>>,
    pub bb_close_to_upper_pct: Vec<Option<f64>>,
    pub bb_close_to_lower_pct: Vec<Option<f64>>,
}

impl TaFeatures {
    pub const COLUMNS: [&'static str; 18] = [
        "price_trend",
        "ema_7",
        "ema_25",
        "ema_99",
        "macd",
        "macd_signal",
        "rsi",
        "volume",
        "volume_trend",
        "obv",
        "volatility_7",
        "volatility_14",
        "volatility_21",
        "atr",
        "price_range",
        "bb_width_pct",
        "bb_close_to_upper_pct",
        "bb_close_to_lower_pct",
    ];

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    /// Column `i` of [`TaFeatures::COLUMNS`].
    pub fn column(&self, i: usize) -> Vec<Option<f64>> {
        let some = |v: &Vec<f64>| v.iter().map(|&x| Some(x)).collect();
        match i {
            0 => some(&self.price_trend),
            1 => some(&self.ema_7),
            2 => some(&self.ema_25),
            3 => some(&self.ema_99),
            4 => some(&self.macd),
            5 => some(&self.macd_signal),
            6 => self.rsi.clone(),
            7 => some(&self.volume),
            8 => self.volume_trend.clone(),
            9 => some(&self.obv),
            10 => self.volatility_7.clone(),
            11 => self.volatility_14.clone(),
            12 => self.volatility_21.clone(),
            13 => self.atr.clone(),
            14 => some(&self.price_range),
            15 => self.bb_width_pct.clone(),
            16 => self.bb_close_to_upper_pct.clone(),
            17 => self.bb_close_to_lower_pct.clone(),
            _ => panic!("column index {i} out of range"),
        }
    }
}

/// Compute every indicator over `bars` (assumed sorted by date).
pub fn compute(bars: &[CandleBar]) -> Result<TaFeatures> {
    if bars.is_empty() {
        return Err(TaError::Empty);
    }
    let close: Vec<f64> = bars.iter().map(|b| b.close).collect();
    let volume: Vec<f64> = bars.iter().map(|b| b.volume).collect();
    let (macd_line, macd_signal) = macd(&close);
    let bb = bollinger(&close, BOLLINGER_WINDOW, BOLLINGER_K);
    let (price_trend, price_range) = bars.iter().map(price_trend_and_range).unzip();
    Ok(TaFeatures {
        dates: bars.iter().map(|b| b.date).collect(),
        price_trend,
        ema_7: ema(&close, 7),
        ema_25: ema(&close, 25),
        ema_99: ema(&close, 99),
        macd: macd_line,
        macd_signal,
        rsi: rsi(&close, RSI_WINDOW),
        volume_trend: pct_change(&volume),
        obv: obv(&close, &volume)?,
        volume,
        volatility_7: volatility(&close, VOLATILITY_WINDOWS[0])?,
        volatility_14: volatility(&close, VOLATILITY_WINDOWS[1])?,
        volatility_21: volatility(&close, VOLATILITY_WINDOWS[2])?,
        atr: atr(bars, ATR_WINDOW),
        price_range,
        bb_width_pct: bb.width_pct,
        bb_close_to_upper_pct: bb.close_to_upper_pct,
        bb_close_to_lower_pct: bb.close_to_lower_pct,
    })
}

impl TaFeatures {
    /// Inverse of [`TaFeatures::column`]; `columns` follow [`TaFeatures::COLUMNS`].
    /// Missing values in always-defined columns become NaN.
    pub fn from_columns(dates: Vec<NaiveDate>, columns: Vec<Vec<Option<f64>>>) -> Self {
        assert_eq!(columns.len(), Self::COLUMNS.len(), "one vector per column");
        let mut it = columns.into_iter();
        let mut next = || it.next().expect("column count checked");
        let dense = |v: Vec<Option<f64>>| v.into_iter().map(|x| x.unwrap_or(f64::NAN)).collect();
        let price_trend = dense(next());
        let ema_7 = dense(next());
        let ema_25 = dense(next());
        let ema_99 = dense(next());
        let macd = dense(next());
        let macd_signal = dense(next());
        let rsi = next();
        let volume = dense(next());
        let volume_trend = next();
        let obv = dense(next());
        let volatility_7 = next();
        let volatility_14 = next();
        let volatility_21 = next();
        let atr = next();
        let price_range = dense(next());
        let bb_width_pct = next();
        let bb_close_to_upper_pct = next();
        let bb_close_to_lower_pct = next();
        Self {
            dates,
            price_trend,
            ema_7,
            ema_25,
            ema_99,
            macd,
            macd_signal,
            rsi,
            volume,
            volume_trend,
            obv,
            volatility_7,
            volatility_14,
            volatility_21,
            atr,
            price_range,
            bb_width_pct,
            bb_close_to_upper_pct,
            bb_close_to_lower_pct,
        }
    }

    /// `date,<COLUMNS...>`, empty cells for undefined values.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> table::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(Self::header())?;
        let cols: Vec<_> = (0..Self::COLUMNS.len()).map(|i| self.column(i)).collect();
        for (t, d) in self.dates.iter().enumerate() {
            let mut rec = vec![d.to_string()];
            rec.extend(cols.iter().map(|c| table::format_opt(c[t])));
            out.write_record(&rec)?;
        }
        out.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> table::Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        table::expect_header(rdr.headers()?, &Self::header())?;
        let mut dates = Vec::new();
        let mut cols = vec![Vec::new(); Self::COLUMNS.len()];
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            dates.push(table::parse(&rec[0], line, "date")?);
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(table::parse_opt(&rec[j + 1], line, Self::COLUMNS[j])?);
            }
        }
        Ok(Self::from_columns(dates, cols))
    }

    fn header() -> Vec<String> {
        std::iter::once("date")
            .chain(Self::COLUMNS)
            .map(String::from)
            .collect()
    }
}
