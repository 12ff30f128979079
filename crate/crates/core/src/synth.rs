//! Seeded synthetic data: transaction streams, candles, social rows and
//! datasets with planted structure. Every generator is a pure function of
//! its configuration and seed.

use std::io::{self, Read};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Zipf};
use rustc_hash::FxHashSet;

use crate::dataset::{assemble, AssembleOptions, FeatureMatrix, Imputation, Sources};
use crate::graph::DayRange;
use crate::ingest::{day_of_date, CandleBar, SocialRow, SocialSeries};
use crate::netprops::NetworkFeatures;
use crate::ta;

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// A 40-hex-digit address, distinct for every `i`.
pub fn address(i: u64) -> String {
    format!(
        "0x{:016x}{:08x}{:016x}",
        splitmix(i),
        splitmix(!i) as u32,
        i
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TxStreamConfig {
    pub start: NaiveDate,
    pub days: usize,
    pub tx_per_day: usize,
    pub n_addresses: u64,
    /// Zipf exponent of address activity; larger means more hub-dominated.
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for TxStreamConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date"),
            days: 30,
            tx_per_day: 100,
            n_addresses: 500,
            zipf_exponent: 1.1,
            seed: 0,
        }
    }
}

/// One generated transfer: timestamp, sender index, receiver index, value.
pub type RawTx = (i64, u64, u64, u128);

/// Lazily generated, timestamp-ordered transfers.
pub struct TxStream {
    cfg: TxStreamConfig,
    rng: ChaCha8Rng,
    zipf: Zipf<f64>,
    start_secs: i64,
    next: usize,
}

impl TxStream {
    pub fn new(cfg: TxStreamConfig) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            zipf: Zipf::new(cfg.n_addresses.max(1) as f64, cfg.zipf_exponent)
                .expect("valid zipf parameters"),
            start_secs: day_of_date(cfg.start) * 86_400,
            next: 0,
            cfg,
        }
    }

    pub fn total(&self) -> usize {
        self.cfg.days * self.cfg.tx_per_day
    }
}

impl Iterator for TxStream {
    type Item = RawTx;

    fn next(&mut self) -> Option<RawTx> {
        if self.next >= self.total() {
            return None;
        }
        let per_day = self.cfg.tx_per_day;
        let (day, k) = (self.next / per_day, self.next % per_day);
        self.next += 1;
        let ts = self.start_secs + day as i64 * 86_400 + (k as i64 * 86_400) / per_day as i64;
        let src = self.zipf.sample(&mut self.rng) as u64 - 1;
        let dst = self.zipf.sample(&mut self.rng) as u64 - 1;
        let value = u128::from(self.rng.random_range(1..1_000_000_000u64)) * 1_000_000_000;
        Some((ts, src, dst, value))
    }
}

/// CSV (`timestamp,from,to,value`) rendering of a [`TxStream`], produced on
/// demand so arbitrarily long streams need no storage.
pub struct TxCsvReader {
    stream: TxStream,
    buf: Vec<u8>,
    pos: usize,
}

impl TxCsvReader {
    pub fn new(cfg: TxStreamConfig) -> Self {
        Self {
            stream: TxStream::new(cfg),
            buf: b"timestamp,from,to,value\n".to_vec(),
            pos: 0,
        }
    }
}

impl Read for TxCsvReader {
    fn read(&mut self, out: &mut [u8]) -> io::Result<usize> {
        use std::io::Write;
        while self.pos == self.buf.len() {
            self.buf.clear();
            self.pos = 0;
            for _ in 0..256 {
                match self.stream.next() {
                    Some((ts, s, d, v)) => {
                        writeln!(self.buf, "{ts},{},{},{v}", address(s), address(d))?
                    }
                    None => break,
                }
            }
            if self.buf.is_empty() {
                return Ok(0);
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

/// Candles whose close-to-close log returns are `returns` (one bar more
/// than returns), starting at `price0`.
pub fn candles_from_returns(
    start: NaiveDate,
    price0: f64,
    returns: &[f64],
    seed: u64,
) -> Vec<CandleBar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut close = price0;
    let mut bars = Vec::with_capacity(returns.len() + 1);
    for t in 0..=returns.len() {
        let open = close;
        if t > 0 {
            close = open * returns[t - 1].exp();
        }
        let high = open.max(close) * (1.0 + rng.random_range(0.0..0.02));
        let low = open.min(close) * (1.0 - rng.random_range(0.0..0.02));
        bars.push(CandleBar {
            date: start + Days::new(t as u64),
            open,
            high,
            low,
            close,
            volume: 1e6 * rng.random_range(0.5..1.5f64) * (1.0 + 20.0 * (close / open).ln().abs()),
        });
    }
    bars
}

/// Geometric random walk with Gaussian daily log returns.
pub fn random_walk_candles(start: NaiveDate, days: usize, sigma: f64, seed: u64) -> Vec<CandleBar> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let returns: Vec<f64> = (1..days).map(|_| normal.sample(&mut rng)).collect();
    candles_from_returns(start, 1000.0, &returns, splitmix(seed))
}

/// Daily tweet counts and a 0-100 trend score following noisy AR(1) paths.
pub fn social_rows(start: NaiveDate, days: usize, seed: u64) -> Vec<SocialRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut a, mut b) = (0.0f64, 0.0f64);
    (0..days)
        .map(|t| {
            a = 0.9 * a + rng.random_range(-0.2..0.2);
            b = 0.9 * b + rng.random_range(-0.2..0.2);
            SocialRow {
                date: start + Days::new(t as u64),
                tweet_count: (20_000.0 * a.exp()).round() as u64,
                trend_score: (50.0 + 40.0 * b.tanh()).clamp(1.0, 100.0),
            }
        })
        .collect()
}

/// Inputs of the bundled demo run.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub tx: TxStreamConfig,
    pub candles: Vec<CandleBar>,
    pub social: Vec<SocialRow>,
}

pub const FIXTURE_TX_DAYS: usize = 120;
/// Price and social history before the first transaction day, long enough
/// to cover the indicator warm-up.
pub const FIXTURE_HISTORY_DAYS: usize = 110;

pub fn fixture(seed: u64) -> Fixture {
    let tx_start = NaiveDate::from_ymd_opt(2021, 1, 1).expect("valid date");
    let start = tx_start - Days::new(FIXTURE_HISTORY_DAYS as u64);
    let days = FIXTURE_HISTORY_DAYS + FIXTURE_TX_DAYS;
    Fixture {
        tx: TxStreamConfig {
            start: tx_start,
            days: FIXTURE_TX_DAYS,
            tx_per_day: 100,
            n_addresses: 400,
            zipf_exponent: 1.1,
            seed,
        },
        candles: random_walk_candles(start, days, 0.04, seed.wrapping_add(1)),
        social: social_rows(start, days, seed.wrapping_add(2)),
    }
}

/// Daily event sets drawn from pool A before `switch_day` and from a
/// disjoint pool B from then on. Each day draws `draws` events with
/// replacement from its pool of `pool` events.
pub fn switching_pools(
    days: usize,
    switch_day: usize,
    pool: u32,
    draws: usize,
    seed: u64,
) -> Vec<FxHashSet<u32>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..days)
        .map(|d| {
            let base = if d < switch_day { 0 } else { pool };
            (0..draws)
                .map(|_| base + rng.random_range(0..pool))
                .collect()
        })
        .collect()
}

/// Daily event sets from a pool whose daily turnover grows with the price
/// level, and the daily closes driving it.
pub fn price_driven_turnover(
    days: usize,
    pool: usize,
    draws: usize,
    seed: u64,
) -> (Vec<FxHashSet<u32>>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // slow swings so that several intervals share a price regime
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let closes: Vec<f64> = (0..days)
        .map(|t| {
            let swing = (t as f64 * std::f64::consts::TAU / 120.0 + phase).sin();
            1000.0 * (0.6 * swing + rng.random_range(-0.05..0.05)).exp()
        })
        .collect();
    let (lo, hi) = closes
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| {
            (a.min(c), b.max(c))
        });
    let mut members: Vec<u32> = (0..pool as u32).collect();
    let mut next_id = pool as u32;
    let events = closes
        .iter()
        .map(|&c| {
            let turnover = 0.02 + 0.4 * (c - lo) / (hi - lo);
            for m in members.iter_mut() {
                if rng.random_bool(turnover) {
                    *m = next_id;
                    next_id += 1;
                }
            }
            (0..draws)
                .map(|_| members[rng.random_range(0..pool)])
                .collect()
        })
        .collect();
    (events, closes)
}

/// A market whose next-day return depends on two hidden daily factors,
/// each observed with noise by one network feature, and on the previous
/// day's return, which the technical `price_trend` column reflects. Social
/// features are pure noise.
#[derive(Debug, Clone)]
pub struct PlantedMarket {
    pub matrix: FeatureMatrix,
    pub imputation: Imputation,
    /// Columns carrying the signal.
    pub informative: Vec<String>,
    pub candles: Vec<CandleBar>,
}

/// `rows` labelled days after the indicator warm-up.
pub fn planted_market(rows: usize, seed: u64) -> PlantedMarket {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let days = rows + ta::WARMUP_ROWS + 1;
    let start = NaiveDate::from_ymd_opt(2018, 1, 1).expect("valid date");
    let f1: Vec<f64> = (0..days).map(|_| normal.sample(&mut rng)).collect();
    let f2: Vec<f64> = (0..days).map(|_| normal.sample(&mut rng)).collect();
    // r[t] moves the close from day t to t + 1
    let mut returns: Vec<f64> = Vec::with_capacity(days - 1);
    for t in 0..days - 1 {
        let prev = if t == 0 { 0.0 } else { returns[t - 1] };
        returns.push(
            0.012 * (f1[t] + f2[t])
                + 0.008 * (prev / 0.02).tanh()
                + 0.008 * normal.sample(&mut rng),
        );
    }
    let candles = candles_from_returns(start, 500.0, &returns, splitmix(seed));
    let social = SocialSeries::from_rows(social_rows(start, days, splitmix(seed ^ 1)))
        .expect("generated rows are valid")
        .features();

    let mut walk = [0.0f64; 4];
    let network: Vec<NetworkFeatures> = (0..days)
        .map(|t| {
            let mut noise = || normal.sample(&mut rng);
            for w in walk.iter_mut() {
                *w = 0.95 * *w + 0.1 * noise();
            }
            let n_nodes = (5000.0 * (1.0 + 0.1 * walk[0]).max(0.2)).round() as usize;
            NetworkFeatures {
                interval: DayRange::day(day_of_date(start) + t as i64),
                n_nodes,
                n_edges: (n_nodes as f64 * (1.6 + 0.1 * walk[1])).round() as usize,
                degree_mean: Some(3.2 + 0.3 * (f1[t] + 0.3 * noise())),
                degree_std: Some(12.0 + walk[2] + 0.5 * noise()),
                neighbor_degree_mean: Some(40.0 + 3.0 * noise()),
                degree_slope: Some(-1.6 + 0.05 * noise()),
                active_ratio: Some(0.3 + 0.02 * walk[3]),
                assortativity: Some(-0.1 + 0.02 * noise()),
                avg_clustering: Some(0.05 + 0.008 * noise()),
                modularity: Some(0.6 + 0.03 * noise()),
                n_communities: Some((300.0 + 20.0 * walk[0]).max(1.0) as usize),
                reciprocity: Some(0.2 + 0.04 * (f2[t] + 0.3 * noise())),
                pagerank_mean: Some(1.0 / n_nodes as f64),
                pagerank_std: Some(0.001 * (1.0 + 0.1 * noise()).abs()),
                lcc_fraction: Some(0.8 + 0.02 * noise()),
                pagerank_converged: true,
            }
        })
        .collect();
    let technical = ta::compute(&candles).expect("positive generated prices");
    let (matrix, imputation) = assemble(
        Sources {
            candles: &candles,
            network: Some(&network),
            technical: Some(&technical),
            social: Some(&social),
        },
        &AssembleOptions::default(),
    )
    .expect("sources share all dates");
    PlantedMarket {
        matrix,
        imputation,
        informative: ["np.degree_mean", "np.reciprocity", "ta.price_trend"]
            .map(String::from)
            .to_vec(),
        candles,
    }
}
