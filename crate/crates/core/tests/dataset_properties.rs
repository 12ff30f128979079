use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use txnet::dataset::{assemble, AssembleOptions, Sources, Trend};
use txnet::graph::daily_snapshots;
use txnet::ingest::{
    day_of_date, read_transactions, CandleBar, LoadOptions, SocialRow, SocialSeries, TxFormat,
};
use txnet::netprops::{self, NetPropsConfig};
use txnet::synth::{self, TxCsvReader};
use txnet::{ta, FeatureMatrix, TransactionRecord};

struct Raw {
    tx: Vec<TransactionRecord>,
    candles: Vec<CandleBar>,
    social: Vec<SocialRow>,
}

fn matrix(raw: &Raw, last: Option<NaiveDate>) -> FeatureMatrix {
    let keep = |d: NaiveDate| last.is_none_or(|l| d <= l);
    let tx: Vec<_> = raw
        .tx
        .iter()
        .copied()
        .filter(|t| last.is_none_or(|l| t.day() <= day_of_date(l)))
        .collect();
    let candles: Vec<_> = raw
        .candles
        .iter()
        .copied()
        .filter(|b| keep(b.date))
        .collect();
    let social = SocialSeries {
        rows: raw
            .social
            .iter()
            .copied()
            .filter(|r| keep(r.date))
            .collect(),
    };
    let network = netprops::compute_all(&daily_snapshots(&tx, None), &NetPropsConfig::default());
    let technical = ta::compute(&candles).unwrap();
    let social = social.features();
    assemble(
        Sources {
            candles: &candles,
            network: Some(&network),
            technical: Some(&technical),
            social: Some(&social),
        },
        &AssembleOptions::default(),
    )
    .unwrap()
    .0
}

#[test]
fn truncating_inputs_leaves_earlier_rows_unchanged() {
    let fx = synth::fixture(5);
    let log = read_transactions(
        TxCsvReader::new(fx.tx),
        TxFormat::Csv,
        &LoadOptions::default(),
    )
    .unwrap();
    let raw = Raw {
        tx: log.records,
        candles: fx.candles,
        social: fx.social,
    };
    let full = matrix(&raw, None);
    assert!(full.n_rows() > 60);
    for cut in [10, 33, 60, full.n_rows() - 2] {
        let last = full.dates[cut];
        let part = matrix(&raw, Some(last));
        assert!(part.n_rows() > 0 && *part.dates.last().unwrap() <= last);
        let offset = full.dates.iter().position(|d| *d == part.dates[0]).unwrap();
        for (i, date) in part.dates.iter().enumerate() {
            let j = offset + i;
            assert_eq!(full.dates[j], *date);
            assert_eq!(full.labels[j], part.labels[i], "{date}");
            for (a, b) in full.columns.iter().zip(&part.columns) {
                assert_eq!(
                    a.values[j].to_bits(),
                    b.values[i].to_bits(),
                    "{} at {date}, cut {last}",
                    a.name
                );
            }
        }
    }
}

#[test]
fn zero_drift_walk_labels_are_symmetric() {
    let normal = Normal::new(0.0, 0.04).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let returns: Vec<f64> = (0..100_000).map(|_| normal.sample(&mut rng)).collect();
    let start = NaiveDate::from_ymd_opt(1800, 1, 1).unwrap();
    let candles = synth::candles_from_returns(start, 100.0, &returns, 17);
    let (m, _) = assemble(
        Sources {
            candles: &candles,
            network: None,
            technical: None,
            social: None,
        },
        &AssembleOptions::default(),
    )
    .unwrap();
    assert!(m.n_rows() >= 99_000);
    let share = |t: Trend| m.labels.iter().filter(|&&l| l == t).count() as f64 / m.n_rows() as f64;
    let delta = (share(Trend::Up) - share(Trend::Down)).abs();
    assert!(
        delta < 0.03,
        "up {} down {}",
        share(Trend::Up),
        share(Trend::Down)
    );
}
