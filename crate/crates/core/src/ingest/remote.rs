//! Remote source adapters: block-explorer transaction lists and exchange
//! daily klines. Response parsing is always available so that captured
//! payloads can be replayed from disk; the HTTP clients need the `remote`
//! feature.

use chrono::DateTime;
use serde_json::Value;

use super::{CandleBar, IngestError, RejectReason, Result, RowReject, TransactionLog};

/// Append the `result` array of an explorer `account/txlist` response to `log`.
/// Rows that fail validation are collected as rejects (line = array index + 1).
pub fn parse_etherscan_txlist(body: &str, log: &mut TransactionLog) -> Result<usize> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| IngestError::Response(e.to_string()))?;
    let result = doc
        .get("result")
        .and_then(Value::as_array)
        .ok_or_else(|| IngestError::Response("missing `result` array".into()))?;
    let mut accepted = 0;
    for (i, item) in result.iter().enumerate() {
        log.rows_read += 1;
        let get = |k: &str| item.get(k).and_then(Value::as_str);
        let outcome = match (get("timeStamp"), get("from"), get("to"), get("value")) {
            (Some(ts), Some(from), Some(to), Some(value)) => {
                log.push_raw(ts, from, to, value).map(|_| ())
            }
            _ => Err(RejectReason::MissingField),
        };
        match outcome {
            Ok(()) => accepted += 1,
            Err(reason) => log.rejects.push(RowReject {
                line: i as u64 + 1,
                reason,
            }),
        }
    }
    Ok(accepted)
}

fn kline_f64(v: &Value) -> Option<f64> {
    match v {
        Value::String(s) => s.parse().ok(),
        Value::Number(n) => n.as_f64(),
        _ => None,
    }
}

/// Parse an exchange `klines` response (array of arrays, open time in ms).
pub fn parse_binance_klines(body: &str) -> Result<Vec<CandleBar>> {
    let doc: Value =
        serde_json::from_str(body).map_err(|e| IngestError::Response(e.to_string()))?;
    let rows = doc
        .as_array()
        .ok_or_else(|| IngestError::Response("expected a JSON array".into()))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let bad = |what: &str| IngestError::InvalidRow {
                line: i as u64 + 1,
                message: what.to_string(),
            };
            let cells = row
                .as_array()
                .filter(|c| c.len() >= 6)
                .ok_or_else(|| bad("short kline"))?;
            let open_ms = cells[0].as_i64().ok_or_else(|| bad("open time"))?;
            let date = DateTime::from_timestamp_millis(open_ms)
                .ok_or_else(|| bad("open time out of range"))?
                .date_naive();
            let num = |j: usize| kline_f64(&cells[j]).ok_or_else(|| bad("numeric field"));
            let bar = CandleBar {
                date,
                open: num(1)?,
                high: num(2)?,
                low: num(3)?,
                close: num(4)?,
                volume: num(5)?,
            };
            bar.validate().map_err(|m| bad(&m))?;
            Ok(bar)
        })
        .collect()
}

#[cfg(feature = "remote")]
mod http {
    use super::*;
    use chrono::NaiveDate;

    /// Block-explorer `account/txlist` client.
    pub struct EtherscanClient {
        pub base_url: String,
        pub api_key: String,
        client: reqwest::blocking::Client,
    }

    impl EtherscanClient {
        pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
            Self {
                base_url: base_url.into(),
                api_key: api_key.into(),
                client: reqwest::blocking::Client::new(),
            }
        }

        /// Fetch the transactions of one address between two block numbers.
        pub fn fetch_txlist(
            &self,
            address: &str,
            start_block: u64,
            end_block: u64,
            log: &mut TransactionLog,
        ) -> Result<usize> {
            let body = self
                .client
                .get(&self.base_url)
                .query(&[
                    ("module", "account"),
                    ("action", "txlist"),
                    ("address", address),
                    ("startblock", &start_block.to_string()),
                    ("endblock", &end_block.to_string()),
                    ("sort", "asc"),
                    ("apikey", &self.api_key),
                ])
                .send()?
                .error_for_status()?
                .text()?;
            parse_etherscan_txlist(&body, log)
        }
    }

    /// Exchange daily-kline client.
    pub struct BinanceClient {
        pub base_url: String,
        client: reqwest::blocking::Client,
    }

    impl BinanceClient {
        pub fn new(base_url: impl Into<String>) -> Self {
            Self {
                base_url: base_url.into(),
                client: reqwest::blocking::Client::new(),
            }
        }

        pub fn fetch_daily(
            &self,
            symbol: &str,
            start: NaiveDate,
            end: NaiveDate,
        ) -> Result<Vec<CandleBar>> {
            let ms = |d: NaiveDate| {
                d.and_hms_opt(0, 0, 0)
                    .expect("midnight")
                    .and_utc()
                    .timestamp_millis()
            };
            let body = self
                .client
                .get(format!(
                    "{}/api/v3/klines",
                    self.base_url.trim_end_matches('/')
                ))
                .query(&[
                    ("symbol", symbol.to_string()),
                    ("interval", "1d".to_string()),
                    ("startTime", ms(start).to_string()),
                    ("endTime", ms(end).to_string()),
                    ("limit", "1000".to_string()),
                ])
                .send()?
                .error_for_status()?
                .text()?;
            parse_binance_klines(&body)
        }
    }
}

#[cfg(feature = "remote")]
pub use http::{BinanceClient, EtherscanClient};
