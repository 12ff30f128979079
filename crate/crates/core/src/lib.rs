//! Transaction-network market indicators.
//!
//! Turns raw blockchain transfer logs, daily OHLCV candles and social-trend
//! series into three feature families (network properties, technical
//! analysis, social media), then trains and scores a gradient-boosted
//! multiclass classifier of next-day price-trend direction.
//!
//! # Modules
//!
//! - [`ingest`] - file loaders and validation for transactions, candles, social rows
//! - [`graph`] - per-interval directed address graphs
//! - [`slicing`] - Jaccard-driven dynamic time slicing
//! - [`netprops`] - network-property feature family
//! - [`ta`] - technical-analysis indicator family
//! - [`dataset`] - aligned feature matrix, trend labels, chronological split
//! - [`gbdt`] - softmax gradient-boosted trees, grid search, importances
//! - [`eval`] - classification reports, model comparison, correlation network, SVG charts

pub mod dataset;
pub mod eval;
pub mod gbdt;
pub mod graph;
pub mod ingest;
pub mod netprops;
pub mod slicing;
pub mod stats;
pub mod synth;
pub mod ta;
pub mod table;

pub use dataset::{Family, FeatureMatrix, Trend};
pub use gbdt::{BoostConfig, BoostedEnsemble};
pub use graph::{DayRange, GraphSnapshot};
pub use ingest::{AddressId, CandleBar, SocialRow, TransactionLog, TransactionRecord};
pub use netprops::NetworkFeatures;
pub use ta::TaFeatures;
