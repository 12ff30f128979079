//! Run configuration: a plain `key = value` file plus command-line overrides.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use txnet::dataset::{Family, LabelMode, DEFAULT_THRESHOLD};
use txnet::gbdt::{BoostConfig, ParamGrid};
use txnet::slicing::{DEFAULT_MAX_DAYS, DEFAULT_MIN_DAYS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalPolicy {
    Daily,
    Dynamic { min_days: usize, max_days: usize },
}

impl FromStr for IntervalPolicy {
    type Err = anyhow::Error;

    /// `daily`, `dynamic`, or `dynamic(min,max)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "daily" {
            return Ok(Self::Daily);
        }
        if s == "dynamic" {
            return Ok(Self::Dynamic {
                min_days: DEFAULT_MIN_DAYS,
                max_days: DEFAULT_MAX_DAYS,
            });
        }
        let inner = s
            .strip_prefix("dynamic(")
            .and_then(|r| r.strip_suffix(')'))
            .ok_or_else(|| {
                anyhow!("interval must be daily, dynamic or dynamic(min,max), got {s:?}")
            })?;
        let (a, b) = inner
            .split_once(',')
            .ok_or_else(|| anyhow!("dynamic interval needs min and max days"))?;
        let (min_days, max_days) = (a.trim().parse()?, b.trim().parse()?);
        if min_days == 0 || min_days > max_days {
            bail!(
                "dynamic interval bounds must satisfy 1 <= min <= max, got ({min_days},{max_days})"
            );
        }
        Ok(Self::Dynamic { min_days, max_days })
    }
}

impl fmt::Display for IntervalPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Daily => write!(f, "daily"),
            Self::Dynamic { min_days, max_days } => write!(f, "dynamic({min_days},{max_days})"),
        }
    }
}

/// Base model: technical and social features. Full model: adds the network family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ModelFamily {
    Bm,
    Fm,
}

impl ModelFamily {
    pub fn name(self) -> &'static str {
        match self {
            Self::Bm => "bm",
            Self::Fm => "fm",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Bm => "BM",
            Self::Fm => "FM",
        }
    }

    pub fn families(self) -> &'static [Family] {
        match self {
            Self::Bm => &[Family::Technical, Family::Social],
            Self::Fm => &[Family::Network, Family::Technical, Family::Social],
        }
    }

    pub fn preset(self, seed: u64) -> BoostConfig {
        match self {
            Self::Bm => BoostConfig::base_model(seed),
            Self::Fm => BoostConfig::full_model(seed),
        }
    }
}

impl FromStr for ModelFamily {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bm" => Ok(Self::Bm),
            "fm" => Ok(Self::Fm),
            other => bail!("model family must be bm or fm, got {other:?}"),
        }
    }
}

const GRID_KEYS: [&str; 7] = [
    "n_estimators",
    "max_depth",
    "colsample_bytree",
    "min_child_weight",
    "learning_rate",
    "gamma",
    "subsample",
];

/// Hyperparameter grid: candidate lists that replace the matching preset
/// values. `preset` alone searches just the preset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GridSpec {
    pub overrides: BTreeMap<String, Vec<f64>>,
}

impl FromStr for GridSpec {
    type Err = anyhow::Error;

    /// `preset` or `key:v1,v2;key:v1...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let mut overrides = BTreeMap::new();
        if s.is_empty() || s == "preset" {
            return Ok(Self { overrides });
        }
        for part in s.split(';').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, values) = part
                .split_once(':')
                .ok_or_else(|| anyhow!("grid entry {part:?} is not key:values"))?;
            let key = key.trim();
            if !GRID_KEYS.contains(&key) {
                bail!("unknown grid parameter {key:?}");
            }
            let values = values
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("grid value {v:?} for {key}"))
                })
                .collect::<Result<Vec<_>>>()?;
            if values.is_empty() {
                bail!("grid parameter {key} has no values");
            }
            if matches!(key, "n_estimators" | "max_depth")
                && values.iter().any(|v| v.fract() != 0.0 || *v < 0.0)
            {
                bail!("grid parameter {key} takes non-negative integers");
            }
            overrides.insert(key.to_string(), values);
        }
        Ok(Self { overrides })
    }
}

impl fmt::Display for GridSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.overrides.is_empty() {
            return write!(f, "preset");
        }
        let parts: Vec<String> = self
            .overrides
            .iter()
            .map(|(k, v)| {
                let vs: Vec<String> = v.iter().map(f64::to_string).collect();
                format!("{k}:{}", vs.join(","))
            })
            .collect();
        write!(f, "{}", parts.join(";"))
    }
}

impl GridSpec {
    pub fn grid(&self, preset: &BoostConfig) -> ParamGrid {
        let mut g = ParamGrid::single(preset);
        let ints = |v: &[f64]| v.iter().map(|&x| x as usize).collect();
        for (k, v) in &self.overrides {
            match k.as_str() {
                "n_estimators" => g.n_estimators = ints(v),
                "max_depth" => g.max_depth = ints(v),
                "colsample_bytree" => g.colsample_bytree = v.clone(),
                "min_child_weight" => g.min_child_weight = v.clone(),
                "learning_rate" => g.learning_rate = v.clone(),
                "gamma" => g.gamma = v.clone(),
                "subsample" => g.subsample = v.clone(),
                _ => unreachable!("keys validated on parse"),
            }
        }
        g
    }
}

pub fn parse_label_mode(s: &str) -> Result<LabelMode> {
    match s.trim() {
        "next_return" => Ok(LabelMode::NextReturn),
        "return_change" => Ok(LabelMode::ReturnChange),
        other => bail!("label_mode must be next_return or return_change, got {other:?}"),
    }
}

pub fn label_mode_name(m: LabelMode) -> &'static str {
    match m {
        LabelMode::NextReturn => "next_return",
        LabelMode::ReturnChange => "return_change",
    }
}

fn parse_bool(s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => bail!("expected a boolean, got {other:?}"),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub transactions: Option<PathBuf>,
    pub candles: Option<PathBuf>,
    pub social: Option<PathBuf>,
    pub interval: IntervalPolicy,
    pub threshold: f64,
    pub label_mode: LabelMode,
    pub train_end: Option<NaiveDate>,
    pub models: Vec<ModelFamily>,
    pub grid: GridSpec,
    pub folds: usize,
    pub seed: Option<u64>,
    pub alpha: f64,
    pub permutation_repeats: usize,
    pub max_reject_ratio: f64,
    pub drop_zero_value: bool,
    pub drop_self_loops: bool,
    pub louvain_seed: u64,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            transactions: None,
            candles: None,
            social: None,
            interval: IntervalPolicy::Daily,
            threshold: DEFAULT_THRESHOLD,
            label_mode: LabelMode::NextReturn,
            train_end: None,
            models: vec![ModelFamily::Bm, ModelFamily::Fm],
            grid: GridSpec::default(),
            folds: 3,
            seed: None,
            alpha: 0.05,
            permutation_repeats: 5,
            max_reject_ratio: txnet::ingest::DEFAULT_MAX_REJECT_RATIO,
            drop_zero_value: false,
            drop_self_loops: false,
            louvain_seed: 42,
            out: None,
        }
    }
}

impl RunConfig {
    /// Parse a config file. Relative paths are resolved against the file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{}:{}: expected key = value", path.display(), i + 1))?;
            cfg.set(k.trim(), v.trim(), Some(base))
                .with_context(|| format!("{}:{}", path.display(), i + 1))?;
        }
        Ok(cfg)
    }

    /// Apply one `key=value` assignment. Paths are taken relative to `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        match key {
            "transactions" => self.transactions = Some(path(value)),
            "candles" => self.candles = Some(path(value)),
            "social" => self.social = (!value.is_empty()).then(|| path(value)),
            "out" => self.out = Some(path(value)),
            "interval" => self.interval = value.parse()?,
            "threshold" => {
                let t: f64 = value.parse()?;
                if !(t > 0.0 && t.is_finite()) {
                    bail!("threshold must be positive, got {t}");
                }
                self.threshold = t;
            }
            "label_mode" => self.label_mode = parse_label_mode(value)?,
            "train_end" => {
                self.train_end = Some(
                    value
                        .parse()
                        .with_context(|| format!("train_end {value:?}"))?,
                )
            }
            "models" => {
                let mut m = value
                    .split(',')
                    .map(str::parse)
                    .collect::<Result<Vec<ModelFamily>>>()?;
                m.sort();
                m.dedup();
                if m.is_empty() {
                    bail!("models must name bm, fm or both");
                }
                self.models = m;
            }
            "grid" => self.grid = value.parse()?,
            "folds" => {
                self.folds = value.parse()?;
                if self.folds == 0 {
                    bail!("folds must be at least 1");
                }
            }
            "seed" => self.seed = Some(value.parse()?),
            "alpha" => {
                let a: f64 = value.parse()?;
                if !(a > 0.0 && a < 1.0) {
                    bail!("alpha must lie in (0, 1), got {a}");
                }
                self.alpha = a;
            }
            "permutation_repeats" => self.permutation_repeats = value.parse()?,
            "max_reject_ratio" => self.max_reject_ratio = value.parse()?,
            "drop_zero_value" => self.drop_zero_value = parse_bool(value)?,
            "drop_self_loops" => self.drop_self_loops = parse_bool(value)?,
            "louvain_seed" => self.louvain_seed = value.parse()?,
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Apply a `key=value` override from the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| anyhow!("override {assignment:?} is not key=value"))?;
        self.set(k.trim(), v.trim(), None)
    }

    /// Every setting that influences results, as text. Input files appear by
    /// name only; their contents are hashed separately.
    pub fn canonical(&self) -> BTreeMap<String, String> {
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_name())
                .map_or_else(String::new, |n| n.to_string_lossy().into_owned())
        };
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("transactions", name(&self.transactions));
        put("candles", name(&self.candles));
        put("social", name(&self.social));
        put("interval", self.interval.to_string());
        put("threshold", self.threshold.to_string());
        put("label_mode", label_mode_name(self.label_mode).into());
        put(
            "train_end",
            self.train_end.map_or_else(String::new, |d| d.to_string()),
        );
        put(
            "models",
            self.models
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(","),
        );
        put("grid", self.grid.to_string());
        put("folds", self.folds.to_string());
        put(
            "seed",
            self.seed.map_or_else(String::new, |s| s.to_string()),
        );
        put("alpha", self.alpha.to_string());
        put("permutation_repeats", self.permutation_repeats.to_string());
        put("max_reject_ratio", self.max_reject_ratio.to_string());
        put("drop_zero_value", self.drop_zero_value.to_string());
        put("drop_self_loops", self.drop_self_loops.to_string());
        put("louvain_seed", self.louvain_seed.to_string());
        m
    }

    pub fn require<'a, T>(&self, v: &'a Option<T>, key: &str) -> Result<&'a T> {
        v.as_ref()
            .ok_or_else(|| anyhow!("missing required setting {key:?}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_policy_round_trip() {
        for s in ["daily", "dynamic(3,9)"] {
            assert_eq!(s.parse::<IntervalPolicy>().unwrap().to_string(), s);
        }
        assert_eq!(
            "dynamic".parse::<IntervalPolicy>().unwrap(),
            IntervalPolicy::Dynamic {
                min_days: 7,
                max_days: 28
            }
        );
        assert!("dynamic(9,3)".parse::<IntervalPolicy>().is_err());
        assert!("weekly".parse::<IntervalPolicy>().is_err());
    }

    #[test]
    fn grid_spec_overrides_preset() {
        let spec: GridSpec = "max_depth:2,4;learning_rate:0.1".parse().unwrap();
        let g = spec.grid(&BoostConfig::base_model(1));
        assert_eq!(g.max_depth, vec![2, 4]);
        assert_eq!(g.learning_rate, vec![0.1]);
        assert_eq!(g.gamma, vec![0.08]);
        assert_eq!(g.len(), 2);
        assert_eq!(spec.to_string().parse::<GridSpec>().unwrap(), spec);
        assert_eq!(
            "preset"
                .parse::<GridSpec>()
                .unwrap()
                .grid(&BoostConfig::full_model(0))
                .len(),
            1
        );
        assert!("depth:3".parse::<GridSpec>().is_err());
        assert!("max_depth:2.5".parse::<GridSpec>().is_err());
    }

    #[test]
    fn file_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(
            &path,
            "# demo\ntransactions = tx.csv\ncandles=/abs/c.csv\nthreshold = 0.02\nmodels = fm, bm\n",
        )
        .unwrap();
        let mut cfg = RunConfig::from_file(&path).unwrap();
        assert_eq!(
            cfg.transactions.as_deref(),
            Some(dir.path().join("tx.csv").as_path())
        );
        assert_eq!(cfg.candles.as_deref(), Some(Path::new("/abs/c.csv")));
        assert_eq!(cfg.models, vec![ModelFamily::Bm, ModelFamily::Fm]);
        cfg.apply_override("threshold=0.03").unwrap();
        assert_eq!(cfg.threshold, 0.03);
        assert!(cfg.apply_override("threshold=0").is_err());
        assert!(cfg.apply_override("colour=red").is_err());
        assert_eq!(cfg.canonical()["transactions"], "tx.csv");
    }
}
