use std::collections::BTreeMap;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use thiserror::Error;

use crate::clustering::SweepConfig;
use crate::ingest::{DateWindow, IngestOptions, LinkRepairPolicy};
use crate::quarantine::{Strictness, SweepOptions, TrustMode};

/// Environment variable that overrides the output directory.
pub const OUT_DIR_ENV: &str = "REVQ_OUT_DIR";

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value for `{key}`: {message}")]
    BadValue { key: String, message: String },
    #[error("{path}:{line}: {message}")]
    Syntax { path: String, line: usize, message: String },
    #[error("cannot read config file {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub users: Option<PathBuf>,
    pub reviews: Option<PathBuf>,
    pub businesses: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub window: DateWindow,
    pub link_policy: LinkRepairPolicy,
    pub max_error_rate: f64,
    pub k_min: usize,
    pub k_max: usize,
    pub restarts: usize,
    pub seed: u64,
    pub max_iters: usize,
    /// Year tenure is measured against; defaults to the latest review year.
    pub reference_year: Option<i32>,
    pub min_reviews: usize,
    pub min_active_days: usize,
    pub s_threshold: f64,
    pub tolerance: f64,
    pub theta_min: u32,
    pub theta_max: u32,
    pub strictness: Strictness,
    pub trust_mode: TrustMode,
    pub orientations: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let sweep = SweepConfig::default();
        Self {
            users: None,
            reviews: None,
            businesses: None,
            out_dir: PathBuf::from("revq-out"),
            window: DateWindow::default(),
            link_policy: LinkRepairPolicy::Drop,
            max_error_rate: IngestOptions::default().max_error_rate,
            k_min: sweep.k_min,
            k_max: sweep.k_max,
            restarts: sweep.restarts,
            seed: sweep.seed,
            max_iters: sweep.max_iters,
            reference_year: None,
            min_reviews: crate::clustering::DEFAULT_MIN_REVIEWS,
            min_active_days: crate::rsd::DEFAULT_MIN_ACTIVE_DAYS,
            s_threshold: crate::spamscore::DEFAULT_S_THRESHOLD,
            tolerance: crate::quarantine::DEFAULT_TOLERANCE,
            theta_min: *crate::quarantine::DEFAULT_THETA_RANGE.start(),
            theta_max: *crate::quarantine::DEFAULT_THETA_RANGE.end(),
            strictness: Strictness::AtLeast,
            trust_mode: TrustMode::SubsetMean,
            orientations: None,
        }
    }
}

pub const KEYS: [&str; 23] = [
    "users",
    "reviews",
    "businesses",
    "out_dir",
    "window_start",
    "window_end",
    "link_policy",
    "max_error_rate",
    "k_min",
    "k_max",
    "restarts",
    "seed",
    "max_iters",
    "reference_year",
    "min_reviews",
    "min_active_days",
    "s_threshold",
    "tolerance",
    "theta_min",
    "theta_max",
    "strictness",
    "trust_mode",
    "orientations",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

fn date(key: &str, value: &str) -> Result<NaiveDate, ConfigError> {
    NaiveDate::parse_from_str(value.trim(), "%Y-%m-%d").map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        message: format!("`{value}`: {e}"),
    })
}

fn opt_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl PipelineConfig {
    /// Sets one key. Keys may use `-` or `_` as separator.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('-', "_");
        let k = key.as_str();
        match k {
            "users" => self.users = opt_path(value),
            "reviews" => self.reviews = opt_path(value),
            "businesses" => self.businesses = opt_path(value),
            "out_dir" => self.out_dir = PathBuf::from(value.trim()),
            "window_start" => self.window.start = date(k, value)?,
            "window_end" => self.window.end = date(k, value)?,
            "link_policy" => self.link_policy = parse(k, value)?,
            "max_error_rate" => self.max_error_rate = parse(k, value)?,
            "k_min" => self.k_min = parse(k, value)?,
            "k_max" => self.k_max = parse(k, value)?,
            "restarts" => self.restarts = parse(k, value)?,
            "seed" => self.seed = parse(k, value)?,
            "max_iters" => self.max_iters = parse(k, value)?,
            "reference_year" => {
                self.reference_year = match value.trim() {
                    "" | "auto" => None,
                    v => Some(parse(k, v)?),
                }
            }
            "min_reviews" => self.min_reviews = parse(k, value)?,
            "min_active_days" => self.min_active_days = parse(k, value)?,
            "s_threshold" => self.s_threshold = parse(k, value)?,
            "tolerance" => self.tolerance = parse(k, value)?,
            "theta_min" => self.theta_min = parse(k, value)?,
            "theta_max" => self.theta_max = parse(k, value)?,
            "strictness" => self.strictness = parse(k, value)?,
            "trust_mode" => self.trust_mode = parse(k, value)?,
            "orientations" => self.orientations = opt_path(value),
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Applies `key=value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key=value, got `{line}`")))?;
            self.set(key, value).map_err(|e| syntax(e.to_string()))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        self.apply_text(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.window.start > self.window.end {
            return bad(format!("window start {} is after end {}", self.window.start, self.window.end));
        }
        if !(0.0..=1.0).contains(&self.max_error_rate) {
            return bad(format!("max_error_rate {} outside [0, 1]", self.max_error_rate));
        }
        if self.k_min < 1 || self.k_min > self.k_max {
            return bad(format!("k range {}..={} is empty or starts below 1", self.k_min, self.k_max));
        }
        if self.restarts < 1 || self.max_iters < 1 {
            return bad("restarts and max_iters must be at least 1".into());
        }
        if self.min_reviews < 2 {
            return bad("min_reviews must be at least 2 so every scored business has a review population".into());
        }
        if self.min_active_days < 1 {
            return bad("min_active_days must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.s_threshold) {
            return bad(format!("s_threshold {} outside [0, 1]", self.s_threshold));
        }
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return bad(format!("tolerance {} must be a nonnegative number", self.tolerance));
        }
        if self.theta_min < 1 || self.theta_min > self.theta_max {
            return bad(format!("theta range {}..={} is empty or starts below 1", self.theta_min, self.theta_max));
        }
        Ok(())
    }

    pub fn thetas(&self) -> RangeInclusive<u32> {
        self.theta_min..=self.theta_max
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            k_min: self.k_min,
            k_max: self.k_max,
            restarts: self.restarts,
            seed: self.seed,
            max_iters: self.max_iters,
        }
    }

    pub fn ingest_options(&self) -> IngestOptions {
        IngestOptions {
            policy: self.link_policy,
            window: self.window,
            max_error_rate: self.max_error_rate,
        }
    }

    pub fn sweep_options(&self) -> SweepOptions {
        SweepOptions {
            tolerance: self.tolerance,
            strictness: self.strictness,
        }
    }

    /// Every setting as `key -> value`, in the config-file spelling.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let f = crate::io_util::fmt_f64;
        let pairs = [
            ("users", path(&self.users)),
            ("reviews", path(&self.reviews)),
            ("businesses", path(&self.businesses)),
            ("out_dir", self.out_dir.display().to_string()),
            ("window_start", self.window.start.to_string()),
            ("window_end", self.window.end.to_string()),
            ("link_policy", self.link_policy.to_string()),
            ("max_error_rate", f(self.max_error_rate)),
            ("k_min", self.k_min.to_string()),
            ("k_max", self.k_max.to_string()),
            ("restarts", self.restarts.to_string()),
            ("seed", self.seed.to_string()),
            ("max_iters", self.max_iters.to_string()),
            ("reference_year", self.reference_year.map_or("auto".into(), |y| y.to_string())),
            ("min_reviews", self.min_reviews.to_string()),
            ("min_active_days", self.min_active_days.to_string()),
            ("s_threshold", f(self.s_threshold)),
            ("tolerance", f(self.tolerance)),
            ("theta_min", self.theta_min.to_string()),
            ("theta_max", self.theta_max.to_string()),
            ("strictness", self.strictness.to_string()),
            ("trust_mode", self.trust_mode.to_string()),
            ("orientations", path(&self.orientations)),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }
}
