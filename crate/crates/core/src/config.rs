//! Engine-wide settings, loadable from a JSON file.
//!
//! ```json
//! {
//!   "tau_p": 0.65,
//!   "persons": "cluster",
//!   "locations": "max",
//!   "events": "q90",
//!   "recall_levels": [0.25, 0.5, 1.0]
//! }
//! ```
//!
//! Omitted keys take their defaults. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::eval::{ApMode, EvalConfig, EvalSubset, DEFAULT_RECALL_LEVELS};
use crate::simeng::{Aggregator, ClusteringParams, MeasureKind, PersonMode, ScoringConfig, DEFAULT_TAU_P};
use crate::tamper::RNG_ALGORITHM;

pub const QUANTILE_OPTIONS: [f64; 3] = [0.75, 0.9, 0.95];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Display range for a measure: values at or below `lower` render as the
/// lowest color, `upper` as the highest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColorInterval {
    pub lower: f64,
    pub upper: f64,
}

impl ColorInterval {
    pub const fn new(lower: f64, upper: f64) -> Self {
        Self { lower, upper }
    }

    /// Position of `value` in the interval, clamped to [0, 1].
    pub fn position(&self, value: f64) -> f64 {
        ((value - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }
}

fn default_intervals() -> BTreeMap<MeasureKind, ColorInterval> {
    BTreeMap::from([
        (MeasureKind::Person, ColorInterval::new(0.45, 1.0)),
        (MeasureKind::Location, ColorInterval::new(0.6, 1.0)),
        (MeasureKind::Event, ColorInterval::new(0.7, 1.0)),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    pub tau_p: f64,
    pub persons: PersonMode,
    pub locations: Aggregator,
    pub events: Aggregator,
    /// Quantile levels offered to interactive clients.
    pub quantile_options: Vec<f64>,
    pub rng: String,
    pub recall_levels: Vec<f64>,
    pub ap_mode: ApMode,
    pub color_intervals: BTreeMap<MeasureKind, ColorInterval>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            tau_p: DEFAULT_TAU_P,
            persons: PersonMode::Cluster,
            locations: Aggregator::Max,
            events: Aggregator::Max,
            quantile_options: QUANTILE_OPTIONS.to_vec(),
            rng: RNG_ALGORITHM.to_string(),
            recall_levels: DEFAULT_RECALL_LEVELS.to_vec(),
            ap_mode: ApMode::Standard,
            color_intervals: default_intervals(),
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        self.scoring()?;
        if let Some(q) = self
            .quantile_options
            .iter()
            .find(|q| !(**q > 0.0 && **q <= 1.0))
        {
            return invalid(format!("quantile option {q} outside (0, 1]"));
        }
        if self.rng != RNG_ALGORITHM {
            return invalid(format!(
                "unsupported rng {:?}, only {RNG_ALGORITHM:?} is available",
                self.rng
            ));
        }
        self.eval_config(EvalSubset::All)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for (kind, c) in &self.color_intervals {
            if !(0.0 <= c.lower && c.lower < c.upper && c.upper <= 1.0) {
                return invalid(format!(
                    "color interval for {kind} must satisfy 0 <= lower < upper <= 1"
                ));
            }
        }
        Ok(())
    }

    fn scoring_unchecked(&self) -> ScoringConfig {
        ScoringConfig {
            clustering: ClusteringParams::new(self.tau_p).unwrap_or_default(),
            persons: self.persons,
            locations: self.locations,
            events: self.events,
        }
    }

    pub fn scoring(&self) -> Result<ScoringConfig, ConfigError> {
        let clustering =
            ClusteringParams::new(self.tau_p).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let s = ScoringConfig {
            clustering,
            ..self.scoring_unchecked()
        };
        s.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(s)
    }

    /// Copy with the scoring fields taken from `scoring`.
    pub fn with_scoring(&self, scoring: &ScoringConfig) -> Self {
        Self {
            tau_p: scoring.clustering.tau_p(),
            persons: scoring.persons,
            locations: scoring.locations,
            events: scoring.events,
            ..self.clone()
        }
    }

    pub fn eval_config(&self, subset: EvalSubset) -> EvalConfig {
        EvalConfig {
            scoring: self.scoring_unchecked(),
            subset,
            recall_levels: self.recall_levels.clone(),
            ap_mode: self.ap_mode,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let c: Self =
            serde_json::from_str(text).map_err(|e| ConfigError::Malformed(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }
}
