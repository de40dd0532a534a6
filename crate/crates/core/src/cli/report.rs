use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::dataio::persist::{parse_versioned, read_text};
use crate::metrics::{MiDecayCurve, MmdResult, TopNReport};
use crate::privacy::PrivacyResult;
use crate::Result;

pub const REPORT_FORMAT_VERSION: u32 = 1;

/// A report section: either computed or skipped with a reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Block<T> {
    Computed { value: T },
    Skipped { reason: String },
}

impl<T> Block<T> {
    pub fn skipped(reason: impl Into<String>) -> Self {
        Block::Skipped { reason: reason.into() }
    }

    pub fn value(&self) -> Option<&T> {
        match self {
            Block::Computed { value } => Some(value),
            Block::Skipped { .. } => None,
        }
    }

    pub fn is_computed(&self) -> bool {
        matches!(self, Block::Computed { .. })
    }
}

impl<T> From<T> for Block<T> {
    fn from(value: T) -> Self {
        Block::Computed { value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiPair {
    pub real: MiDecayCurve,
    pub synthetic: MiDecayCurve,
}

/// Wall-clock seconds, as recorded in the `timings.json` files of earlier runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluation_seconds: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attack_seconds: Option<f64>,
}

impl Timings {
    /// Fields set in `other` replace those here.
    pub fn merge(&mut self, other: &Timings) {
        self.fit_seconds = other.fit_seconds.or(self.fit_seconds);
        self.generation_seconds = other.generation_seconds.or(self.generation_seconds);
        self.evaluation_seconds = other.evaluation_seconds.or(self.evaluation_seconds);
        self.attack_seconds = other.attack_seconds.or(self.attack_seconds);
    }

    pub fn load(path: &Path) -> Result<Self> {
        serde_json::from_str(&read_text(path)?).map_err(|e| crate::Error::Format(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub role: String,
    pub file_name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format_version: u32,
    pub config: RunConfig,
    pub inputs: Vec<InputDigest>,
    pub topn: Block<TopNReport>,
    pub mmd: Block<MmdResult>,
    pub mi: Block<MiPair>,
    pub privacy: Block<PrivacyResult>,
    pub timings: Block<Timings>,
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(report)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport> {
    parse_versioned(&read_text(path)?, REPORT_FORMAT_VERSION)
}
