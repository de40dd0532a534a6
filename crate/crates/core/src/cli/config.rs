use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::copula::VineOptions;
use crate::dataio::persist::read_text;
use crate::dataio::simulate::{DEFAULT_HOTSPOTS, DEFAULT_START};
use crate::dataio::SimulationConfig;
use crate::generators::{MarkovOptions, VineGeneratorOptions, DEFAULT_ALPHA, DEFAULT_TIME_BUCKETS, DEFAULT_WINDOW};
use crate::geogrid::{GridSpec, DEFAULT_LEVEL};
use crate::metrics::{DEFAULT_PERMUTATIONS, DEFAULT_TOP_N};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelType {
    Vine,
    Markov,
    External,
}

impl std::str::FromStr for ModelType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vine" => Ok(ModelType::Vine),
            "markov" => Ok(ModelType::Markov),
            "external" => Ok(ModelType::External),
            other => Err(Error::Config(format!("unknown model_type {other:?}"))),
        }
    }
}

/// Every tunable of a run, read from one flat TOML document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,

    /// Grid bounds; when all are unset the Swiss bounding box is used.
    pub lat_min: Option<f64>,
    pub lat_max: Option<f64>,
    pub lon_min: Option<f64>,
    pub lon_max: Option<f64>,
    pub level: Option<u8>,
    pub sampling_period: i64,

    pub model_type: ModelType,
    pub window: usize,
    pub truncation: usize,
    pub bandwidth_scale: f64,
    pub max_start_windows: usize,
    pub order: usize,
    pub alpha: f64,
    pub time_buckets: usize,
    pub external_path: Option<PathBuf>,

    pub n_traces: usize,
    pub trace_len: usize,
    pub start_time: i64,

    pub top_n: usize,
    pub tau_max: usize,
    pub n_permutations: usize,
    pub p_hide: f64,

    pub n_users: usize,
    pub n_nonmembers: usize,
    pub n_hotspots: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let vine = VineGeneratorOptions::default();
        RunConfig {
            seed: None,
            lat_min: None,
            lat_max: None,
            lon_min: None,
            lon_max: None,
            level: None,
            sampling_period: 3600,
            model_type: ModelType::Vine,
            window: DEFAULT_WINDOW,
            truncation: vine.vine.truncation,
            bandwidth_scale: vine.vine.bandwidth_scale,
            max_start_windows: vine.max_start_windows,
            order: 1,
            alpha: DEFAULT_ALPHA,
            time_buckets: DEFAULT_TIME_BUCKETS,
            external_path: None,
            n_traces: 100,
            trace_len: 500,
            start_time: DEFAULT_START,
            top_n: DEFAULT_TOP_N,
            tau_max: 48,
            n_permutations: DEFAULT_PERMUTATIONS,
            p_hide: 0.3,
            n_users: 100,
            n_nonmembers: 0,
            n_hotspots: DEFAULT_HOTSPOTS,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read_text(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (--seed or `seed` in the config file)".into()))
    }

    fn bounds_given(&self) -> bool {
        self.lat_min.is_some() || self.lat_max.is_some() || self.lon_min.is_some() || self.lon_max.is_some()
    }

    /// The configured grid, or `None` when the config names no grid at all.
    pub fn explicit_grid(&self) -> Result<Option<GridSpec>> {
        if !self.bounds_given() && self.level.is_none() {
            return Ok(None);
        }
        self.grid().map(Some)
    }

    pub fn grid(&self) -> Result<GridSpec> {
        let level = self.level.unwrap_or(DEFAULT_LEVEL);
        if !self.bounds_given() {
            let ch = GridSpec::switzerland();
            return GridSpec::new(ch.lat_min(), ch.lat_max(), ch.lon_min(), ch.lon_max(), level);
        }
        match (self.lat_min, self.lat_max, self.lon_min, self.lon_max) {
            (Some(a), Some(b), Some(c), Some(d)) => GridSpec::new(a, b, c, d, level),
            _ => Err(Error::Config("lat_min, lat_max, lon_min and lon_max must be given together".into())),
        }
    }

    /// Checks a grid read from a file against the configured one, if any.
    pub fn check_grid(&self, found: &GridSpec) -> Result<()> {
        match self.explicit_grid()? {
            Some(spec) => spec.ensure_same(found),
            None => Ok(()),
        }
    }

    pub fn vine_options(&self) -> VineGeneratorOptions {
        VineGeneratorOptions {
            window: self.window,
            vine: VineOptions {
                truncation: self.truncation,
                bandwidth_scale: self.bandwidth_scale,
            },
            max_start_windows: self.max_start_windows,
        }
    }

    pub fn markov_options(&self) -> MarkovOptions {
        MarkovOptions {
            order: self.order,
            time_buckets: self.time_buckets,
            alpha: self.alpha,
        }
    }

    pub fn simulation(&self, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n_users: self.n_users + self.n_nonmembers,
            trace_len: self.trace_len,
            n_hotspots: self.n_hotspots,
            sampling_period: self.sampling_period,
            start_time: self.start_time,
            seed,
        }
    }

    /// Range checks that do not depend on input files.
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Config(what));
        if self.sampling_period <= 0 {
            return bad(format!("sampling_period must be positive, got {}", self.sampling_period));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.truncation == 0 {
            return bad("truncation must be at least 1".into());
        }
        if !(self.bandwidth_scale > 0.0 && self.bandwidth_scale.is_finite()) {
            return bad(format!("bandwidth_scale must be positive, got {}", self.bandwidth_scale));
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if self.time_buckets == 0 || self.max_start_windows == 0 {
            return bad("time_buckets and max_start_windows must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.p_hide) {
            return bad(format!("p_hide must be in [0, 1], got {}", self.p_hide));
        }
        if self.top_n == 0 || self.tau_max == 0 {
            return bad("top_n and tau_max must be at least 1".into());
        }
        if self.n_traces == 0 || self.trace_len == 0 {
            return bad("n_traces and trace_len must be at least 1".into());
        }
        self.grid()?;
        Ok(())
    }
}
