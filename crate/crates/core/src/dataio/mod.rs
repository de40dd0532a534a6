//! Trajectory data: raw points, grid traces, corpora and their file formats.

mod ingest;
pub mod persist;
pub mod simulate;

use serde::{Deserialize, Serialize};

use crate::geogrid::{CellId, GridSpec, LatLon};
use crate::{Error, Result};

pub use ingest::{export_corpus, ingest_path, ingest_reader, load_corpus, write_corpus, IngestStats};
pub use simulate::{simulate_ground_truth, MobilityWorld, SimulationConfig, UserMobility};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// One raw GPS fix.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPoint {
    pub user_id: String,
    pub timestamp: i64,
    pub position: LatLon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TracePoint {
    pub cell: CellId,
    pub timestamp: i64,
}

/// A user's trajectory on the grid, strictly increasing in time and never empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridTrace {
    user_id: String,
    points: Vec<TracePoint>,
}

impl GridTrace {
    pub fn new(user_id: impl Into<String>, points: Vec<TracePoint>) -> Result<Self> {
        let user_id = user_id.into();
        if points.is_empty() {
            return Err(Error::Domain(format!("trace {user_id} is empty")));
        }
        if let Some(w) = points.windows(2).find(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Domain(format!(
                "trace {user_id}: timestamps not strictly increasing ({} then {})",
                w[0].timestamp, w[1].timestamp
            )));
        }
        Ok(GridTrace { user_id, points })
    }

    /// Builds a trace on a regular time grid starting at `start`.
    pub fn regular(
        user_id: impl Into<String>,
        cells: &[CellId],
        start: i64,
        period: i64,
    ) -> Result<Self> {
        if period <= 0 {
            return Err(Error::Domain(format!("sampling period {period} must be positive")));
        }
        let points = cells
            .iter()
            .enumerate()
            .map(|(i, &cell)| TracePoint {
                cell,
                timestamp: start + i as i64 * period,
            })
            .collect();
        GridTrace::new(user_id, points)
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn points(&self) -> &[TracePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cells(&self) -> impl Iterator<Item = CellId> + '_ {
        self.points.iter().map(|p| p.cell)
    }

    pub fn start_time(&self) -> i64 {
        self.points[0].timestamp
    }

    /// Keeps the first `len` points (at least one).
    pub fn truncated(&self, len: usize) -> GridTrace {
        GridTrace {
            user_id: self.user_id.clone(),
            points: self.points[..len.clamp(1, self.points.len())].to_vec(),
        }
    }
}

/// A set of traces on one grid, all sampled on a regular time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    spec: GridSpec,
    sampling_period: i64,
    traces: Vec<GridTrace>,
}

impl Corpus {
    pub fn new(spec: GridSpec, sampling_period: i64, traces: Vec<GridTrace>) -> Result<Self> {
        if sampling_period <= 0 {
            return Err(Error::Domain(format!(
                "sampling period {sampling_period} must be positive"
            )));
        }
        for t in &traces {
            for p in t.points() {
                spec.check_cell(p.cell)?;
            }
            if let Some(w) = t
                .points()
                .windows(2)
                .find(|w| w[1].timestamp - w[0].timestamp != sampling_period)
            {
                return Err(Error::Domain(format!(
                    "trace {}: step {} -> {} is not the sampling period {sampling_period}",
                    t.user_id(),
                    w[0].timestamp,
                    w[1].timestamp
                )));
            }
        }
        Ok(Corpus {
            spec,
            sampling_period,
            traces,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn sampling_period(&self) -> i64 {
        self.sampling_period
    }

    pub fn traces(&self) -> &[GridTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    pub fn total_points(&self) -> usize {
        self.traces.iter().map(GridTrace::len).sum()
    }

    pub fn min_trace_len(&self) -> usize {
        self.traces.iter().map(GridTrace::len).min().unwrap_or(0)
    }

    /// Sub-corpus made of the traces at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus {
            spec: self.spec,
            sampling_period: self.sampling_period,
            traces: indices.iter().map(|&i| self.traces[i].clone()).collect(),
        }
    }

    pub fn with_traces(&self, traces: Vec<GridTrace>) -> Result<Corpus> {
        Corpus::new(self.spec, self.sampling_period, traces)
    }
}

/// Seconds since midnight (UTC) of a timestamp.
pub fn time_of_day(timestamp: i64) -> i64 {
    timestamp.rem_euclid(SECONDS_PER_DAY)
}

pub fn hour_of_day(timestamp: i64) -> usize {
    (time_of_day(timestamp) / 3600) as usize
}

/// Index of the time-of-day bucket when the day is cut into `buckets` equal parts.
pub fn time_bucket(timestamp: i64, buckets: usize) -> usize {
    let b = buckets.max(1) as i64;
    ((time_of_day(timestamp) * b) / SECONDS_PER_DAY) as usize
}
