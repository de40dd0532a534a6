//! Autoregressive generator driven by a D-vine over lagged curve positions.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Generator;
use crate::copula::{VineModel, VineOptions};
use crate::dataio::{hour_of_day, time_of_day, Corpus, GridTrace, SECONDS_PER_DAY};
use crate::geogrid::{CellId, GridSpec};
use crate::rng::{self, open01};
use crate::{par, Error, Result};

pub const DEFAULT_WINDOW: usize = 4;
const START_BUCKETS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VineGeneratorOptions {
    /// Lag window `w`.
    pub window: usize,
    pub vine: VineOptions,
    /// Cap on stored start windows per hour of day.
    pub max_start_windows: usize,
}

impl Default for VineGeneratorOptions {
    fn default() -> Self {
        VineGeneratorOptions {
            window: DEFAULT_WINDOW,
            vine: VineOptions::default(),
            max_start_windows: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineGenerator {
    #[serde(skip, default = "placeholder_spec")]
    spec: GridSpec,
    sampling_period: i64,
    window: usize,
    vine: VineModel,
    /// `start_windows[h]`: training windows of `w` cells whose first point falls in hour `h`.
    start_windows: Vec<Vec<Vec<CellId>>>,
}

fn placeholder_spec() -> GridSpec {
    GridSpec::unit(1).expect("valid unit grid")
}

/// Jittered curve position of `cell`: uniform inside its interval.
fn jitter_position<R: Rng + ?Sized>(spec: &GridSpec, cell: CellId, rng: &mut R) -> f64 {
    (cell.0 as f64 + open01(rng)) * spec.curve_cell_width()
}

/// Time of day in `[0, 1)` with uniform jitter across one sampling period.
fn jitter_clock<R: Rng + ?Sized>(timestamp: i64, period: i64, rng: &mut R) -> f64 {
    let day = SECONDS_PER_DAY as f64;
    let secs = time_of_day(timestamp) as f64 + open01(rng) * period.min(SECONDS_PER_DAY) as f64;
    secs.rem_euclid(day) / day
}

impl VineGenerator {
    /// Fits on all lag rows `(x_{t-w}, ..., x_t, tau_t)` of the corpus; `seed` drives the jitter.
    pub fn fit(corpus: &Corpus, opts: &VineGeneratorOptions, seed: u64) -> Result<Self> {
        let w = opts.window;
        if w == 0 {
            return Err(Error::Domain("window must be at least 1".into()));
        }
        let spec = *corpus.spec();
        let period = corpus.sampling_period();
        let per_trace: Vec<Vec<Vec<f64>>> = par::map_range(corpus.len(), |i| {
            let trace = &corpus.traces()[i];
            let mut rng = rng::stream(seed, i as u64);
            let pts = trace.points();
            let pos: Vec<f64> = pts.iter().map(|p| jitter_position(&spec, p.cell, &mut rng)).collect();
            (w..pts.len())
                .map(|t| {
                    let mut row = pos[t - w..=t].to_vec();
                    row.push(jitter_clock(pts[t].timestamp, period, &mut rng));
                    row
                })
                .collect()
        });
        let mut columns = vec![Vec::new(); w + 2];
        for row in per_trace.iter().flatten() {
            for (col, &x) in columns.iter_mut().zip(row) {
                col.push(x);
            }
        }
        if columns[0].is_empty() {
            return Err(Error::InsufficientData(format!(
                "no trace is longer than the window ({w})"
            )));
        }
        let vine = VineModel::fit_lagged(&columns, &opts.vine)?;

        let mut start_windows = vec![Vec::new(); START_BUCKETS];
        for trace in corpus.traces() {
            let pts = trace.points();
            for s in 0..pts.len().saturating_sub(w - 1) {
                let win: Vec<CellId> = pts[s..s + w].iter().map(|p| p.cell).collect();
                start_windows[hour_of_day(pts[s].timestamp)].push(win);
            }
        }
        for bucket in &mut start_windows {
            thin(bucket, opts.max_start_windows.max(1));
        }
        Ok(VineGenerator {
            spec,
            sampling_period: period,
            window: w,
            vine,
            start_windows,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn vine(&self) -> &VineModel {
        &self.vine
    }

    pub(crate) fn with_spec(mut self, spec: GridSpec) -> Result<Self> {
        if self.window == 0 || self.vine.dim() != self.window + 2 || self.start_windows.len() != START_BUCKETS {
            return Err(Error::Format("inconsistent vine generator payload".into()));
        }
        for win in self.start_windows.iter().flatten() {
            if win.len() != self.window {
                return Err(Error::Format("start window of wrong length".into()));
            }
            for &c in win {
                spec.check_cell(c)?;
            }
        }
        if self.start_windows.iter().all(Vec::is_empty) {
            return Err(Error::Format("no start windows stored".into()));
        }
        self.spec = spec;
        Ok(self)
    }

    fn start_window<R: Rng + ?Sized>(&self, start_time: i64, rng: &mut R) -> &[CellId] {
        let bucket = &self.start_windows[hour_of_day(start_time)];
        if !bucket.is_empty() {
            return &bucket[rng.random_range(0..bucket.len())];
        }
        let total: usize = self.start_windows.iter().map(Vec::len).sum();
        let mut k = rng.random_range(0..total);
        for b in &self.start_windows {
            if k < b.len() {
                return &b[k];
            }
            k -= b.len();
        }
        unreachable!("index within total")
    }

    fn generate_trace(&self, index: usize, len: usize, start_time: i64, seed: u64) -> Result<GridTrace> {
        let w = self.window;
        let period = self.sampling_period;
        let mut rng = rng::stream(seed, index as u64);
        let start = self.start_window(start_time, &mut rng);
        let mut cells: Vec<CellId> = start.to_vec();
        let mut pos: Vec<f64> = start.iter().map(|&c| jitter_position(&self.spec, c, &mut rng)).collect();
        let mut cond = vec![0.0; w + 1];
        for t in w..len {
            let ts = start_time + t as i64 * period;
            cond[..w].copy_from_slice(&pos[t - w..t]);
            cond[w] = jitter_clock(ts, period, &mut rng);
            let x = self.vine.sample_conditional(&cond, &mut rng)?;
            cells.push(self.spec.cell_at_position(x));
            pos.push(x);
        }
        GridTrace::regular(format!("syn_{index}"), &cells, start_time, period)
    }
}

/// Keeps at most `cap` evenly strided entries.
fn thin<T>(items: &mut Vec<T>, cap: usize) {
    let n = items.len();
    if n <= cap {
        return;
    }
    let mut k = 0;
    let mut out = Vec::with_capacity(cap);
    for (i, item) in items.drain(..).enumerate() {
        if k < cap && i == k * n / cap {
            out.push(item);
            k += 1;
        }
    }
    *items = out;
}

impl Generator for VineGenerator {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn sampling_period(&self) -> i64 {
        self.sampling_period
    }

    fn generate(&self, n_traces: usize, trace_len: usize, start_time: i64, seed: u64) -> Result<Corpus> {
        if trace_len < self.window + 1 {
            return Err(Error::Domain(format!(
                "trace_len {trace_len} is shorter than window + 1 = {}",
                self.window + 1
            )));
        }
        let traces = par::try_map_range(n_traces, |i| self.generate_trace(i, trace_len, start_time, seed))?;
        Corpus::new(self.spec, self.sampling_period, traces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{simulate_ground_truth, SimulationConfig};

    fn corpus() -> Corpus {
        let cfg = SimulationConfig {
            n_users: 10,
            trace_len: 120,
            n_hotspots: 40,
            seed: 2,
            ..Default::default()
        };
        simulate_ground_truth(&GridSpec::switzerland(), &cfg).unwrap()
    }

    #[test]
    fn thin_is_even() {
        let mut v: Vec<usize> = (0..10).collect();
        thin(&mut v, 4);
        assert_eq!(v, vec![0, 2, 5, 7]);
    }

    #[test]
    fn generation_contract() {
        let c = corpus();
        let opts = VineGeneratorOptions {
            window: 2,
            ..Default::default()
        };
        let g = VineGenerator::fit(&c, &opts, 1).unwrap();
        assert_eq!(g.vine().dim(), 4);
        let a = g.generate(4, 30, c.traces()[0].start_time(), 9).unwrap();
        assert_eq!(a, g.generate(4, 30, c.traces()[0].start_time(), 9).unwrap());
        assert_ne!(a, g.generate(4, 30, c.traces()[0].start_time(), 10).unwrap());
        for t in a.traces() {
            assert_eq!(t.len(), 30);
        }
        assert!(matches!(g.generate(1, 2, 0, 0), Err(Error::Domain(_))));
        // An hour with no training windows falls back to the pooled set.
        let mut sparse = g.clone();
        sparse.start_windows[5].clear();
        sparse.generate(2, 10, 5 * 3600, 0).unwrap();
    }
}
