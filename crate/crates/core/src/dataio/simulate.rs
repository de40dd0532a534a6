//! Seeded ground-truth mobility simulator.
//!
//! A world is a set of hotspot cells clustered around a few city centres with
//! Zipf popularity. Each user owns a small set of places (home, work and a few
//! favourites near home) and moves between them with a time-inhomogeneous
//! Markov chain whose transition matrix depends on the hour of day: pulled
//! home 20:00-08:00, pulled to work 09:00-17:00, and free-roaming in between.
//! Transition probabilities are per step and tuned for hourly sampling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{hour_of_day, Corpus, GridTrace, SECONDS_PER_DAY};
use crate::geogrid::{CellId, GridSpec, LatLon};
use crate::rng::{self, StreamRng};
use crate::{normal, par, Error, Result};

/// Number of distinct visited locations in the reference mobility dataset.
pub const DEFAULT_HOTSPOTS: usize = 286;
/// 2020-01-01T00:00:00Z.
pub const DEFAULT_START: i64 = 1_577_836_800;

const N_CITIES: usize = 4;
const N_FAVOURITES: usize = 4;

const ANCHOR_STAY: f64 = 0.92;
const RETURN_TO_ANCHOR: f64 = 0.70;
const OFF_ANCHOR_STAY: f64 = 0.20;
const FREE_STAY: f64 = 0.40;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub n_users: usize,
    pub trace_len: usize,
    pub n_hotspots: usize,
    pub sampling_period: i64,
    pub start_time: i64,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            n_users: 100,
            trace_len: 500,
            n_hotspots: DEFAULT_HOTSPOTS,
            sampling_period: 3600,
            start_time: DEFAULT_START,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Regime {
    Home,
    Work,
    Free,
}

fn regime(hour: usize) -> Regime {
    match hour {
        h if h >= 20 || h < 8 => Regime::Home,
        9..=16 => Regime::Work,
        _ => Regime::Free,
    }
}

/// Hotspot layout shared by all users of one simulation.
#[derive(Debug, Clone)]
pub struct MobilityWorld {
    spec: GridSpec,
    hotspots: Vec<CellId>,
    centers: Vec<LatLon>,
    popularity: Vec<f64>,
    seed: u64,
}

impl MobilityWorld {
    pub fn new(spec: GridSpec, n_hotspots: usize, seed: u64) -> Result<Self> {
        if n_hotspots < 2 {
            return Err(Error::Domain(format!("need at least 2 hotspots, got {n_hotspots}")));
        }
        if n_hotspots as u64 > spec.n_cells() / 4 {
            return Err(Error::Domain(format!(
                "{n_hotspots} hotspots do not fit sparsely in {} cells",
                spec.n_cells()
            )));
        }
        let mut rng = rng::stream(seed, 0);
        let lat_span = spec.lat_max() - spec.lat_min();
        let lon_span = spec.lon_max() - spec.lon_min();
        let cities: Vec<LatLon> = (0..N_CITIES)
            .map(|_| {
                LatLon::new(
                    spec.lat_min() + lat_span * rng.random_range(0.2..0.8),
                    spec.lon_min() + lon_span * rng.random_range(0.2..0.8),
                )
            })
            .collect();
        let city_weight: Vec<f64> = (0..N_CITIES).map(|i| 1.0 / (i + 1) as f64).collect();

        let mut hotspots = Vec::with_capacity(n_hotspots);
        let mut seen = std::collections::HashSet::new();
        let mut attempts = 0usize;
        while hotspots.len() < n_hotspots {
            attempts += 1;
            let p = if attempts < 200 * n_hotspots {
                let city = cities[rng::weighted_index(&city_weight, &mut rng)];
                LatLon::new(
                    city.lat + 0.06 * lat_span * normal::quantile(rng::open01(&mut rng)),
                    city.lon + 0.06 * lon_span * normal::quantile(rng::open01(&mut rng)),
                )
            } else {
                LatLon::new(
                    spec.lat_min() + lat_span * rng.random::<f64>(),
                    spec.lon_min() + lon_span * rng.random::<f64>(),
                )
            };
            if !spec.contains(p) {
                continue;
            }
            let cell = spec.encode(p)?;
            if seen.insert(cell) {
                hotspots.push(cell);
            }
        }
        let centers = hotspots
            .iter()
            .map(|&c| spec.decode(c))
            .collect::<Result<Vec<_>>>()?;
        // Zipf popularity over a random ranking of the hotspots.
        let ranking = rng::permutation(n_hotspots, &mut rng);
        let mut popularity = vec![0.0; n_hotspots];
        for (rank, &h) in ranking.iter().enumerate() {
            popularity[h] = 1.0 / (rank + 1) as f64;
        }
        Ok(MobilityWorld {
            spec,
            hotspots,
            centers,
            popularity,
            seed,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn hotspots(&self) -> &[CellId] {
        &self.hotspots
    }

    pub fn popularity(&self) -> &[f64] {
        &self.popularity
    }

    /// The mobility model of user `index`; deterministic in `(seed, index)`.
    pub fn user(&self, index: usize) -> UserMobility {
        let mut rng = self.user_rng(index);
        let n = self.hotspots.len();
        let home = rng::weighted_index(&self.popularity, &mut rng);
        let mut w = self.popularity.clone();
        w[home] = 0.0;
        let work = rng::weighted_index(&w, &mut rng);
        w[work] = 0.0;

        let scale = 0.1 * ((self.spec.lat_max() - self.spec.lat_min()).powi(2)
            + (self.spec.lon_max() - self.spec.lon_min()).powi(2))
        .sqrt();
        let h = self.centers[home];
        for (j, wj) in w.iter_mut().enumerate() {
            let c = self.centers[j];
            let d = ((c.lat - h.lat).powi(2) + (c.lon - h.lon).powi(2)).sqrt();
            *wj *= (-d / scale).exp();
        }
        let mut places = vec![self.hotspots[home], self.hotspots[work]];
        for _ in 0..N_FAVOURITES.min(n - 2) {
            if w.iter().all(|&x| x <= 0.0) {
                break;
            }
            let f = rng::weighted_index(&w, &mut rng);
            w[f] = 0.0;
            places.push(self.hotspots[f]);
        }
        UserMobility {
            user_id: format!("u{index}"),
            places,
        }
    }

    fn user_rng(&self, index: usize) -> StreamRng {
        rng::stream(self.seed, 1 + 2 * index as u64)
    }

    /// Simulates `n_users` traces of `trace_len` regularly sampled points.
    pub fn simulate(&self, cfg: &SimulationConfig) -> Result<Corpus> {
        if cfg.trace_len < 2 {
            return Err(Error::Domain("trace_len must be at least 2".into()));
        }
        let traces = par::try_map_range(cfg.n_users, |i| {
            let user = self.user(i);
            let mut rng = rng::stream(self.seed, 2 + 2 * i as u64);
            let states = user.simulate_states(cfg.trace_len, cfg.start_time, cfg.sampling_period, &mut rng);
            let cells: Vec<CellId> = states.iter().map(|&s| user.places[s]).collect();
            GridTrace::regular(user.user_id.clone(), &cells, cfg.start_time, cfg.sampling_period)
        })?;
        Corpus::new(self.spec, cfg.sampling_period, traces)
    }
}

/// One user's places and hour-dependent transition structure.
#[derive(Debug, Clone, PartialEq)]
pub struct UserMobility {
    pub user_id: String,
    /// `places[0]` is home, `places[1]` work, the rest favourites.
    pub places: Vec<CellId>,
}

impl UserMobility {
    pub fn n_states(&self) -> usize {
        self.places.len()
    }

    /// Row-stochastic matrix for a step that lands in `hour` (0..24).
    pub fn transition_matrix(&self, hour: usize) -> Vec<Vec<f64>> {
        let m = self.places.len();
        let mut p = vec![vec![0.0; m]; m];
        match regime(hour % 24) {
            r @ (Regime::Home | Regime::Work) => {
                let anchor = if r == Regime::Home { 0 } else { 1 };
                for (i, row) in p.iter_mut().enumerate() {
                    if i == anchor {
                        for (j, x) in row.iter_mut().enumerate() {
                            *x = if j == anchor {
                                ANCHOR_STAY
                            } else {
                                (1.0 - ANCHOR_STAY) / (m - 1) as f64
                            };
                        }
                    } else {
                        let others = m.saturating_sub(2);
                        for (j, x) in row.iter_mut().enumerate() {
                            *x = if j == anchor {
                                RETURN_TO_ANCHOR
                            } else if j == i {
                                OFF_ANCHOR_STAY
                            } else {
                                (1.0 - RETURN_TO_ANCHOR - OFF_ANCHOR_STAY) / others as f64
                            };
                        }
                        if others == 0 {
                            row[anchor] = 1.0 - OFF_ANCHOR_STAY;
                        }
                    }
                }
            }
            Regime::Free => {
                let n_fav = m.saturating_sub(2).max(1) as f64;
                let base: Vec<f64> = (0..m)
                    .map(|j| match j {
                        0 => 0.3,
                        1 => 0.2,
                        _ => 0.5 / n_fav,
                    })
                    .collect();
                for (i, row) in p.iter_mut().enumerate() {
                    let total: f64 = base.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, b)| b).sum();
                    for (j, x) in row.iter_mut().enumerate() {
                        *x = if j == i {
                            FREE_STAY
                        } else {
                            (1.0 - FREE_STAY) * base[j] / total
                        };
                    }
                }
            }
        }
        p
    }

    fn initial_state(hour: usize) -> usize {
        match regime(hour) {
            Regime::Work => 1,
            _ => 0,
        }
    }

    /// Place indices visited at `start, start + period, ...`.
    pub fn simulate_states<R: Rng + ?Sized>(
        &self,
        len: usize,
        start: i64,
        period: i64,
        rng: &mut R,
    ) -> Vec<usize> {
        let mut states = Vec::with_capacity(len);
        let mut s = Self::initial_state(hour_of_day(start));
        let mut cache: Vec<Option<Vec<Vec<f64>>>> = vec![None; 24];
        for k in 0..len {
            if k > 0 {
                let hour = hour_of_day(start + k as i64 * period);
                let matrix = cache[hour].get_or_insert_with(|| self.transition_matrix(hour));
                s = rng::weighted_index(&matrix[s], rng);
            }
            states.push(s);
        }
        states
    }
}

/// Simulates a ground-truth corpus; identical configs give identical corpora.
pub fn simulate_ground_truth(spec: &GridSpec, cfg: &SimulationConfig) -> Result<Corpus> {
    if cfg.sampling_period <= 0 || cfg.sampling_period > SECONDS_PER_DAY {
        return Err(Error::Domain(format!(
            "sampling period {} must be in (0, 86400]",
            cfg.sampling_period
        )));
    }
    MobilityWorld::new(*spec, cfg.n_hotspots, cfg.seed)?.simulate(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SimulationConfig {
        SimulationConfig {
            n_users: 12,
            trace_len: 72,
            n_hotspots: 40,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let spec = GridSpec::switzerland();
        let a = simulate_ground_truth(&spec, &small()).unwrap();
        let b = simulate_ground_truth(&spec, &small()).unwrap();
        assert_eq!(a, b);
        let c = simulate_ground_truth(&spec, &SimulationConfig { seed: 6, ..small() }).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.len(), 12);
        assert!(a.traces().iter().all(|t| t.len() == 72));
    }

    #[test]
    fn hotspots_are_distinct_and_users_stay_on_them() {
        let spec = GridSpec::switzerland();
        let world = MobilityWorld::new(spec, DEFAULT_HOTSPOTS, 1).unwrap();
        let mut h = world.hotspots().to_vec();
        h.sort();
        h.dedup();
        assert_eq!(h.len(), DEFAULT_HOTSPOTS);
        let corpus = world.simulate(&small()).unwrap();
        for t in corpus.traces() {
            assert!(t.cells().all(|c| h.binary_search(&c).is_ok()));
        }
    }

    #[test]
    fn matrices_are_stochastic() {
        let user = MobilityWorld::new(GridSpec::switzerland(), 30, 2).unwrap().user(3);
        assert_eq!(user.n_states(), 2 + N_FAVOURITES);
        for hour in 0..24 {
            for row in user.transition_matrix(hour) {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row.iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn rejects_too_few_hotspots() {
        assert!(MobilityWorld::new(GridSpec::switzerland(), 1, 0).is_err());
        assert!(MobilityWorld::new(GridSpec::unit(2).unwrap(), 10, 0).is_err());
    }
}
