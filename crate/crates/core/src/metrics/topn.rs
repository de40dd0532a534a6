//! Visit, visit-time and dwell-time distributions over the most visited cells.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{hour_of_day, Corpus, SECONDS_PER_DAY};
use crate::geogrid::CellId;
use crate::{Error, Result};

pub const DEFAULT_TOP_N: usize = 50;
pub const HOUR_BINS: usize = 24;
pub const DWELL_BINS: usize = 12;

/// A maximal run of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Visit {
    pub cell: CellId,
    pub start: i64,
    /// Number of consecutive points in the run.
    pub length: usize,
}

pub fn visits(corpus: &Corpus) -> Vec<Visit> {
    let mut out = Vec::new();
    for trace in corpus.traces() {
        let pts = trace.points();
        let mut i = 0;
        while i < pts.len() {
            let mut j = i + 1;
            while j < pts.len() && pts[j].cell == pts[i].cell {
                j += 1;
            }
            out.push(Visit {
                cell: pts[i].cell,
                start: pts[i].timestamp,
                length: j - i,
            });
            i = j;
        }
    }
    out
}

/// Upper edges of the log-spaced dwell bins, from one period to a day.
pub fn dwell_edges(period: i64) -> Vec<f64> {
    let lo = period as f64;
    let hi = (SECONDS_PER_DAY as f64).max(lo);
    (1..=DWELL_BINS)
        .map(|k| lo * (hi / lo).powf(k as f64 / DWELL_BINS as f64))
        .collect()
}

pub fn dwell_bin(dwell_seconds: f64, edges: &[f64]) -> usize {
    edges
        .iter()
        .position(|&e| dwell_seconds < e)
        .unwrap_or(edges.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopCell {
    pub rank: usize,
    pub cell: CellId,
    pub real_p: f64,
    pub syn_p: f64,
    pub real_visit_hours: Vec<u64>,
    pub syn_visit_hours: Vec<u64>,
    pub real_dwell: Vec<u64>,
    pub syn_dwell: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopNReport {
    pub n: usize,
    pub cells: Vec<TopCell>,
    /// Upper edges (seconds) of the dwell bins.
    pub dwell_edges: Vec<f64>,
    /// Visit-probability mass outside the top-N cells.
    pub real_rest_p: f64,
    pub syn_rest_p: f64,
    pub visit_tv: f64,
    pub visit_time_tv: f64,
    pub dwell_tv: f64,
}

#[derive(Default, Clone)]
struct CellStats {
    visits: u64,
    hours: Vec<u64>,
    dwell: Vec<u64>,
}

fn cell_stats(corpus: &Corpus, edges: &[f64]) -> (BTreeMap<CellId, CellStats>, u64) {
    let mut map: BTreeMap<CellId, CellStats> = BTreeMap::new();
    let vs = visits(corpus);
    for v in &vs {
        let s = map.entry(v.cell).or_insert_with(|| CellStats {
            visits: 0,
            hours: vec![0; HOUR_BINS],
            dwell: vec![0; DWELL_BINS],
        });
        s.visits += 1;
        s.hours[hour_of_day(v.start)] += 1;
        let dwell = v.length as f64 * corpus.sampling_period() as f64;
        s.dwell[dwell_bin(dwell, edges)] += 1;
    }
    (map, vs.len() as u64)
}

fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

/// Normalizes per-cell histograms into one joint distribution over (cell, bin).
fn joint(hists: &[&[u64]]) -> Vec<f64> {
    let total: u64 = hists.iter().flat_map(|h| h.iter()).sum();
    let flat = hists.iter().flat_map(|h| h.iter());
    if total == 0 {
        return flat.map(|_| 0.0).collect();
    }
    flat.map(|&c| c as f64 / total as f64).collect()
}

pub fn topn_report(real: &Corpus, syn: &Corpus, n: usize) -> Result<TopNReport> {
    real.spec().ensure_same(syn.spec())?;
    if n == 0 {
        return Err(Error::Domain("N must be at least 1".into()));
    }
    let edges = dwell_edges(real.sampling_period());
    let (real_stats, real_total) = cell_stats(real, &edges);
    let (syn_stats, syn_total) = cell_stats(syn, &edges);
    if real_total == 0 {
        return Err(Error::InsufficientData("real corpus has no visits".into()));
    }
    let mut ranked: Vec<(&CellId, &CellStats)> = real_stats.iter().collect();
    ranked.sort_by(|a, b| b.1.visits.cmp(&a.1.visits).then(a.0.cmp(b.0)));
    let n_eff = if n > ranked.len() {
        log::warn!("top-N of {n} exceeds the {} distinct real cells; clamped", ranked.len());
        ranked.len()
    } else {
        n
    };
    let empty = CellStats {
        visits: 0,
        hours: vec![0; HOUR_BINS],
        dwell: vec![0; DWELL_BINS],
    };
    let frac = |v: u64, total: u64| if total == 0 { 0.0 } else { v as f64 / total as f64 };
    let cells: Vec<TopCell> = ranked[..n_eff]
        .iter()
        .enumerate()
        .map(|(rank, (&cell, r))| {
            let s = syn_stats.get(&cell).unwrap_or(&empty);
            TopCell {
                rank: rank + 1,
                cell,
                real_p: frac(r.visits, real_total),
                syn_p: frac(s.visits, syn_total),
                real_visit_hours: r.hours.clone(),
                syn_visit_hours: s.hours.clone(),
                real_dwell: r.dwell.clone(),
                syn_dwell: s.dwell.clone(),
            }
        })
        .collect();

    let real_top: u64 = ranked[..n_eff].iter().map(|(_, s)| s.visits).sum();
    let syn_top: u64 = cells
        .iter()
        .map(|c| syn_stats.get(&c.cell).map_or(0, |s| s.visits))
        .sum();
    let real_rest_p = frac(real_total - real_top, real_total);
    let syn_rest_p = if syn_total == 0 { 0.0 } else { frac(syn_total - syn_top, syn_total) };
    let mut rp: Vec<f64> = cells.iter().map(|c| c.real_p).collect();
    let mut sp: Vec<f64> = cells.iter().map(|c| c.syn_p).collect();
    rp.push(real_rest_p);
    sp.push(syn_rest_p);

    let rh: Vec<&[u64]> = cells.iter().map(|c| c.real_visit_hours.as_slice()).collect();
    let sh: Vec<&[u64]> = cells.iter().map(|c| c.syn_visit_hours.as_slice()).collect();
    let rd: Vec<&[u64]> = cells.iter().map(|c| c.real_dwell.as_slice()).collect();
    let sd: Vec<&[u64]> = cells.iter().map(|c| c.syn_dwell.as_slice()).collect();

    Ok(TopNReport {
        n: n_eff,
        visit_tv: tv(&rp, &sp),
        visit_time_tv: tv(&joint(&rh), &joint(&sh)),
        dwell_tv: tv(&joint(&rd), &joint(&sd)),
        cells,
        dwell_edges: edges,
        real_rest_p,
        syn_rest_p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::GridTrace;
    use crate::geogrid::GridSpec;

    fn corpus(traces: &[&[u64]]) -> Corpus {
        let spec = GridSpec::unit(2).unwrap();
        let traces = traces
            .iter()
            .enumerate()
            .map(|(i, cells)| {
                let cells: Vec<CellId> = cells.iter().map(|&c| CellId(c)).collect();
                GridTrace::regular(format!("u{i}"), &cells, 0, 3600).unwrap()
            })
            .collect();
        Corpus::new(spec, 3600, traces).unwrap()
    }

    #[test]
    fn self_comparison_is_zero() {
        let c = corpus(&[&[1, 1, 2, 3, 3, 3, 1], &[2, 2, 2, 5]]);
        let r = topn_report(&c, &c, 3).unwrap();
        assert_eq!((r.visit_tv, r.visit_time_tv, r.dwell_tv), (0.0, 0.0, 0.0));
    }

    #[test]
    fn single_cell_forever() {
        let c = corpus(&[&[4; 30], &[4; 30]]);
        let r = topn_report(&c, &c, 5).unwrap();
        assert_eq!(r.n, 1);
        assert_eq!(r.cells[0].real_p, 1.0);
        assert_eq!(r.cells[0].real_dwell.iter().filter(|&&x| x > 0).count(), 1);
    }

    #[test]
    fn hand_counted_runs() {
        // Runs: user 0 is 1,2,1 and user 1 is 2,3,2.
        let real = corpus(&[&[1, 1, 2, 1], &[2, 2, 3, 2]]);
        let syn = corpus(&[&[3, 3, 3, 3], &[1, 2, 1, 2]]);
        let r = topn_report(&real, &syn, 2).unwrap();
        // Real visits: cell 1 x2, cell 2 x3, cell 3 x1 -> total 6.
        assert_eq!(r.cells[0].cell, CellId(2));
        assert_eq!(r.cells[0].real_p, 3.0 / 6.0);
        assert_eq!(r.cells[1].cell, CellId(1));
        assert_eq!(r.cells[1].real_p, 2.0 / 6.0);
        assert!((r.real_rest_p - 1.0 / 6.0).abs() < 1e-15);
        // Synthetic visits: 3 x1, 1 x2, 2 x2 -> total 5.
        assert_eq!(r.cells[0].syn_p, 2.0 / 5.0);
        assert_eq!(r.cells[1].syn_p, 2.0 / 5.0);
        let want = 0.5 * ((0.5f64 - 0.4).abs() + (1.0f64 / 3.0 - 0.4).abs() + (1.0f64 / 6.0 - 0.2).abs());
        assert!((r.visit_tv - want).abs() < 1e-12);
    }

    #[test]
    fn dwell_bins_span_period_to_day() {
        let e = dwell_edges(3600);
        assert_eq!(e.len(), DWELL_BINS);
        assert!((e[DWELL_BINS - 1] - 86_400.0).abs() < 1e-6);
        assert_eq!(dwell_bin(3600.0, &e), 0);
        assert_eq!(dwell_bin(1e9, &e), DWELL_BINS - 1);
    }
}
