//! k-order Markov baseline over grid cells with time-of-day buckets.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Generator;
use crate::dataio::{time_bucket, Corpus, GridTrace};
use crate::geogrid::{CellId, GridSpec};
use crate::{par, rng, Error, Result};

pub const DEFAULT_TIME_BUCKETS: usize = 24;
pub const DEFAULT_ALPHA: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarkovOptions {
    pub order: usize,
    pub time_buckets: usize,
    pub alpha: f64,
}

impl Default for MarkovOptions {
    fn default() -> Self {
        MarkovOptions {
            order: 1,
            time_buckets: DEFAULT_TIME_BUCKETS,
            alpha: DEFAULT_ALPHA,
        }
    }
}

/// Sparse next-symbol counts, sorted by symbol.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Row {
    next: Vec<u32>,
    counts: Vec<u64>,
    total: u64,
}

impl Row {
    fn from_map(m: &BTreeMap<u32, u64>) -> Row {
        Row {
            next: m.keys().copied().collect(),
            counts: m.values().copied().collect(),
            total: m.values().sum(),
        }
    }

    fn count(&self, sym: u32) -> u64 {
        self.next
            .binary_search(&sym)
            .map(|i| self.counts[i])
            .unwrap_or(0)
    }
}

/// `(time bucket, context symbols oldest first)`.
type Context = (u32, Vec<u32>);

/// Log transition probabilities of one context: explicit entries plus a floor for the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRow {
    pub next: Vec<usize>,
    pub log_p: Vec<f64>,
    pub log_floor: f64,
}

/// `P(j | i)` as shared sparse rows: row `row_of[i]` serves previous symbol `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Order1Reduction {
    pub rows: Vec<SparseRow>,
    pub row_of: Vec<usize>,
    pub log_marginal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkovModel {
    spec: GridSpec,
    sampling_period: i64,
    opts: MarkovOptions,
    vocab: Vec<CellId>,
    /// `levels[l]` holds rows for contexts of length `l`.
    levels: Vec<BTreeMap<Context, Row>>,
    global: Row,
}

#[derive(Serialize, Deserialize)]
struct RowEntry {
    bucket: u32,
    context: Vec<u32>,
    next: Vec<u32>,
    counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
pub(crate) struct MarkovData {
    sampling_period: i64,
    options: MarkovOptions,
    vocab: Vec<CellId>,
    rows: Vec<RowEntry>,
    global: Row,
}

impl MarkovModel {
    pub fn fit(corpus: &Corpus, opts: MarkovOptions) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::InsufficientData("cannot fit a Markov model on an empty corpus".into()));
        }
        if opts.time_buckets == 0 {
            return Err(Error::Domain("time_buckets must be at least 1".into()));
        }
        if !(opts.alpha > 0.0 && opts.alpha.is_finite()) {
            return Err(Error::out_of_range("alpha", opts.alpha, "(0, inf)"));
        }
        let mut vocab: Vec<CellId> = corpus.traces().iter().flat_map(|t| t.cells()).collect();
        vocab.sort_unstable();
        vocab.dedup();

        let mut maps: Vec<BTreeMap<Context, BTreeMap<u32, u64>>> = vec![BTreeMap::new(); opts.order + 1];
        let mut global: BTreeMap<u32, u64> = BTreeMap::new();
        for trace in corpus.traces() {
            let syms: Vec<u32> = trace
                .cells()
                .map(|c| vocab.binary_search(&c).expect("cell in vocabulary") as u32)
                .collect();
            for (t, p) in trace.points().iter().enumerate() {
                let bucket = time_bucket(p.timestamp, opts.time_buckets) as u32;
                let sym = syms[t];
                *global.entry(sym).or_default() += 1;
                for (l, map) in maps.iter_mut().enumerate().take(t.min(opts.order) + 1) {
                    let ctx = (bucket, syms[t - l..t].to_vec());
                    *map.entry(ctx).or_default().entry(sym).or_default() += 1;
                }
            }
        }
        let levels = maps
            .iter()
            .map(|m| m.iter().map(|(k, v)| (k.clone(), Row::from_map(v))).collect())
            .collect();
        Ok(MarkovModel {
            spec: *corpus.spec(),
            sampling_period: corpus.sampling_period(),
            opts,
            vocab,
            levels,
            global: Row::from_map(&global),
        })
    }

    /// A model without observations: every transition is uniform over `cells`.
    pub fn uniform(spec: GridSpec, sampling_period: i64, cells: &[CellId]) -> Result<Self> {
        let mut vocab = cells.to_vec();
        vocab.sort_unstable();
        vocab.dedup();
        if vocab.is_empty() {
            return Err(Error::InsufficientData("uniform prior needs at least one cell".into()));
        }
        for &c in &vocab {
            spec.check_cell(c)?;
        }
        Ok(MarkovModel {
            spec,
            sampling_period,
            opts: MarkovOptions {
                order: 1,
                time_buckets: 1,
                alpha: 1.0,
            },
            vocab,
            levels: vec![BTreeMap::new(); 2],
            global: Row::default(),
        })
    }

    pub fn options(&self) -> &MarkovOptions {
        &self.opts
    }

    pub fn order(&self) -> usize {
        self.opts.order
    }

    pub fn vocabulary(&self) -> &[CellId] {
        &self.vocab
    }

    pub fn symbol(&self, cell: CellId) -> Option<usize> {
        self.vocab.binary_search(&cell).ok()
    }

    /// Row used for `context` (oldest first) in `bucket`, backing off to shorter contexts.
    fn row(&self, context: &[u32], bucket: u32) -> &Row {
        let longest = context.len().min(self.opts.order);
        for l in (0..=longest).rev() {
            let key = (bucket, context[context.len() - l..].to_vec());
            if let Some(row) = self.levels[l].get(&key) {
                return row;
            }
        }
        &self.global
    }

    fn smoothed(&self, row: &Row, sym: u32) -> f64 {
        let a = self.opts.alpha;
        (row.count(sym) as f64 + a) / (row.total as f64 + a * self.vocab.len() as f64)
    }

    /// Smoothed `P(next | context)` for a point with timestamp `timestamp`.
    pub fn probability(&self, context: &[usize], timestamp: i64, next: usize) -> f64 {
        let ctx: Vec<u32> = context.iter().map(|&s| s as u32).collect();
        let bucket = time_bucket(timestamp, self.opts.time_buckets) as u32;
        self.smoothed(self.row(&ctx, bucket), next as u32)
    }

    /// Order-0 distribution of the bucket containing `timestamp`.
    pub fn marginal(&self, timestamp: i64) -> Vec<f64> {
        let bucket = time_bucket(timestamp, self.opts.time_buckets) as u32;
        let row = self.row(&[], bucket);
        (0..self.vocab.len()).map(|j| self.smoothed(row, j as u32)).collect()
    }

    /// Order-1 reduction: `m[i][j] = P(j | previous i)` for a point at `timestamp`.
    pub fn transition_matrix(&self, timestamp: i64) -> Vec<Vec<f64>> {
        let bucket = time_bucket(timestamp, self.opts.time_buckets) as u32;
        let v = self.vocab.len();
        (0..v)
            .map(|i| {
                let row = self.row(&[i as u32], bucket);
                (0..v).map(|j| self.smoothed(row, j as u32)).collect()
            })
            .collect()
    }

    /// Order-1 reduction in sparse log form for points in the bucket of `timestamp`.
    pub fn order1_reduction(&self, timestamp: i64) -> Order1Reduction {
        let bucket = time_bucket(timestamp, self.opts.time_buckets) as u32;
        let v = self.vocab.len();
        let a = self.opts.alpha;
        let mut rows: Vec<SparseRow> = Vec::new();
        let mut seen: Vec<(*const Row, usize)> = Vec::new();
        let mut sparse = |row: &Row| -> usize {
            let key = row as *const Row;
            if let Some(&(_, id)) = seen.iter().find(|(k, _)| *k == key) {
                return id;
            }
            let denom = (row.total as f64 + a * v as f64).ln();
            rows.push(SparseRow {
                next: row.next.iter().map(|&j| j as usize).collect(),
                log_p: row.counts.iter().map(|&c| (c as f64 + a).ln() - denom).collect(),
                log_floor: a.ln() - denom,
            });
            seen.push((key, rows.len() - 1));
            rows.len() - 1
        };
        let row_of: Vec<usize> = (0..v).map(|i| sparse(self.row(&[i as u32], bucket))).collect();
        let log_marginal = self.marginal(timestamp).iter().map(|p| p.ln()).collect();
        Order1Reduction {
            rows,
            row_of,
            log_marginal,
        }
    }

    fn draw<R: Rng + ?Sized>(&self, row: &Row, rng: &mut R) -> u32 {
        let a = self.opts.alpha;
        let v = self.vocab.len();
        let mut r = rng.random::<f64>() * (row.total as f64 + a * v as f64);
        for (&sym, &c) in row.next.iter().zip(&row.counts) {
            if r < c as f64 {
                return sym;
            }
            r -= c as f64;
        }
        ((r.max(0.0) / a) as usize).min(v - 1) as u32
    }

    pub(crate) fn to_data(&self) -> MarkovData {
        let rows = self
            .levels
            .iter()
            .flat_map(|m| m.iter())
            .map(|((bucket, context), row)| RowEntry {
                bucket: *bucket,
                context: context.clone(),
                next: row.next.clone(),
                counts: row.counts.clone(),
            })
            .collect();
        MarkovData {
            sampling_period: self.sampling_period,
            options: self.opts,
            vocab: self.vocab.clone(),
            rows,
            global: self.global.clone(),
        }
    }

    pub(crate) fn from_data(spec: GridSpec, data: MarkovData) -> Result<Self> {
        let opts = data.options;
        if opts.time_buckets == 0 || !(opts.alpha > 0.0) || data.sampling_period <= 0 {
            return Err(Error::Format("invalid Markov options".into()));
        }
        if data.vocab.is_empty() || data.vocab.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("Markov vocabulary must be sorted and non-empty".into()));
        }
        for &c in &data.vocab {
            spec.check_cell(c)?;
        }
        let v = data.vocab.len() as u32;
        let mut levels = vec![BTreeMap::new(); opts.order + 1];
        for e in data.rows {
            let ok = e.context.len() <= opts.order
                && e.next.len() == e.counts.len()
                && e.next.windows(2).all(|w| w[0] < w[1])
                && e.next.iter().chain(&e.context).all(|&s| s < v);
            if !ok {
                return Err(Error::Format("malformed Markov row".into()));
            }
            let total = e.counts.iter().sum();
            levels[e.context.len()].insert(
                (e.bucket, e.context),
                Row {
                    next: e.next,
                    counts: e.counts,
                    total,
                },
            );
        }
        Ok(MarkovModel {
            spec,
            sampling_period: data.sampling_period,
            opts,
            vocab: data.vocab,
            levels,
            global: data.global,
        })
    }
}

impl Generator for MarkovModel {
    fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn sampling_period(&self) -> i64 {
        self.sampling_period
    }

    fn generate(&self, n_traces: usize, trace_len: usize, start_time: i64, seed: u64) -> Result<Corpus> {
        if trace_len == 0 {
            return Err(Error::Domain("trace_len must be at least 1".into()));
        }
        let k = self.opts.order;
        let period = self.sampling_period;
        let traces = par::try_map_range(n_traces, |i| {
            let mut rng = rng::stream(seed, i as u64);
            let mut syms: Vec<u32> = Vec::with_capacity(trace_len);
            for t in 0..trace_len {
                let ts = start_time + t as i64 * period;
                let bucket = time_bucket(ts, self.opts.time_buckets) as u32;
                let ctx = &syms[t.saturating_sub(k)..t];
                let next = self.draw(self.row(ctx, bucket), &mut rng);
                syms.push(next);
            }
            let cells: Vec<CellId> = syms.iter().map(|&s| self.vocab[s as usize]).collect();
            GridTrace::regular(format!("syn_{i}"), &cells, start_time, period)
        })?;
        Corpus::new(self.spec, period, traces)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alternating(n: usize) -> Corpus {
        let spec = GridSpec::unit(2).unwrap();
        let cells: Vec<CellId> = (0..n).map(|i| CellId(if i % 2 == 0 { 3 } else { 7 })).collect();
        let trace = GridTrace::regular("a", &cells, 0, 3600).unwrap();
        Corpus::new(spec, 3600, vec![trace]).unwrap()
    }

    #[test]
    fn alternation_is_learned() {
        let corpus = alternating(200);
        for alpha in [1e-2, 1e-4, 1e-6] {
            let m = MarkovModel::fit(
                &corpus,
                MarkovOptions {
                    order: 1,
                    time_buckets: 1,
                    alpha,
                },
            )
            .unwrap();
            let a = m.symbol(CellId(3)).unwrap();
            let b = m.symbol(CellId(7)).unwrap();
            let p_ba = m.probability(&[a], 0, b);
            let p_ab = m.probability(&[b], 0, a);
            assert!(p_ba > 1.0 - 2.0 * alpha && p_ab > 1.0 - 2.0 * alpha, "{p_ba} {p_ab}");
        }
    }

    #[test]
    fn empty_context_uses_order_zero() {
        let corpus = alternating(101);
        let m = MarkovModel::fit(
            &corpus,
            MarkovOptions {
                order: 2,
                time_buckets: 1,
                alpha: 0.01,
            },
        )
        .unwrap();
        let marg = m.marginal(0);
        let a = m.symbol(CellId(3)).unwrap();
        assert!((m.probability(&[], 0, a) - marg[a]).abs() < 1e-15);
        assert!((marg[a] - (51.0 + 0.01) / (101.0 + 0.02)).abs() < 1e-12);
        // Unseen contexts back off as well.
        assert_eq!(m.probability(&[a, a], 0, a), m.probability(&[a], 0, a));
    }

    #[test]
    fn generation_is_seeded_and_regular() {
        let m = MarkovModel::fit(&alternating(100), MarkovOptions::default()).unwrap();
        let a = m.generate(3, 20, 7200, 5).unwrap();
        assert_eq!(a, m.generate(3, 20, 7200, 5).unwrap());
        assert_eq!(a.traces()[2].user_id(), "syn_2");
        assert_eq!(a.traces()[0].start_time(), 7200);
        assert!(m.generate(1, 0, 0, 1).is_err());
    }

    #[test]
    fn reduction_matches_probabilities() {
        let spec = GridSpec::unit(2).unwrap();
        let cells: Vec<CellId> = [1u64, 1, 2, 3, 1, 2, 2, 3, 3, 1].iter().map(|&c| CellId(c)).collect();
        let corpus = Corpus::new(spec, 3600, vec![GridTrace::regular("a", &cells, 0, 3600).unwrap()]).unwrap();
        let m = MarkovModel::fit(&corpus, MarkovOptions { order: 2, time_buckets: 2, alpha: 0.5 }).unwrap();
        for ts in [0, 13 * 3600] {
            let r = m.order1_reduction(ts);
            let dense = m.transition_matrix(ts);
            for (i, row) in dense.iter().enumerate() {
                let sr = &r.rows[r.row_of[i]];
                for (j, &p) in row.iter().enumerate() {
                    let lp = sr.next.iter().position(|&n| n == j).map_or(sr.log_floor, |k| sr.log_p[k]);
                    assert!((lp.exp() - p).abs() < 1e-12);
                }
            }
        }
        let u = MarkovModel::uniform(spec, 60, &[CellId(0), CellId(5), CellId(5)]).unwrap();
        assert_eq!(u.vocabulary().len(), 2);
        assert_eq!(u.transition_matrix(0), vec![vec![0.5; 2]; 2]);
    }

    #[test]
    fn data_roundtrip() {
        let corpus = alternating(50);
        let m = MarkovModel::fit(&corpus, MarkovOptions { order: 2, ..Default::default() }).unwrap();
        let back = MarkovModel::from_data(*corpus.spec(), m.to_data()).unwrap();
        assert_eq!(back, m);
    }
}
