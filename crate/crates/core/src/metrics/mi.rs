//! Lagged mutual information between cell symbols and its decay law.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::dataio::Corpus;
use crate::geogrid::CellId;
use crate::{Error, Result};

/// Cells seen fewer times than this share the "other" symbol.
pub const MIN_SYMBOL_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// Power law: exponent `a` in `I ~ tau^-a`. Exponential: rate `r` in `I ~ exp(-r tau)`.
    pub parameter: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiDecayCurve {
    pub lags: Vec<usize>,
    pub mi_bits: Vec<f64>,
    pub alphabet_size: usize,
    pub pairs_at_max_lag: usize,
    pub power_law: Option<DecayFit>,
    pub exponential: Option<DecayFit>,
}

/// Maps each trace to symbols: frequent cells get their own index, the rest share one.
fn symbolize(corpus: &Corpus) -> (Vec<Vec<u32>>, usize) {
    let mut counts: BTreeMap<CellId, usize> = BTreeMap::new();
    for t in corpus.traces() {
        for c in t.cells() {
            *counts.entry(c).or_default() += 1;
        }
    }
    let mut index: HashMap<CellId, u32> = HashMap::new();
    for (&c, &k) in &counts {
        if k >= MIN_SYMBOL_COUNT {
            let next = index.len() as u32;
            index.insert(c, next);
        }
    }
    let other = index.len() as u32;
    let rare = counts.values().any(|&k| k < MIN_SYMBOL_COUNT);
    let seqs = corpus
        .traces()
        .iter()
        .map(|t| t.cells().map(|c| *index.get(&c).unwrap_or(&other)).collect())
        .collect();
    (seqs, index.len() + usize::from(rare))
}

/// Miller-Madow corrected mutual information (bits) of pooled lag-`tau` pairs, floored at 0.
pub fn lagged_mi(seqs: &[Vec<u32>], tau: usize) -> (f64, usize) {
    let mut joint: HashMap<(u32, u32), u64> = HashMap::new();
    let mut px: HashMap<u32, u64> = HashMap::new();
    let mut py: HashMap<u32, u64> = HashMap::new();
    let mut n = 0u64;
    for s in seqs {
        for w in 0..s.len().saturating_sub(tau) {
            let (a, b) = (s[w], s[w + tau]);
            *joint.entry((a, b)).or_default() += 1;
            *px.entry(a).or_default() += 1;
            *py.entry(b).or_default() += 1;
            n += 1;
        }
    }
    if n == 0 {
        return (0.0, 0);
    }
    let nf = n as f64;
    // Sum in key order so the result does not depend on hash iteration order.
    let mut cells: Vec<(&(u32, u32), &u64)> = joint.iter().collect();
    cells.sort_unstable();
    let mut mi = 0.0;
    for (&(a, b), &c) in cells {
        let pab = c as f64 / nf;
        let pa = px[&a] as f64 / nf;
        let pb = py[&b] as f64 / nf;
        mi += pab * (pab / (pa * pb)).log2();
    }
    let correction = (px.len() as f64 + py.len() as f64 - joint.len() as f64 - 1.0)
        / (2.0 * nf * std::f64::consts::LN_2);
    ((mi + correction).max(0.0), n as usize)
}

/// Least squares `y = intercept + slope * x` with its R^2.
fn regress(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 3 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some((slope, intercept, r2))
}

pub fn mi_decay(corpus: &Corpus, tau_max: usize) -> Result<MiDecayCurve> {
    if tau_max == 0 {
        return Err(Error::Domain("tau_max must be at least 1".into()));
    }
    let shortest = corpus.min_trace_len();
    if shortest < 2 {
        return Err(Error::InsufficientData("mutual information needs traces of length 2+".into()));
    }
    let tau_max = if tau_max >= shortest {
        log::warn!("tau_max {tau_max} clamped to {}", shortest - 1);
        shortest - 1
    } else {
        tau_max
    };
    let (seqs, alphabet) = symbolize(corpus);
    let mut lags = Vec::with_capacity(tau_max);
    let mut mi_bits = Vec::with_capacity(tau_max);
    let mut pairs_at_max_lag = 0;
    for tau in 1..=tau_max {
        let (mi, pairs) = lagged_mi(&seqs, tau);
        lags.push(tau);
        mi_bits.push(mi);
        pairs_at_max_lag = pairs;
    }
    if pairs_at_max_lag < 50 * alphabet * alphabet {
        log::warn!(
            "{pairs_at_max_lag} pairs at lag {tau_max} for an alphabet of {alphabet}; estimates may be biased"
        );
    }
    let (mut lx, mut tx, mut ly) = (Vec::new(), Vec::new(), Vec::new());
    for (&tau, &mi) in lags.iter().zip(&mi_bits) {
        if mi > 0.0 {
            lx.push((tau as f64).ln());
            tx.push(tau as f64);
            ly.push(mi.ln());
        }
    }
    let power_law = regress(&lx, &ly).map(|(s, i, r2)| DecayFit {
        parameter: -s,
        intercept: i,
        r_squared: r2,
    });
    let exponential = regress(&tx, &ly).map(|(s, i, r2)| DecayFit {
        parameter: -s,
        intercept: i,
        r_squared: r2,
    });
    Ok(MiDecayCurve {
        lags,
        mi_bits,
        alphabet_size: alphabet,
        pairs_at_max_lag,
        power_law,
        exponential,
    })
}
