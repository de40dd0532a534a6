//! Reconstruction of hidden cells by Viterbi decoding under a Markov prior.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::ObfuscatedTrace;
use crate::dataio::{time_bucket, Corpus};
use crate::generators::{Generator, MarkovModel, Order1Reduction};
use crate::{par, rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceAttackResult {
    pub accuracy: f64,
    pub hidden: usize,
    pub correct: usize,
    pub n_states: usize,
    pub traces_attacked: usize,
}

/// Score with a tie-break rank; higher score wins, then lower rank.
#[derive(Clone, Copy)]
struct Cand {
    score: f64,
    rank: u32,
    from: u32,
}

impl Cand {
    const NONE: Cand = Cand {
        score: f64::NEG_INFINITY,
        rank: u32::MAX,
        from: u32::MAX,
    };

    fn beats(&self, other: &Cand) -> bool {
        self.score > other.score || (self.score == other.score && self.rank < other.rank)
    }
}

struct Prior<'a> {
    model: &'a MarkovModel,
    by_bucket: BTreeMap<usize, Order1Reduction>,
}

impl Prior<'_> {
    fn reduction(&self, timestamp: i64) -> &Order1Reduction {
        &self.by_bucket[&time_bucket(timestamp, self.model.options().time_buckets)]
    }
}

/// Decodes one trace. `rank[s]` breaks ties between equally likely states.
fn viterbi(trace: &ObfuscatedTrace, prior: &Prior, rank: &[u32]) -> Vec<Option<usize>> {
    let v = rank.len();
    let pts = trace.points();
    let mut out = vec![None; pts.len()];
    let mut delta: Vec<f64> = Vec::new();
    let mut back: Vec<Vec<u32>> = Vec::with_capacity(pts.len());
    let mut seg_start = 0;

    let finish = |delta: &[f64], back: &[Vec<u32>], seg_start: usize, out: &mut Vec<Option<usize>>| {
        if delta.is_empty() {
            return;
        }
        let mut best = Cand::NONE;
        for (s, &d) in delta.iter().enumerate() {
            let c = Cand { score: d, rank: rank[s], from: s as u32 };
            if c.beats(&best) {
                best = c;
            }
        }
        let mut s = best.from as usize;
        for t in (0..back.len()).rev() {
            out[seg_start + t] = Some(s);
            if t > 0 {
                s = back[t][s] as usize;
            }
        }
    };

    for (t, p) in pts.iter().enumerate() {
        let observed = p.cell.map(|c| prior.model.symbol(c));
        if let Some(None) = observed {
            // An observed cell outside the prior's vocabulary: the chain restarts after it.
            finish(&delta, &back, seg_start, &mut out);
            delta.clear();
            back.clear();
            seg_start = t + 1;
            continue;
        }
        let red = prior.reduction(p.timestamp);
        let mut next: Vec<f64>;
        let mut bp = vec![u32::MAX; v];
        if delta.is_empty() {
            next = red.log_marginal.clone();
        } else {
            // Best predecessor per shared row.
            let mut row_best = vec![Cand::NONE; red.rows.len()];
            for (i, &d) in delta.iter().enumerate() {
                let c = Cand { score: d, rank: rank[i], from: i as u32 };
                let r = red.row_of[i];
                if c.beats(&row_best[r]) {
                    row_best[r] = c;
                }
            }
            let mut floor = Cand::NONE;
            for (r, b) in row_best.iter().enumerate() {
                if b.from == u32::MAX {
                    continue;
                }
                let c = Cand { score: b.score + red.rows[r].log_floor, ..*b };
                if c.beats(&floor) {
                    floor = c;
                }
            }
            let mut cand = vec![floor; v];
            for (r, b) in row_best.iter().enumerate() {
                if b.from == u32::MAX {
                    continue;
                }
                let row = &red.rows[r];
                for (&j, &lp) in row.next.iter().zip(&row.log_p) {
                    let c = Cand { score: b.score + lp, ..*b };
                    if c.beats(&cand[j]) {
                        cand[j] = c;
                    }
                }
            }
            next = cand.iter().map(|c| c.score).collect();
            for (j, c) in cand.iter().enumerate() {
                bp[j] = c.from;
            }
        }
        if let Some(Some(s)) = observed {
            for (j, x) in next.iter_mut().enumerate() {
                if j != s {
                    *x = f64::NEG_INFINITY;
                }
            }
        }
        delta = next;
        back.push(bp);
    }
    finish(&delta, &back, seg_start, &mut out);
    out
}

/// Recovers hidden cells of `obfuscated` (aligned with `truth`) and scores them.
///
/// Traces without hidden points are skipped. Ties between equally probable
/// paths are broken by a random ranking of the states drawn per trace.
pub fn sequence_attack(
    truth: &Corpus,
    obfuscated: &[ObfuscatedTrace],
    prior: &MarkovModel,
    seed: u64,
) -> Result<SequenceAttackResult> {
    if truth.len() != obfuscated.len() {
        return Err(Error::Domain(format!(
            "{} obfuscated traces for {} true traces",
            obfuscated.len(),
            truth.len()
        )));
    }
    for (t, o) in truth.traces().iter().zip(obfuscated) {
        if t.len() != o.len() || t.points().iter().zip(o.points()).any(|(a, b)| a.timestamp != b.timestamp) {
            return Err(Error::Domain(format!("obfuscated trace {} does not match its original", o.user_id())));
        }
    }
    let hidden: usize = obfuscated.iter().map(ObfuscatedTrace::n_hidden).sum();
    if hidden == 0 {
        return Err(Error::NothingToAttack);
    }
    truth.spec().ensure_same(prior.spec())?;

    let buckets = prior.options().time_buckets;
    let mut by_bucket = BTreeMap::new();
    for o in obfuscated {
        for p in o.points() {
            by_bucket
                .entry(time_bucket(p.timestamp, buckets))
                .or_insert_with(|| prior.order1_reduction(p.timestamp));
        }
    }
    let prior_tables = Prior { model: prior, by_bucket };
    let vocab = prior.vocabulary();
    let v = vocab.len();

    let per_trace: Vec<(usize, usize)> = par::map_range(obfuscated.len(), |i| {
        let o = &obfuscated[i];
        if o.n_hidden() == 0 {
            return (0, 0);
        }
        let mut rank = vec![0u32; v];
        for (r, s) in rng::permutation(v, &mut rng::stream(seed, i as u64)).into_iter().enumerate() {
            rank[s] = r as u32;
        }
        let path = viterbi(o, &prior_tables, &rank);
        let mut correct = 0;
        for ((p, t), s) in o.points().iter().zip(truth.traces()[i].points()).zip(&path) {
            if p.cell.is_none() && s.is_some_and(|s| vocab[s] == t.cell) {
                correct += 1;
            }
        }
        (correct, 1)
    });
    let correct: usize = per_trace.iter().map(|x| x.0).sum();
    let traces_attacked = per_trace.iter().map(|x| x.1).sum();
    Ok(SequenceAttackResult {
        accuracy: correct as f64 / hidden as f64,
        hidden,
        correct,
        n_states: v,
        traces_attacked,
    })
}
