//! Nearest-trace membership inference.

use serde::{Deserialize, Serialize};

use crate::dataio::{Corpus, GridTrace};
use crate::geogrid::CellId;
use crate::{par, rng};
use crate::{Error, Result};

pub const CALIBRATION_FRACTION: f64 = 0.2;

/// Share of the trace's points spent in each cell, sorted by cell.
pub fn visit_frequencies(trace: &GridTrace) -> Vec<(CellId, f64)> {
    let mut cells: Vec<CellId> = trace.cells().collect();
    cells.sort_unstable();
    let n = cells.len() as f64;
    let mut out: Vec<(CellId, f64)> = Vec::new();
    for c in cells {
        match out.last_mut() {
            Some((last, w)) if *last == c => *w += 1.0,
            _ => out.push((c, 1.0)),
        }
    }
    for (_, w) in &mut out {
        *w /= n;
    }
    out
}

fn tv(a: &[(CellId, f64)], b: &[(CellId, f64)]) -> f64 {
    let (mut i, mut j, mut s) = (0, 0, 0.0);
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i].0 < b[j].0) {
            s += a[i].1;
            i += 1;
        } else if i == a.len() || b[j].0 < a[i].0 {
            s += b[j].1;
            j += 1;
        } else {
            s += (a[i].1 - b[j].1).abs();
            i += 1;
            j += 1;
        }
    }
    0.5 * s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScore {
    pub user_id: String,
    pub member: bool,
    pub score: f64,
    pub calibration: bool,
    pub predicted_member: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipResult {
    pub accuracy: f64,
    pub auc: f64,
    pub threshold: f64,
    pub n_calibration: usize,
    pub n_evaluation: usize,
    pub scores: Vec<TargetScore>,
}

/// Mann-Whitney estimate of `P(member score < non-member score)`, ties counted half.
fn auc(members: &[f64], non_members: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &m in members {
        for &n in non_members {
            wins += if m < n {
                1.0
            } else if m == n {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (members.len() * non_members.len()) as f64
}

/// Threshold maximizing accuracy of "score <= threshold means member".
fn calibrate(labeled: &[(f64, bool)]) -> f64 {
    let mut scores: Vec<f64> = labeled.iter().map(|x| x.0).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let mut candidates = vec![-1.0];
    candidates.extend(scores.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    if let Some(&last) = scores.last() {
        candidates.push(last);
    }
    let mut best = (0usize, -1.0);
    for &thr in &candidates {
        let hits = labeled.iter().filter(|&&(s, m)| (s <= thr) == m).count();
        if hits > best.0 {
            best = (hits, thr);
        }
    }
    best.1
}

/// Scores each target by its distance to the closest synthetic trace and
/// classifies the lowest scores as members.
///
/// A stratified `CALIBRATION_FRACTION` of each class (at least one target)
/// fixes the threshold; accuracy and AUC are measured on the rest.
pub fn membership_attack(
    synthetic: &Corpus,
    members: &[GridTrace],
    non_members: &[GridTrace],
    seed: u64,
) -> Result<MembershipResult> {
    if members.len() < 2 || non_members.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "membership attack needs at least 2 members and 2 non-members, got {} and {}",
            members.len(),
            non_members.len()
        )));
    }
    if synthetic.is_empty() {
        return Err(Error::InsufficientData("empty synthetic corpus".into()));
    }
    let syn: Vec<Vec<(CellId, f64)>> = par::map_slice(synthetic.traces(), visit_frequencies);
    let targets: Vec<(&GridTrace, bool)> = members
        .iter()
        .map(|t| (t, true))
        .chain(non_members.iter().map(|t| (t, false)))
        .collect();
    let raw: Vec<f64> = par::map_slice(&targets, |(t, _)| {
        let f = visit_frequencies(t);
        syn.iter().map(|s| tv(&f, s)).fold(f64::INFINITY, f64::min)
    });

    let mut calibration = vec![false; targets.len()];
    for (class, offset, n) in [(0u64, 0, members.len()), (1, members.len(), non_members.len())] {
        let k = ((n as f64 * CALIBRATION_FRACTION).round() as usize).clamp(1, n - 1);
        for &i in rng::permutation(n, &mut rng::stream(seed, class)).iter().take(k) {
            calibration[offset + i] = true;
        }
    }
    let calib: Vec<(f64, bool)> = (0..targets.len())
        .filter(|&i| calibration[i])
        .map(|i| (raw[i], targets[i].1))
        .collect();
    let threshold = calibrate(&calib);

    let mut scores = Vec::with_capacity(targets.len());
    let (mut hits, mut m_eval, mut n_eval) = (0usize, Vec::new(), Vec::new());
    for (i, &(t, member)) in targets.iter().enumerate() {
        let predicted_member = raw[i] <= threshold;
        if !calibration[i] {
            hits += usize::from(predicted_member == member);
            if member {
                m_eval.push(raw[i]);
            } else {
                n_eval.push(raw[i]);
            }
        }
        scores.push(TargetScore {
            user_id: t.user_id().to_string(),
            member,
            score: raw[i],
            calibration: calibration[i],
            predicted_member,
        });
    }
    let n_evaluation = m_eval.len() + n_eval.len();
    Ok(MembershipResult {
        accuracy: hits as f64 / n_evaluation as f64,
        auc: auc(&m_eval, &n_eval),
        threshold,
        n_calibration: calib.len(),
        n_evaluation,
        scores,
    })
}
