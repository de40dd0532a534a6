//! Location hiding and the two adversaries run against it.

mod membership;
mod sequence;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{Corpus, GridTrace};
use crate::geogrid::CellId;
use crate::rng;
use crate::{Error, Result};

pub use membership::{membership_attack, visit_frequencies, MembershipResult, TargetScore, CALIBRATION_FRACTION};
pub use sequence::{sequence_attack, SequenceAttackResult};

/// One point of an obfuscated trace; `cell` is `None` when hidden.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscatedPoint {
    pub cell: Option<CellId>,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObfuscatedTrace {
    user_id: String,
    points: Vec<ObfuscatedPoint>,
}

impl ObfuscatedTrace {
    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn points(&self) -> &[ObfuscatedPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn hidden_mask(&self) -> Vec<bool> {
        self.points.iter().map(|p| p.cell.is_none()).collect()
    }

    pub fn n_hidden(&self) -> usize {
        self.points.iter().filter(|p| p.cell.is_none()).count()
    }
}

fn check_probability(p_hide: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p_hide) {
        return Err(Error::out_of_range("p_hide", p_hide, "[0, 1]"));
    }
    Ok(())
}

/// Hides every point independently with probability `p_hide`.
pub fn hide_locations<R: Rng + ?Sized>(trace: &GridTrace, p_hide: f64, rng: &mut R) -> Result<ObfuscatedTrace> {
    check_probability(p_hide)?;
    let points = trace
        .points()
        .iter()
        .map(|p| {
            let hidden = rng.random::<f64>() < p_hide;
            ObfuscatedPoint {
                cell: if hidden { None } else { Some(p.cell) },
                timestamp: p.timestamp,
            }
        })
        .collect();
    Ok(ObfuscatedTrace {
        user_id: trace.user_id().to_string(),
        points,
    })
}

/// [`hide_locations`] over a corpus, trace `i` drawing from stream `i` of `seed`.
pub fn hide_corpus(corpus: &Corpus, p_hide: f64, seed: u64) -> Result<Vec<ObfuscatedTrace>> {
    check_probability(p_hide)?;
    crate::par::try_map_range(corpus.len(), |i| {
        hide_locations(&corpus.traces()[i], p_hide, &mut rng::stream(seed, i as u64))
    })
}

/// Both attacks with their random-guess baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyResult {
    pub hide_probability: f64,
    pub sequence_attack_accuracy: f64,
    pub hidden_points: usize,
    pub active_cells: usize,
    pub sequence_baseline: f64,
    pub membership_accuracy: f64,
    pub membership_auc: f64,
    pub membership_threshold: f64,
    pub membership_baseline: f64,
}

impl PrivacyResult {
    pub fn new(hide_probability: f64, seq: &SequenceAttackResult, mem: &MembershipResult) -> Self {
        PrivacyResult {
            hide_probability,
            sequence_attack_accuracy: seq.accuracy,
            hidden_points: seq.hidden,
            active_cells: seq.n_states,
            sequence_baseline: 1.0 / seq.n_states as f64,
            membership_accuracy: mem.accuracy,
            membership_auc: mem.auc,
            membership_threshold: mem.threshold,
            membership_baseline: 0.5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(n: usize) -> GridTrace {
        let cells: Vec<CellId> = (0..n).map(|i| CellId((i % 5) as u64)).collect();
        GridTrace::regular("u", &cells, 100, 60).unwrap()
    }

    #[test]
    fn extremes_and_range() {
        let t = trace(50);
        let mut r = rng::stream(1, 0);
        assert_eq!(hide_locations(&t, 0.0, &mut r).unwrap().n_hidden(), 0);
        let all = hide_locations(&t, 1.0, &mut r).unwrap();
        assert_eq!(all.n_hidden(), 50);
        assert!(all.hidden_mask().iter().all(|&h| h));
        assert!(matches!(hide_locations(&t, 1.5, &mut r), Err(Error::OutOfRange { .. })));
        assert!(hide_locations(&t, f64::NAN, &mut r).is_err());
    }

    #[test]
    fn timestamps_and_length_preserved() {
        let t = trace(200);
        let o = hide_locations(&t, 0.4, &mut rng::stream(2, 0)).unwrap();
        assert_eq!(o.len(), t.len());
        for (a, b) in o.points().iter().zip(t.points()) {
            assert_eq!(a.timestamp, b.timestamp);
            if let Some(c) = a.cell {
                assert_eq!(c, b.cell);
            }
        }
        let mask = o.hidden_mask();
        assert_eq!(mask.iter().filter(|&&h| h).count(), o.n_hidden());
    }
}
