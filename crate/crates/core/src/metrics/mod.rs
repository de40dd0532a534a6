//! Realism battery: top-N distributions, MMD two-sample test, MI decay.

mod mi;
mod mmd;
mod topn;

pub use mi::{lagged_mi, mi_decay, DecayFit, MiDecayCurve, MIN_SYMBOL_COUNT};
pub use mmd::{mmd_test, MmdResult, DEFAULT_PERMUTATIONS, MIN_TRACES};
pub use topn::{dwell_bin, dwell_edges, topn_report, visits, TopCell, TopNReport, Visit, DEFAULT_TOP_N, DWELL_BINS, HOUR_BINS};
