//! Kernel two-sample test on time-aligned curve-position vectors.

use serde::{Deserialize, Serialize};

use crate::dataio::Corpus;
use crate::{par, rng, Error, Result};

pub const DEFAULT_PERMUTATIONS: usize = 500;
pub const MIN_TRACES: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    pub mmd2_unbiased: f64,
    pub mmd2_biased: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub sigma: f64,
    /// Common trace length used for the embedding.
    pub length: usize,
    pub n_real: usize,
    pub n_syn: usize,
    /// Unbiased statistic under each label permutation.
    pub permutation_stats: Vec<f64>,
}

/// Kernel values are in [0, 1]; fixed point with 2^-62 resolution sums exactly
/// and therefore independently of order.
const FIXED_SCALE: f64 = (1u64 << 62) as f64;

fn to_fixed(x: f64) -> i128 {
    (x * FIXED_SCALE).round() as i128
}

fn from_fixed(x: i128) -> f64 {
    x as f64 / FIXED_SCALE
}

fn embed(corpus: &Corpus, len: usize) -> Result<Vec<Vec<f64>>> {
    let spec = corpus.spec();
    corpus
        .traces()
        .iter()
        .map(|t| t.points()[..len].iter().map(|p| spec.curve_position(p.cell)).collect())
        .collect()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Median of the upper triangle of a symmetric matrix.
fn median_offdiag(d2: &[Vec<f64>]) -> f64 {
    let mut v: Vec<f64> = Vec::with_capacity(d2.len() * (d2.len() - 1) / 2);
    for (i, row) in d2.iter().enumerate() {
        v.extend(row[i + 1..].iter().map(|x| x.sqrt()));
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Block sums of the kernel matrix for a labelling `is_x`, off-diagonal for the within blocks.
fn block_sums(k: &[Vec<i128>], is_x: &[bool]) -> (i128, i128, i128) {
    let (mut xx, mut yy, mut xy) = (0i128, 0i128, 0i128);
    for (i, row) in k.iter().enumerate() {
        for (j, &kij) in row.iter().enumerate() {
            if i == j {
                continue;
            }
            match (is_x[i], is_x[j]) {
                (true, true) => xx += kij,
                (false, false) => yy += kij,
                (true, false) => xy += kij,
                (false, true) => {}
            }
        }
    }
    (xx, yy, xy)
}

fn unbiased(sums: (i128, i128, i128), n: usize, m: usize) -> f64 {
    let (xx, yy, xy) = sums;
    let (n, m) = (n as f64, m as f64);
    from_fixed(xx) / (n * (n - 1.0)) + from_fixed(yy) / (m * (m - 1.0)) - 2.0 * from_fixed(xy) / (n * m)
}

pub fn mmd_test(real: &Corpus, syn: &Corpus, n_permutations: usize, seed: u64) -> Result<MmdResult> {
    real.spec().ensure_same(syn.spec())?;
    if real.sampling_period() != syn.sampling_period() {
        return Err(Error::Domain(format!(
            "sampling periods differ ({} vs {})",
            real.sampling_period(),
            syn.sampling_period()
        )));
    }
    let (n, m) = (real.len(), syn.len());
    if n < MIN_TRACES || m < MIN_TRACES {
        return Err(Error::InsufficientData(format!(
            "MMD needs at least {MIN_TRACES} traces per side, got {n} and {m}"
        )));
    }
    let len = real.min_trace_len().min(syn.min_trace_len());
    let mut z = embed(real, len)?;
    z.extend(embed(syn, len)?);
    let total = n + m;

    let d2: Vec<Vec<f64>> = par::map_range(total, |i| (0..total).map(|j| sq_dist(&z[i], &z[j])).collect());
    let mut sigma = median_offdiag(&d2);
    if !(sigma > 0.0) {
        sigma = 1.0;
    }
    let gamma = 1.0 / (2.0 * sigma * sigma);
    let k: Vec<Vec<i128>> = par::map_slice(&d2, |row| row.iter().map(|&d| to_fixed((-gamma * d).exp())).collect());

    let labels: Vec<bool> = (0..total).map(|i| i < n).collect();
    let sums = block_sums(&k, &labels);
    let mmd2_unbiased = unbiased(sums, n, m);
    let diag = to_fixed(1.0);
    let (xx, yy, xy) = sums;
    let (nf, mf) = (n as f64, m as f64);
    let biased = from_fixed(xx + n as i128 * diag) / (nf * nf) + from_fixed(yy + m as i128 * diag) / (mf * mf)
        - 2.0 * from_fixed(xy) / (nf * mf);

    let permutation_stats: Vec<f64> = par::map_range(n_permutations, |p| {
        let mut r = rng::stream(seed, p as u64);
        let perm = rng::permutation(total, &mut r);
        let mut lab = vec![false; total];
        for &i in &perm[..n] {
            lab[i] = true;
        }
        unbiased(block_sums(&k, &lab), n, m)
    });
    let exceed = permutation_stats.iter().filter(|&&s| s >= mmd2_unbiased).count();
    Ok(MmdResult {
        mmd2_unbiased,
        mmd2_biased: biased.max(0.0),
        p_value: (1 + exceed) as f64 / (1 + n_permutations) as f64,
        n_permutations,
        sigma,
        length: len,
        n_real: n,
        n_syn: m,
        permutation_stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{simulate_ground_truth, SimulationConfig};
    use crate::geogrid::GridSpec;

    fn sim(n: usize, seed: u64) -> Corpus {
        let cfg = SimulationConfig {
            n_users: n,
            trace_len: 48,
            n_hotspots: 60,
            seed,
            ..Default::default()
        };
        simulate_ground_truth(&GridSpec::switzerland(), &cfg).unwrap()
    }

    #[test]
    fn self_comparison_is_exactly_zero() {
        let c = sim(12, 1);
        let r = mmd_test(&c, &c, 50, 3).unwrap();
        assert_eq!(r.mmd2_biased, 0.0);
        assert!(r.p_value > 0.05);
    }

    #[test]
    fn swapping_keeps_biased_statistic() {
        let a = sim(10, 1);
        let b = sim(14, 2);
        let ab = mmd_test(&a, &b, 20, 0).unwrap();
        let ba = mmd_test(&b, &a, 20, 0).unwrap();
        assert_eq!(ab.mmd2_biased.to_bits(), ba.mmd2_biased.to_bits());
        assert_eq!(ab.sigma.to_bits(), ba.sigma.to_bits());
    }

    #[test]
    fn needs_five_traces() {
        let a = sim(4, 1);
        let b = sim(10, 2);
        assert!(matches!(mmd_test(&a, &b, 10, 0), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn seeded_permutations() {
        let a = sim(8, 1);
        let b = sim(8, 2);
        assert_eq!(mmd_test(&a, &b, 30, 4).unwrap(), mmd_test(&a, &b, 30, 4).unwrap());
    }
}
