//! Probit-transformation kernel estimator of a bivariate copula.
//!
//! Pseudo-observations `(u_i, v_i)` are mapped to normal scores
//! `(s_i, t_i) = (Φ⁻¹(u_i), Φ⁻¹(v_i))`, a Gaussian product-kernel density
//! `f̂` is estimated on the score scale and the copula density is
//! `ĉ(u, v) = f̂(Φ⁻¹u, Φ⁻¹v) / (φ(Φ⁻¹u) φ(Φ⁻¹v))`.
//!
//! The h-functions are kernel mixtures of normal CDFs,
//! `h(u | v) = Σ_i w_i(t) Φ((Φ⁻¹u − s_i) / b_s)` with `w_i ∝ φ((t − t_i) / b_t)`.
//! Evaluating that sum costs O(n), which is too slow inside vine recursions
//! over large samples, so each h-function is tabulated once at fit time: the
//! scores are linearly binned, the mixture is evaluated on a knot grid, and
//! values are stored as normal scores `Φ⁻¹(h)`. Lookups interpolate those
//! scores bilinearly, which keeps every row strictly increasing and makes the
//! inverse an exact piecewise-linear solve. The O(n) sums remain available as
//! [`h_u_given_v_exact`](KernelPairCopula::h_u_given_v_exact) and
//! [`density`](KernelPairCopula::density).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::persist::f64_base64;
use crate::normal;
use crate::rng::open01;
use crate::{Error, Result};

/// Smallest sample a pair copula accepts.
pub const MIN_PAIR_SAMPLE: usize = 10;

const BINS: usize = 160;
const COND_KNOTS: usize = 160;
const VAR_KNOTS: usize = 200;
const COND_MARGIN: f64 = 3.0;
const VAR_MARGIN: f64 = 5.0;
/// Outputs of h and its inverse are kept inside `[H_EPS, 1 - H_EPS]`.
pub const H_EPS: f64 = 1e-15;

/// Rule-of-thumb bandwidth `n^{-1/6} σ` for one score axis.
pub fn rule_of_thumb_bandwidth(scores: &[f64]) -> f64 {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    n.powf(-1.0 / 6.0) * var.sqrt()
}

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    step: f64,
    len: usize,
}

impl Axis {
    fn new(lo: f64, hi: f64, len: usize) -> Self {
        Axis {
            lo,
            step: (hi - lo) / (len - 1) as f64,
            len,
        }
    }

    fn at(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    /// Fractional knot coordinate, unclamped.
    fn coord(&self, x: f64) -> f64 {
        (x - self.lo) / self.step
    }
}

/// Tabulated conditional CDF of one score given the other, stored as `Φ⁻¹(h)`.
#[derive(Debug, Clone)]
struct CondTable {
    cond: Axis,
    var: Axis,
    z: Vec<f64>,
}

impl CondTable {
    fn build(var: &[f64], cond: &[f64], b_var: f64, b_cond: f64) -> Self {
        let (vmin, vmax) = min_max(var);
        let (cmin, cmax) = min_max(cond);
        let vbins = Axis::new(vmin, vmax, BINS);
        let cbins = Axis::new(cmin, cmax, BINS);

        // Linear binning: counts[cond_bin * BINS + var_bin].
        let mut counts = vec![0.0; BINS * BINS];
        for (&x, &y) in var.iter().zip(cond) {
            let (gx, fx) = split(vbins.coord(x), BINS);
            let (gy, fy) = split(cbins.coord(y), BINS);
            counts[gy * BINS + gx] += (1.0 - fx) * (1.0 - fy);
            counts[gy * BINS + gx + 1] += fx * (1.0 - fy);
            counts[(gy + 1) * BINS + gx] += (1.0 - fx) * fy;
            counts[(gy + 1) * BINS + gx + 1] += fx * fy;
        }
        let row_mass: Vec<f64> = counts.chunks_exact(BINS).map(|r| r.iter().sum()).collect();

        let cond_axis = Axis::new(
            cmin - COND_MARGIN * b_cond,
            cmax + COND_MARGIN * b_cond,
            COND_KNOTS,
        );
        let var_axis = Axis::new(vmin - VAR_MARGIN * b_var, vmax + VAR_MARGIN * b_var, VAR_KNOTS);

        // Lower and upper tail kernel CDFs for every (var knot, var bin).
        let mut lower = vec![0.0; VAR_KNOTS * BINS];
        let mut upper = vec![0.0; VAR_KNOTS * BINS];
        for m in 0..VAR_KNOTS {
            let s = var_axis.at(m);
            for h in 0..BINS {
                let d = (s - vbins.at(h)) / b_var;
                lower[m * BINS + h] = normal::cdf(d);
                upper[m * BINS + h] = normal::sf(d);
            }
        }

        let mut z = vec![0.0; COND_KNOTS * VAR_KNOTS];
        let mut mixture = vec![0.0; BINS];
        for k in 0..COND_KNOTS {
            let t = cond_axis.at(k);
            let log_w: Vec<f64> = (0..BINS)
                .map(|g| {
                    let d = (t - cbins.at(g)) / b_cond;
                    -0.5 * d * d
                })
                .collect();
            let top = (0..BINS)
                .filter(|&g| row_mass[g] > 0.0)
                .map(|g| log_w[g])
                .fold(f64::NEG_INFINITY, f64::max);
            mixture.iter_mut().for_each(|a| *a = 0.0);
            for g in 0..BINS {
                if row_mass[g] <= 0.0 {
                    continue;
                }
                let w = (log_w[g] - top).exp();
                if w < 1e-300 {
                    continue;
                }
                let row = &counts[g * BINS..(g + 1) * BINS];
                for (a, c) in mixture.iter_mut().zip(row) {
                    *a += w * c;
                }
            }
            let norm: f64 = mixture.iter().sum();
            let row = &mut z[k * VAR_KNOTS..(k + 1) * VAR_KNOTS];
            for (m, slot) in row.iter_mut().enumerate() {
                let lo: f64 = mixture
                    .iter()
                    .zip(&lower[m * BINS..(m + 1) * BINS])
                    .map(|(a, p)| a * p)
                    .sum::<f64>()
                    / norm;
                *slot = if lo < 0.5 {
                    normal::quantile(lo.max(1e-300))
                } else {
                    let hi: f64 = mixture
                        .iter()
                        .zip(&upper[m * BINS..(m + 1) * BINS])
                        .map(|(a, p)| a * p)
                        .sum::<f64>()
                        / norm;
                    normal::isf(hi.max(1e-300))
                };
            }
            // Underflowed tails can flatten a row; keep it strictly increasing.
            for m in 1..VAR_KNOTS {
                if row[m] <= row[m - 1] {
                    row[m] = row[m - 1] + 1e-9;
                }
            }
        }
        CondTable {
            cond: cond_axis,
            var: var_axis,
            z,
        }
    }

    fn cond_weights(&self, t: f64) -> (usize, f64) {
        let c = self.cond.coord(t).clamp(0.0, (self.cond.len - 1) as f64);
        let k = (c.floor() as usize).min(self.cond.len - 2);
        (k, c - k as f64)
    }

    /// Interpolated score at knot index `m` for the blended row.
    fn blended(&self, k: usize, lambda: f64, m: usize) -> f64 {
        let r0 = self.z[k * VAR_KNOTS + m];
        let r1 = self.z[(k + 1) * VAR_KNOTS + m];
        r0 + lambda * (r1 - r0)
    }

    fn eval(&self, s: f64, t: f64) -> f64 {
        let (k, lambda) = self.cond_weights(t);
        let last = VAR_KNOTS - 1;
        let c = self.var.coord(s);
        let z = if c <= 0.0 {
            let z0 = self.blended(k, lambda, 0);
            let z1 = self.blended(k, lambda, 1);
            z0 + c * (z1 - z0)
        } else if c >= last as f64 {
            let z0 = self.blended(k, lambda, last - 1);
            let z1 = self.blended(k, lambda, last);
            z1 + (c - last as f64) * (z1 - z0)
        } else {
            let m = c.floor() as usize;
            let mu = c - m as f64;
            let z0 = self.blended(k, lambda, m);
            let z1 = self.blended(k, lambda, m + 1);
            z0 + mu * (z1 - z0)
        };
        normal::cdf(z)
    }

    /// Score `s` with `eval(s, t) = Φ(z_target)`.
    fn invert(&self, z_target: f64, t: f64) -> f64 {
        let (k, lambda) = self.cond_weights(t);
        let last = VAR_KNOTS - 1;
        let z_first = self.blended(k, lambda, 0);
        let z_last = self.blended(k, lambda, last);
        let c = if z_target <= z_first {
            let slope = self.blended(k, lambda, 1) - z_first;
            (z_target - z_first) / slope
        } else if z_target >= z_last {
            let slope = z_last - self.blended(k, lambda, last - 1);
            last as f64 + (z_target - z_last) / slope
        } else {
            // Largest m with blended(m) <= z_target.
            let (mut lo, mut hi) = (0usize, last);
            while hi - lo > 1 {
                let mid = (lo + hi) / 2;
                if self.blended(k, lambda, mid) <= z_target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let z0 = self.blended(k, lambda, lo);
            let z1 = self.blended(k, lambda, lo + 1);
            lo as f64 + (z_target - z0) / (z1 - z0)
        };
        self.var.lo + c * self.var.step
    }
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Splits a fractional bin coordinate into (left bin, weight of right bin).
fn split(c: f64, len: usize) -> (usize, f64) {
    let c = c.clamp(0.0, (len - 1) as f64);
    let g = (c.floor() as usize).min(len - 2);
    (g, c - g as f64)
}

fn clamp_unit(p: f64) -> f64 {
    p.clamp(H_EPS, 1.0 - H_EPS)
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::out_of_range(name, x, "(0, 1)"))
    }
}

fn score(p: f64) -> f64 {
    if p < 0.5 {
        normal::quantile(p)
    } else {
        normal::isf(1.0 - p)
    }
}

#[derive(Serialize, Deserialize)]
struct PairData {
    #[serde(with = "f64_base64")]
    s: Vec<f64>,
    #[serde(with = "f64_base64")]
    t: Vec<f64>,
    bandwidth: [f64; 2],
}

/// Kernel estimate of a bivariate copula; `u` is the first argument, `v` the second.
#[derive(Debug, Clone)]
pub struct KernelPairCopula {
    s: Vec<f64>,
    t: Vec<f64>,
    bandwidth: [f64; 2],
    u_given_v: CondTable,
    v_given_u: CondTable,
}

impl PartialEq for KernelPairCopula {
    fn eq(&self, other: &Self) -> bool {
        self.s == other.s && self.t == other.t && self.bandwidth == other.bandwidth
    }
}

impl Serialize for KernelPairCopula {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        PairData {
            s: self.s.clone(),
            t: self.t.clone(),
            bandwidth: self.bandwidth,
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for KernelPairCopula {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let data = PairData::deserialize(de)?;
        KernelPairCopula::from_scores(data.s, data.t, data.bandwidth).map_err(serde::de::Error::custom)
    }
}

impl KernelPairCopula {
    /// Fits on pseudo-observations with the rule-of-thumb bandwidth.
    pub fn fit(u: &[f64], v: &[f64]) -> Result<Self> {
        Self::fit_scaled(u, v, 1.0)
    }

    /// Like [`fit`](Self::fit) with both bandwidths multiplied by `scale`.
    pub fn fit_scaled(u: &[f64], v: &[f64], scale: f64) -> Result<Self> {
        if u.len() != v.len() {
            return Err(Error::Domain(format!(
                "pair samples differ in length ({} vs {})",
                u.len(),
                v.len()
            )));
        }
        if u.len() < MIN_PAIR_SAMPLE {
            return Err(Error::InsufficientData(format!(
                "a pair copula needs at least {MIN_PAIR_SAMPLE} pairs, got {}",
                u.len()
            )));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::out_of_range("bandwidth scale", scale, "(0, inf)"));
        }
        for (&a, &b) in u.iter().zip(v) {
            check_unit("u", a)?;
            check_unit("v", b)?;
        }
        let s: Vec<f64> = u.iter().map(|&x| score(x)).collect();
        let t: Vec<f64> = v.iter().map(|&x| score(x)).collect();
        let bandwidth = [
            scale * rule_of_thumb_bandwidth(&s),
            scale * rule_of_thumb_bandwidth(&t),
        ];
        Self::from_scores(s, t, bandwidth)
    }

    /// Rebuilds a fitted copula from its normal scores and bandwidths.
    pub fn from_scores(s: Vec<f64>, t: Vec<f64>, bandwidth: [f64; 2]) -> Result<Self> {
        if s.len() != t.len() || s.len() < MIN_PAIR_SAMPLE {
            return Err(Error::InsufficientData("score arrays too short or uneven".into()));
        }
        if !(bandwidth[0] > 0.0 && bandwidth[1] > 0.0) {
            return Err(Error::Domain(format!(
                "bandwidths must be positive, got {bandwidth:?} (constant input?)"
            )));
        }
        if s.iter().chain(&t).any(|x| !x.is_finite()) {
            return Err(Error::Domain("normal scores must be finite".into()));
        }
        let u_given_v = CondTable::build(&s, &t, bandwidth[0], bandwidth[1]);
        let v_given_u = CondTable::build(&t, &s, bandwidth[1], bandwidth[0]);
        Ok(KernelPairCopula {
            s,
            t,
            bandwidth,
            u_given_v,
            v_given_u,
        })
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    pub fn bandwidth(&self) -> [f64; 2] {
        self.bandwidth
    }

    pub fn scores(&self) -> (&[f64], &[f64]) {
        (&self.s, &self.t)
    }

    /// `P(U <= u | V = v)`.
    pub fn h_u_given_v(&self, u: f64, v: f64) -> f64 {
        clamp_unit(self.u_given_v.eval(score(u), score(v)))
    }

    /// `P(V <= v | U = u)`.
    pub fn h_v_given_u(&self, v: f64, u: f64) -> f64 {
        clamp_unit(self.v_given_u.eval(score(v), score(u)))
    }

    /// Inverse of [`h_u_given_v`](Self::h_u_given_v) in its first argument.
    pub fn hinv_u_given_v(&self, p: f64, v: f64) -> f64 {
        clamp_unit(normal::cdf(self.u_given_v.invert(score(p), score(v))))
    }

    /// Inverse of [`h_v_given_u`](Self::h_v_given_u) in its first argument.
    pub fn hinv_v_given_u(&self, p: f64, u: f64) -> f64 {
        clamp_unit(normal::cdf(self.v_given_u.invert(score(p), score(u))))
    }

    /// Checked variant of [`h_u_given_v`](Self::h_u_given_v).
    pub fn try_h_u_given_v(&self, u: f64, v: f64) -> Result<f64> {
        check_unit("u", u)?;
        check_unit("v", v)?;
        Ok(self.h_u_given_v(u, v))
    }

    /// Checked variant of [`hinv_u_given_v`](Self::hinv_u_given_v).
    pub fn try_hinv_u_given_v(&self, p: f64, v: f64) -> Result<f64> {
        check_unit("p", p)?;
        check_unit("v", v)?;
        let u = self.hinv_u_given_v(p, v);
        if !u.is_finite() {
            return Err(Error::Numerical(format!("h-inverse diverged at p={p}, v={v}")));
        }
        Ok(u)
    }

    /// Direct O(n) evaluation of the kernel-mixture h-function.
    pub fn h_u_given_v_exact(&self, u: f64, v: f64) -> f64 {
        let (su, tv) = (score(u), score(v));
        let [bs, bt] = self.bandwidth;
        let log_w: Vec<f64> = self.t.iter().map(|&ti| -0.5 * ((tv - ti) / bt).powi(2)).collect();
        let top = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (mut num, mut den) = (0.0, 0.0);
        for (lw, &si) in log_w.iter().zip(&self.s) {
            let w = (lw - top).exp();
            num += w * normal::cdf((su - si) / bs);
            den += w;
        }
        num / den
    }

    /// Log of the kernel density of the normal scores at `(s, t)`.
    pub fn ln_score_density(&self, s: f64, t: f64) -> f64 {
        let [bs, bt] = self.bandwidth;
        let terms: Vec<f64> = self
            .s
            .iter()
            .zip(&self.t)
            .map(|(&si, &ti)| normal::ln_pdf((s - si) / bs) + normal::ln_pdf((t - ti) / bt))
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = terms.iter().map(|x| (x - top).exp()).sum();
        top + sum.ln() - (self.n() as f64).ln() - bs.ln() - bt.ln()
    }

    /// Log copula density `ln ĉ(u, v)`.
    pub fn ln_density(&self, u: f64, v: f64) -> f64 {
        let (s, t) = (score(u), score(v));
        self.ln_score_density(s, t) - normal::ln_pdf(s) - normal::ln_pdf(t)
    }

    pub fn density(&self, u: f64, v: f64) -> f64 {
        self.ln_density(u, v).exp()
    }

    /// Draws `(u, v)` pairs by inverse Rosenblatt: `v` uniform, then `u | v`.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<(f64, f64)> {
        (0..n)
            .map(|_| {
                let v = open01(rng);
                let p = open01(rng);
                (self.hinv_u_given_v(p, v), v)
            })
            .collect()
    }
}
