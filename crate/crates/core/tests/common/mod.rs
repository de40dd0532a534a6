//! Oracles shared by the integration tests. None of these call into the
//! code paths they are used to check.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng) -> f64 {
    loop {
        let u: f64 = r.random();
        if u > 0.0 {
            return u;
        }
    }
}

/// Box-Muller standard normal.
pub fn std_normal(r: &mut ChaCha8Rng) -> f64 {
    let (a, b) = (uniform(r), uniform(r));
    (-2.0 * a.ln()).sqrt() * (2.0 * std::f64::consts::PI * b).cos()
}

/// Abramowitz-Stegun 7.1.26 based normal CDF (|error| < 1.5e-7).
pub fn phi_cdf(x: f64) -> f64 {
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.327_591_1 * z);
    let poly = t * (0.254_829_592 + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    let erf = 1.0 - poly * (-z * z).exp();
    if x >= 0.0 {
        0.5 * (1.0 + erf)
    } else {
        0.5 * (1.0 - erf)
    }
}

/// Pairs from a Gaussian copula with correlation `rho`, on the uniform scale.
pub fn gaussian_copula(n: usize, rho: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut r = rng(seed);
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        let a = std_normal(&mut r);
        let b = rho * a + (1.0 - rho * rho).sqrt() * std_normal(&mut r);
        u.push(phi_cdf(a));
        v.push(phi_cdf(b));
    }
    (u, v)
}

/// Rank pseudo-observations (independent re-implementation for tests).
pub fn ranks(xs: &[f64]) -> Vec<f64> {
    let n = xs.len();
    xs.iter()
        .map(|&x| (xs.iter().filter(|&&y| y < x).count() + 1) as f64 / (n + 1) as f64)
        .collect()
}

/// Gaussian AR(1) with unit stationary variance.
pub fn ar1(n: usize, rho: f64, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let mut x = std_normal(&mut r);
    (0..n)
        .map(|_| {
            let out = x;
            x = rho * x + (1.0 - rho * rho).sqrt() * std_normal(&mut r);
            out
        })
        .collect()
}

/// Columns `(x_{t-w}, ..., x_t)` of a series.
pub fn lag_columns(series: &[f64], w: usize) -> Vec<Vec<f64>> {
    (0..=w)
        .map(|lag| series[lag..series.len() - w + lag].to_vec())
        .collect()
}

/// Kendall's tau-a by brute force over all pairs.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            let a = (x[i] - x[j]).signum() * (y[i] - y[j]).signum();
            s += a as i64;
        }
    }
    s as f64 / (n * (n - 1) / 2) as f64
}

/// Kendall's tau of a Gaussian copula.
pub fn gaussian_tau(rho: f64) -> f64 {
    2.0 / std::f64::consts::PI * rho.asin()
}

/// One-sample KS statistic against U(0,1).
pub fn ks_uniform(sample: &[f64]) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| (x - i as f64 / n).abs().max(((i + 1) as f64 / n - x).abs()))
        .fold(0.0, f64::max)
}

/// Two-sample KS statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// KS critical value at alpha = 0.01 (asymptotic, c(alpha) = 1.628).
pub fn ks_critical_01(n: usize) -> f64 {
    1.628 / (n as f64).sqrt()
}

pub fn ks_critical_01_two(n: usize, m: usize) -> f64 {
    1.628 * ((n + m) as f64 / (n * m) as f64).sqrt()
}

pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    sxy / (sxx * syy).sqrt()
}

pub fn binary_entropy(p: f64) -> f64 {
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}
