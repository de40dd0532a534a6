use serde::{Deserialize, Serialize};

use crate::dataio::persist::f64_base64;
use crate::{Error, Result};

/// Empirical distribution of one continuous variable.
///
/// The probability integral transform maps the i-th smallest atom to
/// `i / (n + 1)`, interpolates linearly between atoms and clamps to
/// `[1/(n+1), n/(n+1)]` outside the sample range. [`quantile`](Self::quantile)
/// is its monotone inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MarginData", into = "MarginData")]
pub struct EmpiricalMargin {
    sorted: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct MarginData {
    #[serde(with = "f64_base64")]
    sorted_sample: Vec<f64>,
}

impl TryFrom<MarginData> for EmpiricalMargin {
    type Error = Error;

    fn try_from(data: MarginData) -> Result<Self> {
        if data.sorted_sample.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Format("margin sample is not sorted".into()));
        }
        EmpiricalMargin::fit(&data.sorted_sample)
    }
}

impl From<EmpiricalMargin> for MarginData {
    fn from(m: EmpiricalMargin) -> Self {
        MarginData {
            sorted_sample: m.sorted,
        }
    }
}

impl EmpiricalMargin {
    pub fn fit(sample: &[f64]) -> Result<Self> {
        if sample.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "a margin needs at least 2 observations, got {}",
                sample.len()
            )));
        }
        if let Some(bad) = sample.iter().find(|x| !x.is_finite()) {
            return Err(Error::Domain(format!("non-finite observation {bad}")));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalMargin { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    pub fn sorted_sample(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    pub fn pit(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        let denom = (n + 1) as f64;
        // Number of atoms <= x.
        let k = self.sorted.partition_point(|&a| a <= x);
        if k == 0 {
            return 1.0 / denom;
        }
        if k == n {
            return n as f64 / denom;
        }
        let (lo, hi) = (self.sorted[k - 1], self.sorted[k]);
        (k as f64 + (x - lo) / (hi - lo)) / denom
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::out_of_range("u", u, "(0, 1)"));
        }
        let n = self.sorted.len();
        let mut r = u * (n + 1) as f64;
        let nearest = r.round();
        if (r - nearest).abs() < 1e-9 * nearest.max(1.0) {
            r = nearest;
        }
        if r <= 1.0 {
            return Ok(self.sorted[0]);
        }
        if r >= n as f64 {
            return Ok(self.sorted[n - 1]);
        }
        let i = r.floor() as usize;
        let frac = r - i as f64;
        let (lo, hi) = (self.sorted[i - 1], self.sorted[i]);
        Ok(lo + frac * (hi - lo))
    }

    /// Derivative of [`pit`](Self::pit): piecewise constant between atoms, zero outside.
    pub fn density(&self, x: f64) -> f64 {
        let n = self.sorted.len();
        let k = self.sorted.partition_point(|&a| a <= x);
        if k == 0 || k == n {
            return 0.0;
        }
        let gap = self.sorted[k] - self.sorted[k - 1];
        1.0 / ((n + 1) as f64 * gap)
    }
}

/// Rank-based pseudo-observations `rank / (n + 1)`; ties are ranked by position.
pub fn pseudo_observations(sample: &[f64]) -> Vec<f64> {
    let n = sample.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sample[a].total_cmp(&sample[b]));
    let mut out = vec![0.0; n];
    let denom = (n + 1) as f64;
    for (rank, &i) in idx.iter().enumerate() {
        out[i] = (rank + 1) as f64 / denom;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_sample_values() {
        let m = EmpiricalMargin::fit(&[30.0, 10.0, 20.0]).unwrap();
        assert_eq!(m.pit(10.0), 0.25);
        assert_eq!(m.pit(20.0), 0.5);
        assert_eq!(m.pit(30.0), 0.75);
        assert_eq!(m.pit(15.0), 0.375);
        assert_eq!(m.pit(-1e9), 0.25);
        assert_eq!(m.pit(1e9), 0.75);
        assert_eq!(m.quantile(0.5).unwrap(), 20.0);
        assert_eq!(m.quantile(0.1).unwrap(), 10.0);
        assert!(m.quantile(0.0).is_err());
        assert!(m.quantile(1.0).is_err());
        assert!(m.quantile(f64::NAN).is_err());
    }

    #[test]
    fn needs_two_points() {
        assert!(matches!(EmpiricalMargin::fit(&[1.0]), Err(Error::InsufficientData(_))));
        assert!(EmpiricalMargin::fit(&[1.0, f64::NAN]).is_err());
    }

    #[test]
    fn density_is_slope_of_pit() {
        let m = EmpiricalMargin::fit(&[0.0, 1.0, 3.0, 7.0]).unwrap();
        let x = 2.0;
        let h = 1e-6;
        let slope = (m.pit(x + h) - m.pit(x - h)) / (2.0 * h);
        assert!((slope - m.density(x)).abs() < 1e-9);
        assert_eq!(m.density(10.0), 0.0);
    }

    #[test]
    fn pseudo_observations_are_ranks() {
        assert_eq!(pseudo_observations(&[3.0, 1.0, 2.0]), vec![0.75, 0.25, 0.5]);
    }

    #[test]
    fn serde_roundtrip() {
        let m = EmpiricalMargin::fit(&[0.3, 0.1, 0.2]).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<EmpiricalMargin>(&json).unwrap(), m);
    }

    proptest! {
        #[test]
        fn pit_monotone_and_quantile_inverts_atoms(
            mut xs in proptest::collection::vec(-1e3f64..1e3, 2..60),
            a in -2e3f64..2e3,
            b in -2e3f64..2e3,
        ) {
            let m = EmpiricalMargin::fit(&xs).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.pit(lo) <= m.pit(hi));
            xs.sort_by(f64::total_cmp);
            xs.dedup();
            for &x in &xs {
                let back = m.quantile(m.pit(x)).unwrap();
                prop_assert!((back - x).abs() <= 1e-9 * (1.0 + x.abs()), "{} vs {}", back, x);
            }
        }
    }
}
