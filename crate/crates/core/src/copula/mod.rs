//! Empirical margins, kernel pair-copulas and the D-vine built from them.

mod kernel;
mod margin;
mod vine;

use serde::{Deserialize, Serialize};

pub use kernel::{rule_of_thumb_bandwidth, KernelPairCopula, H_EPS, MIN_PAIR_SAMPLE};
pub use margin::{pseudo_observations, EmpiricalMargin};
pub use vine::{VineModel, VineOptions, DEFAULT_TRUNCATION, MIN_VINE_ROWS};

use crate::{normal, Result};

/// Two margins glued by a kernel copula: the two-step joint density estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateModel {
    pub margins: [EmpiricalMargin; 2],
    pub copula: KernelPairCopula,
}

impl BivariateModel {
    pub fn fit(x1: &[f64], x2: &[f64]) -> Result<Self> {
        let margins = [EmpiricalMargin::fit(x1)?, EmpiricalMargin::fit(x2)?];
        let copula = KernelPairCopula::fit(&pseudo_observations(x1), &pseudo_observations(x2))?;
        Ok(BivariateModel { margins, copula })
    }

    /// `ln f̂(x1, x2)` by change of variables from the score-scale kernel density.
    pub fn ln_density(&self, x1: f64, x2: f64) -> f64 {
        let (u, v) = (self.margins[0].pit(x1), self.margins[1].pit(x2));
        let (s, t) = (normal::quantile(u), normal::quantile(v));
        self.copula.ln_score_density(s, t) + self.margins[0].density(x1).ln() - normal::ln_pdf(s)
            + self.margins[1].density(x2).ln()
            - normal::ln_pdf(t)
    }

    /// `ln f̂_1 + ln f̂_2 + ln ĉ(F̂_1, F̂_2)`.
    pub fn ln_density_sklar(&self, x1: f64, x2: f64) -> f64 {
        self.margins[0].density(x1).ln()
            + self.margins[1].density(x2).ln()
            + self.copula.ln_density(self.margins[0].pit(x1), self.margins[1].pit(x2))
    }
}
