//! D-vine over an ordered set of variables with kernel pair-copulas.
//!
//! Variables sit on a path `order[0] - order[1] - ... - order[d-1]`. Tree `j`
//! joins path positions `(i, i + j)` conditionally on the positions between
//! them. The last position is the sampling target: its conditional
//! distribution given all others is a closed chain of h-function inversions.
//! Trees deeper than the truncation level are independence copulas.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelPairCopula;
use super::margin::{pseudo_observations, EmpiricalMargin};
use crate::rng::open01;
use crate::{par, Error, Result};

pub const MIN_VINE_ROWS: usize = 100;
pub const DEFAULT_TRUNCATION: usize = 3;

/// Keeps h-transformed pseudo-observations away from 0 and 1.
const PSEUDO_EPS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VineOptions {
    /// Number of fitted trees; deeper trees are independence.
    pub truncation: usize,
    /// Multiplier on the rule-of-thumb bandwidth of every edge.
    pub bandwidth_scale: f64,
}

impl Default for VineOptions {
    fn default() -> Self {
        VineOptions {
            truncation: DEFAULT_TRUNCATION,
            bandwidth_scale: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VineModel {
    /// Path position -> column index.
    order: Vec<usize>,
    /// One margin per column, in column order.
    margins: Vec<EmpiricalMargin>,
    /// `trees[j - 1][i]` joins path positions `i` and `i + j`.
    trees: Vec<Vec<KernelPairCopula>>,
}

impl VineModel {
    /// Fits a D-vine on `columns` (each a full variable sample) along the path `order`.
    pub fn fit(columns: &[Vec<f64>], order: &[usize], opts: &VineOptions) -> Result<Self> {
        let d = columns.len();
        if d < 2 {
            return Err(Error::InsufficientData(format!("a vine needs 2+ variables, got {d}")));
        }
        let mut check = order.to_vec();
        check.sort_unstable();
        if check != (0..d).collect::<Vec<_>>() {
            return Err(Error::Domain(format!("order {order:?} is not a permutation of 0..{d}")));
        }
        let n = columns[0].len();
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Domain("columns differ in length".into()));
        }
        if n < MIN_VINE_ROWS {
            return Err(Error::InsufficientData(format!(
                "vine fitting needs at least {MIN_VINE_ROWS} rows, got {n}"
            )));
        }
        if opts.truncation == 0 {
            return Err(Error::Domain("truncation level must be at least 1".into()));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain(format!("column {j} has non-finite values")));
            }
            if c.iter().all(|&x| x == c[0]) {
                return Err(Error::ConstantColumn(j));
            }
        }

        let margins = columns
            .iter()
            .map(|c| EmpiricalMargin::fit(c))
            .collect::<Result<Vec<_>>>()?;
        let u: Vec<Vec<f64>> = order.iter().map(|&c| pseudo_observations(&columns[c])).collect();

        let depth = opts.truncation.min(d - 1);
        let mut trees: Vec<Vec<KernelPairCopula>> = Vec::with_capacity(depth);
        // fwd[i] = F(x_i | x_{i+1..i+j}), bwd[i] = F(x_{i+j} | x_{i..i+j-1}) at the current level.
        let mut fwd = u.clone();
        let mut bwd = u;
        for j in 1..=depth {
            let n_edges = d - j;
            let edges = par::try_map_range(n_edges, |i| {
                KernelPairCopula::fit_scaled(&fwd[i], &bwd[i + 1], opts.bandwidth_scale)
            })?;
            if j < depth {
                let next = par::map_range(n_edges, |i| {
                    let (a, b) = (&fwd[i], &bwd[i + 1]);
                    let f: Vec<f64> = a
                        .iter()
                        .zip(b)
                        .map(|(&x, &y)| edges[i].h_u_given_v(x, y).clamp(PSEUDO_EPS, 1.0 - PSEUDO_EPS))
                        .collect();
                    let g: Vec<f64> = a
                        .iter()
                        .zip(b)
                        .map(|(&x, &y)| edges[i].h_v_given_u(y, x).clamp(PSEUDO_EPS, 1.0 - PSEUDO_EPS))
                        .collect();
                    (f, g)
                });
                (fwd, bwd) = next.into_iter().unzip();
            }
            trees.push(edges);
        }
        Ok(VineModel {
            order: order.to_vec(),
            margins,
            trees,
        })
    }

    /// Fits on a lag matrix with columns `(x_{t-w}, ..., x_{t-1}, x_t, tau_t)`.
    ///
    /// The path places time of day between the lags and the target,
    /// `x_{t-w} - ... - x_{t-1} - tau_t - x_t`, so `x_t` is the last variable
    /// and is sampled by a closed h-chain given both its history and the clock.
    pub fn fit_lagged(columns: &[Vec<f64>], opts: &VineOptions) -> Result<Self> {
        let d = columns.len();
        if d < 3 {
            return Err(Error::InsufficientData(format!(
                "a lag matrix needs w + 2 >= 3 columns, got {d}"
            )));
        }
        let w = d - 2;
        let mut order: Vec<usize> = (0..w).collect();
        order.push(w + 1);
        order.push(w);
        Self::fit(columns, &order, opts)
    }

    pub fn dim(&self) -> usize {
        self.order.len()
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn margins(&self) -> &[EmpiricalMargin] {
        &self.margins
    }

    /// Column index of the sampling target (last on the path).
    pub fn target_column(&self) -> usize {
        self.order[self.order.len() - 1]
    }

    pub fn depth(&self) -> usize {
        self.trees.len()
    }

    /// Edge joining path positions `i` and `i + tree`; `None` for truncated trees.
    pub fn edge(&self, tree: usize, i: usize) -> Option<&KernelPairCopula> {
        self.trees.get(tree.checked_sub(1)?)?.get(i)
    }

    /// Given uniforms for path positions `0..k`, maps `p` to the uniform of position `k`.
    fn next_uniform(&self, prefix: &[f64], p: f64) -> f64 {
        let k = prefix.len();
        if k == 0 {
            return p;
        }
        let depth = self.trees.len();
        // Conditional uniforms within the prefix, up to the level the chain needs.
        let levels = depth.min(k).saturating_sub(1);
        let mut fwd: Vec<Vec<f64>> = Vec::with_capacity(levels + 1);
        let mut bwd: Vec<Vec<f64>> = Vec::with_capacity(levels + 1);
        fwd.push(prefix.to_vec());
        bwd.push(prefix.to_vec());
        for j in 1..=levels {
            let width = k - j;
            let mut f = Vec::with_capacity(width);
            let mut g = Vec::with_capacity(width);
            for i in 0..width {
                let (a, b) = (fwd[j - 1][i], bwd[j - 1][i + 1]);
                let e = &self.trees[j - 1][i];
                f.push(e.h_u_given_v(a, b));
                g.push(e.h_v_given_u(b, a));
            }
            fwd.push(f);
            bwd.push(g);
        }
        let mut q = p;
        for j in (1..=k.min(depth)).rev() {
            let i = k - j;
            q = self.trees[j - 1][i].hinv_v_given_u(q, fwd[j - 1][i]);
        }
        q
    }

    /// Draws the target variable given every other column.
    ///
    /// `conditioners` holds one value per column in column order, skipping the
    /// target column.
    pub fn sample_conditional<R: Rng + ?Sized>(&self, conditioners: &[f64], rng: &mut R) -> Result<f64> {
        let d = self.dim();
        if conditioners.len() != d - 1 {
            return Err(Error::Domain(format!(
                "expected {} conditioning values, got {}",
                d - 1,
                conditioners.len()
            )));
        }
        let target = self.target_column();
        let mut prefix = Vec::with_capacity(d - 1);
        for &col in &self.order[..d - 1] {
            let slot = if col < target { col } else { col - 1 };
            let x = conditioners[slot];
            if !x.is_finite() {
                return Err(Error::Domain(format!("conditioning value {x} for column {col}")));
            }
            prefix.push(self.margins[col].pit(x));
        }
        let u = self.next_uniform(&prefix, open01(rng));
        self.margins[target].quantile(u)
    }

    /// Draws `n` joint samples (rows in column order) by sequential inverse Rosenblatt.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
        let d = self.dim();
        let mut rows = Vec::with_capacity(n);
        for _ in 0..n {
            let mut u = Vec::with_capacity(d);
            for _ in 0..d {
                let next = self.next_uniform(&u, open01(rng));
                u.push(next);
            }
            let mut row = vec![0.0; d];
            for (pos, &col) in self.order.iter().enumerate() {
                row[col] = self.margins[col].quantile(u[pos])?;
            }
            rows.push(row);
        }
        Ok(rows)
    }
}
