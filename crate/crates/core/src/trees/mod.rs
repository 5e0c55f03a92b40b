//! Classification trees grown on Gini impurity, bagged and random-forest
//! ensembles of them, and multinomial gradient boosting on regression trees.

mod boost;
mod cart;
mod ensemble;
mod grow;

pub use boost::{fit_boost, BoostModel, BoostOptions, RegNode, RegTree};
pub use cart::{fit_cart, prune_to_leaves, Cart, CartOptions};
pub use ensemble::{fit_bagging, fit_ensemble, fit_rf, Ensemble, EnsembleKind, EnsembleOptions};

use serde::{Deserialize, Serialize};

use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{Error, Result};

/// `1 - sum (c_k / n)^2`.
pub fn gini_impurity(counts: &[f64]) -> Result<f64> {
    if counts.iter().any(|c| !(*c >= 0.0)) {
        return Err(Error::arg("class counts must be nonnegative"));
    }
    let n: f64 = counts.iter().sum();
    if n == 0.0 {
        return Err(Error::arg("Gini impurity of an empty node"));
    }
    Ok(1.0 - counts.iter().map(|c| (c / n) * (c / n)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub column: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// Weighted impurity decrease `n G(t) - n_l G(l) - n_r G(r)`.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split: Option<Split>,
    /// Training class counts (bootstrap multiplicities included).
    pub class_counts: Vec<u32>,
}

impl TreeNode {
    pub fn n(&self) -> u32 {
        self.class_counts.iter().sum()
    }

    pub fn leaf_label(&self) -> usize {
        argmax_u32(&self.class_counts)
    }

    pub fn leaf_probs(&self) -> Vec<f64> {
        let n = f64::from(self.n());
        self.class_counts.iter().map(|&c| f64::from(c) / n).collect()
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

/// Binary classification tree stored as an arena; node 0 is the root and
/// rows with `x[column] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_of(&self, row: &[f64]) -> usize {
        let mut t = 0;
        while let Some(s) = &self.nodes[t].split {
            t = if row[s.column] <= s.threshold { s.left } else { s.right };
        }
        t
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match &t.nodes[i].split {
                None => 0,
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
            }
        }
        go(self, 0)
    }

    /// Adds every split's impurity decrease to its column.
    pub fn tally_into(&self, out: &mut [f64]) {
        for n in &self.nodes {
            if let Some(s) = &n.split {
                out[s.column] += s.gain;
            }
        }
    }
}

/// Accumulated impurity decrease per column over every split of a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniTally {
    pub columns: Vec<String>,
    pub decrease: Vec<f64>,
}

pub(crate) fn argmax_u32(v: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in v.iter().enumerate() {
        if c > v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn softmax_row(scores: &[f64], out: &mut [f64]) {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for (o, v) in out.iter_mut().zip(scores) {
        *o = (v - m).exp();
        s += *o;
    }
    out.iter_mut().for_each(|o| *o /= s);
}

/// Rows of `w` after checking them against the training schema.
pub(crate) fn checked<'a>(schema: &Schema, w: &'a WideMatrix) -> Result<&'a WideMatrix> {
    schema.check(w)?;
    Ok(w)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::rng;
    use rand::Rng as _;

    pub fn matrix(rows: Vec<Vec<f64>>, y: Vec<usize>, k: usize) -> WideMatrix {
        let p = rows.first().map_or(0, Vec::len);
        WideMatrix::from_rows(
            &rows,
            (0..p).map(|j| format!("z{j}")).collect(),
            y,
            (0..k).map(|c| format!("c{c}")).collect(),
        )
        .unwrap()
    }

    /// Four clusters at the corners of the unit square labeled by XOR, with
    /// cluster sizes `sizes` (order: (0,0), (0,1), (1,0), (1,1)) and uniform
    /// jitter of half-width `jitter`.
    pub fn xor(sizes: [usize; 4], jitter: f64, seed: u64) -> WideMatrix {
        let mut r = rng::stream(seed, &[]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, &(a, b)) in [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate() {
            for _ in 0..sizes[c] {
                let mut j = || if jitter > 0.0 { r.random_range(-jitter..jitter) } else { 0.0 };
                let row = vec![a as f64 + j(), b as f64 + j()];
                rows.push(row);
                y.push(a ^ b);
            }
        }
        matrix(rows, y, 2)
    }

    /// Three informative columns driving a 3-class label, plus `noise`
    /// pure-noise columns.
    pub fn separable(n: usize, noise: usize, seed: u64) -> WideMatrix {
        let mut r = rng::stream(seed, &[]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..3 + noise).map(|_| r.random_range(-1.0..1.0)).collect();
            let label = if x[0] + 0.5 * x[1] > 0.3 {
                0
            } else if x[2] > 0.0 {
                1
            } else {
                2
            };
            rows.push(x);
            y.push(label);
        }
        matrix(rows, y, 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gini_closed_forms() {
        assert_eq!(gini_impurity(&[10.0, 0.0]).unwrap(), 0.0);
        assert_eq!(gini_impurity(&[5.0, 5.0]).unwrap(), 0.5);
        assert_eq!(gini_impurity(&[1.0, 1.0, 1.0, 1.0]).unwrap(), 0.75);
        assert!(gini_impurity(&[0.0, 0.0]).is_err());
        assert!(gini_impurity(&[-1.0, 2.0]).is_err());
    }
}
