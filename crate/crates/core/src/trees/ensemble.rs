use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::grow::{grow, presort, GrowParams};
use super::{checked, GiniTally, Tree};
use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{par, rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleKind {
    Bagging,
    RandomForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub n_trees: usize,
    /// Columns drawn per split; `None` uses all of them.
    pub mtry: Option<usize>,
    /// `false` trains every tree on the full sample.
    pub bootstrap: bool,
    pub min_split: u32,
}

impl EnsembleOptions {
    pub fn bagging(n_trees: usize) -> Self {
        EnsembleOptions { n_trees, mtry: None, bootstrap: true, min_split: 2 }
    }

    pub fn random_forest(n_trees: usize, mtry: usize) -> Self {
        EnsembleOptions { n_trees, mtry: Some(mtry), bootstrap: true, min_split: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub kind: EnsembleKind,
    pub trees: Vec<Tree>,
    pub mtry: Option<usize>,
    pub seed: u64,
    /// Rows left out of each tree's bootstrap sample.
    pub oob_indices: Vec<Vec<u32>>,
    pub schema: Schema,
}

/// Unpruned trees on bootstrap resamples, all columns searched at every split.
pub fn fit_bagging(w: &WideMatrix, n_trees: usize, seed: u64) -> Result<Ensemble> {
    fit_ensemble(w, &EnsembleOptions::bagging(n_trees), EnsembleKind::Bagging, seed)
}

/// As bagging, with a fresh uniform draw of `mtry` columns at every split.
pub fn fit_rf(w: &WideMatrix, n_trees: usize, mtry: usize, seed: u64) -> Result<Ensemble> {
    fit_ensemble(w, &EnsembleOptions::random_forest(n_trees, mtry), EnsembleKind::RandomForest, seed)
}

/// Tree `t` draws its bootstrap sample from stream `(seed, t, 0)` and its
/// split columns from stream `(seed, t, 1)`.
pub fn fit_ensemble(w: &WideMatrix, opts: &EnsembleOptions, kind: EnsembleKind, seed: u64) -> Result<Ensemble> {
    if opts.n_trees == 0 {
        return Err(Error::arg("an ensemble needs at least one tree"));
    }
    if w.n_rows < 2 {
        return Err(Error::arg("a tree needs at least two rows"));
    }
    if let Some(m) = opts.mtry {
        if m == 0 || m > w.n_cols {
            return Err(Error::arg(format!("mtry must lie in 1..={}, got {m}", w.n_cols)));
        }
    }
    let n = w.n_rows;
    let sorted = presort(w);
    let params = GrowParams { min_split: opts.min_split, mtry: opts.mtry };
    let fitted = par::map_indexed(opts.n_trees, |t| {
        let mut weights = vec![0u32; n];
        if opts.bootstrap {
            let mut r = rng::stream(seed, &[t as u64, 0]);
            for _ in 0..n {
                weights[r.random_range(0..n)] += 1;
            }
        } else {
            weights.iter_mut().for_each(|v| *v = 1);
        }
        let mut fr = rng::stream(seed, &[t as u64, 1]);
        let tree = grow(w, &sorted, &weights, &params, Some(&mut fr));
        let oob = (0..n as u32).filter(|&i| weights[i as usize] == 0).collect();
        (tree, oob)
    });
    let (trees, oob_indices) = fitted.into_iter().unzip();
    Ok(Ensemble { kind, trees, mtry: opts.mtry, seed, oob_indices, schema: Schema::of(w) })
}

impl Ensemble {
    /// Per-row vote counts, `N * K` row-major.
    pub fn votes(&self, w: &WideMatrix) -> Result<Vec<u32>> {
        let w = checked(&self.schema, w)?;
        let k = self.schema.n_classes();
        let rows = par::map_indexed(w.n_rows, |i| {
            let mut v = vec![0u32; k];
            for t in &self.trees {
                v[t.nodes[t.leaf_of(w.row(i))].leaf_label()] += 1;
            }
            v
        });
        Ok(rows.concat())
    }

    /// Vote fractions.
    pub fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        let n = self.trees.len() as f64;
        Ok(self.votes(w)?.into_iter().map(|v| f64::from(v) / n).collect())
    }

    pub fn gini_tally(&self) -> GiniTally {
        let mut decrease = vec![0.0; self.schema.columns.len()];
        for t in &self.trees {
            t.tally_into(&mut decrease);
        }
        GiniTally { columns: self.schema.columns.clone(), decrease }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fixtures::{matrix, separable};
    use crate::trees::{fit_cart, CartOptions, TreeNode};

    #[test]
    fn identity_sample_reproduces_unpruned_cart() {
        let w = separable(300, 2, 4);
        let opts = EnsembleOptions { n_trees: 1, mtry: None, bootstrap: false, min_split: 2 };
        let e = fit_ensemble(&w, &opts, EnsembleKind::Bagging, 1).unwrap();
        let c = fit_cart(&w, &CartOptions { max_leaves: None, min_split: 2 }).unwrap();
        assert_eq!(e.trees[0], c.tree);
        let pe = e.predict_proba(&w).unwrap();
        let pc = c.predict_proba(&w).unwrap();
        for i in 0..w.n_rows {
            let lbl = |p: &[f64]| (0..3).fold(0, |b, j| if p[j] > p[b] { j } else { b });
            assert_eq!(lbl(&pe[i * 3..i * 3 + 3]), lbl(&pc[i * 3..i * 3 + 3]));
        }
        assert!(e.oob_indices[0].is_empty());
    }

    #[test]
    fn bootstrap_leaves_out_about_a_third() {
        let w = separable(1000, 0, 6);
        let e = fit_bagging(&w, 40, 3).unwrap();
        let inbag: f64 = e.oob_indices.iter().map(|o| 1.0 - o.len() as f64 / 1000.0).sum::<f64>() / 40.0;
        let expected = 1.0 - (1.0 - 1.0 / 1000.0f64).powi(1000);
        assert!((inbag - expected).abs() < 0.02, "{inbag}");
    }

    #[test]
    fn vote_fractions() {
        let w = matrix(vec![vec![0.0]], vec![0], 2);
        let leaf = |c: Vec<u32>| Tree { nodes: vec![TreeNode { split: None, class_counts: c }] };
        let e = Ensemble {
            kind: EnsembleKind::Bagging,
            trees: vec![leaf(vec![3, 1]), leaf(vec![5, 0]), leaf(vec![1, 2])],
            mtry: None,
            seed: 0,
            oob_indices: vec![vec![]; 3],
            schema: Schema::of(&w),
        };
        let p = e.predict_proba(&w).unwrap();
        assert!((p[0] - 2.0 / 3.0).abs() < 1e-15 && (p[1] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn full_mtry_forest_equals_bagging() {
        let w = separable(200, 2, 8);
        let b = fit_bagging(&w, 5, 11).unwrap();
        let r = fit_rf(&w, 5, w.n_cols, 11).unwrap();
        assert_eq!(b.trees, r.trees);
    }

    #[test]
    fn training_is_seeded() {
        let w = separable(200, 3, 8);
        let a = fit_rf(&w, 6, 2, 5).unwrap();
        assert_eq!(a, fit_rf(&w, 6, 2, 5).unwrap());
        assert_ne!(a.trees, fit_rf(&w, 6, 2, 6).unwrap().trees);
    }

    #[test]
    fn mtry_bounds() {
        let w = separable(50, 0, 1);
        assert!(fit_rf(&w, 2, 4, 0).is_err());
        assert!(fit_rf(&w, 2, 0, 0).is_err());
        assert!(fit_bagging(&w, 0, 0).is_err());
    }

    #[test]
    fn rows_are_simplexes() {
        let w = separable(150, 2, 2);
        let p = fit_rf(&w, 7, 2, 3).unwrap().predict_proba(&w).unwrap();
        for row in p.chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
