use serde::{Deserialize, Serialize};

use super::grow::{better, midpoint, partition, presort};
use super::{checked, softmax_row, GiniTally, Split};
use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{par, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostOptions {
    pub n_iters: usize,
    pub shrinkage: f64,
    /// Maximum number of splits per tree.
    pub depth: usize,
    /// Minimum training rows per leaf.
    pub min_node: usize,
}

impl Default for BoostOptions {
    fn default() -> Self {
        BoostOptions { n_iters: 400, shrinkage: 0.14, depth: 10, min_node: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegNode {
    /// `gain` holds the squared-error reduction of the split.
    pub split: Option<Split>,
    pub value: f64,
    pub n: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegTree {
    pub nodes: Vec<RegNode>,
}

impl RegTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut t = 0;
        while let Some(s) = &self.nodes[t].split {
            t = if row[s.column] <= s.threshold { s.left } else { s.right };
        }
        self.nodes[t].value
    }

    pub fn n_splits(&self) -> usize {
        self.nodes.iter().filter(|n| n.split.is_some()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub n_iters: usize,
    pub shrinkage: f64,
    pub interaction_depth: usize,
    pub min_node: usize,
    /// `stages[m][k]`: the class-`k` tree of iteration `m`.
    pub stages: Vec<Vec<RegTree>>,
    pub init_scores: Vec<f64>,
    /// Training deviance `-2 sum log p_{i,y_i}` before each iteration and
    /// after the last.
    pub train_deviance: Vec<f64>,
    pub schema: Schema,
}

struct Candidate {
    id: usize,
    lo: usize,
    hi: usize,
    best: Option<(usize, f64, usize, f64)>,
}

fn best_split(
    w: &WideMatrix,
    order: &[Vec<u32>],
    r: &[f64],
    lo: usize,
    hi: usize,
    min_node: usize,
) -> Option<(usize, f64, usize, f64)> {
    let n = hi - lo;
    if n < 2 * min_node.max(1) {
        return None;
    }
    let total: f64 = order[0][lo..hi].iter().map(|&i| r[i as usize]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<(usize, f64, usize, f64)> = None;
    let mut best_gain = 1e-12;
    for (c, col) in order.iter().enumerate() {
        let ord = &col[lo..hi];
        let mut sl = 0.0;
        for t in 0..n - 1 {
            let i = ord[t] as usize;
            sl += r[i];
            let nl = t + 1;
            if nl < min_node.max(1) || n - nl < min_node.max(1) {
                continue;
            }
            let (v, vn) = (w.get(i, c), w.get(ord[t + 1] as usize, c));
            if v < vn {
                let sr = total - sl;
                let gain = sl * sl / nl as f64 + sr * sr / (n - nl) as f64 - parent;
                if better(gain, best_gain) {
                    best_gain = gain;
                    best = Some((c, midpoint(v, vn), nl, gain));
                }
            }
        }
    }
    best
}

/// Best-first regression tree on residuals `r` with at most `depth` splits;
/// leaves carry the multinomial Newton step `(K-1)/K sum r / sum |r|(1-|r|)`.
/// Returns the tree and each row's leaf value.
fn grow_regression(
    w: &WideMatrix,
    sorted: &[Vec<u32>],
    r: &[f64],
    k: usize,
    opts: &BoostOptions,
) -> (RegTree, Vec<f64>) {
    let n = w.n_rows;
    let mut order = sorted.to_vec();
    let mut nodes = vec![RegNode { split: None, value: 0.0, n: n as u32 }];
    let mut leaves = vec![Candidate { id: 0, lo: 0, hi: n, best: best_split(w, &order, r, 0, n, opts.min_node) }];
    let mut go_left = vec![false; n];
    let mut buf = Vec::with_capacity(n);
    for _ in 0..opts.depth {
        let mut pick: Option<usize> = None;
        for (j, c) in leaves.iter().enumerate() {
            if let Some(b) = c.best {
                if pick.is_none_or(|p| better(b.3, leaves[p].best.unwrap().3)) {
                    pick = Some(j);
                }
            }
        }
        let Some(j) = pick else { break };
        let cand = leaves.swap_remove(j);
        let (col, threshold, nl, gain) = cand.best.unwrap();
        for (t, &i) in order[col][cand.lo..cand.hi].iter().enumerate() {
            go_left[i as usize] = t < nl;
        }
        partition(&mut order, cand.lo, cand.hi, &go_left, &mut buf);
        let (l, rt) = (nodes.len(), nodes.len() + 1);
        let mid = cand.lo + nl;
        nodes.push(RegNode { split: None, value: 0.0, n: nl as u32 });
        nodes.push(RegNode { split: None, value: 0.0, n: (cand.hi - mid) as u32 });
        nodes[cand.id].split = Some(Split { column: col, threshold, left: l, right: rt, gain });
        leaves.push(Candidate {
            id: l,
            lo: cand.lo,
            hi: mid,
            best: best_split(w, &order, r, cand.lo, mid, opts.min_node),
        });
        leaves.push(Candidate {
            id: rt,
            lo: mid,
            hi: cand.hi,
            best: best_split(w, &order, r, mid, cand.hi, opts.min_node),
        });
    }
    let scale = (k as f64 - 1.0) / k as f64;
    let mut fitted = vec![0.0; n];
    for c in &leaves {
        let rows = &order[0][c.lo..c.hi];
        let num: f64 = rows.iter().map(|&i| r[i as usize]).sum();
        let den: f64 = rows.iter().map(|&i| r[i as usize].abs() * (1.0 - r[i as usize].abs())).sum();
        let v = if den.abs() < 1e-150 { 0.0 } else { scale * num / den };
        nodes[c.id].value = v;
        rows.iter().for_each(|&i| fitted[i as usize] = v);
    }
    (RegTree { nodes }, fitted)
}

fn deviance(scores: &[f64], y: &[usize], k: usize) -> f64 {
    let mut p = vec![0.0; k];
    let mut d = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        softmax_row(&scores[i * k..(i + 1) * k], &mut p);
        d -= 2.0 * p[yi].max(f64::MIN_POSITIVE).ln();
    }
    d
}

/// Multinomial-deviance gradient boosting: each iteration fits one
/// regression tree per class to `1[y = k] - p_k` and adds `shrinkage` times
/// its leaf steps to the class score. Scores start at log class priors.
pub fn fit_boost(w: &WideMatrix, opts: &BoostOptions) -> Result<BoostModel> {
    if w.n_rows <= opts.min_node {
        return Err(Error::arg(format!("boosting needs more than {} rows", opts.min_node)));
    }
    if !(opts.shrinkage > 0.0) || !opts.shrinkage.is_finite() {
        return Err(Error::arg("shrinkage must be positive"));
    }
    let (n, k) = (w.n_rows, w.n_classes());
    let mut prior = vec![0.0; k];
    w.y.iter().for_each(|&c| prior[c] += 1.0 / n as f64);
    let init_scores: Vec<f64> = prior.iter().map(|p| p.max(1e-6).ln()).collect();
    let mut scores: Vec<f64> = (0..n).flat_map(|_| init_scores.iter().copied()).collect();
    let sorted = presort(w);
    let mut stages = Vec::with_capacity(opts.n_iters);
    let mut train_deviance = vec![deviance(&scores, &w.y, k)];
    let mut p = vec![0.0; n * k];
    for _ in 0..opts.n_iters {
        for i in 0..n {
            softmax_row(&scores[i * k..(i + 1) * k], &mut p[i * k..(i + 1) * k]);
        }
        let trees = par::map_indexed(k, |c| {
            let r: Vec<f64> = (0..n).map(|i| f64::from(u8::from(w.y[i] == c)) - p[i * k + c]).collect();
            grow_regression(w, &sorted, &r, k, opts)
        });
        let mut stage = Vec::with_capacity(k);
        for (c, (tree, fitted)) in trees.into_iter().enumerate() {
            for i in 0..n {
                scores[i * k + c] += opts.shrinkage * fitted[i];
            }
            stage.push(tree);
        }
        stages.push(stage);
        train_deviance.push(deviance(&scores, &w.y, k));
    }
    Ok(BoostModel {
        n_iters: opts.n_iters,
        shrinkage: opts.shrinkage,
        interaction_depth: opts.depth,
        min_node: opts.min_node,
        stages,
        init_scores,
        train_deviance,
        schema: Schema::of(w),
    })
}

impl BoostModel {
    /// Class scores, `N * K` row-major.
    pub fn scores(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        let w = checked(&self.schema, w)?;
        let rows = par::map_indexed(w.n_rows, |i| {
            let mut s = self.init_scores.clone();
            for stage in &self.stages {
                for (c, t) in stage.iter().enumerate() {
                    s[c] += self.shrinkage * t.predict(w.row(i));
                }
            }
            s
        });
        Ok(rows.concat())
    }

    /// Softmax of the class scores.
    pub fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        let k = self.schema.n_classes();
        let s = self.scores(w)?;
        let mut out = vec![0.0; s.len()];
        for (o, r) in out.chunks_mut(k).zip(s.chunks(k)) {
            softmax_row(r, o);
        }
        Ok(out)
    }

    /// Squared-error reduction per column over every split of every tree.
    pub fn gini_tally(&self) -> GiniTally {
        let mut decrease = vec![0.0; self.schema.columns.len()];
        for t in self.stages.iter().flatten() {
            for n in &t.nodes {
                if let Some(s) = &n.split {
                    decrease[s.column] += s.gain;
                }
            }
        }
        GiniTally { columns: self.schema.columns.clone(), decrease }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fixtures::separable;

    #[test]
    fn zero_iterations_predict_priors() {
        let w = separable(200, 1, 3);
        let m = fit_boost(&w, &BoostOptions { n_iters: 0, ..Default::default() }).unwrap();
        let mut prior = [0.0; 3];
        w.y.iter().for_each(|&c| prior[c] += 1.0 / 200.0);
        let p = m.predict_proba(&w).unwrap();
        for row in p.chunks(3) {
            for c in 0..3 {
                assert!((row[c] - prior[c]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deviance_falls() {
        let w = separable(300, 2, 4);
        let m = fit_boost(&w, &BoostOptions { n_iters: 60, ..Default::default() }).unwrap();
        assert!(m.train_deviance.last().unwrap() < &m.train_deviance[0]);
        assert!(m.train_deviance.windows(2).filter(|d| d[1] > d[0] + 1e-9).count() < 3);
    }

    #[test]
    fn stage_trees_respect_depth_and_leaf_size() {
        let w = separable(400, 2, 5);
        let opts = BoostOptions { n_iters: 10, shrinkage: 0.14, depth: 3, min_node: 15 };
        let m = fit_boost(&w, &opts).unwrap();
        for t in m.stages.iter().flatten() {
            assert!(t.n_splits() <= 3);
            assert!(t.nodes.iter().filter(|n| n.split.is_none()).all(|n| n.n >= 15));
        }
    }

    #[test]
    fn equal_scores_give_uniform_rows() {
        let w = separable(40, 0, 1);
        let mut m = fit_boost(&w, &BoostOptions { n_iters: 0, ..Default::default() }).unwrap();
        m.init_scores = vec![0.3; 3];
        for v in m.predict_proba(&w).unwrap() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn too_few_rows_rejected() {
        let w = separable(10, 0, 1);
        assert!(fit_boost(&w, &BoostOptions::default()).is_err());
    }
}
