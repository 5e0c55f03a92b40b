//! Greedy Gini growth over presorted columns. Each node owns the same range
//! `lo..hi` of every column's sorted row list; splitting stably partitions
//! those ranges, so no node ever re-sorts.

use rand::seq::index;

use super::{Split, Tree, TreeNode};
use crate::dataset::WideMatrix;
use crate::prelude::*;
use crate::rng::Rng;

/// Row indices of every column sorted by value (row index breaks ties).
pub(crate) fn presort(w: &WideMatrix) -> Vec<Vec<u32>> {
    (0..w.n_cols)
        .map(|j| {
            let mut o: Vec<u32> = (0..w.n_rows as u32).collect();
            o.sort_by(|&a, &b| w.get(a as usize, j).total_cmp(&w.get(b as usize, j)).then(a.cmp(&b)));
            o
        })
        .collect()
}

pub(crate) struct GrowParams {
    pub min_split: u32,
    /// Columns drawn per node; `None` searches all of them.
    pub mtry: Option<usize>,
}

pub(crate) fn better(gain: f64, best: f64) -> bool {
    gain > best + 1e-12 * best.abs().max(1.0)
}

/// Midpoint of two consecutive distinct values that still separates them.
pub(crate) fn midpoint(v: f64, next: f64) -> f64 {
    let m = v + (next - v) / 2.0;
    if m < next {
        m
    } else {
        v
    }
}

/// Stably moves the rows flagged in `go_left` to the front of every
/// column's `lo..hi` range.
pub(crate) fn partition(order: &mut [Vec<u32>], lo: usize, hi: usize, go_left: &[bool], buf: &mut Vec<u32>) {
    for col in order.iter_mut() {
        buf.clear();
        let seg = &mut col[lo..hi];
        let mut l = 0;
        for t in 0..seg.len() {
            let i = seg[t];
            if go_left[i as usize] {
                seg[l] = i;
                l += 1;
            } else {
                buf.push(i);
            }
        }
        seg[l..].copy_from_slice(buf);
    }
}

struct Best {
    column: usize,
    threshold: f64,
    n_left_rows: usize,
    gain: f64,
}

/// Grows a tree on the rows with nonzero `weights`, each counted with its
/// weight (bootstrap multiplicity).
pub(crate) fn grow(
    w: &WideMatrix,
    presorted: &[Vec<u32>],
    weights: &[u32],
    params: &GrowParams,
    mut rng: Option<&mut Rng>,
) -> Tree {
    let p = w.n_cols;
    let k = w.n_classes();
    let mut order: Vec<Vec<u32>> =
        presorted.iter().map(|o| o.iter().copied().filter(|&i| weights[i as usize] > 0).collect()).collect();
    let n_rows = order.first().map_or(0, Vec::len);
    let placeholder = TreeNode { split: None, class_counts: vec![0; k] };
    let mut nodes = vec![placeholder.clone()];
    let mut stack = vec![(0usize, 0usize, n_rows)];
    let mut go_left = vec![false; w.n_rows];
    let mut buf = Vec::with_capacity(n_rows);
    let all_cols: Vec<usize> = (0..p).collect();
    let (mut left, mut right) = (vec![0.0f64; k], vec![0.0f64; k]);

    while let Some((id, lo, hi)) = stack.pop() {
        let mut counts = vec![0u32; k];
        if p > 0 {
            for &i in &order[0][lo..hi] {
                counts[w.y[i as usize]] += weights[i as usize];
            }
        }
        let n: u32 = counts.iter().sum();
        nodes[id].class_counts = counts.clone();
        if p == 0 || n < params.min_split.max(2) || counts.iter().filter(|&&c| c > 0).count() < 2 {
            continue;
        }

        let cols = match (params.mtry, rng.as_deref_mut()) {
            (Some(m), Some(r)) if m < p => {
                let mut c = index::sample(r, p, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => all_cols.clone(),
        };

        let nf = f64::from(n);
        let total_sq: f64 = counts.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
        let parent = total_sq / nf;
        let mut best = Best { column: 0, threshold: 0.0, n_left_rows: 0, gain: 1e-9 * nf };
        let mut found = false;
        for &c in &cols {
            let ord = &order[c][lo..hi];
            left.iter_mut().for_each(|v| *v = 0.0);
            right.iter_mut().zip(&counts).for_each(|(r, &c)| *r = f64::from(c));
            let (mut nl, mut sl2, mut sr2) = (0.0, 0.0, total_sq);
            for t in 0..ord.len() - 1 {
                let i = ord[t] as usize;
                let wt = f64::from(weights[i]);
                let y = w.y[i];
                sl2 += (2.0 * left[y] + wt) * wt;
                left[y] += wt;
                sr2 -= (2.0 * right[y] - wt) * wt;
                right[y] -= wt;
                nl += wt;
                let (v, vn) = (w.get(i, c), w.get(ord[t + 1] as usize, c));
                if v < vn {
                    let gain = sl2 / nl + sr2 / (nf - nl) - parent;
                    if better(gain, best.gain) {
                        best = Best { column: c, threshold: midpoint(v, vn), n_left_rows: t + 1, gain };
                        found = true;
                    }
                }
            }
        }
        if !found {
            continue;
        }

        let seg = &order[best.column][lo..hi];
        for (t, &i) in seg.iter().enumerate() {
            go_left[i as usize] = t < best.n_left_rows;
        }
        partition(&mut order, lo, hi, &go_left, &mut buf);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(placeholder.clone());
        nodes.push(placeholder.clone());
        nodes[id].split =
            Some(Split { column: best.column, threshold: best.threshold, left: l, right: r, gain: best.gain });
        let mid = lo + best.n_left_rows;
        stack.push((r, mid, hi));
        stack.push((l, lo, mid));
    }
    Tree { nodes }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::fixtures::{matrix, separable};
    use crate::trees::gini_impurity;

    fn full(w: &WideMatrix, min_split: u32) -> Tree {
        grow(w, &presort(w), &vec![1; w.n_rows], &GrowParams { min_split, mtry: None }, None)
    }

    #[test]
    fn child_counts_sum_to_parent_and_gains_are_positive() {
        let w = separable(400, 2, 3);
        let t = full(&w, 2);
        for n in &t.nodes {
            if let Some(s) = &n.split {
                let (l, r) = (&t.nodes[s.left], &t.nodes[s.right]);
                for c in 0..3 {
                    assert_eq!(n.class_counts[c], l.class_counts[c] + r.class_counts[c]);
                }
                let imp = |x: &TreeNode| {
                    let c: Vec<f64> = x.class_counts.iter().map(|&v| f64::from(v)).collect();
                    f64::from(x.n()) * gini_impurity(&c).unwrap()
                };
                let dec = imp(n) - imp(l) - imp(r);
                assert!(dec > 0.0);
                assert!((dec - s.gain).abs() < 1e-8 * f64::from(n.n()));
            }
        }
    }

    #[test]
    fn fully_grown_tree_fits_distinct_rows() {
        let w = separable(300, 0, 5);
        let t = full(&w, 2);
        for i in 0..w.n_rows {
            assert_eq!(t.nodes[t.leaf_of(w.row(i))].leaf_label(), w.y[i]);
        }
    }

    #[test]
    fn weights_act_as_duplicated_rows() {
        let w = matrix(vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]], vec![0, 0, 1, 1], 2);
        let t = grow(&w, &presort(&w), &[2, 0, 1, 3], &GrowParams { min_split: 2, mtry: None }, None);
        assert_eq!(t.nodes[0].class_counts, vec![2, 4]);
        let s = t.nodes[0].split.unwrap();
        assert!(s.threshold > 0.0 && s.threshold < 2.0);
    }

    #[test]
    fn split_ties_go_to_lowest_column() {
        // both columns separate the classes perfectly
        let w = matrix(vec![vec![0.0, 0.0], vec![1.0, 1.0]], vec![0, 1], 2);
        assert_eq!(full(&w, 2).nodes[0].split.unwrap().column, 0);
    }

    #[test]
    fn midpoint_separates_adjacent_floats() {
        let v = 1.0f64;
        let next = f64::from_bits(v.to_bits() + 1);
        let m = midpoint(v, next);
        assert!(v <= m && m < next);
    }
}
