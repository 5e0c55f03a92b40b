use serde::{Deserialize, Serialize};

use super::grow::{grow, presort, GrowParams};
use super::{checked, GiniTally, Tree, TreeNode};
use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartOptions {
    /// Leaf count after pruning; `None` keeps the fully grown tree.
    pub max_leaves: Option<usize>,
    /// Nodes smaller than this are not split.
    pub min_split: u32,
}

impl Default for CartOptions {
    fn default() -> Self {
        CartOptions { max_leaves: Some(6), min_split: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cart {
    pub tree: Tree,
    pub options: CartOptions,
    pub schema: Schema,
}

pub fn fit_cart(w: &WideMatrix, opts: &CartOptions) -> Result<Cart> {
    if w.n_rows < 2 {
        return Err(Error::arg("a tree needs at least two rows"));
    }
    if opts.max_leaves == Some(0) {
        return Err(Error::arg("leaf count must be positive"));
    }
    let grown = grow(w, &presort(w), &vec![1; w.n_rows], &GrowParams { min_split: opts.min_split, mtry: None }, None);
    let tree = match opts.max_leaves {
        Some(m) => prune_to_leaves(&grown, m),
        None => grown,
    };
    Ok(Cart { tree, options: *opts, schema: Schema::of(w) })
}

fn errors(n: &TreeNode) -> u32 {
    n.n() - n.class_counts.iter().copied().max().unwrap_or(0)
}

/// Weakest-link pruning one split at a time: among splits whose children
/// are both leaves, collapse the one whose removal adds the fewest training
/// errors (smaller impurity decrease, then lower node index, breaking ties)
/// until at most `leaves` remain.
pub fn prune_to_leaves(tree: &Tree, leaves: usize) -> Tree {
    let mut t = tree.clone();
    let mut n_leaves = t.n_leaves();
    while n_leaves > leaves.max(1) {
        let mut best: Option<(u32, f64, usize)> = None;
        for (id, node) in t.nodes.iter().enumerate() {
            let Some(s) = &node.split else { continue };
            let (l, r) = (&t.nodes[s.left], &t.nodes[s.right]);
            if !(l.is_leaf() && r.is_leaf()) {
                continue;
            }
            let cost = errors(node) - errors(l) - errors(r);
            let cand = (cost, s.gain, id);
            if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                best = Some(cand);
            }
        }
        let (_, _, id) = best.expect("a tree with several leaves has a twig");
        t.nodes[id].split = None;
        n_leaves -= 1;
    }
    compact(&t)
}

/// Drops unreachable nodes and renumbers in preorder.
fn compact(t: &Tree) -> Tree {
    let mut nodes = Vec::new();
    fn go(t: &Tree, i: usize, out: &mut Vec<TreeNode>) -> usize {
        let id = out.len();
        out.push(t.nodes[i].clone());
        if let Some(s) = t.nodes[i].split {
            let l = go(t, s.left, out);
            let r = go(t, s.right, out);
            let sp = out[id].split.as_mut().unwrap();
            sp.left = l;
            sp.right = r;
        }
        id
    }
    go(t, 0, &mut nodes);
    Tree { nodes }
}

impl Cart {
    /// Leaf class proportions, `N * K` row-major.
    pub fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        let w = checked(&self.schema, w)?;
        let mut out = Vec::with_capacity(w.n_rows * self.schema.n_classes());
        for i in 0..w.n_rows {
            out.extend(self.tree.nodes[self.tree.leaf_of(w.row(i))].leaf_probs());
        }
        Ok(out)
    }

    pub fn gini_tally(&self) -> GiniTally {
        let mut decrease = vec![0.0; self.schema.columns.len()];
        self.tree.tally_into(&mut decrease);
        GiniTally { columns: self.schema.columns.clone(), decrease }
    }
}
