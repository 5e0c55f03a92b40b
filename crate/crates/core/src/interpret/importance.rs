use serde::{Deserialize, Serialize};

use crate::classifiers::NeuralNet;
use crate::logit::{FittedLogit, XStandardized};
use crate::prelude::*;
use crate::trees::GiniTally;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub feature: String,
    /// Unnormalized importance.
    pub raw: f64,
    /// Scaled so the top feature scores 100.
    pub score: f64,
    /// Scaled so all features sum to 100.
    pub share: f64,
    pub rank: usize,
}

/// Sorts descending (lowest input position first on ties) and normalizes.
fn ranked(names: &[String], raw: &[f64]) -> Vec<ImportanceEntry> {
    let max = raw.iter().copied().fold(0.0, f64::max);
    let total: f64 = raw.iter().sum();
    let mut idx: Vec<usize> = (0..raw.len()).collect();
    idx.sort_by(|&a, &b| raw[b].total_cmp(&raw[a]).then(a.cmp(&b)));
    idx.iter()
        .enumerate()
        .map(|(r, &j)| ImportanceEntry {
            feature: names[j].clone(),
            raw: raw[j],
            score: if max > 0.0 { 100.0 * raw[j] / max } else { 0.0 },
            share: if total > 0.0 { 100.0 * raw[j] / total } else { 0.0 },
            rank: r + 1,
        })
        .collect()
}

/// Total impurity decrease per column, ranked.
pub fn gini_importance(t: &GiniTally) -> Vec<ImportanceEntry> {
    ranked(&t.columns, &t.decrease)
}

/// Garson decomposition: input `i` receives
/// `sum_h |W1[h,i]| / sum_i' |W1[h,i']| * sum_k |W2[k,h]|`.
pub fn nn_importance(net: &NeuralNet) -> Vec<ImportanceEntry> {
    let (p, h_n, k) = (net.input_dim, net.hidden_units, net.n_classes);
    let mut raw = vec![0.0; p];
    for h in 0..h_n {
        let row = &net.w1[h * p..(h + 1) * p];
        let denom: f64 = row.iter().map(|v| v.abs()).sum();
        if denom == 0.0 {
            continue;
        }
        let out: f64 = (0..k).map(|c| net.w2[c * h_n + h].abs()).sum();
        for (r, w) in raw.iter_mut().zip(row) {
            *r += w.abs() / denom * out;
        }
    }
    ranked(&net.schema.columns, &raw)
}

/// Non-constant mean coefficients ranked by `|beta_std_x|`.
pub fn logit_importance(fit: &FittedLogit, xs: &XStandardized) -> Vec<ImportanceEntry> {
    let (names, raw): (Vec<String>, Vec<f64>) = (0..fit.spec.n_params())
        .filter_map(|j| xs.beta_std_x.get(j).copied().flatten().map(|b| (xs.names[j].clone(), b.abs())))
        .unzip();
    ranked(&names, &raw)
}

/// Re-ranks entries after mapping each to a group label (e.g. wide column
/// to source feature). Groups combine by sum, or by maximum when `max` is
/// set; entries mapped to `None` are dropped.
pub fn aggregate_by_feature(
    entries: &[ImportanceEntry],
    group: impl Fn(&str) -> Option<String>,
    max: bool,
) -> Vec<ImportanceEntry> {
    let mut names: Vec<String> = Vec::new();
    let mut raw: Vec<f64> = Vec::new();
    let mut sorted: Vec<&ImportanceEntry> = entries.iter().collect();
    sorted.sort_by_key(|e| e.rank);
    for e in sorted {
        let Some(g) = group(&e.feature) else { continue };
        match names.iter().position(|n| *n == g) {
            Some(i) => raw[i] = if max { raw[i].max(e.raw) } else { raw[i] + e.raw },
            None => {
                names.push(g);
                raw.push(e.raw);
            }
        }
    }
    ranked(&names, &raw)
}

/// One row per feature, one rank column per model; `None` where a model
/// does not use the feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceTable {
    pub models: Vec<String>,
    pub features: Vec<String>,
    /// `ranks[feature][model]`.
    pub ranks: Vec<Vec<Option<usize>>>,
}

impl ImportanceTable {
    pub fn cell(&self, feature: &str, model: &str) -> Option<Option<usize>> {
        let f = self.features.iter().position(|x| x == feature)?;
        let m = self.models.iter().position(|x| x == model)?;
        Some(self.ranks[f][m])
    }
}

/// Features appear in order of first mention, scanning models in order and
/// each model's entries by rank. Ranks are positions within each model's
/// list (`1..=n_present`).
pub fn importance_table(models: &[(String, Vec<ImportanceEntry>)]) -> ImportanceTable {
    let mut features: Vec<String> = Vec::new();
    for (_, entries) in models {
        let mut e: Vec<&ImportanceEntry> = entries.iter().collect();
        e.sort_by_key(|x| x.rank);
        for x in e {
            if !features.contains(&x.feature) {
                features.push(x.feature.clone());
            }
        }
    }
    let ranks = features
        .iter()
        .map(|f| {
            models
                .iter()
                .map(|(_, entries)| {
                    let mut e: Vec<&ImportanceEntry> = entries.iter().collect();
                    e.sort_by_key(|x| x.rank);
                    e.iter().position(|x| &x.feature == f).map(|p| p + 1)
                })
                .collect()
        })
        .collect();
    ImportanceTable { models: models.iter().map(|(m, _)| m.clone()).collect(), features, ranks }
}
