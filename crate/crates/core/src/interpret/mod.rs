//! Model-agnostic interpretation: aggregate shares, sensitivity analysis,
//! partial dependence and variable importance. Every tool talks to models
//! through [`Predictor`], so logit models and classifiers are treated alike.

mod importance;
mod sensitivity;

pub use importance::{
    aggregate_by_feature, gini_importance, importance_table, logit_importance, nn_importance, ImportanceEntry,
    ImportanceTable,
};
pub use sensitivity::{
    arc_elasticity, marginal_effect, partial_dependence, value_of_time_ratio, PdCurve, Perturbation, SensitivityResult,
    SensitivitySpec,
};

use serde::{Deserialize, Serialize};

use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{Error, Result};

/// Anything that maps wide rows to class probabilities.
pub trait Predictor: Sync {
    /// `N * K` row-major probabilities; every row sums to one.
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>>;

    /// Training columns, classes and per-column training ranges.
    fn schema(&self) -> &Schema;
}

impl Predictor for crate::trees::Cart {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        crate::trees::Cart::predict_proba(self, w)
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
}

impl Predictor for crate::trees::Ensemble {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        crate::trees::Ensemble::predict_proba(self, w)
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
}

impl Predictor for crate::trees::BoostModel {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        crate::trees::BoostModel::predict_proba(self, w)
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
}

impl Predictor for crate::classifiers::NaiveBayes {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        crate::classifiers::NaiveBayes::predict_proba(self, w)
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
}

impl Predictor for crate::classifiers::NeuralNet {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        crate::classifiers::NeuralNet::predict_proba(self, w)
    }
    fn schema(&self) -> &Schema {
        &self.schema
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShareMode {
    /// Mean predicted probability per alternative.
    #[default]
    MeanProbability,
    /// Fraction of rows whose most probable alternative is `k`.
    LabelFraction,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax_choice(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Aggregate shares of already-computed `N * K` probabilities.
pub fn shares_of(probs: &[f64], k: usize, mode: ShareMode) -> Vec<f64> {
    let n = probs.len() / k;
    let mut s = vec![0.0; k];
    if n == 0 {
        return s;
    }
    match mode {
        ShareMode::MeanProbability => {
            for row in probs.chunks(k) {
                s.iter_mut().zip(row).for_each(|(a, p)| *a += p);
            }
        }
        ShareMode::LabelFraction => {
            for row in probs.chunks(k) {
                s[argmax_choice(row)] += 1.0;
            }
        }
    }
    s.iter_mut().for_each(|v| *v /= n as f64);
    s
}

pub fn market_share(pred: &dyn Predictor, w: &WideMatrix, mode: ShareMode) -> Result<Vec<f64>> {
    if w.n_rows == 0 {
        return Err(Error::arg("market share of an empty row set"));
    }
    let k = pred.schema().n_classes();
    Ok(shares_of(&pred.predict_proba(w)?, k, mode))
}
