//! Trainable model descriptions and the fitted-model sum type shared by the
//! evaluation harness, the interpretation tools and the command line.

use serde::{Deserialize, Serialize};

use crate::classifiers::{fit_nb, fit_nn, NaiveBayes, NeuralNet, NnOptions};
use crate::dataset::{ChoiceDataset, Schema, WideLayout, WideMatrix};
use crate::interpret::Predictor;
use crate::logit::{fit_mixl, fit_mnl, FittedLogit, LogitOptions, RandomCoefSpec, UtilitySpec};
use crate::prelude::*;
use crate::trees::{
    fit_boost, fit_cart, fit_ensemble, BoostModel, BoostOptions, Cart, CartOptions, Ensemble, EnsembleKind,
    EnsembleOptions,
};
use crate::{Error, Result};

/// Name-based utility term; an empty `alts` list means every alternative
/// the feature applies to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermConfig {
    pub feature: String,
    #[serde(default)]
    pub alts: Vec<String>,
    pub coef: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantConfig {
    pub alt: String,
    pub coef: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UtilityConfig {
    #[serde(default)]
    pub terms: Vec<TermConfig>,
    #[serde(default)]
    pub constants: Vec<ConstantConfig>,
}

impl UtilityConfig {
    pub fn resolve(&self, ds: &ChoiceDataset) -> Result<UtilitySpec> {
        let mut s = UtilitySpec::for_dataset(ds);
        for t in &self.terms {
            let f = ds
                .feature_index(&t.feature)
                .ok_or_else(|| Error::arg(format!("utility term `{}`: unknown feature `{}`", t.coef, t.feature)))?;
            let alts: Vec<usize> = if t.alts.is_empty() {
                (0..ds.n_alts()).filter(|&a| ds.applies(f, a)).collect()
            } else {
                t.alts
                    .iter()
                    .map(|a| {
                        ds.alt_index(a)
                            .ok_or_else(|| Error::arg(format!("utility term `{}`: unknown alternative `{a}`", t.coef)))
                    })
                    .collect::<Result<_>>()?
            };
            s = s.term(f, &alts, &t.coef)?;
        }
        for c in &self.constants {
            let a = ds
                .alt_index(&c.alt)
                .ok_or_else(|| Error::arg(format!("constant `{}`: unknown alternative `{}`", c.coef, c.alt)))?;
            s = s.constant(a, &c.coef)?;
        }
        s.validate()?;
        Ok(s)
    }
}

fn default_draws() -> usize {
    1000
}
fn default_bag_trees() -> usize {
    400
}
fn default_rf_trees() -> usize {
    500
}
fn default_mtry() -> usize {
    12
}
fn default_min_split() -> u32 {
    2
}

/// What to train. Defaults reproduce the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelSpec {
    Mnl {
        utility: UtilityConfig,
        #[serde(default)]
        options: LogitOptions,
    },
    MixedLogit {
        utility: UtilityConfig,
        /// Coefficient names with normal distributions.
        random: Vec<String>,
        #[serde(default = "default_draws")]
        n_draws: usize,
        #[serde(default)]
        options: LogitOptions,
    },
    Cart {
        #[serde(default)]
        options: CartOptions,
    },
    Bagging {
        #[serde(default = "default_bag_trees")]
        n_trees: usize,
        #[serde(default = "default_min_split")]
        min_split: u32,
    },
    RandomForest {
        #[serde(default = "default_rf_trees")]
        n_trees: usize,
        #[serde(default = "default_mtry")]
        mtry: usize,
        #[serde(default = "default_min_split")]
        min_split: u32,
    },
    Boost {
        #[serde(default)]
        options: BoostOptions,
    },
    NaiveBayes,
    NeuralNet {
        #[serde(default)]
        options: NnOptions,
    },
}

impl ModelSpec {
    pub fn default_name(&self) -> &'static str {
        match self {
            ModelSpec::Mnl { .. } => "mnl",
            ModelSpec::MixedLogit { .. } => "mixl",
            ModelSpec::Cart { .. } => "cart",
            ModelSpec::Bagging { .. } => "bag",
            ModelSpec::RandomForest { .. } => "rf",
            ModelSpec::Boost { .. } => "boost",
            ModelSpec::NaiveBayes => "nb",
            ModelSpec::NeuralNet { .. } => "nn",
        }
    }

    pub fn is_logit(&self) -> bool {
        matches!(self, ModelSpec::Mnl { .. } | ModelSpec::MixedLogit { .. })
    }

    /// Trains on `ds`. Machine-learning models see `layout.flatten(ds)`;
    /// stochastic models use `seed`.
    pub fn train(&self, ds: &ChoiceDataset, layout: &WideLayout, seed: u64) -> Result<Model> {
        let wide = || layout.flatten(ds);
        Ok(match self {
            ModelSpec::Mnl { utility, options } => {
                let fit = fit_mnl(ds, &utility.resolve(ds)?, options)?;
                Model::Logit(LogitPredictor::new(fit, layout, &wide()))
            }
            ModelSpec::MixedLogit { utility, random, n_draws, options } => {
                let spec = utility.resolve(ds)?;
                let ids = random
                    .iter()
                    .map(|r| spec.coef_index(r).ok_or_else(|| Error::arg(format!("unknown random coefficient `{r}`"))))
                    .collect::<Result<Vec<_>>>()?;
                let fit = fit_mixl(ds, &spec, &RandomCoefSpec::new(ids, *n_draws), options)?;
                Model::Logit(LogitPredictor::new(fit, layout, &wide()))
            }
            ModelSpec::Cart { options } => Model::Cart(fit_cart(&wide(), options)?),
            ModelSpec::Bagging { n_trees, min_split } => {
                let o = EnsembleOptions { min_split: *min_split, ..EnsembleOptions::bagging(*n_trees) };
                Model::Ensemble(fit_ensemble(&wide(), &o, EnsembleKind::Bagging, seed)?)
            }
            ModelSpec::RandomForest { n_trees, mtry, min_split } => {
                let o = EnsembleOptions { min_split: *min_split, ..EnsembleOptions::random_forest(*n_trees, *mtry) };
                Model::Ensemble(fit_ensemble(&wide(), &o, EnsembleKind::RandomForest, seed)?)
            }
            ModelSpec::Boost { options } => Model::Boost(fit_boost(&wide(), options)?),
            ModelSpec::NaiveBayes => Model::NaiveBayes(fit_nb(&wide())?),
            ModelSpec::NeuralNet { options } => Model::NeuralNet(fit_nn(&wide(), &NnOptions { seed, ..*options })?),
        })
    }
}

/// A fitted logit model driven through the wide interface: wide rows are
/// regrouped into the long layout before prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitPredictor {
    pub fit: FittedLogit,
    pub layout: WideLayout,
    pub schema: Schema,
}

impl LogitPredictor {
    pub fn new(fit: FittedLogit, layout: &WideLayout, train: &WideMatrix) -> Self {
        LogitPredictor { fit, layout: layout.clone(), schema: Schema::of(train) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Model {
    Logit(LogitPredictor),
    Cart(Cart),
    Ensemble(Ensemble),
    Boost(BoostModel),
    NaiveBayes(NaiveBayes),
    NeuralNet(NeuralNet),
}

impl Predictor for LogitPredictor {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        self.schema.check(w)?;
        self.fit.predict_proba(&self.layout.to_long(w)?)
    }

    fn schema(&self) -> &Schema {
        &self.schema
    }
}

impl Predictor for Model {
    fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        match self {
            Model::Logit(m) => m.predict_proba(w),
            Model::Cart(m) => m.predict_proba(w),
            Model::Ensemble(m) => m.predict_proba(w),
            Model::Boost(m) => m.predict_proba(w),
            Model::NaiveBayes(m) => m.predict_proba(w),
            Model::NeuralNet(m) => m.predict_proba(w),
        }
    }

    fn schema(&self) -> &Schema {
        match self {
            Model::Logit(m) => &m.schema,
            Model::Cart(m) => &m.schema,
            Model::Ensemble(m) => &m.schema,
            Model::Boost(m) => &m.schema,
            Model::NaiveBayes(m) => &m.schema,
            Model::NeuralNet(m) => &m.schema,
        }
    }
}
