//! Paired k-fold cross-validation, individual-level accuracy and aggregate
//! L1 share error.

use serde::{Deserialize, Serialize};

use crate::dataset::{kfold_split, kfold_split_grouped, ChoiceDataset, FoldAssignment, WideLayout};
use crate::interpret::{argmax_choice, shares_of, Predictor, ShareMode};
use crate::models::{Model, ModelSpec};
use crate::prelude::*;
use crate::rng::derive_seed;
use crate::{par, Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub overall: f64,
    /// Recall per true class; `None` when the class is absent.
    pub per_class: Vec<Option<f64>>,
}

pub fn accuracy(pred: &[usize], truth: &[usize], k: usize) -> Result<Accuracy> {
    if pred.len() != truth.len() {
        return Err(Error::arg(format!("{} predictions for {} labels", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::arg("accuracy of an empty row set"));
    }
    let mut hit = vec![0usize; k];
    let mut tot = vec![0usize; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if t >= k || p >= k {
            return Err(Error::arg(format!("label out of range for {k} classes")));
        }
        tot[t] += 1;
        hit[t] += usize::from(p == t);
    }
    Ok(Accuracy {
        overall: hit.iter().sum::<usize>() as f64 / truth.len() as f64,
        per_class: hit.iter().zip(&tot).map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64)).collect(),
    })
}

pub fn is_simplex(v: &[f64]) -> bool {
    !v.is_empty()
        && v.iter().all(|x| x.is_finite() && *x >= -SIMPLEX_TOL)
        && (v.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL
}

/// `sum_k |a_k - b_k|` between two share vectors.
pub fn l1_share_error(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::arg(format!("share vectors of length {} and {}", a.len(), b.len())));
    }
    for v in [a, b] {
        if !is_simplex(v) {
            return Err(Error::arg(format!("not a share vector: {v:?}")));
        }
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}

/// Something the harness can fit on a training fold.
pub trait Trainable: Sync {
    fn train(&self, ds: &ChoiceDataset, layout: &WideLayout, seed: u64) -> Result<Box<dyn Predictor + Send>>;
}

impl Trainable for ModelSpec {
    fn train(&self, ds: &ChoiceDataset, layout: &WideLayout, seed: u64) -> Result<Box<dyn Predictor + Send>> {
        let m: Model = ModelSpec::train(self, ds, layout, seed)?;
        Ok(Box::new(m))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvOptions {
    pub k: usize,
    pub seed: u64,
    /// Keep each person's observations in one fold.
    pub person_level: bool,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions { k: 10, seed: 0, person_level: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub seed: u64,
    pub n_test: usize,
    pub accuracy: Option<Accuracy>,
    pub l1: Option<f64>,
    pub predicted_shares: Option<Vec<f64>>,
    pub observed_shares: Vec<f64>,
    /// Training or prediction failure; the cell is excluded from summaries.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: Option<f64>,
    /// Sample standard deviation (`n - 1`); `None` below two values.
    pub sd: Option<f64>,
    pub n: usize,
}

impl Summary {
    pub fn of(v: &[f64]) -> Self {
        let n = v.len();
        if n == 0 {
            return Summary { mean: None, sd: None, n };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let sd = (n > 1).then(|| (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt());
        Summary { mean: Some(mean), sd, n }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCv {
    pub name: String,
    pub folds: Vec<FoldResult>,
    pub accuracy: Summary,
    pub per_class: Vec<Summary>,
    pub l1: Summary,
    pub n_failed: usize,
}

impl ModelCv {
    fn summarize(name: String, folds: Vec<FoldResult>, k: usize) -> Self {
        let ok: Vec<&FoldResult> = folds.iter().filter(|f| f.error.is_none()).collect();
        let acc: Vec<f64> = ok.iter().filter_map(|f| f.accuracy.as_ref().map(|a| a.overall)).collect();
        let per_class = (0..k)
            .map(|c| {
                let v: Vec<f64> = ok.iter().filter_map(|f| f.accuracy.as_ref().and_then(|a| a.per_class[c])).collect();
                Summary::of(&v)
            })
            .collect();
        let l1: Vec<f64> = ok.iter().filter_map(|f| f.l1).collect();
        let n_failed = folds.len() - ok.len();
        ModelCv { name, accuracy: Summary::of(&acc), per_class, l1: Summary::of(&l1), n_failed, folds }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub options: CvOptions,
    pub classes: Vec<String>,
    pub fold_sizes: Vec<usize>,
    pub folds: FoldAssignment,
    pub models: Vec<ModelCv>,
}

impl CvReport {
    pub fn model(&self, name: &str) -> Option<&ModelCv> {
        self.models.iter().find(|m| m.name == name)
    }
}

fn run_fold(
    model: &dyn Trainable,
    ds: &ChoiceDataset,
    layout: &WideLayout,
    folds: &FoldAssignment,
    fold: usize,
    seed: u64,
) -> FoldResult {
    let k = ds.n_alts();
    let test = ds.subset(&folds.test_indices(fold));
    let observed = test.observed_shares();
    let mut r = FoldResult {
        fold,
        seed,
        n_test: test.n_obs(),
        accuracy: None,
        l1: None,
        predicted_shares: None,
        observed_shares: observed.clone(),
        error: None,
    };
    let outcome = (|| -> Result<(Accuracy, Vec<f64>, f64)> {
        let train = ds.subset(&folds.train_indices(fold));
        let m = model.train(&train, layout, seed)?;
        let probs = m.predict_proba(&layout.flatten(&test))?;
        if probs.len() != test.n_obs() * k {
            return Err(Error::Numerical(format!("{} probabilities for {} rows", probs.len(), test.n_obs())));
        }
        if let Some(row) = probs.chunks(k).find(|r| !is_simplex(r)) {
            return Err(Error::Numerical(format!("probability row is not a simplex: {row:?}")));
        }
        let labels: Vec<usize> = probs.chunks(k).map(argmax_choice).collect();
        let acc = accuracy(&labels, test.chosen(), k)?;
        let shares = shares_of(&probs, k, ShareMode::MeanProbability);
        let l1 = l1_share_error(&shares, &observed)?;
        Ok((acc, shares, l1))
    })();
    match outcome {
        Ok((acc, shares, l1)) => {
            r.accuracy = Some(acc);
            r.predicted_shares = Some(shares);
            r.l1 = Some(l1);
        }
        Err(e) => r.error = Some(format!("{e}")),
    }
    r
}

/// Trains every model on every training fold of one shared split and scores
/// the held-out fold. Jobs are seeded by `(seed, model index, fold)`.
pub fn cross_validate(models: &[(String, &dyn Trainable)], ds: &ChoiceDataset, opts: &CvOptions) -> Result<CvReport> {
    let folds = if opts.person_level {
        kfold_split_grouped(&ds.person_groups(), opts.k, opts.seed)?
    } else {
        kfold_split(ds.n_obs(), opts.k, opts.seed)?
    };
    for (f, &size) in folds.fold_sizes().iter().enumerate() {
        if size == 0 {
            return Err(Error::arg(format!("fold {f} is empty")));
        }
    }
    let layout = WideLayout::from_dataset(ds);
    let k = opts.k;
    let cells = par::map_indexed(models.len() * k, |job| {
        let (m, f) = (job / k, job % k);
        let seed = derive_seed(opts.seed, &[m as u64, f as u64]);
        run_fold(models[m].1, ds, &layout, &folds, f, seed)
    });
    let mut cells = cells.into_iter();
    let summaries = models
        .iter()
        .map(|(name, _)| ModelCv::summarize(name.clone(), cells.by_ref().take(k).collect(), ds.n_alts()))
        .collect();
    Ok(CvReport {
        options: *opts,
        classes: ds.alt_names().to_vec(),
        fold_sizes: folds.fold_sizes(),
        folds,
        models: summaries,
    })
}

/// Convenience wrapper over named model specs.
pub fn cross_validate_specs(specs: &[(String, ModelSpec)], ds: &ChoiceDataset, opts: &CvOptions) -> Result<CvReport> {
    let models: Vec<(String, &dyn Trainable)> = specs.iter().map(|(n, s)| (n.clone(), s as &dyn Trainable)).collect();
    cross_validate(&models, ds, opts)
}
