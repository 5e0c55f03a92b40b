use serde::{Deserialize, Serialize};

use crate::dataset::{Schema, WideMatrix};
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Gaussian,
    /// Every training value is 0 or 1.
    Bernoulli,
}

/// Naive Bayes with Gaussian continuous columns and Laplace-smoothed
/// Bernoulli binary columns. Per-class parameters are `K * P` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    pub class_priors: Vec<f64>,
    pub kinds: Vec<ColumnKind>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    /// `P(x = 1 | class)`; only meaningful for Bernoulli columns.
    pub rates: Vec<f64>,
    pub schema: Schema,
}

const SD_FLOOR: f64 = 1e-6;

pub fn fit_nb(w: &WideMatrix) -> Result<NaiveBayes> {
    let (n, p, k) = (w.n_rows, w.n_cols, w.n_classes());
    let mut counts = vec![0usize; k];
    w.y.iter().for_each(|&c| counts[c] += 1);
    let missing: Vec<&str> = (0..k).filter(|&c| counts[c] == 0).map(|c| w.class_names[c].as_str()).collect();
    if !missing.is_empty() {
        return Err(Error::data(format!("classes absent from training data: {}", missing.join(", "))));
    }
    let kinds: Vec<ColumnKind> = (0..p)
        .map(|j| {
            if (0..n).all(|i| matches!(w.get(i, j), v if v == 0.0 || v == 1.0)) {
                ColumnKind::Bernoulli
            } else {
                ColumnKind::Gaussian
            }
        })
        .collect();

    let mut sum = vec![0.0; k * p];
    for i in 0..n {
        let c = w.y[i];
        for j in 0..p {
            sum[c * p + j] += w.get(i, j);
        }
    }
    let means: Vec<f64> = (0..k * p).map(|cj| sum[cj] / counts[cj / p] as f64).collect();
    let mut ss = vec![0.0; k * p];
    for i in 0..n {
        let c = w.y[i];
        for j in 0..p {
            let d = w.get(i, j) - means[c * p + j];
            ss[c * p + j] += d * d;
        }
    }
    let col_sd: Vec<f64> = (0..p)
        .map(|j| {
            let col = w.column(j);
            let m = col.iter().sum::<f64>() / n as f64;
            (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    let sds = (0..k * p)
        .map(|cj| {
            let floor = if col_sd[cj % p] > 0.0 { SD_FLOOR * col_sd[cj % p] } else { SD_FLOOR };
            (ss[cj] / counts[cj / p] as f64).sqrt().max(floor)
        })
        .collect();
    let rates = (0..k * p).map(|cj| (sum[cj] + 1.0) / (counts[cj / p] as f64 + 2.0)).collect();
    Ok(NaiveBayes {
        class_priors: counts.iter().map(|&c| c as f64 / n as f64).collect(),
        kinds,
        means,
        sds,
        rates,
        schema: Schema::of(w),
    })
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl NaiveBayes {
    /// Unnormalized log posterior of every class for one row.
    pub fn log_joint(&self, row: &[f64]) -> Vec<f64> {
        let p = row.len();
        (0..self.class_priors.len())
            .map(|c| {
                let mut s = self.class_priors[c].ln();
                for (j, &x) in row.iter().enumerate() {
                    let cj = c * p + j;
                    s += match self.kinds[j] {
                        ColumnKind::Gaussian => {
                            let z = (x - self.means[cj]) / self.sds[cj];
                            -0.5 * z * z - self.sds[cj].ln() - LN_SQRT_2PI
                        }
                        ColumnKind::Bernoulli => x * self.rates[cj].ln() + (1.0 - x) * (1.0 - self.rates[cj]).ln(),
                    };
                }
                s
            })
            .collect()
    }

    /// Posterior class probabilities, `N * K` row-major.
    pub fn predict_proba(&self, w: &WideMatrix) -> Result<Vec<f64>> {
        self.schema.check(w)?;
        let mut out = Vec::with_capacity(w.n_rows * self.class_priors.len());
        for i in 0..w.n_rows {
            let lj = self.log_joint(w.row(i));
            let m = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = lj.iter().map(|v| (v - m).exp()).collect();
            let s: f64 = e.iter().sum();
            out.extend(e.iter().map(|v| v / s));
        }
        Ok(out)
    }
}

pub fn nb_predict_proba(m: &NaiveBayes, w: &WideMatrix) -> Result<Vec<f64>> {
    m.predict_proba(w)
}
