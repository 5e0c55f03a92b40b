use serde::{Deserialize, Serialize};

use super::{fit_mixl, fit_mnl, FittedLogit, LogitKind, LogitOptions};
use crate::dataset::ChoiceDataset;
use crate::prelude::*;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    /// McFadden: `1 - LL_c / LL_0`.
    pub pseudo_r2: f64,
    /// `1 - (LL_c - n_params) / LL_0`.
    pub adj_pseudo_r2: f64,
    pub aic: f64,
    /// Uses the number of choice observations.
    pub bic: f64,
    pub n_for_bic: usize,
}

pub fn fit_stats_from(ll_c: f64, ll_0: f64, n_params: usize, n_obs: usize) -> Result<FitStats> {
    if ll_0 == 0.0 {
        return Err(Error::arg("constants-only log-likelihood is zero"));
    }
    let k = n_params as f64;
    Ok(FitStats {
        pseudo_r2: 1.0 - ll_c / ll_0,
        adj_pseudo_r2: 1.0 - (ll_c - k) / ll_0,
        aic: -2.0 * ll_c + 2.0 * k,
        bic: -2.0 * ll_c + k * (n_obs as f64).ln(),
        n_for_bic: n_obs,
    })
}

pub fn fit_stats(f: &FittedLogit) -> Result<FitStats> {
    fit_stats_from(f.ll_convergence, f.ll_constants_only, f.n_params, f.n_obs)
}

/// Coefficients re-estimated on standardized features, next to the raw ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XStandardized {
    pub names: Vec<String>,
    pub beta: Vec<f64>,
    /// `None` for constants and coefficients on zero-variance features.
    pub beta_std_x: Vec<Option<f64>>,
    pub refit: FittedLogit,
}

impl XStandardized {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).and_then(|i| self.beta_std_x[i])
    }
}

/// Refits the model with every feature used by a non-constant term replaced
/// by `(x - mean) / sd` over the cells where it applies. Constants are left
/// on their own scale.
pub fn x_standardized(f: &FittedLogit, ds: &ChoiceDataset, opts: &LogitOptions) -> Result<XStandardized> {
    let spec = &f.spec;
    let mut features: Vec<usize> = spec.terms.iter().map(|t| t.feature).collect();
    features.sort_unstable();
    features.dedup();

    let mut scaled = ds.clone();
    let mut degenerate = Vec::new();
    for &p in &features {
        let mut vals = Vec::new();
        for i in 0..ds.n_obs() {
            for k in 0..ds.n_alts() {
                if ds.applies(p, k) {
                    vals.push(ds.value(i, k, p));
                }
            }
        }
        let n = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / n;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            degenerate.push(p);
            continue;
        }
        scaled = scaled.map_feature(p, |_, _, v| (v - mean) / sd);
    }

    let refit = match &f.kind {
        LogitKind::Mnl => fit_mnl(&scaled, spec, opts)?,
        LogitKind::Mixed(rcs) => fit_mixl(&scaled, spec, rcs, opts)?,
    };

    let np = spec.n_params();
    let standardizable = |j: usize| !spec.is_constant(j) && spec.features_of(j).iter().all(|p| !degenerate.contains(p));
    let beta_std_x = (0..f.param_names.len())
        .map(|i| {
            let j = if i < np {
                i
            } else {
                match &f.kind {
                    LogitKind::Mixed(rcs) => rcs.random[i - np],
                    LogitKind::Mnl => unreachable!(),
                }
            };
            standardizable(j).then(|| refit.beta_hat[i])
        })
        .collect();
    Ok(XStandardized { names: f.param_names.clone(), beta: f.beta_hat.clone(), beta_std_x, refit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logit::UtilitySpec;
    use crate::synth::mnl_fixture;

    #[test]
    fn reported_table_values() {
        let s = fit_stats_from(-7160.97, -11285.82, 20, 8141).unwrap();
        assert!((s.pseudo_r2 - 0.3655).abs() < 5e-5);
        let s = fit_stats_from(-50.0, -100.0, 5, 10).unwrap();
        assert!((s.adj_pseudo_r2 - 0.45).abs() < 1e-15);
        assert!((s.aic - 110.0).abs() < 1e-12);
        assert!((s.bic - (100.0 + 5.0 * 10f64.ln())).abs() < 1e-12);
        assert_eq!(fit_stats_from(-3.0, -3.0, 0, 1).unwrap().pseudo_r2, 0.0);
        assert!(fit_stats_from(-3.0, 0.0, 1, 1).is_err());
    }

    fn two_feature_spec(ds: &ChoiceDataset) -> UtilitySpec {
        UtilitySpec::for_dataset(ds)
            .term(0, &[0, 1, 2], "b0")
            .unwrap()
            .term(1, &[0, 1, 2], "b1")
            .unwrap()
            .constant(1, "asc1")
            .unwrap()
    }

    #[test]
    fn scaling_a_feature_leaves_standardized_coefficients_unchanged() {
        let ds = mnl_fixture(1500, 3, &[1.0, -0.5], 17);
        let opts = LogitOptions { grad_tol: 1e-9, ..Default::default() };
        let spec = two_feature_spec(&ds);
        let base = x_standardized(&fit_mnl(&ds, &spec, &opts).unwrap(), &ds, &opts).unwrap();
        let scaled_ds = ds.map_feature(0, |_, _, v| 10.0 * v);
        let fit10 = fit_mnl(&scaled_ds, &spec, &opts).unwrap();
        assert!((fit10.beta_hat[0] * 10.0 - base.beta[0]).abs() < 1e-4);
        let scaled = x_standardized(&fit10, &scaled_ds, &opts).unwrap();
        for (a, b) in base.beta_std_x.iter().zip(&scaled.beta_std_x) {
            match (a, b) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-4, "{a} vs {b}"),
                (None, None) => {}
                _ => panic!("standardizability changed"),
            }
        }
        assert!(base.get("asc1").is_none());
    }

    #[test]
    fn prescaled_feature_is_idempotent() {
        let ds = mnl_fixture(1500, 3, &[1.0, -0.5], 19);
        let opts = LogitOptions { grad_tol: 1e-9, ..Default::default() };
        let mut std_ds = ds.clone();
        for p in 0..2 {
            let vals: Vec<f64> =
                (0..ds.n_obs()).flat_map(|i| (0..3).map(move |k| (i, k))).map(|(i, k)| ds.value(i, k, p)).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            std_ds = std_ds.map_feature(p, |_, _, v| (v - mean) / sd);
        }
        let spec = two_feature_spec(&std_ds);
        let xs = x_standardized(&fit_mnl(&std_ds, &spec, &opts).unwrap(), &std_ds, &opts).unwrap();
        for j in 0..2 {
            assert!((xs.beta[j] - xs.beta_std_x[j].unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_variance_feature_is_not_standardizable() {
        let ds = mnl_fixture(300, 3, &[1.0, 0.0], 5);
        let ds = ds.map_feature(1, |_, _, _| 2.0);
        // feature 1 enters only alternative 1 so it acts as a constant shift
        let spec = UtilitySpec::for_dataset(&ds).term(0, &[0, 1, 2], "b0").unwrap().term(1, &[1], "b1").unwrap();
        let fit = fit_mnl(&ds, &spec, &LogitOptions::default()).unwrap();
        let xs = x_standardized(&fit, &ds, &LogitOptions::default()).unwrap();
        assert!(xs.get("b1").is_none());
        assert!(xs.get("b0").is_some());
    }
}
