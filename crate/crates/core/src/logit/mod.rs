//! Logit-family models: multinomial logit and panel mixed logit estimated by
//! simulated maximum likelihood.

mod halton;
mod mixed;
mod mnl;
mod stats;

pub use halton::{halton, inverse_normal_cdf, normal_draws, HaltonDraws, PRIMES};
pub use mixed::{fit_mixl, mixl_sim_loglik, MixedObjective};
pub use mnl::{fit_mnl, mnl_loglik, MnlObjective};
pub use stats::{fit_stats, fit_stats_from, x_standardized, FitStats, XStandardized};

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::optim::OptOptions;
use crate::prelude::*;
use crate::{Error, Result};

/// One linear utility term: `coef * x[feature]` added to each listed
/// alternative. Alternatives listed together share the coefficient.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilityTerm {
    pub feature: usize,
    pub alts: Vec<usize>,
    pub coef: usize,
}

/// Linear-in-parameters utilities with i.i.d. Gumbel errors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtilitySpec {
    pub n_alts: usize,
    pub n_features: usize,
    pub coef_names: Vec<String>,
    pub terms: Vec<UtilityTerm>,
    /// `(alternative, coefficient)` for each alternative-specific constant.
    pub constants: Vec<(usize, usize)>,
}

impl UtilitySpec {
    pub fn new(n_alts: usize, n_features: usize) -> Self {
        UtilitySpec { n_alts, n_features, coef_names: Vec::new(), terms: Vec::new(), constants: Vec::new() }
    }

    /// Empty spec sized for `ds`.
    pub fn for_dataset(ds: &ChoiceDataset) -> Self {
        Self::new(ds.n_alts(), ds.n_features())
    }

    fn coef_id(&mut self, name: &str) -> usize {
        match self.coef_names.iter().position(|c| c == name) {
            Some(i) => i,
            None => {
                self.coef_names.push(name.to_string());
                self.coef_names.len() - 1
            }
        }
    }

    /// Adds a term; reusing a coefficient name shares the coefficient.
    pub fn term(mut self, feature: usize, alts: &[usize], coef: &str) -> Result<Self> {
        if feature >= self.n_features {
            return Err(Error::arg(format!("feature index {feature} out of range")));
        }
        if alts.is_empty() || alts.iter().any(|&a| a >= self.n_alts) {
            return Err(Error::arg(format!("term `{coef}` has an invalid alternative list")));
        }
        let coef = self.coef_id(coef);
        self.terms.push(UtilityTerm { feature, alts: alts.to_vec(), coef });
        Ok(self)
    }

    /// Name-based variant of [`UtilitySpec::term`].
    pub fn term_named(self, ds: &ChoiceDataset, feature: &str, alts: &[&str], coef: &str) -> Result<Self> {
        let f = ds.feature_index(feature).ok_or_else(|| Error::arg(format!("unknown feature `{feature}`")))?;
        let a = alts
            .iter()
            .map(|n| ds.alt_index(n).ok_or_else(|| Error::arg(format!("unknown alternative `{n}`"))))
            .collect::<Result<Vec<_>>>()?;
        self.term(f, &a, coef)
    }

    pub fn constant(mut self, alt: usize, name: &str) -> Result<Self> {
        if alt >= self.n_alts {
            return Err(Error::arg(format!("alternative index {alt} out of range")));
        }
        if self.constants.iter().any(|(a, _)| *a == alt) {
            return Err(Error::arg(format!("alternative {alt} already has a constant")));
        }
        let coef = self.coef_id(name);
        self.constants.push((alt, coef));
        Ok(self)
    }

    /// Constants for every alternative except `base`.
    pub fn constants_only(n_alts: usize, n_features: usize, base: usize, alt_names: &[String]) -> Self {
        let mut s = Self::new(n_alts, n_features);
        for a in (0..n_alts).filter(|&a| a != base) {
            let name = format!("asc_{}", alt_names.get(a).map(String::as_str).unwrap_or("?"));
            s = s.constant(a, &name).expect("valid alternative");
        }
        s
    }

    pub fn n_params(&self) -> usize {
        self.coef_names.len()
    }

    pub fn coef_index(&self, name: &str) -> Option<usize> {
        self.coef_names.iter().position(|c| c == name)
    }

    /// First alternative without a constant.
    pub fn base_alt(&self) -> Option<usize> {
        (0..self.n_alts).find(|a| !self.constants.iter().any(|(c, _)| c == a))
    }

    pub fn validate(&self) -> Result<()> {
        let mut used = vec![false; self.n_params()];
        for t in &self.terms {
            used[t.coef] = true;
        }
        for (_, c) in &self.constants {
            used[*c] = true;
        }
        if let Some(j) = used.iter().position(|u| !u) {
            return Err(Error::arg(format!("coefficient `{}` is not used", self.coef_names[j])));
        }
        if self.base_alt().is_none() {
            return Err(Error::arg("every alternative has a constant; one must be normalized to zero"));
        }
        if self.n_params() == 0 {
            return Err(Error::arg("utility specification has no parameters"));
        }
        Ok(())
    }

    /// Whether coefficient `j` is an alternative-specific constant.
    pub fn is_constant(&self, j: usize) -> bool {
        self.constants.iter().any(|(_, c)| *c == j)
    }

    /// Features entering coefficient `j` through terms.
    pub fn features_of(&self, j: usize) -> Vec<usize> {
        let mut f: Vec<usize> = self.terms.iter().filter(|t| t.coef == j).map(|t| t.feature).collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    pub fn check_dataset(&self, ds: &ChoiceDataset) -> Result<()> {
        if ds.n_alts() != self.n_alts || ds.n_features() != self.n_features {
            return Err(Error::arg(format!(
                "specification expects {} alternatives and {} features, dataset has {} and {}",
                self.n_alts,
                self.n_features,
                ds.n_alts(),
                ds.n_features()
            )));
        }
        Ok(())
    }

    /// Utility design row for one alternative: `V = row . beta`.
    pub fn design_row(&self, block: &[f64], alt: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let p = self.n_features;
        for t in &self.terms {
            if t.alts.contains(&alt) {
                out[t.coef] += block[alt * p + t.feature];
            }
        }
        for (a, c) in &self.constants {
            if *a == alt {
                out[*c] += 1.0;
            }
        }
    }
}

/// Normally distributed coefficients for the mixed logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomCoefSpec {
    /// Coefficient ids with `Normal(mean, sd)` distributions.
    pub random: Vec<usize>,
    pub n_draws: usize,
    /// Initial Halton points discarded per dimension.
    pub skip: usize,
    /// When false the standard deviations are held at zero.
    pub estimate_sd: bool,
}

impl RandomCoefSpec {
    pub fn new(random: Vec<usize>, n_draws: usize) -> Self {
        RandomCoefSpec { random, n_draws, skip: 10, estimate_sd: true }
    }

    pub fn validate(&self, spec: &UtilitySpec) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::arg("at least one draw is required"));
        }
        if self.random.len() > PRIMES.len() {
            return Err(Error::arg(format!("at most {} random coefficients", PRIMES.len())));
        }
        let mut seen = Vec::new();
        for &r in &self.random {
            if r >= spec.n_params() || seen.contains(&r) {
                return Err(Error::arg(format!("invalid random coefficient id {r}")));
            }
            seen.push(r);
        }
        Ok(())
    }
}

/// Dense utility design: `d[(i * K + k) * n_params + j]`.
#[derive(Debug, Clone)]
pub(crate) struct Design {
    pub n_obs: usize,
    pub n_alts: usize,
    pub n_params: usize,
    pub d: Vec<f64>,
    pub available: Vec<bool>,
    pub chosen: Vec<usize>,
}

impl Design {
    pub fn new(ds: &ChoiceDataset, spec: &UtilitySpec) -> Result<Self> {
        spec.check_dataset(ds)?;
        let (n, k, np) = (ds.n_obs(), ds.n_alts(), spec.n_params());
        let mut d = vec![0.0; n * k * np];
        for i in 0..n {
            let block = ds.obs_block(i);
            for a in 0..k {
                let base = (i * k + a) * np;
                spec.design_row(block, a, &mut d[base..base + np]);
            }
        }
        Ok(Design {
            n_obs: n,
            n_alts: k,
            n_params: np,
            d,
            available: ds.availability().to_vec(),
            chosen: ds.chosen().to_vec(),
        })
    }

    #[inline]
    pub fn row(&self, i: usize, k: usize) -> &[f64] {
        let base = (i * self.n_alts + k) * self.n_params;
        &self.d[base..base + self.n_params]
    }

    #[inline]
    pub fn avail(&self, i: usize) -> &[bool] {
        &self.available[i * self.n_alts..(i + 1) * self.n_alts]
    }

    /// Choice probabilities of observation `i` into `out`; returns
    /// `log p[chosen]`.
    pub fn probs(&self, i: usize, beta: &[f64], out: &mut [f64]) -> f64 {
        for (k, o) in out.iter_mut().enumerate() {
            *o = crate::linalg::dot(self.row(i, k), beta);
        }
        let lse = log_softmax_in_place(out, self.avail(i));
        let c = self.chosen[i];
        let log_pc = lse[c];
        out.iter_mut().zip(lse.iter()).for_each(|(o, l)| *o = l.exp());
        log_pc
    }
}

/// Replaces utilities by log-probabilities over the available alternatives;
/// unavailable entries become `-inf`. Returns the log-probabilities.
fn log_softmax_in_place(v: &mut [f64], avail: &[bool]) -> Vec<f64> {
    let m = v.iter().zip(avail).filter(|(_, a)| **a).fold(f64::NEG_INFINITY, |m, (x, _)| m.max(*x));
    let s: f64 = v.iter().zip(avail).filter(|(_, a)| **a).map(|(x, _)| (x - m).exp()).sum();
    let lse = m + s.ln();
    v.iter().zip(avail).map(|(x, a)| if *a { x - lse } else { f64::NEG_INFINITY }).collect()
}

/// Softmax over available alternatives with max-subtraction.
pub fn softmax(utilities: &[f64], available: &[bool]) -> Result<Vec<f64>> {
    if !available.iter().any(|a| *a) {
        return Err(Error::arg("no alternative is available"));
    }
    let mut v = utilities.to_vec();
    Ok(log_softmax_in_place(&mut v, available).iter().map(|l| l.exp()).collect())
}

/// MNL choice probabilities for one observation's `K * P` attribute block.
pub fn mnl_probabilities(beta: &[f64], block: &[f64], available: &[bool], spec: &UtilitySpec) -> Result<Vec<f64>> {
    if beta.len() != spec.n_params() {
        return Err(Error::arg(format!("coefficient vector has length {}, expected {}", beta.len(), spec.n_params())));
    }
    let mut row = vec![0.0; spec.n_params()];
    let v: Vec<f64> = (0..spec.n_alts)
        .map(|k| {
            spec.design_row(block, k, &mut row);
            crate::linalg::dot(&row, beta)
        })
        .collect();
    softmax(&v, available)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LogitKind {
    Mnl,
    Mixed(RandomCoefSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogitOptions {
    pub max_iters: usize,
    pub grad_tol: f64,
}

impl Default for LogitOptions {
    fn default() -> Self {
        LogitOptions { max_iters: 1000, grad_tol: 1e-6 }
    }
}

impl LogitOptions {
    pub(crate) fn opt(&self) -> OptOptions {
        OptOptions { max_iters: self.max_iters, grad_tol: self.grad_tol, ..OptOptions::default() }
    }
}

/// An estimated logit model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedLogit {
    pub kind: LogitKind,
    pub spec: UtilitySpec,
    /// Parameter names: coefficients, then `sd_<coef>` for random terms.
    pub param_names: Vec<String>,
    /// Estimates; standard deviations are reported as absolute values.
    pub beta_hat: Vec<f64>,
    /// `NaN` where the covariance could not be formed.
    #[serde(with = "crate::error::nan_as_null")]
    pub std_errors: Vec<f64>,
    pub ll_convergence: f64,
    pub ll_constants_only: f64,
    /// Log-likelihood with every parameter at zero (equal shares).
    pub ll_zero: f64,
    pub n_params: usize,
    /// Number of choice observations (used for BIC).
    pub n_obs: usize,
    pub n_individuals: usize,
    pub converged: bool,
    pub n_iters: usize,
}

impl FittedLogit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|p| p == name).map(|i| self.beta_hat[i])
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.param_names.iter().position(|p| p == name).map(|i| self.std_errors[i])
    }

    /// Means of the utility coefficients (the first `spec.n_params()` values).
    pub fn mean_coefs(&self) -> &[f64] {
        &self.beta_hat[..self.spec.n_params()]
    }

    /// Predicted probabilities, `N * K` row-major. The mixed logit integrates
    /// over its coefficient distribution with the model's Halton draws shared
    /// by all observations.
    pub fn predict_proba(&self, ds: &ChoiceDataset) -> Result<Vec<f64>> {
        let design = Design::new(ds, &self.spec)?;
        let (n, k, np) = (ds.n_obs(), ds.n_alts(), self.spec.n_params());
        let mut out = vec![0.0; n * k];
        match &self.kind {
            LogitKind::Mnl => {
                let beta = self.mean_coefs();
                for i in 0..n {
                    design.probs(i, beta, &mut out[i * k..(i + 1) * k]);
                }
            }
            LogitKind::Mixed(rcs) => {
                let draws = normal_draws(1, rcs.n_draws, rcs.random.len(), rcs.skip)?;
                let sds = &self.beta_hat[np..];
                let mut beta = vec![0.0; np];
                let mut p = vec![0.0; k];
                for r in 0..rcs.n_draws {
                    beta.copy_from_slice(self.mean_coefs());
                    for (d, &j) in rcs.random.iter().enumerate() {
                        beta[j] += sds[d] * draws.normal(0, r, d);
                    }
                    for i in 0..n {
                        design.probs(i, &beta, &mut p);
                        out[i * k..(i + 1) * k].iter_mut().zip(&p).for_each(|(o, v)| *o += v);
                    }
                }
                let inv = 1.0 / rcs.n_draws as f64;
                out.iter_mut().for_each(|v| *v *= inv);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec_k(k: usize, p: usize) -> UtilitySpec {
        let mut s = UtilitySpec::new(k, p);
        for f in 0..p {
            s = s.term(f, &(0..k).collect::<Vec<_>>(), &format!("b{f}")).unwrap();
        }
        s
    }

    #[test]
    fn zero_coefficients_give_equal_shares() {
        let s = spec_k(4, 1);
        let p = mnl_probabilities(&[0.0], &[1.0, 2.0, 3.0, 4.0], &[true; 4], &s).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form_two_alternatives() {
        let p = softmax(&[0.0, 3f64.ln()], &[true, true]).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-15 && (p[1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn unavailable_alternatives_get_zero() {
        let p = softmax(&[1.0, 2.0, 3.0], &[true, false, true]).unwrap();
        assert_eq!(p[1], 0.0);
        assert!((p[0] + p[2] - 1.0).abs() < 1e-12);
        assert!(softmax(&[1.0, 2.0], &[false, false]).is_err());
    }

    #[test]
    fn spec_validation() {
        let s = UtilitySpec::new(2, 1).constant(0, "a").unwrap().constant(1, "b").unwrap();
        assert!(s.validate().is_err());
        assert!(UtilitySpec::new(2, 1).term(3, &[0], "x").is_err());
        let shared = UtilitySpec::new(3, 2).term(0, &[1], "f").unwrap().term(1, &[2], "f").unwrap();
        assert_eq!(shared.n_params(), 1);
        assert!(shared.validate().is_ok());
    }

    proptest! {
        #[test]
        fn simplex_translation_and_iia(
            v in proptest::collection::vec(-30.0f64..30.0, 3..6),
            shift in -200.0f64..200.0,
            third in -30.0f64..30.0,
        ) {
            let avail = vec![true; v.len()];
            let p = softmax(&v, &avail).unwrap();
            prop_assert!(p.iter().all(|x| *x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = softmax(&shifted, &avail).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            // IIA: changing alternative 2 leaves p0/p1 unchanged
            let mut w = v.clone();
            w[2] = third;
            let r = softmax(&w, &avail).unwrap();
            let (before, after) = (p[0] / p[1], r[0] / r[1]);
            prop_assert!((before / after - 1.0).abs() < 1e-12);
        }
    }
}
