use super::{Design, FittedLogit, LogitKind, LogitOptions, UtilitySpec};
use crate::dataset::ChoiceDataset;
use crate::linalg::{cholesky, Matrix};
use crate::optim::{covariance_at_max, hessian, maximize, Objective};
use crate::prelude::*;
use crate::{par, Result};

const CHUNK: usize = 512;

/// MNL log-likelihood over a dataset, as an optimizer objective.
pub struct MnlObjective {
    design: Design,
}

impl MnlObjective {
    pub fn new(ds: &ChoiceDataset, spec: &UtilitySpec) -> Result<Self> {
        Ok(MnlObjective { design: Design::new(ds, spec)? })
    }

    fn eval(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let d = &self.design;
        let (k, np) = (d.n_alts, d.n_params);
        par::chunked_sum(d.n_obs, CHUNK, np, |range| {
            let mut p = vec![0.0; k];
            let mut grad = vec![0.0; np];
            let mut ll = 0.0;
            for i in range {
                ll += d.probs(i, beta, &mut p);
                let c = d.chosen[i];
                for (a, pa) in p.iter().enumerate() {
                    let w = if a == c { 1.0 - pa } else { -pa };
                    if w != 0.0 {
                        grad.iter_mut().zip(d.row(i, a)).for_each(|(g, x)| *g += w * x);
                    }
                }
            }
            (ll, grad)
        })
    }

    /// Observed information per coefficient at `beta`, i.e. the diagonal of
    /// `sum_i Cov_p(x_i)`.
    fn information_diag(&self, beta: &[f64]) -> Vec<f64> {
        let d = &self.design;
        let (k, np) = (d.n_alts, d.n_params);
        let mut p = vec![0.0; k];
        let mut out = vec![0.0; np];
        for i in 0..d.n_obs {
            d.probs(i, beta, &mut p);
            for (j, o) in out.iter_mut().enumerate() {
                let mean: f64 = (0..k).map(|a| p[a] * d.row(i, a)[j]).sum();
                let second: f64 = (0..k).map(|a| p[a] * d.row(i, a)[j] * d.row(i, a)[j]).sum();
                *o += second - mean * mean;
            }
        }
        out
    }
}

impl Objective for MnlObjective {
    fn dim(&self) -> usize {
        self.design.n_params
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some(self.eval(x).1)
    }

    fn value_and_gradient(&self, x: &[f64]) -> (f64, Vec<f64>) {
        self.eval(x)
    }
}

/// Log-likelihood and analytic gradient `sum_i sum_k (y_ik - p_ik) x_ik`.
pub fn mnl_loglik(beta: &[f64], ds: &ChoiceDataset, spec: &UtilitySpec) -> Result<(f64, Vec<f64>)> {
    if beta.len() != spec.n_params() {
        return Err(crate::Error::arg("coefficient vector length does not match the specification"));
    }
    Ok(MnlObjective::new(ds, spec)?.eval(beta))
}

/// Fits `spec` by maximum likelihood from zero and reports standard errors
/// from the inverse finite-difference Hessian.
///
/// The fit is flagged unconverged when the optimizer stops early or when
/// the information along some coefficient has collapsed below `1e-6` of its
/// value at equal shares, which is what a diverging (separated) coefficient
/// looks like once the gradient has flattened out.
pub fn fit_mnl(ds: &ChoiceDataset, spec: &UtilitySpec, opts: &LogitOptions) -> Result<FittedLogit> {
    spec.validate()?;
    let obj = MnlObjective::new(ds, spec)?;
    let zero = vec![0.0; spec.n_params()];
    let res = maximize(&obj, &zero, &opts.opt())?;

    let info_now = obj.information_diag(&res.x_star);
    let info_zero = obj.information_diag(&zero);
    let collapsed = info_now.iter().zip(&info_zero).any(|(a, b)| *a < 1e-6 * b);
    let (std_errors, identified) = standard_errors(&obj, &res.x_star);

    let ll_constants_only = constants_only_ll(ds, spec, opts)?;
    Ok(FittedLogit {
        kind: LogitKind::Mnl,
        spec: spec.clone(),
        param_names: spec.coef_names.clone(),
        beta_hat: res.x_star,
        std_errors,
        ll_convergence: res.f_star,
        ll_constants_only,
        ll_zero: obj.value(&zero),
        n_params: spec.n_params(),
        n_obs: ds.n_obs(),
        n_individuals: ds.n_persons(),
        converged: res.converged && !collapsed && identified,
        n_iters: res.n_iters,
    })
}

/// Standard errors and whether the negated Hessian is positive definite.
pub(crate) fn standard_errors(obj: &dyn Objective, x: &[f64]) -> (Vec<f64>, bool) {
    let mut info = hessian(obj, x);
    info.scale(-1.0);
    let pd = normalized_pd(&info);
    let se = match covariance_at_max(obj, x) {
        Ok(cov) => cov.diag().iter().map(|v| if *v > 0.0 { v.sqrt() } else { f64::NAN }).collect(),
        Err(_) => vec![f64::NAN; x.len()],
    };
    (se, pd)
}

fn normalized_pd(info: &Matrix) -> bool {
    let d = info.diag();
    if d.iter().any(|v| !(*v > 0.0)) {
        return false;
    }
    let n = info.rows;
    let mut m = info.clone();
    for i in 0..n {
        for j in 0..n {
            m.set(i, j, info.get(i, j) / (d[i] * d[j]).sqrt());
        }
    }
    cholesky(&m).is_some()
}

/// Log-likelihood of the constants-only model (constants on every
/// alternative but the specification's base).
pub(crate) fn constants_only_ll(ds: &ChoiceDataset, spec: &UtilitySpec, opts: &LogitOptions) -> Result<f64> {
    let base = spec.base_alt().unwrap_or(0);
    let c = UtilitySpec::constants_only(ds.n_alts(), ds.n_features(), base, ds.alt_names());
    let obj = MnlObjective::new(ds, &c)?;
    Ok(maximize(&obj, &vec![0.0; c.n_params()], &opts.opt())?.f_star)
}
