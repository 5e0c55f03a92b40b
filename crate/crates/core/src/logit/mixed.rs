use super::mnl::{constants_only_ll, standard_errors};
use super::{
    fit_mnl, normal_draws, Design, FittedLogit, HaltonDraws, LogitKind, LogitOptions, RandomCoefSpec, UtilitySpec,
};
use crate::dataset::ChoiceDataset;
use crate::optim::{maximize, Objective};
use crate::prelude::*;
use crate::{par, Error, Result};

const CHUNK: usize = 16;

/// Simulated panel log-likelihood of a mixed logit with fixed draws.
///
/// Parameters are the coefficient means followed by one standard deviation
/// per random coefficient. For person `n` with choice occasions `t`:
/// `P_n = (1/R) sum_r prod_t p_t(beta_r)` with
/// `beta_r = mean + sd * z_{n,r}`; the objective is `sum_n ln P_n`.
pub struct MixedObjective {
    design: Design,
    groups: Vec<Vec<usize>>,
    random: Vec<usize>,
    draws: HaltonDraws,
    /// When set, standard deviations are fixed at zero and the parameter
    /// vector holds the means only.
    sd_fixed: bool,
}

impl MixedObjective {
    pub fn new(ds: &ChoiceDataset, spec: &UtilitySpec, rcs: &RandomCoefSpec, draws: HaltonDraws) -> Result<Self> {
        rcs.validate(spec)?;
        let groups = ds.person_groups();
        if draws.n_individuals < groups.len() || draws.n_dims != rcs.random.len() {
            return Err(Error::arg(format!(
                "draws cover {} individuals x {} dims, need {} x {}",
                draws.n_individuals,
                draws.n_dims,
                groups.len(),
                rcs.random.len()
            )));
        }
        Ok(MixedObjective {
            design: Design::new(ds, spec)?,
            groups,
            random: rcs.random.clone(),
            draws,
            sd_fixed: !rcs.estimate_sd,
        })
    }

    fn n_params(&self) -> usize {
        self.design.n_params + if self.sd_fixed { 0 } else { self.random.len() }
    }

    fn eval(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        let d = &self.design;
        let (k, np, nr) = (d.n_alts, d.n_params, self.random.len());
        let dim = self.n_params();
        let r_count = self.draws.n_draws;
        let ln_r = (r_count as f64).ln();
        let means = &theta[..np];
        let zero_sd = vec![0.0; nr];
        let sds = if self.sd_fixed { &zero_sd[..] } else { &theta[np..] };

        par::chunked_sum(self.groups.len(), CHUNK, dim, |range| {
            let mut ll = 0.0;
            let mut grad = vec![0.0; dim];
            let mut beta = vec![0.0; np];
            let mut p = vec![0.0; k];
            let mut log_l = vec![0.0; r_count];
            // per-draw score of ln L_r with respect to the coefficients
            let mut score = vec![0.0; r_count * np];
            for person in range {
                for r in 0..r_count {
                    beta.copy_from_slice(means);
                    for (dd, &j) in self.random.iter().enumerate() {
                        beta[j] += sds[dd] * self.draws.normal(person, r, dd);
                    }
                    let s = &mut score[r * np..(r + 1) * np];
                    s.iter_mut().for_each(|v| *v = 0.0);
                    let mut acc = 0.0;
                    for &i in &self.groups[person] {
                        acc += d.probs(i, &beta, &mut p);
                        let c = d.chosen[i];
                        for (a, pa) in p.iter().enumerate() {
                            let w = if a == c { 1.0 - pa } else { -pa };
                            if w != 0.0 {
                                s.iter_mut().zip(d.row(i, a)).for_each(|(g, x)| *g += w * x);
                            }
                        }
                    }
                    log_l[r] = acc;
                }
                let m = log_l.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
                let weights: Vec<f64> = log_l.iter().map(|v| (v - m).exp()).collect();
                let total: f64 = weights.iter().sum();
                ll += m + total.ln() - ln_r;
                for (r, w) in weights.iter().enumerate() {
                    let w = w / total;
                    let s = &score[r * np..(r + 1) * np];
                    grad[..np].iter_mut().zip(s).for_each(|(g, v)| *g += w * v);
                    if !self.sd_fixed {
                        for (dd, &j) in self.random.iter().enumerate() {
                            grad[np + dd] += w * s[j] * self.draws.normal(person, r, dd);
                        }
                    }
                }
            }
            (ll, grad)
        })
    }
}

impl Objective for MixedObjective {
    fn dim(&self) -> usize {
        self.n_params()
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

/// Simulated log-likelihood and its gradient through the fixed draws.
pub fn mixl_sim_loglik(
    params: &[f64],
    ds: &ChoiceDataset,
    spec: &UtilitySpec,
    rcs: &RandomCoefSpec,
    draws: &HaltonDraws,
) -> Result<(f64, Vec<f64>)> {
    let obj = MixedObjective::new(ds, spec, rcs, draws.clone())?;
    if params.len() != obj.n_params() {
        return Err(Error::arg(format!("expected {} parameters, got {}", obj.n_params(), params.len())));
    }
    Ok(obj.eval(params))
}

/// Simulated maximum likelihood, warm-started from the MNL estimates with
/// standard deviations of 0.1. Draws stay fixed across iterations.
pub fn fit_mixl(
    ds: &ChoiceDataset,
    spec: &UtilitySpec,
    rcs: &RandomCoefSpec,
    opts: &LogitOptions,
) -> Result<FittedLogit> {
    spec.validate()?;
    rcs.validate(spec)?;
    let mnl = fit_mnl(ds, spec, opts)?;
    let n_persons = ds.n_persons();
    let draws = normal_draws(n_persons, rcs.n_draws, rcs.random.len(), rcs.skip)?;
    let obj = MixedObjective::new(ds, spec, rcs, draws)?;

    let mut start = mnl.beta_hat.clone();
    if rcs.estimate_sd {
        start.extend(core::iter::repeat_n(0.1, rcs.random.len()));
    }
    let res = maximize(&obj, &start, &opts.opt())?;
    let (mut std_errors, _) = standard_errors(&obj, &res.x_star);

    let np = spec.n_params();
    let mut beta_hat = res.x_star.clone();
    let mut param_names = spec.coef_names.clone();
    for &j in &rcs.random {
        param_names.push(format!("sd_{}", spec.coef_names[j]));
    }
    if rcs.estimate_sd {
        beta_hat[np..].iter_mut().for_each(|s| *s = s.abs());
    } else {
        beta_hat.extend(core::iter::repeat_n(0.0, rcs.random.len()));
        std_errors.extend(core::iter::repeat_n(f64::NAN, rcs.random.len()));
    }
    let n_params = if rcs.estimate_sd { np + rcs.random.len() } else { np };

    Ok(FittedLogit {
        kind: LogitKind::Mixed(rcs.clone()),
        spec: spec.clone(),
        param_names,
        beta_hat,
        std_errors,
        ll_convergence: res.f_star,
        ll_constants_only: constants_only_ll(ds, spec, opts)?,
        ll_zero: mnl.ll_zero,
        n_params,
        n_obs: ds.n_obs(),
        n_individuals: n_persons,
        converged: res.converged,
        n_iters: res.n_iters,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logit::mnl_loglik;
    use crate::optim::check_gradient;
    use crate::synth::{panel_fixture, PanelFixture};
    use rand::Rng;

    fn fixture() -> (ChoiceDataset, UtilitySpec, RandomCoefSpec) {
        let PanelFixture { ds, .. } = panel_fixture(40, 5, -1.0, 0.5, 21);
        let spec = UtilitySpec::for_dataset(&ds)
            .term(0, &[0, 1, 2], "b_x")
            .unwrap()
            .term(1, &[0, 1, 2], "b_z")
            .unwrap()
            .constant(1, "asc1")
            .unwrap();
        let rcs = RandomCoefSpec::new(vec![0], 25);
        (ds, spec, rcs)
    }

    #[test]
    fn zero_sd_equals_panel_mnl() {
        let (ds, spec, rcs) = fixture();
        let draws = normal_draws(ds.n_persons(), rcs.n_draws, 1, rcs.skip).unwrap();
        let beta = [-0.7, 0.4, 0.2];
        let (mixed, _) = mixl_sim_loglik(&[beta[0], beta[1], beta[2], 0.0], &ds, &spec, &rcs, &draws).unwrap();
        let (mnl, _) = mnl_loglik(&beta, &ds, &spec).unwrap();
        assert!((mixed - mnl).abs() < 1e-10, "{mixed} vs {mnl}");
    }

    #[test]
    fn two_draws_by_hand() {
        // one person, one occasion, two alternatives, x = (0, 1), chosen 1
        let ds = ChoiceDataset::new(
            vec!["a".into(), "b".into()],
            vec!["x".into()],
            vec![0],
            vec![0],
            vec![0.0, 1.0],
            vec![1],
            None,
            None,
        )
        .unwrap();
        let spec = UtilitySpec::for_dataset(&ds).term(0, &[0, 1], "b").unwrap();
        let rcs = RandomCoefSpec { random: vec![0], n_draws: 2, skip: 0, estimate_sd: true };
        let draws = normal_draws(1, 2, 1, 0).unwrap();
        let (mean, sd) = (0.3, 0.8);
        let (ll, _) = mixl_sim_loglik(&[mean, sd], &ds, &spec, &rcs, &draws).unwrap();
        let logistic = |v: f64| 1.0 / (1.0 + (-v).exp());
        // Halton base 2 indices 1 and 2: 1/2 and 1/4
        let z1 = inverse_normal_cdf_ref(0.5);
        let z2 = inverse_normal_cdf_ref(0.25);
        let expect = 0.5 * (logistic(mean + sd * z1) + logistic(mean + sd * z2));
        assert!((ll - expect.ln()).abs() < 1e-12);
    }

    fn inverse_normal_cdf_ref(p: f64) -> f64 {
        crate::logit::inverse_normal_cdf(p)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (ds, spec, rcs) = fixture();
        let draws = normal_draws(ds.n_persons(), rcs.n_draws, 1, rcs.skip).unwrap();
        let obj = MixedObjective::new(&ds, &spec, &rcs, draws).unwrap();
        let mut r = crate::rng::stream(3, &[]);
        for _ in 0..20 {
            let t: Vec<f64> = (0..4).map(|_| r.random_range(-1.5..1.5)).collect();
            let err = check_gradient(&obj, &t).unwrap();
            assert!(err < 1e-5, "{err}");
        }
    }

    #[test]
    fn richardson_ratio_of_finite_differences() {
        // central-difference error is O(h^2): halving h quarters it
        let (ds, spec, rcs) = fixture();
        let draws = normal_draws(ds.n_persons(), rcs.n_draws, 1, rcs.skip).unwrap();
        let obj = MixedObjective::new(&ds, &spec, &rcs, draws).unwrap();
        let t = [-0.8, 0.3, 0.1, 0.6];
        let exact = obj.gradient(&t).unwrap();
        let fd = |h: f64| crate::optim::finite_diff_grad(|x| obj.value(x), &t, h);
        let (e1, e2) = (fd(1e-2), fd(5e-3));
        let j = 3;
        let ratio = (e1[j] - exact[j]).abs() / (e2[j] - exact[j]).abs();
        assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
    }

    #[test]
    fn fixed_zero_sd_reproduces_mnl() {
        let (ds, spec, _) = fixture();
        let rcs = RandomCoefSpec { random: vec![0], n_draws: 1, skip: 10, estimate_sd: false };
        let opts = LogitOptions::default();
        let mixed = fit_mixl(&ds, &spec, &rcs, &opts).unwrap();
        let mnl = fit_mnl(&ds, &spec, &opts).unwrap();
        for (a, b) in mixed.mean_coefs().iter().zip(&mnl.beta_hat) {
            assert!((a - b).abs() < 1e-4);
        }
    }
}
