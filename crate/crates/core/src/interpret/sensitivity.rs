use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::dataset::WideMatrix;
use crate::prelude::*;
use crate::{par, Error, Result};

/// Which column to perturb, by how much, and whose share to watch. For a
/// logit model, naming an alternative's copy of a feature (`tt_pt`)
/// perturbs that alternative only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivitySpec {
    pub column: String,
    /// Relative change for elasticities, absolute change for marginal effects.
    pub delta: f64,
    pub target_alt: usize,
    /// Drop rows whose perturbed value leaves the training range.
    #[serde(default)]
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Perturbation {
    Multiplicative,
    Additive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityResult {
    pub estimate: f64,
    pub baseline_share: f64,
    pub perturbed_share: f64,
    pub rows_used: usize,
    pub rows_dropped: usize,
}

fn column_of(w: &WideMatrix, name: &str) -> Result<usize> {
    w.column_index(name).ok_or_else(|| Error::arg(format!("unknown column `{name}`")))
}

fn mean_prob(pred: &dyn Predictor, w: &WideMatrix, alt: usize) -> Result<f64> {
    let k = pred.schema().n_classes();
    let p = pred.predict_proba(w)?;
    Ok(p.chunks(k).map(|r| r[alt]).sum::<f64>() / w.n_rows as f64)
}

fn perturb(
    pred: &dyn Predictor,
    w: &WideMatrix,
    spec: &SensitivitySpec,
    kind: Perturbation,
) -> Result<SensitivityResult> {
    if spec.delta == 0.0 || !spec.delta.is_finite() {
        return Err(Error::arg("perturbation size must be finite and nonzero"));
    }
    if spec.target_alt >= pred.schema().n_classes() {
        return Err(Error::arg(format!("target alternative {} out of range", spec.target_alt)));
    }
    let j = column_of(w, &spec.column)?;
    let moved = w.map_column(j, |_, v| match kind {
        Perturbation::Multiplicative => v * (1.0 + spec.delta),
        Perturbation::Additive => v + spec.delta,
    });
    let keep: Vec<usize> = if spec.constrained {
        let (lo, hi) = pred.schema().ranges[j];
        (0..w.n_rows).filter(|&i| (lo..=hi).contains(&moved.get(i, j))).collect()
    } else {
        (0..w.n_rows).collect()
    };
    if keep.is_empty() {
        return Err(Error::arg(format!("every row leaves the training range of `{}`", spec.column)));
    }
    let (base, moved) =
        if keep.len() == w.n_rows { (w.clone(), moved) } else { (w.subset(&keep), moved.subset(&keep)) };
    let q = mean_prob(pred, &base, spec.target_alt)?;
    let q1 = mean_prob(pred, &moved, spec.target_alt)?;
    let estimate = match kind {
        Perturbation::Multiplicative => {
            if q == 0.0 {
                return Err(Error::arg("baseline share of the target alternative is zero"));
            }
            (q1 - q) / q / spec.delta.abs()
        }
        Perturbation::Additive => (q1 - q) / spec.delta.abs(),
    };
    Ok(SensitivityResult {
        estimate,
        baseline_share: q,
        perturbed_share: q1,
        rows_used: keep.len(),
        rows_dropped: w.n_rows - keep.len(),
    })
}

/// `[(Q' - Q) / Q] / |delta|` after scaling the column by `1 + delta`.
pub fn arc_elasticity(pred: &dyn Predictor, w: &WideMatrix, spec: &SensitivitySpec) -> Result<SensitivityResult> {
    perturb(pred, w, spec, Perturbation::Multiplicative)
}

/// `(Q' - Q) / |delta|` after adding `delta` to the column.
pub fn marginal_effect(pred: &dyn Predictor, w: &WideMatrix, spec: &SensitivitySpec) -> Result<SensitivityResult> {
    perturb(pred, w, spec, Perturbation::Additive)
}

/// Each effect divided by the reference effect, i.e. expressed in units of
/// the reference feature.
pub fn value_of_time_ratio(effects: &[(String, f64)], reference: &str) -> Result<Vec<(String, f64)>> {
    let r = effects
        .iter()
        .find(|(n, _)| n == reference)
        .map(|(_, v)| *v)
        .ok_or_else(|| Error::arg(format!("no effect named `{reference}`")))?;
    if r == 0.0 {
        return Err(Error::arg(format!("reference effect `{reference}` is zero")));
    }
    Ok(effects.iter().map(|(n, v)| (n.clone(), v / r)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdCurve {
    pub feature: String,
    pub target_alt: usize,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

/// Mean predicted probability of `target_alt` with the column overwritten
/// by each grid value in turn. Without a grid, 50 evenly spaced points span
/// the column's observed range.
pub fn partial_dependence(
    pred: &dyn Predictor,
    w: &WideMatrix,
    column: &str,
    grid: Option<&[f64]>,
    target_alt: usize,
) -> Result<PdCurve> {
    let j = column_of(w, column)?;
    if w.n_rows == 0 {
        return Err(Error::arg("partial dependence over an empty row set"));
    }
    if target_alt >= pred.schema().n_classes() {
        return Err(Error::arg(format!("target alternative {target_alt} out of range")));
    }
    let grid: Vec<f64> = match grid {
        Some(g) => {
            if g.is_empty() || g.windows(2).any(|p| !(p[1] > p[0])) || g.iter().any(|v| !v.is_finite()) {
                return Err(Error::arg("grid must be finite and strictly ascending"));
            }
            g.to_vec()
        }
        None => default_grid(&w.column(j), 50),
    };
    let values = par::map_indexed(grid.len(), |g| mean_prob(pred, &w.map_column(j, |_, _| grid[g]), target_alt))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(PdCurve { feature: column.to_string(), target_alt, grid, values })
}

fn default_grid(col: &[f64], n: usize) -> Vec<f64> {
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi > lo) {
        return vec![lo];
    }
    (0..n).map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::WideLayout;
    use crate::interpret::{market_share, ShareMode};
    use crate::logit::{fit_mnl, mnl_probabilities, LogitOptions, UtilitySpec};
    use crate::models::LogitPredictor;
    use crate::synth::mnl_fixture;
    use crate::trees::{fit_ensemble, EnsembleKind, EnsembleOptions};

    fn mnl_case() -> (LogitPredictor, WideMatrix, crate::dataset::ChoiceDataset) {
        let ds = mnl_fixture(400, 3, &[-0.8, 0.5], 21);
        let spec = UtilitySpec::for_dataset(&ds)
            .term(0, &[0, 1, 2], "b0")
            .unwrap()
            .term(1, &[0, 1, 2], "b1")
            .unwrap()
            .constant(1, "asc1")
            .unwrap();
        let fit = fit_mnl(&ds, &spec, &LogitOptions::default()).unwrap();
        let layout = WideLayout::from_dataset(&ds);
        let w = layout.flatten(&ds);
        (LogitPredictor::new(fit, &layout, &w), w, ds)
    }

    fn brute_share(
        p: &LogitPredictor,
        ds: &crate::dataset::ChoiceDataset,
        alt: usize,
        f: impl Fn(usize, usize, f64) -> f64,
    ) -> f64 {
        let mut q = 0.0;
        for i in 0..ds.n_obs() {
            let block: Vec<f64> = (0..3)
                .flat_map(|k| (0..2).map(move |pp| (k, pp)))
                .map(|(k, pp)| f(k, pp, ds.value(i, k, pp)))
                .collect();
            q += mnl_probabilities(&p.fit.beta_hat, &block, &[true; 3], &p.fit.spec).unwrap()[alt];
        }
        q / ds.n_obs() as f64
    }

    #[test]
    fn elasticity_matches_direct_recomputation() {
        let (pred, w, ds) = mnl_case();
        let spec = SensitivitySpec { column: "x0_alt2".into(), delta: 0.10, target_alt: 2, constrained: false };
        let e = arc_elasticity(&pred, &w, &spec).unwrap();
        let q = brute_share(&pred, &ds, 2, |_, _, v| v);
        let q1 = brute_share(&pred, &ds, 2, |k, p, v| if k == 2 && p == 0 { v * 1.1 } else { v });
        assert!((e.estimate - (q1 - q) / q / 0.1).abs() < 1e-12);
    }

    #[test]
    fn marginal_effect_matches_direct_and_analytic() {
        let (pred, w, ds) = mnl_case();
        let spec = SensitivitySpec { column: "x1_alt0".into(), delta: 1.0, target_alt: 0, constrained: false };
        let m = marginal_effect(&pred, &w, &spec).unwrap();
        let q = brute_share(&pred, &ds, 0, |_, _, v| v);
        let q1 = brute_share(&pred, &ds, 0, |k, p, v| if k == 0 && p == 1 { v + 1.0 } else { v });
        assert!((m.estimate - (q1 - q)).abs() < 1e-12);

        // small steps converge to mean b1 * p0 (1 - p0)
        let small = SensitivitySpec { delta: 1e-4, ..spec };
        let m = marginal_effect(&pred, &w, &small).unwrap().estimate;
        let b1 = pred.fit.coef("b1").unwrap();
        let probs = pred.predict_proba(&w).unwrap();
        let analytic = probs.chunks(3).map(|r| b1 * r[0] * (1.0 - r[0])).sum::<f64>() / w.n_rows as f64;
        assert!((m - analytic).abs() < 1e-4);
    }

    #[test]
    fn ignored_column_has_no_effect() {
        let (pred, w, ds) = mnl_case();
        let spec = UtilitySpec::for_dataset(&ds).term(0, &[0, 1, 2], "b0").unwrap();
        let fit = fit_mnl(&ds, &spec, &LogitOptions::default()).unwrap();
        let pred0 = LogitPredictor { fit, ..pred };
        let s = SensitivitySpec { column: "x1_alt1".into(), delta: 0.3, target_alt: 1, constrained: false };
        assert_eq!(arc_elasticity(&pred0, &w, &s).unwrap().estimate, 0.0);
        assert_eq!(marginal_effect(&pred0, &w, &s).unwrap().estimate, 0.0);
        let pd = partial_dependence(&pred0, &w, "x1_alt1", None, 1).unwrap();
        let base = market_share(&pred0, &w, ShareMode::MeanProbability).unwrap()[1];
        assert!(pd.values.iter().all(|v| (v - base).abs() < 1e-12));
        assert_eq!(pd.grid.len(), 50);
    }

    #[test]
    fn pd_follows_the_coefficient_sign() {
        let (pred, w, _) = mnl_case();
        assert!(pred.fit.coef("b0").unwrap() < 0.0);
        let pd = partial_dependence(&pred, &w, "x0_alt1", None, 1).unwrap();
        assert!(pd.values.windows(2).all(|v| v[1] < v[0]));
        let one = partial_dependence(&pred, &w, "x0_alt1", Some(&[0.5]), 1).unwrap();
        let over = w.map_column(w.column_index("x0_alt1").unwrap(), |_, _| 0.5);
        assert_eq!(one.values[0], market_share(&pred, &over, ShareMode::MeanProbability).unwrap()[1]);
        assert!(partial_dependence(&pred, &w, "x0_alt1", Some(&[1.0, 1.0]), 1).is_err());
    }

    #[test]
    fn constrained_drops_out_of_range_rows() {
        // label depends on z0 inside [0, 1]; response is flat beyond the data
        let n = 400;
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let y: Vec<usize> = rows.iter().map(|r| usize::from(r[0] > 0.5)).collect();
        let w = WideMatrix::from_rows(&rows, vec!["z0".into()], y, vec!["a".into(), "b".into()]).unwrap();
        let rf = fit_ensemble(&w, &EnsembleOptions::random_forest(25, 1), EnsembleKind::RandomForest, 3).unwrap();
        let spec = SensitivitySpec { column: "z0".into(), delta: 0.3, target_alt: 1, constrained: false };
        let all = marginal_effect(&rf, &w, &spec).unwrap();
        let con = marginal_effect(&rf, &w, &SensitivitySpec { constrained: true, ..spec.clone() }).unwrap();
        assert_eq!(con.rows_dropped, (0..n).filter(|&i| rows[i][0] + 0.3 > 1.0).count());
        assert!(con.estimate.abs() >= all.estimate.abs());

        let tiny = SensitivitySpec { delta: 1e-9, constrained: true, ..spec };
        assert_eq!(marginal_effect(&rf, &w, &tiny).unwrap().rows_dropped, 1);
    }

    #[test]
    fn constrained_equals_unconstrained_without_out_of_bound_rows() {
        let (pred, w, _) = mnl_case();
        let spec = SensitivitySpec { column: "x0_alt0".into(), delta: -1e-3, target_alt: 0, constrained: false };
        let lo = pred.schema.ranges[w.column_index("x0_alt0").unwrap()].0;
        let keep: Vec<usize> = (0..w.n_rows).filter(|&i| w.get(i, 0) - 1e-3 >= lo).collect();
        let w = w.subset(&keep);
        let a = marginal_effect(&pred, &w, &spec).unwrap();
        let b = marginal_effect(&pred, &w, &SensitivitySpec { constrained: true, ..spec }).unwrap();
        assert_eq!(b.rows_dropped, 0);
        assert_eq!(a, b);
    }

    #[test]
    fn everything_out_of_range_is_rejected() {
        let (pred, w, _) = mnl_case();
        let spec = SensitivitySpec { column: "x0_alt0".into(), delta: 100.0, target_alt: 0, constrained: true };
        assert!(marginal_effect(&pred, &w, &spec).is_err());
    }

    #[test]
    fn value_of_time_examples() {
        let effects: Vec<(String, f64)> = [("transfer", -10.69), ("rideshare", -8.13), ("wait", -2.93), ("tt", -1.94)]
            .iter()
            .map(|(n, v)| (n.to_string(), *v))
            .collect();
        let r = value_of_time_ratio(&effects, "tt").unwrap();
        assert!((r[0].1 - 5.5).abs() < 0.1);
        assert!((r[1].1 - 4.2).abs() < 0.1);
        assert!((r[2].1 - 1.5).abs() < 0.1);
        assert_eq!(r[3].1, 1.0);
        assert!(value_of_time_ratio(&[("a".into(), 0.0)], "a").is_err());
    }
}
