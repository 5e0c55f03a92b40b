//! The `fit`, `crossval`, `interpret`, `synth` and `compare` commands.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use modechoice_core::dataset::{vif, ChoiceDataset, WideLayout, WideMatrix};
use modechoice_core::eval::{cross_validate_specs, CvOptions};
use modechoice_core::interpret::{
    aggregate_by_feature, arc_elasticity, gini_importance, importance_table, logit_importance, marginal_effect,
    nn_importance, partial_dependence, value_of_time_ratio, ImportanceEntry, SensitivitySpec,
};
use modechoice_core::logit::{fit_stats, x_standardized, FittedLogit, LogitOptions};
use modechoice_core::models::{Model, ModelSpec};
use modechoice_core::rng::derive_seed;
use modechoice_core::synth::generate;
use serde::Serialize;

use crate::config::{hash_json, Measure, NamedModel, RunConfig, SynthConfig};
use crate::envelope::ModelFile;
use crate::io::{read_long, write_folds, write_header_comment, write_long};
use crate::report::{self, num, Meta, Sink};

const FIT_STREAM: u64 = 0x0066_6974;

/// A command failure and its exit status: 1 for invalid input, 2 for a
/// failure while running.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    /// Numerical failures are runtime errors; every other toolkit error
    /// reports bad input.
    pub fn classify(e: anyhow::Error) -> Self {
        let numerical = e
            .chain()
            .any(|c| matches!(c.downcast_ref::<modechoice_core::Error>(), Some(modechoice_core::Error::Numerical(_))));
        if numerical {
            Failure::Runtime(e)
        } else {
            Failure::Validation(e)
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Runtime(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

pub type Outcome<T> = std::result::Result<T, Failure>;

trait Tag<T> {
    fn invalid(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for std::result::Result<T, E> {
    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Where `interpret` finds model files; `<out>/models` by default.
    pub models: Option<PathBuf>,
}

/// A loaded run: config, data and its wide projection.
pub struct Run {
    pub cfg: RunConfig,
    pub seed: u64,
    pub ds: ChoiceDataset,
    pub layout: WideLayout,
    pub wide: WideMatrix,
    pub sink: Sink,
}

fn resolve_seed(config: Option<u64>, flag: Option<u64>) -> Outcome<u64> {
    flag.or(config).ok_or_else(|| Failure::Validation(anyhow!("a seed is required (config `seed` or --seed)")))
}

fn resolve_out(config: Option<&Path>, flag: Option<&Path>) -> Outcome<PathBuf> {
    flag.or(config)
        .map(Path::to_path_buf)
        .ok_or_else(|| Failure::Validation(anyhow!("an output directory is required (config `out` or --out)")))
}

impl Run {
    pub fn load(config: &Path, ov: &Overrides) -> Outcome<Self> {
        let mut cfg = RunConfig::load(config).invalid()?;
        let seed = resolve_seed(cfg.seed, ov.seed)?;
        cfg.seed = Some(seed);
        let out = resolve_out(cfg.out.as_deref(), ov.out.as_deref())?;
        let file = std::fs::File::open(&cfg.data.path)
            .with_context(|| format!("opening data {}", cfg.data.path.display()))
            .invalid()?;
        let ds =
            read_long(file, &cfg.data.columns).with_context(|| format!("in {}", cfg.data.path.display())).invalid()?;
        let layout = WideLayout::from_dataset(&ds);
        let wide = layout.flatten(&ds);
        let run =
            Run { sink: Sink::new(&out, Meta::new(cfg.fingerprint(), seed)).runtime()?, cfg, seed, ds, layout, wide };
        run.check_names()?;
        Ok(run)
    }

    /// Rejects references to unknown features, columns and alternatives
    /// before any work starts.
    fn check_names(&self) -> Outcome<()> {
        for m in &self.cfg.models {
            let ctx = || format!("model `{}`", m.name());
            match &m.spec {
                ModelSpec::Mnl { utility, .. } => {
                    utility.resolve(&self.ds).with_context(ctx).invalid()?;
                }
                ModelSpec::MixedLogit { utility, random, .. } => {
                    let spec = utility.resolve(&self.ds).with_context(ctx).invalid()?;
                    for r in random {
                        if spec.coef_index(r).is_none() {
                            return Err(Failure::Validation(anyhow!("{}: unknown random coefficient `{r}`", ctx())));
                        }
                    }
                }
                _ => {}
            }
        }
        let it = &self.cfg.interpret;
        for (col, target) in
            it.pd.iter().map(|p| (&p.column, &p.target)).chain(it.sensitivity.iter().map(|s| (&s.column, &s.target)))
        {
            if self.wide.column_index(col).is_none() {
                return Err(Failure::Validation(anyhow!(
                    "unknown column `{col}`; available: {}",
                    self.layout.column_names().join(", ")
                )));
            }
            self.alt(target)?;
        }
        Ok(())
    }

    fn alt(&self, name: &str) -> Outcome<usize> {
        self.ds.alt_index(name).ok_or_else(|| Failure::Validation(anyhow!("unknown alternative `{name}`")))
    }

    fn selected(&self) -> Vec<&NamedModel> {
        match &self.cfg.interpret.models {
            Some(sel) => self.cfg.models.iter().filter(|m| sel.contains(&m.name())).collect(),
            None => self.cfg.models.iter().collect(),
        }
    }
}

fn logit_options(spec: &ModelSpec) -> LogitOptions {
    match spec {
        ModelSpec::Mnl { options, .. } | ModelSpec::MixedLogit { options, .. } => *options,
        _ => LogitOptions::default(),
    }
}

/// Trains every model on the full data and writes model files, logit
/// estimation reports and the VIF screen.
pub fn fit(run: &Run) -> Outcome<Vec<ModelFile>> {
    let sink = &run.sink;
    match vif(&run.wide) {
        Ok(v) => {
            let rows: Vec<Vec<String>> = run
                .layout
                .column_names()
                .into_iter()
                .zip(&v)
                .map(|(c, x)| vec![c, if x.is_infinite() { "inf".into() } else { num(*x) }])
                .collect();
            sink.csv("vif.csv", &["column", "vif"], &rows).runtime()?;
        }
        Err(e) => eprintln!("warning: VIF screen skipped: {e}"),
    }

    let mut files = Vec::new();
    for (i, m) in run.cfg.models.iter().enumerate() {
        let name = m.name();
        let seed = derive_seed(run.seed, &[FIT_STREAM, i as u64]);
        let model = m
            .spec
            .train(&run.ds, &run.layout, seed)
            .with_context(|| format!("training `{name}`"))
            .map_err(Failure::classify)?;
        if let Model::Logit(lp) = &model {
            write_logit_reports(run, &name, &m.spec, &lp.fit)?;
        }
        let file = ModelFile::new(name.clone(), m.spec.clone(), model, sink.meta.clone());
        sink.write_bytes(&format!("models/{name}.json"), file.to_json().runtime()?.as_bytes()).runtime()?;
        files.push(file);
    }
    Ok(files)
}

fn write_logit_reports(run: &Run, name: &str, spec: &ModelSpec, fit: &FittedLogit) -> Outcome<()> {
    let xs = x_standardized(fit, &run.ds, &logit_options(spec)).map_err(|e| Failure::classify(e.into()))?;
    run.sink.csv(&format!("coef_{name}.csv"), &report::COEF_HEADER, &report::coef_rows(fit, Some(&xs))).runtime()?;
    let stats = fit_stats(fit).map_err(|e| Failure::classify(e.into()))?;
    let summary = report::FitSummary {
        model: name,
        kind: match spec {
            ModelSpec::MixedLogit { .. } => "mixed_logit".into(),
            _ => "mnl".into(),
        },
        converged: fit.converged,
        iterations: fit.n_iters,
        n_obs: fit.n_obs,
        n_individuals: fit.n_individuals,
        n_params: fit.n_params,
        ll_zero: fit.ll_zero,
        ll_constants_only: fit.ll_constants_only,
        ll_convergence: fit.ll_convergence,
        stats,
    };
    run.sink.json(&format!("fit_{name}.json"), "fit", &summary).runtime()
}

#[derive(Serialize)]
struct CvEcho<'a> {
    models: &'a [NamedModel],
    note: &'static str,
    report: &'a modechoice_core::eval::CvReport,
}

/// Paired k-fold cross-validation over every configured model.
pub fn crossval(run: &Run) -> Outcome<()> {
    let specs: Vec<(String, ModelSpec)> = run.cfg.models.iter().map(|m| (m.name(), m.spec.clone())).collect();
    let opts = CvOptions { k: run.cfg.crossval.k, seed: run.seed, person_level: run.cfg.crossval.person_level };
    let r = cross_validate_specs(&specs, &run.ds, &opts).map_err(|e| Failure::classify(e.into()))?;
    let sink = &run.sink;
    let (h, rows) = report::cv_accuracy(&r);
    let h: Vec<&str> = h.iter().map(String::as_str).collect();
    sink.csv("cv_accuracy.csv", &h, &rows).runtime()?;
    sink.csv("cv_l1.csv", &["model", "mean", "sd", "folds_ok", "folds_failed"], &report::cv_l1(&r)).runtime()?;
    sink.csv("cv_folds.csv", &["model", "fold", "n_test", "accuracy", "l1", "error"], &report::cv_folds(&r))
        .runtime()?;
    let mut buf = Vec::new();
    write_header_comment(&mut buf, &sink.meta.lines()).runtime()?;
    write_folds(&mut buf, &run.ds, &r.folds).runtime()?;
    sink.write_bytes("folds.csv", &buf).runtime()?;
    let echo = CvEcho {
        models: &run.cfg.models,
        note:
            "hyperparameters are fixed by the config and not tuned inside folds; failed folds are excluded from means",
        report: &r,
    };
    sink.json("cv.json", "crossval", &echo).runtime()
}

fn load_models(run: &Run, dir: &Path) -> Outcome<Vec<ModelFile>> {
    let cols = run.layout.column_names();
    run.selected()
        .into_iter()
        .map(|m| {
            let name = m.name();
            let f = ModelFile::load(&dir.join(format!("{name}.json"))).invalid()?;
            if f.columns != cols {
                let (e, got) = f
                    .columns
                    .iter()
                    .zip(&cols)
                    .find(|(a, b)| a != b)
                    .map(|(a, b)| (a.clone(), b.clone()))
                    .unwrap_or_else(|| (format!("{} columns", f.columns.len()), format!("{} columns", cols.len())));
                return Err(Failure::Validation(anyhow!(
                    "model `{name}` was trained on column `{e}` but the data has `{got}`"
                )));
            }
            Ok(f)
        })
        .collect()
}

fn feature_of_column(layout: &WideLayout, column: &str) -> Option<String> {
    layout.columns.iter().find(|c| c.name == column).map(|c| layout.feature_names[c.feature].clone())
}

const GINI: &str = "gini_decrease";

/// Measure name, native importance and its feature-level aggregate.
type Importance = (&'static str, Vec<ImportanceEntry>, Vec<ImportanceEntry>);

/// `None` for models without a native importance measure.
fn importance_of(run: &Run, f: &ModelFile) -> Outcome<Option<Importance>> {
    let by_column = |method, e: Vec<ImportanceEntry>| {
        let agg = aggregate_by_feature(&e, |c| feature_of_column(&run.layout, c), false);
        Some((method, e, agg))
    };
    Ok(match &f.model {
        Model::Cart(m) => by_column(GINI, gini_importance(&m.gini_tally())),
        Model::Ensemble(m) => by_column(GINI, gini_importance(&m.gini_tally())),
        Model::Boost(m) => by_column("sse_decrease", gini_importance(&m.gini_tally())),
        Model::NeuralNet(m) => by_column("garson", nn_importance(m)),
        Model::NaiveBayes(_) => None,
        Model::Logit(lp) => {
            let xs =
                x_standardized(&lp.fit, &run.ds, &logit_options(&f.spec)).map_err(|e| Failure::classify(e.into()))?;
            let e = logit_importance(&lp.fit, &xs);
            let spec = &lp.fit.spec;
            let agg = aggregate_by_feature(
                &e,
                |c| {
                    let j = spec.coef_index(c)?;
                    spec.features_of(j).first().map(|&p| run.ds.feature_names()[p].clone())
                },
                true,
            );
            Some(("abs_beta_std_x", e, agg))
        }
    })
}

/// Importance tables, partial dependence curves, sensitivity measures and
/// value-of-time ratios for the selected models.
pub fn interpret(run: &Run, models_dir: &Path) -> Outcome<()> {
    let files = load_models(run, models_dir)?;
    let sink = &run.sink;
    let it = &run.cfg.interpret;

    if it.importance {
        let mut table_input = Vec::new();
        for f in &files {
            if let Some((method, native, agg)) = importance_of(run, f)? {
                let h = ["feature", "raw", "score", "share", "rank", "method"];
                let rows: Vec<Vec<String>> = report::importance_rows(&native)
                    .into_iter()
                    .map(|mut r| {
                        r.push(method.into());
                        r
                    })
                    .collect();
                sink.csv(&format!("importance_{}.csv", f.name), &h, &rows).runtime()?;
                table_input.push((f.name.clone(), agg));
            }
        }
        let t = importance_table(&table_input);
        let (h, rows) = report::importance_table_rows(&t);
        let h: Vec<&str> = h.iter().map(String::as_str).collect();
        sink.csv("importance.csv", &h, &rows).runtime()?;
    }

    for req in &it.pd {
        let target = run.alt(&req.target)?;
        let grid: Option<Vec<f64>> = match (&req.grid, req.points) {
            (Some(g), _) => Some(g.clone()),
            (None, Some(n)) => {
                let (lo, hi) = run.wide.column_ranges()[run.wide.column_index(&req.column).unwrap_or(0)];
                Some((0..n).map(|i| if n == 1 { lo } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }).collect())
            }
            (None, None) => None,
        };
        for f in &files {
            let c = partial_dependence(&f.model, &run.wide, &req.column, grid.as_deref(), target)
                .map_err(|e| Failure::classify(e.into()))?;
            sink.csv(
                &format!("pd_{}_{}.csv", req.column, f.name),
                &["feature", "grid_value", "probability"],
                &report::pd_rows(&c),
            )
            .runtime()?;
        }
    }

    let mut sens_rows = Vec::new();
    let mut effects: Vec<Vec<(String, f64)>> = vec![Vec::new(); files.len()];
    for req in &it.sensitivity {
        let target = run.alt(&req.target)?;
        let marginal = req.measure == Measure::MarginalEffect;
        let label = report::delta_label(marginal, req.delta, req.unit.as_deref());
        let variants: &[bool] = if req.constrained { &[false, true] } else { &[false] };
        for (mi, f) in files.iter().enumerate() {
            for &constrained in variants {
                let spec =
                    SensitivitySpec { column: req.column.clone(), delta: req.delta, target_alt: target, constrained };
                let r = if marginal {
                    marginal_effect(&f.model, &run.wide, &spec)
                } else {
                    arc_elasticity(&f.model, &run.wide, &spec)
                }
                .with_context(|| {
                    format!(
                        "{} of `{}` for `{}`",
                        if marginal { "marginal effect" } else { "elasticity" },
                        req.variable,
                        f.name
                    )
                })
                .map_err(Failure::classify)?;
                if marginal && !constrained {
                    effects[mi].push((req.variable.clone(), r.estimate));
                }
                sens_rows.push(vec![
                    req.variable.clone(),
                    if marginal { "marginal_effect".into() } else { "arc_elasticity".into() },
                    num(req.delta),
                    label.clone(),
                    f.name.clone(),
                    if constrained { "constrained".into() } else { "all".into() },
                    num(r.estimate),
                    num(r.baseline_share),
                    num(r.perturbed_share),
                    r.rows_used.to_string(),
                    r.rows_dropped.to_string(),
                ]);
            }
        }
    }
    if !it.sensitivity.is_empty() {
        let h = [
            "variable",
            "measure",
            "delta",
            "delta_label",
            "model",
            "variant",
            "estimate",
            "baseline_share",
            "perturbed_share",
            "rows_used",
            "rows_dropped",
        ];
        sink.csv("sensitivity.csv", &h, &sens_rows).runtime()?;
    }

    if let Some(vot) = &it.value_of_time {
        let mut rows = Vec::new();
        for (f, eff) in files.iter().zip(&effects) {
            match value_of_time_ratio(eff, &vot.reference) {
                Ok(r) => rows.extend(r.into_iter().map(|(v, x)| vec![f.name.clone(), v, num(x)])),
                Err(_) => rows.extend(eff.iter().map(|(v, _)| vec![f.name.clone(), v.clone(), String::new()])),
            }
        }
        sink.csv("value_of_time.csv", &["model", "variable", "ratio"], &rows).runtime()?;
    }
    Ok(())
}

/// Cross-validation, full-data fits and interpretation in one run.
pub fn compare(run: &Run) -> Outcome<()> {
    crossval(run)?;
    fit(run)?;
    interpret(run, &run.sink.path("models"))
}

/// Simulates a dataset and writes `data.csv` plus `truth.json`.
pub fn synth(config: &Path, ov: &Overrides) -> Outcome<()> {
    let cfg = SynthConfig::load(config).invalid()?;
    let seed = resolve_seed(cfg.seed, ov.seed)?;
    let out = resolve_out(None, ov.out.as_deref())?;
    let (ds, truth) = generate(&cfg.generator, seed).map_err(|e| Failure::classify(e.into()))?;
    let sink = Sink::new(&out, Meta::new(hash_json(&cfg.generator), seed)).runtime()?;
    let mut buf = Vec::new();
    write_header_comment(&mut buf, &sink.meta.lines()).runtime()?;
    write_long(&mut buf, &ds).runtime()?;
    sink.write_bytes("data.csv", &buf).runtime()?;
    sink.json("truth.json", "truth", &truth).runtime()
}
