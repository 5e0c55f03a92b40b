//! CSV and JSON report writers. Every file starts with a provenance header:
//! `#` comment lines for CSV, a `meta` object for JSON.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use modechoice_core::eval::CvReport;
use modechoice_core::interpret::{ImportanceEntry, ImportanceTable, PdCurve};
use modechoice_core::logit::{FitStats, FittedLogit, XStandardized};
use serde::{Deserialize, Serialize};

use crate::io::write_header_comment;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Meta {
    pub fn new(config_sha256: String, seed: u64) -> Self {
        Meta { tool: "modechoice".into(), version: VERSION.into(), config_sha256, seed }
    }

    pub fn lines(&self) -> Vec<String> {
        vec![
            format!("{} {}", self.tool, self.version),
            format!("config sha256 {}", self.config_sha256),
            format!("seed {}", self.seed),
        ]
    }
}

/// Output directory bound to a run's provenance.
pub struct Sink {
    pub dir: PathBuf,
    pub meta: Meta,
}

impl Sink {
    pub fn new(dir: &Path, meta: Meta) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Sink { dir: dir.to_path_buf(), meta })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write_bytes(&self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))
    }

    /// CSV with the provenance header; `rows` exclude the column header.
    pub fn csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut buf = Vec::new();
        write_header_comment(&mut buf, &self.meta.lines())?;
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        self.write_bytes(name, &buf)
    }

    /// Pretty JSON object `{ "meta": ..., <key>: body }`.
    pub fn json<T: Serialize>(&self, name: &str, key: &str, body: &T) -> Result<()> {
        let mut obj = serde_json::Map::new();
        obj.insert("meta".into(), serde_json::to_value(&self.meta)?);
        obj.insert(key.into(), serde_json::to_value(body)?);
        let mut text = serde_json::to_string_pretty(&serde_json::Value::Object(obj))?;
        text.push('\n');
        self.write_bytes(name, text.as_bytes())
    }
}

pub fn num(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Conventional two-sided significance stars from `|estimate / se|`.
pub fn significance(estimate: f64, se: f64) -> &'static str {
    let t = (estimate / se).abs();
    if !t.is_finite() {
        ""
    } else if t >= 2.576 {
        "***"
    } else if t >= 1.960 {
        "**"
    } else if t >= 1.645 {
        "*"
    } else {
        ""
    }
}

pub const COEF_HEADER: [&str; 5] = ["coef", "estimate", "std_error", "beta_std_x", "significance"];

pub fn coef_rows(fit: &FittedLogit, xs: Option<&XStandardized>) -> Vec<Vec<String>> {
    fit.param_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let (b, se) = (fit.beta_hat[j], fit.std_errors[j]);
            vec![
                name.clone(),
                num(b),
                num(se),
                opt(xs.and_then(|x| x.beta_std_x.get(j).copied().flatten())),
                significance(b, se).into(),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary<'a> {
    pub model: &'a str,
    pub kind: String,
    pub converged: bool,
    pub iterations: usize,
    pub n_obs: usize,
    pub n_individuals: usize,
    pub n_params: usize,
    pub ll_zero: f64,
    pub ll_constants_only: f64,
    pub ll_convergence: f64,
    pub stats: FitStats,
}

pub fn importance_rows(entries: &[ImportanceEntry]) -> Vec<Vec<String>> {
    entries
        .iter()
        .map(|e| vec![e.feature.clone(), num(e.raw), num(e.score), num(e.share), e.rank.to_string()])
        .collect()
}

/// Feature by model rank table; `/` where a model does not use a feature.
pub fn importance_table_rows(t: &ImportanceTable) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["feature".to_string()];
    header.extend(t.models.iter().cloned());
    let rows = t
        .features
        .iter()
        .zip(&t.ranks)
        .map(|(f, r)| {
            let mut row = vec![f.clone()];
            row.extend(r.iter().map(|x| x.map_or_else(|| "/".to_string(), |v| v.to_string())));
            row
        })
        .collect();
    (header, rows)
}

pub fn pd_rows(c: &PdCurve) -> Vec<Vec<String>> {
    c.grid.iter().zip(&c.values).map(|(g, v)| vec![c.feature.clone(), num(*g), num(*v)]).collect()
}

/// Mean and SD table over models, with per-class recall columns.
pub fn cv_accuracy(r: &CvReport) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header: Vec<String> = vec!["model".into(), "mean".into(), "sd".into()];
    for c in &r.classes {
        header.push(format!("{c}_mean"));
        header.push(format!("{c}_sd"));
    }
    header.push("folds_ok".into());
    header.push("folds_failed".into());
    let rows = r
        .models
        .iter()
        .map(|m| {
            let mut row = vec![m.name.clone(), opt(m.accuracy.mean), opt(m.accuracy.sd)];
            for s in &m.per_class {
                row.push(opt(s.mean));
                row.push(opt(s.sd));
            }
            row.push((m.folds.len() - m.n_failed).to_string());
            row.push(m.n_failed.to_string());
            row
        })
        .collect();
    (header, rows)
}

pub fn cv_l1(r: &CvReport) -> Vec<Vec<String>> {
    r.models
        .iter()
        .map(|m| {
            vec![
                m.name.clone(),
                opt(m.l1.mean),
                opt(m.l1.sd),
                (m.folds.len() - m.n_failed).to_string(),
                m.n_failed.to_string(),
            ]
        })
        .collect()
}

pub fn cv_folds(r: &CvReport) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for m in &r.models {
        for f in &m.folds {
            rows.push(vec![
                m.name.clone(),
                f.fold.to_string(),
                f.n_test.to_string(),
                opt(f.accuracy.as_ref().map(|a| a.overall)),
                opt(f.l1),
                f.error.clone().unwrap_or_default(),
            ]);
        }
    }
    rows
}

/// Table label for a perturbation size; a 2-minute marginal effect is
/// labelled "1 or 2 min".
pub fn delta_label(marginal: bool, delta: f64, unit: Option<&str>) -> String {
    if !marginal {
        return format!("{}%", num((delta * 1e8).round() / 1e6));
    }
    match unit {
        Some("min") if delta == 2.0 => "1 or 2 min".into(),
        Some(u) => format!("{} {u}", num(delta)),
        None if delta == 1.0 => "1 unit".into(),
        None => format!("{} units", num(delta)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(delta_label(true, 2.0, Some("min")), "1 or 2 min");
        assert_eq!(delta_label(true, 1.0, Some("min")), "1 min");
        assert_eq!(delta_label(true, 1.0, None), "1 unit");
        assert_eq!(delta_label(false, 0.1, None), "10%");
        assert_eq!(delta_label(true, 5.0, Some("min")), "5 min");
    }

    #[test]
    fn stars() {
        assert_eq!(significance(3.0, 1.0), "***");
        assert_eq!(significance(-2.0, 1.0), "**");
        assert_eq!(significance(1.7, 1.0), "*");
        assert_eq!(significance(1.0, 1.0), "");
        assert_eq!(significance(1.0, f64::NAN), "");
    }

    #[test]
    fn table_uses_slash_for_absent() {
        let t = ImportanceTable {
            models: vec!["rf".into(), "mnl".into()],
            features: vec!["tt".into(), "pt_dummy".into()],
            ranks: vec![vec![Some(1), Some(1)], vec![Some(2), None]],
        };
        let (h, rows) = importance_table_rows(&t);
        assert_eq!(h, vec!["feature", "rf", "mnl"]);
        assert_eq!(rows[1], vec!["pt_dummy", "2", "/"]);
    }
}
