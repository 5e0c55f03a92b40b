//! Panel choice data in the two layouts the models consume.
//!
//! Logit models read a long, alternative-indexed tensor `X[i][k][p]`; the
//! machine-learning classifiers read a wide matrix with one row per
//! observation in which every alternative-varying feature is spread over one
//! column per alternative and individual-level features appear once.

use alloc::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, project_out};
use crate::prelude::*;
use crate::{rng, Error, Result};

/// One row of the long CSV layout: one (observation, alternative) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRecord {
    /// 1-based line number in the source, used in error messages.
    pub line: usize,
    pub obs_id: u64,
    pub person_id: u64,
    pub alt: String,
    pub chosen: bool,
    pub available: bool,
    /// One entry per feature; `None` marks an attribute that does not apply
    /// to this alternative.
    pub values: Vec<Option<f64>>,
}

/// Validated panel choice observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    alt_names: Vec<String>,
    feature_names: Vec<String>,
    obs_ids: Vec<u64>,
    person_ids: Vec<u64>,
    /// `N * K * P`, indexed `(i * K + k) * P + p`.
    x: Vec<f64>,
    chosen: Vec<usize>,
    /// `N * K`.
    available: Vec<bool>,
    /// `P * K`: whether feature `p` is defined for alternative `k`.
    applies: Vec<bool>,
}

impl ChoiceDataset {
    /// Builds a dataset from dense parts, checking every invariant.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alt_names: Vec<String>,
        feature_names: Vec<String>,
        obs_ids: Vec<u64>,
        person_ids: Vec<u64>,
        x: Vec<f64>,
        chosen: Vec<usize>,
        available: Option<Vec<bool>>,
        applies: Option<Vec<bool>>,
    ) -> Result<Self> {
        let k = alt_names.len();
        let p = feature_names.len();
        let n = chosen.len();
        if k < 2 {
            return Err(Error::data("at least two alternatives are required"));
        }
        if p < 1 {
            return Err(Error::data("at least one feature is required"));
        }
        if n < 1 {
            return Err(Error::data("at least one observation is required"));
        }
        if obs_ids.len() != n || person_ids.len() != n {
            return Err(Error::data("id vectors must have one entry per observation"));
        }
        if x.len() != n * k * p {
            return Err(Error::data(format!("attribute tensor has {} values, expected {}", x.len(), n * k * p)));
        }
        let available = available.unwrap_or_else(|| vec![true; n * k]);
        let applies = applies.unwrap_or_else(|| vec![true; p * k]);
        if available.len() != n * k || applies.len() != p * k {
            return Err(Error::data("availability or applicability mask has the wrong size"));
        }
        if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
            let (i, rem) = (pos / (k * p), pos % (k * p));
            return Err(Error::data(format!(
                "observation {}: alternative `{}`, column `{}` is not finite",
                obs_ids[i],
                alt_names[rem / p],
                feature_names[rem % p]
            )));
        }
        for (i, &c) in chosen.iter().enumerate() {
            if c >= k {
                return Err(Error::data(format!("observation {}: chosen index {c} out of range", obs_ids[i])));
            }
            if !available[i * k + c] {
                return Err(Error::data(format!(
                    "observation {}: chosen alternative `{}` is unavailable",
                    obs_ids[i], alt_names[c]
                )));
            }
        }
        Ok(ChoiceDataset { alt_names, feature_names, obs_ids, person_ids, x, chosen, available, applies })
    }

    /// Assembles and validates a dataset from long-layout records.
    ///
    /// Observations keep their order of first appearance. Alternatives follow
    /// `alt_order` when given, else first appearance. An alternative missing
    /// from an observation is marked unavailable. A feature cell left empty
    /// for every record of an alternative is non-applicable there and stored
    /// as 0 in the mask; an empty cell anywhere else is an error.
    pub fn from_long(
        records: &[LongRecord],
        feature_names: Vec<String>,
        alt_order: Option<Vec<String>>,
    ) -> Result<Self> {
        let p = feature_names.len();
        let mut alt_names: Vec<String> = alt_order.unwrap_or_default();
        let fixed_alts = !alt_names.is_empty();
        let mut obs_index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut obs_ids = Vec::new();
        let mut person_ids = Vec::new();

        for r in records {
            if r.values.len() != p {
                return Err(Error::data(format!(
                    "line {}: expected {p} feature values, found {}",
                    r.line,
                    r.values.len()
                )));
            }
            if !alt_names.contains(&r.alt) {
                if fixed_alts {
                    return Err(Error::data(format!("line {}, column `alt`: unknown alternative `{}`", r.line, r.alt)));
                }
                alt_names.push(r.alt.clone());
            }
            match obs_index.get(&r.obs_id) {
                Some(&i) => {
                    if person_ids[i] != r.person_id {
                        return Err(Error::data(format!(
                            "line {}, column `person_id`: observation {} already belongs to person {}",
                            r.line, r.obs_id, person_ids[i]
                        )));
                    }
                }
                None => {
                    obs_index.insert(r.obs_id, obs_ids.len());
                    obs_ids.push(r.obs_id);
                    person_ids.push(r.person_id);
                }
            }
        }

        let k = alt_names.len();
        let n = obs_ids.len();
        let alt_of = |name: &str| alt_names.iter().position(|a| a == name).unwrap();

        let mut applies = vec![false; p * k];
        for r in records {
            let a = alt_of(&r.alt);
            for (j, v) in r.values.iter().enumerate() {
                if v.is_some() {
                    applies[j * k + a] = true;
                }
            }
        }

        let mut x = vec![0.0; n * k * p];
        let mut present = vec![false; n * k];
        let mut available = vec![false; n * k];
        let mut chosen_line: Vec<Option<usize>> = vec![None; n];
        let mut chosen = vec![0usize; n];
        for r in records {
            let i = obs_index[&r.obs_id];
            let a = alt_of(&r.alt);
            if present[i * k + a] {
                return Err(Error::data(format!(
                    "line {}: duplicate (obs_id, alt) pair ({}, {})",
                    r.line, r.obs_id, r.alt
                )));
            }
            present[i * k + a] = true;
            available[i * k + a] = r.available;
            for (j, v) in r.values.iter().enumerate() {
                match v {
                    Some(v) if !v.is_finite() => {
                        return Err(Error::data(format!(
                            "line {}, column `{}`: non-finite value",
                            r.line, feature_names[j]
                        )));
                    }
                    Some(v) => x[(i * k + a) * p + j] = *v,
                    None if applies[j * k + a] => {
                        return Err(Error::data(format!(
                            "line {}, column `{}`: missing value for alternative `{}`",
                            r.line, feature_names[j], r.alt
                        )));
                    }
                    None => {}
                }
            }
            if r.chosen {
                if let Some(prev) = chosen_line[i] {
                    return Err(Error::data(format!(
                        "obs {}: more than one chosen row (lines {prev} and {})",
                        r.obs_id, r.line
                    )));
                }
                chosen_line[i] = Some(r.line);
                chosen[i] = a;
            }
        }
        if let Some(i) = chosen_line.iter().position(Option::is_none) {
            return Err(Error::data(format!("obs {}: no chosen row", obs_ids[i])));
        }
        if k < 2 {
            return Err(Error::data("at least two alternatives are required"));
        }
        Self::new(alt_names, feature_names, obs_ids, person_ids, x, chosen, Some(available), Some(applies))
    }

    pub fn n_obs(&self) -> usize {
        self.chosen.len()
    }

    pub fn n_alts(&self) -> usize {
        self.alt_names.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn alt_names(&self) -> &[String] {
        &self.alt_names
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|f| f == name)
    }

    pub fn alt_index(&self, name: &str) -> Option<usize> {
        self.alt_names.iter().position(|a| a == name)
    }

    pub fn obs_ids(&self) -> &[u64] {
        &self.obs_ids
    }

    pub fn person_ids(&self) -> &[u64] {
        &self.person_ids
    }

    pub fn chosen(&self) -> &[usize] {
        &self.chosen
    }

    #[inline]
    pub fn value(&self, i: usize, k: usize, p: usize) -> f64 {
        let (kk, pp) = (self.n_alts(), self.n_features());
        self.x[(i * kk + k) * pp + p]
    }

    /// The `K * P` attribute block of observation `i`.
    pub fn obs_block(&self, i: usize) -> &[f64] {
        let s = self.n_alts() * self.n_features();
        &self.x[i * s..(i + 1) * s]
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.x
    }

    #[inline]
    pub fn is_available(&self, i: usize, k: usize) -> bool {
        self.available[i * self.n_alts() + k]
    }

    pub fn availability(&self) -> &[bool] {
        &self.available
    }

    #[inline]
    pub fn applies(&self, p: usize, k: usize) -> bool {
        self.applies[p * self.n_alts() + k]
    }

    pub fn applicability(&self) -> &[bool] {
        &self.applies
    }

    /// Observation indices grouped by person, groups in order of first
    /// appearance and members in observation order.
    pub fn person_groups(&self) -> Vec<Vec<usize>> {
        let mut index: BTreeMap<u64, usize> = BTreeMap::new();
        let mut groups: Vec<Vec<usize>> = Vec::new();
        for (i, pid) in self.person_ids.iter().enumerate() {
            let g = *index.entry(*pid).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[g].push(i);
        }
        groups
    }

    pub fn n_persons(&self) -> usize {
        self.person_groups().len()
    }

    /// Observed share of each alternative.
    pub fn observed_shares(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.n_alts()];
        for &c in &self.chosen {
            s[c] += 1.0;
        }
        let n = self.n_obs() as f64;
        s.iter_mut().for_each(|v| *v /= n);
        s
    }

    /// New dataset holding the given observations in the given order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        let (k, p) = (self.n_alts(), self.n_features());
        let mut x = Vec::with_capacity(rows.len() * k * p);
        let mut available = Vec::with_capacity(rows.len() * k);
        for &i in rows {
            x.extend_from_slice(self.obs_block(i));
            available.extend_from_slice(&self.available[i * k..(i + 1) * k]);
        }
        ChoiceDataset {
            alt_names: self.alt_names.clone(),
            feature_names: self.feature_names.clone(),
            obs_ids: rows.iter().map(|&i| self.obs_ids[i]).collect(),
            person_ids: rows.iter().map(|&i| self.person_ids[i]).collect(),
            x,
            chosen: rows.iter().map(|&i| self.chosen[i]).collect(),
            available,
            applies: self.applies.clone(),
        }
    }

    /// Copy with every value of feature `p` passed through `f(i, k, value)`
    /// on cells where the feature applies.
    pub fn map_feature(&self, p: usize, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        let (k, pp) = (self.n_alts(), self.n_features());
        for i in 0..self.n_obs() {
            for a in 0..k {
                if self.applies(p, a) {
                    let idx = (i * k + a) * pp + p;
                    out.x[idx] = f(i, a, self.x[idx]);
                }
            }
        }
        out
    }

    /// Copy with different chosen alternatives (synthetic data, tests).
    pub fn with_choices(&self, chosen: Vec<usize>) -> Result<Self> {
        Self::new(
            self.alt_names.clone(),
            self.feature_names.clone(),
            self.obs_ids.clone(),
            self.person_ids.clone(),
            self.x.clone(),
            chosen,
            Some(self.available.clone()),
            Some(self.applies.clone()),
        )
    }

    /// Appends a feature column given as an `N * K` block.
    pub fn with_feature(&self, name: &str, values: &[f64], applies: &[bool]) -> Result<Self> {
        let (n, k, p) = (self.n_obs(), self.n_alts(), self.n_features());
        if values.len() != n * k || applies.len() != k {
            return Err(Error::arg("new feature block has the wrong size"));
        }
        let mut x = Vec::with_capacity(n * k * (p + 1));
        for i in 0..n {
            for a in 0..k {
                let base = (i * k + a) * p;
                x.extend_from_slice(&self.x[base..base + p]);
                x.push(if applies[a] { values[i * k + a] } else { 0.0 });
            }
        }
        let mut mask = self.applies.clone();
        mask.extend_from_slice(applies);
        let mut names = self.feature_names.clone();
        names.push(name.to_string());
        Self::new(
            self.alt_names.clone(),
            names,
            self.obs_ids.clone(),
            self.person_ids.clone(),
            x,
            self.chosen.clone(),
            Some(self.available.clone()),
            Some(mask),
        )
    }
}

/// Where a wide column comes from: a feature, and the alternative whose copy
/// it holds (`None` for an individual-level feature stored once).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WideColumn {
    pub name: String,
    pub feature: usize,
    pub alt: Option<usize>,
}

/// The flattening rule between the long and wide layouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideLayout {
    pub alt_names: Vec<String>,
    pub feature_names: Vec<String>,
    pub applies: Vec<bool>,
    pub columns: Vec<WideColumn>,
}

impl WideLayout {
    /// A feature is individual-level when it applies to every alternative and
    /// takes one value per observation; otherwise it gets one column per
    /// alternative it applies to.
    pub fn from_dataset(ds: &ChoiceDataset) -> Self {
        let (n, k, p) = (ds.n_obs(), ds.n_alts(), ds.n_features());
        let mut columns = Vec::new();
        let mut used: Vec<String> = Vec::new();
        let mut push = |columns: &mut Vec<WideColumn>, base: String, feature, alt| {
            let mut name = base.clone();
            let mut dup = 2;
            while used.contains(&name) {
                name = format!("{base}.{dup}");
                dup += 1;
            }
            used.push(name.clone());
            columns.push(WideColumn { name, feature, alt });
        };
        for f in 0..p {
            let all_apply = (0..k).all(|a| ds.applies(f, a));
            let individual = all_apply
                && (0..n).all(|i| {
                    let v0 = ds.value(i, 0, f);
                    (1..k).all(|a| ds.value(i, a, f) == v0)
                });
            if individual {
                push(&mut columns, ds.feature_names[f].clone(), f, None);
            } else {
                for a in 0..k {
                    if ds.applies(f, a) {
                        let name = format!("{}_{}", ds.feature_names[f], ds.alt_names[a]);
                        push(&mut columns, name, f, Some(a));
                    }
                }
            }
        }
        WideLayout {
            alt_names: ds.alt_names.clone(),
            feature_names: ds.feature_names.clone(),
            applies: ds.applies.clone(),
            columns,
        }
    }

    pub fn n_alts(&self) -> usize {
        self.alt_names.len()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn flatten(&self, ds: &ChoiceDataset) -> WideMatrix {
        let n = ds.n_obs();
        let cols = self.columns.len();
        let mut z = Vec::with_capacity(n * cols);
        for i in 0..n {
            for c in &self.columns {
                z.push(ds.value(i, c.alt.unwrap_or(0), c.feature));
            }
        }
        WideMatrix {
            n_rows: n,
            n_cols: cols,
            z,
            col_names: self.column_names(),
            y: ds.chosen.clone(),
            class_names: ds.alt_names.clone(),
            available: ds.available.clone(),
        }
    }

    /// Rebuilds the long attribute tensor (`N * K * P`) from wide rows.
    pub fn regroup(&self, w: &WideMatrix) -> Vec<f64> {
        let (k, p) = (self.n_alts(), self.feature_names.len());
        let mut x = vec![0.0; w.n_rows * k * p];
        for i in 0..w.n_rows {
            let row = w.row(i);
            for (c, col) in self.columns.iter().enumerate() {
                match col.alt {
                    Some(a) => x[(i * k + a) * p + col.feature] = row[c],
                    None => {
                        for a in 0..k {
                            x[(i * k + a) * p + col.feature] = row[c];
                        }
                    }
                }
            }
        }
        x
    }

    /// Long dataset view of wide rows (observation and person ids are the row
    /// indices). Used to drive logit models from the wide interface.
    pub fn to_long(&self, w: &WideMatrix) -> Result<ChoiceDataset> {
        if w.col_names.len() != self.columns.len() {
            return Err(Error::ColumnMismatch {
                expected: format!("{} columns", self.columns.len()),
                found: format!("{} columns", w.col_names.len()),
            });
        }
        for (c, name) in self.columns.iter().zip(&w.col_names) {
            if &c.name != name {
                return Err(Error::ColumnMismatch { expected: c.name.clone(), found: name.clone() });
            }
        }
        let ids: Vec<u64> = (0..w.n_rows as u64).collect();
        ChoiceDataset::new(
            self.alt_names.clone(),
            self.feature_names.clone(),
            ids.clone(),
            ids,
            self.regroup(w),
            w.y.clone(),
            Some(w.available.clone()),
            Some(self.applies.clone()),
        )
    }
}

/// Machine-learning input: one row per observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WideMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    /// Row-major `n_rows * n_cols`.
    pub z: Vec<f64>,
    pub col_names: Vec<String>,
    pub y: Vec<usize>,
    pub class_names: Vec<String>,
    /// `n_rows * n_classes`; classifiers ignore it, logit predictors honour it.
    pub available: Vec<bool>,
}

impl WideMatrix {
    /// Wide matrix from raw rows; every alternative is available.
    pub fn from_rows(
        rows: &[Vec<f64>],
        col_names: Vec<String>,
        y: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let n_cols = col_names.len();
        if rows.len() != y.len() {
            return Err(Error::arg("label count differs from row count"));
        }
        if let Some(r) = rows.iter().position(|r| r.len() != n_cols) {
            return Err(Error::arg(format!("row {r} has the wrong number of columns")));
        }
        if let Some(bad) = y.iter().find(|&&c| c >= class_names.len()) {
            return Err(Error::arg(format!("label {bad} out of range")));
        }
        Ok(WideMatrix {
            n_rows: rows.len(),
            n_cols,
            z: rows.iter().flatten().copied().collect(),
            col_names,
            available: vec![true; y.len() * class_names.len()],
            y,
            class_names,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.n_cols..(i + 1) * self.n_cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.z[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.col_names.iter().position(|c| c == name)
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let k = self.n_classes();
        let mut z = Vec::with_capacity(rows.len() * self.n_cols);
        let mut available = Vec::with_capacity(rows.len() * k);
        for &i in rows {
            z.extend_from_slice(self.row(i));
            available.extend_from_slice(&self.available[i * k..(i + 1) * k]);
        }
        WideMatrix {
            n_rows: rows.len(),
            n_cols: self.n_cols,
            z,
            col_names: self.col_names.clone(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            class_names: self.class_names.clone(),
            available,
        }
    }

    /// Copy with column `j` replaced by `f(row, value)`.
    pub fn map_column(&self, j: usize, mut f: impl FnMut(usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_rows {
            let idx = i * self.n_cols + j;
            out.z[idx] = f(i, self.z[idx]);
        }
        out
    }

    /// Copy with the given columns kept, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Self {
        let mut z = Vec::with_capacity(self.n_rows * cols.len());
        for i in 0..self.n_rows {
            z.extend(cols.iter().map(|&j| self.get(i, j)));
        }
        WideMatrix {
            n_rows: self.n_rows,
            n_cols: cols.len(),
            z,
            col_names: cols.iter().map(|&j| self.col_names[j].clone()).collect(),
            y: self.y.clone(),
            class_names: self.class_names.clone(),
            available: self.available.clone(),
        }
    }

    /// Per-column (min, max).
    pub fn column_ranges(&self) -> Vec<(f64, f64)> {
        (0..self.n_cols)
            .map(|j| {
                (0..self.n_rows).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
                    let v = self.get(i, j);
                    (lo.min(v), hi.max(v))
                })
            })
            .collect()
    }
}

/// Columns, classes and per-column training ranges a fitted wide-matrix
/// model expects at prediction time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub columns: Vec<String>,
    pub classes: Vec<String>,
    pub ranges: Vec<(f64, f64)>,
}

impl Schema {
    pub fn of(w: &WideMatrix) -> Self {
        Schema { columns: w.col_names.clone(), classes: w.class_names.clone(), ranges: w.column_ranges() }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    /// Rejects a matrix whose columns differ in name or order, naming the
    /// first offending column.
    pub fn check(&self, w: &WideMatrix) -> Result<()> {
        for j in 0..self.columns.len().max(w.col_names.len()) {
            match (self.columns.get(j), w.col_names.get(j)) {
                (Some(a), Some(b)) if a == b => {}
                (a, b) => {
                    return Err(Error::ColumnMismatch {
                        expected: a.cloned().unwrap_or_else(|| "<none>".into()),
                        found: b.cloned().unwrap_or_else(|| "<missing>".into()),
                    })
                }
            }
        }
        Ok(())
    }
}

/// Flattens a dataset with its own layout.
pub fn to_wide(ds: &ChoiceDataset) -> WideMatrix {
    WideLayout::from_dataset(ds).flatten(ds)
}

/// Variance inflation factor of every column: `1 / (1 - R^2)` of the OLS
/// regression (with intercept) of that column on all others. Perfectly
/// collinear columns get `f64::INFINITY`.
pub fn vif(w: &WideMatrix) -> Result<Vec<f64>> {
    if w.n_cols < 2 {
        return Err(Error::arg("VIF needs at least two columns"));
    }
    let centered: Vec<Vec<f64>> = (0..w.n_cols)
        .map(|j| {
            let col = w.column(j);
            let mean = col.iter().sum::<f64>() / col.len() as f64;
            col.iter().map(|v| v - mean).collect()
        })
        .collect();
    for (j, c) in centered.iter().enumerate() {
        if dot(c, c) == 0.0 {
            return Err(Error::arg(format!("column `{}` is constant", w.col_names[j])));
        }
    }
    Ok((0..w.n_cols)
        .map(|j| {
            let others: Vec<&[f64]> =
                centered.iter().enumerate().filter(|(o, _)| *o != j).map(|(_, c)| c.as_slice()).collect();
            let sst = dot(&centered[j], &centered[j]);
            let r = project_out(&centered[j], &others);
            let sse = dot(&r, &r);
            if sse <= 1e-12 * sst {
                f64::INFINITY
            } else {
                sst / sse
            }
        })
        .collect())
}

/// Assignment of observations to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub assignment: Vec<usize>,
    pub seed: u64,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        self.assignment.iter().for_each(|&f| s[f] += 1);
        s
    }
}

/// Observation-level random partition: seeded shuffle, then round-robin.
pub fn kfold_split(n: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::arg(format!("fold count must be at least 2, got {k}")));
    }
    if k > n {
        return Err(Error::arg(format!("fold count {k} exceeds observation count {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, &[0x666f_6c64]));
    let mut assignment = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldAssignment { k, assignment, seed })
}

/// Person-level partition: whole panels go to one fold. Fold sizes are
/// balanced in persons, not observations.
pub fn kfold_split_grouped(groups: &[Vec<usize>], k: usize, seed: u64) -> Result<FoldAssignment> {
    let persons = kfold_split(groups.len(), k, seed)?;
    let n = groups.iter().map(Vec::len).sum();
    let mut assignment = vec![0; n];
    for (g, members) in groups.iter().enumerate() {
        for &i in members {
            assignment[i] = persons.assignment[g];
        }
    }
    Ok(FoldAssignment { k, assignment, seed })
}
