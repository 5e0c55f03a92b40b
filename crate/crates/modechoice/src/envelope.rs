//! Versioned JSON model files.

use std::path::Path;

use anyhow::{bail, Context, Result};
use modechoice_core::interpret::Predictor;
use modechoice_core::models::{Model, ModelSpec};
use serde::{Deserialize, Serialize};

use crate::report::{Meta, VERSION};

pub const FORMAT: &str = "modechoice-model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub meta: Meta,
    pub name: String,
    /// Wide input columns the model expects, in order.
    pub columns: Vec<String>,
    pub classes: Vec<String>,
    pub spec: ModelSpec,
    pub model: Model,
}

impl ModelFile {
    pub fn new(name: String, spec: ModelSpec, model: Model, meta: Meta) -> Self {
        let s = model.schema();
        ModelFile {
            format: FORMAT.into(),
            meta,
            name,
            columns: s.columns.clone(),
            classes: s.classes.clone(),
            spec,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        match v.get("format").and_then(|f| f.as_str()) {
            Some(FORMAT) => {}
            other => bail!("not a model file (format {other:?})"),
        }
        let version = v.pointer("/meta/version").and_then(|x| x.as_str()).unwrap_or("");
        if major(version) != major(VERSION) {
            bail!("model file version {version} is incompatible with {VERSION}");
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }
}

/// `0.y` releases are compatible within a minor version, later ones within
/// a major version.
fn major(v: &str) -> String {
    let mut parts = v.split('.');
    match (parts.next(), parts.next()) {
        (Some("0"), Some(minor)) => format!("0.{minor}"),
        (Some(m), _) => m.to_string(),
        _ => String::new(),
    }
}
