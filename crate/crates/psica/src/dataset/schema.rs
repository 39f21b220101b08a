//! Ingestion schema: which columns are the treatment and effect, and how
//! to type each feature column. Parsed from CLI flags or a flat
//! `key=value` config file.

use std::path::Path;

use crate::error::{Error, Result};

use super::FeatureKind;

/// Ingestion schema for [`super::load_table`].
///
/// Feature columns not listed in `features` are ingested as numeric.
/// Declaring `treatments` fixes the treatment order (and catches typos);
/// otherwise the order of first appearance in the file is used.
#[derive(Debug, Clone, PartialEq)]
pub struct TableSchema {
    pub treatment_col: String,
    pub effect_col: String,
    pub features: Vec<(String, FeatureKind)>,
    pub treatments: Option<Vec<String>>,
}

impl TableSchema {
    pub fn new(treatment_col: impl Into<String>, effect_col: impl Into<String>) -> Self {
        TableSchema {
            treatment_col: treatment_col.into(),
            effect_col: effect_col.into(),
            features: Vec::new(),
            treatments: None,
        }
    }

    pub fn with_feature(mut self, name: impl Into<String>, kind: FeatureKind) -> Self {
        self.features.push((name.into(), kind));
        self
    }

    pub fn declared_kind(&self, name: &str) -> Option<&FeatureKind> {
        self.features
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, k)| k)
    }

    /// Reads a flat `key=value` schema file. Recognized keys:
    /// `treatment_col`, `effect_col`, `treatments` (comma-separated) and
    /// `feature.<name>` with values `numeric`, `ordinal`, `categorical` or
    /// `categorical(L1,L2,...)`.
    pub fn from_kv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_kv_text(&text)
    }

    pub fn from_kv_text(text: &str) -> Result<Self> {
        let mut treatment_col = None;
        let mut effect_col = None;
        let mut features = Vec::new();
        let mut treatments = None;
        for (key, value) in parse_kv_pairs(text)? {
            match key.as_str() {
                "treatment_col" => treatment_col = Some(value),
                "effect_col" => effect_col = Some(value),
                "treatments" => {
                    treatments = Some(
                        value
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect::<Vec<_>>(),
                    )
                }
                _ => {
                    if let Some(name) = key.strip_prefix("feature.") {
                        features.push((name.to_string(), parse_feature_kind(&value)?));
                    } else {
                        return Err(Error::Config(format!("unknown schema key '{key}'")));
                    }
                }
            }
        }
        let treatment_col =
            treatment_col.ok_or_else(|| Error::Config("schema is missing treatment_col".into()))?;
        let effect_col =
            effect_col.ok_or_else(|| Error::Config("schema is missing effect_col".into()))?;
        Ok(TableSchema {
            treatment_col,
            effect_col,
            features,
            treatments,
        })
    }
}

/// Parses `numeric`, `ordinal`, `categorical` or `categorical(L1,L2,...)`.
pub fn parse_feature_kind(text: &str) -> Result<FeatureKind> {
    let text = text.trim();
    match text {
        "numeric" => return Ok(FeatureKind::Numeric),
        "ordinal" | "ordinal-numeric" => return Ok(FeatureKind::OrdinalNumeric),
        "categorical" => return Ok(FeatureKind::Categorical { levels: Vec::new() }),
        _ => {}
    }
    if let Some(rest) = text.strip_prefix("categorical(") {
        if let Some(inner) = rest.strip_suffix(')') {
            let levels: Vec<String> = inner
                .split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect();
            if levels.is_empty() {
                return Err(Error::Config(
                    "categorical(...) needs at least one level".into(),
                ));
            }
            return Ok(FeatureKind::Categorical { levels });
        }
    }
    Err(Error::Config(format!(
        "unknown feature kind '{text}' (expected numeric, ordinal or categorical[(levels)])"
    )))
}

/// Splits a flat config into `(key, value)` pairs. Blank lines and lines
/// starting with `#` are skipped.
pub fn parse_kv_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(Error::Config(format!(
                "line {}: expected key=value, got '{line}'",
                lineno + 1
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}
