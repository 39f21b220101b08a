//! Delimited-table ingestion and export.
//!
//! Tables are comma-delimited text with a header row and `.` as the
//! decimal mark. Missing values are rejected, never imputed. Row numbers
//! in error messages are 1-based and exclude the header.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::{
    Dataset, Feature, FeatureColumn, FeatureKind, FeatureSchema, FeatureTable, TableSchema,
};

/// Writes `bytes` to `path` atomically (write a sibling temp file, then
/// rename into place).
pub fn atomic_write(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
    Ok(())
}

enum ColumnBuilder {
    Numeric(Vec<f64>),
    Declared {
        levels: Vec<String>,
        codes: Vec<u32>,
    },
    Inferred {
        levels: Vec<String>,
        index: HashMap<String, u32>,
        codes: Vec<u32>,
    },
}

impl ColumnBuilder {
    fn new(kind: &FeatureKind) -> Self {
        match kind {
            FeatureKind::Numeric | FeatureKind::OrdinalNumeric => ColumnBuilder::Numeric(Vec::new()),
            FeatureKind::Categorical { levels } if levels.is_empty() => ColumnBuilder::Inferred {
                levels: Vec::new(),
                index: HashMap::new(),
                codes: Vec::new(),
            },
            FeatureKind::Categorical { levels } => ColumnBuilder::Declared {
                levels: levels.clone(),
                codes: Vec::new(),
            },
        }
    }

    fn push(&mut self, cell: &str, row: usize, column: &str) -> Result<()> {
        match self {
            ColumnBuilder::Numeric(values) => {
                values.push(parse_number(cell, row, column)?);
            }
            ColumnBuilder::Declared { levels, codes } => {
                let code = levels.iter().position(|l| l == cell).ok_or_else(|| {
                    Error::UnknownLevel {
                        row,
                        column: column.to_string(),
                        level: cell.to_string(),
                    }
                })?;
                codes.push(code as u32);
            }
            ColumnBuilder::Inferred {
                levels,
                index,
                codes,
            } => {
                let next = levels.len() as u32;
                let code = *index.entry(cell.to_string()).or_insert_with(|| {
                    levels.push(cell.to_string());
                    next
                });
                codes.push(code);
            }
        }
        Ok(())
    }

    fn finish(self, name: String, declared: &FeatureKind) -> (Feature, FeatureColumn) {
        match self {
            ColumnBuilder::Numeric(values) => (
                Feature {
                    name,
                    kind: declared.clone(),
                },
                FeatureColumn::Numeric(values),
            ),
            ColumnBuilder::Declared { levels, codes } => (
                Feature {
                    name,
                    kind: FeatureKind::Categorical { levels },
                },
                FeatureColumn::Categorical(codes),
            ),
            ColumnBuilder::Inferred { levels, codes, .. } => (
                Feature {
                    name,
                    kind: FeatureKind::Categorical { levels },
                },
                FeatureColumn::Categorical(codes),
            ),
        }
    }
}

fn parse_number(cell: &str, row: usize, column: &str) -> Result<f64> {
    let value: f64 = cell.parse().map_err(|_| Error::BadNumber {
        row,
        column: column.to_string(),
        value: cell.to_string(),
    })?;
    if !value.is_finite() {
        return Err(Error::BadNumber {
            row,
            column: column.to_string(),
            value: cell.to_string(),
        });
    }
    Ok(value)
}

fn non_empty<'a>(cell: &'a str, row: usize, column: &str) -> Result<&'a str> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::MissingValue {
            row,
            column: column.to_string(),
        });
    }
    Ok(cell)
}

/// Loads a trial table. Feature columns keep their file order; columns not
/// declared in the schema are ingested as numeric.
pub fn load_table(path: impl AsRef<Path>, schema: &TableSchema) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
            }
            _ => Error::Csv(e),
        })?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let treatment_idx = find(&schema.treatment_col)?;
    let effect_idx = find(&schema.effect_col)?;
    for (name, _) in &schema.features {
        find(name)?;
    }

    let mut feature_cols: Vec<(usize, String, FeatureKind, ColumnBuilder)> = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if idx == treatment_idx || idx == effect_idx {
            continue;
        }
        let kind = schema
            .declared_kind(name)
            .cloned()
            .unwrap_or(FeatureKind::Numeric);
        let builder = ColumnBuilder::new(&kind);
        feature_cols.push((idx, name.clone(), kind, builder));
    }

    let mut effects = Vec::new();
    let mut treatment_labels: Vec<String> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        for (idx, name, _, builder) in feature_cols.iter_mut() {
            let cell = record.get(*idx).unwrap_or("");
            builder.push(non_empty(cell, row, name)?, row, name)?;
        }
        let t_cell = non_empty(record.get(treatment_idx).unwrap_or(""), row, &schema.treatment_col)?;
        treatment_labels.push(t_cell.to_string());
        let y_cell = non_empty(record.get(effect_idx).unwrap_or(""), row, &schema.effect_col)?;
        effects.push(parse_number(y_cell, row, &schema.effect_col)?);
    }
    if effects.is_empty() {
        return Err(Error::EmptyDataset);
    }

    // Treatment order: as declared, otherwise first appearance.
    let treatment_names: Vec<String> = match &schema.treatments {
        Some(declared) => declared.clone(),
        None => {
            let mut seen = Vec::new();
            for label in &treatment_labels {
                if !seen.contains(label) {
                    seen.push(label.clone());
                }
            }
            seen
        }
    };
    if treatment_names.len() < 2 {
        return Err(Error::TooFewTreatments(schema.treatment_col.clone()));
    }
    let mut treatments = Vec::with_capacity(treatment_labels.len());
    for (i, label) in treatment_labels.iter().enumerate() {
        let code = treatment_names
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment {
                row: i + 1,
                treatment: label.clone(),
            })?;
        treatments.push(code as u32);
    }

    let mut features = Vec::new();
    let mut columns = Vec::new();
    for (_, name, kind, builder) in feature_cols {
        let (feature, column) = builder.finish(name, &kind);
        features.push(feature);
        columns.push(column);
    }
    let table = FeatureTable::new(FeatureSchema::new(features)?, columns)?;
    Dataset::new(table, effects, treatments, treatment_names)
}

/// Loads just the feature block described by `schema`; used when scoring
/// new rows against a fitted model. Extra columns in the file are ignored
/// and categorical levels must already be known to the schema.
pub fn load_feature_table(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<FeatureTable> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
            }
            _ => Error::Csv(e),
        })?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut col_index = Vec::with_capacity(schema.len());
    for f in schema.features() {
        let idx = headers
            .iter()
            .position(|h| *h == f.name)
            .ok_or_else(|| Error::MissingColumn(f.name.clone()))?;
        col_index.push(idx);
    }

    let mut columns: Vec<FeatureColumn> = schema
        .features()
        .iter()
        .map(|f| match &f.kind {
            FeatureKind::Categorical { .. } => FeatureColumn::Categorical(Vec::new()),
            _ => FeatureColumn::Numeric(Vec::new()),
        })
        .collect();

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        for (j, f) in schema.features().iter().enumerate() {
            let cell = non_empty(record.get(col_index[j]).unwrap_or(""), row, &f.name)?;
            match (&f.kind, &mut columns[j]) {
                (FeatureKind::Categorical { levels }, FeatureColumn::Categorical(codes)) => {
                    let code =
                        levels
                            .iter()
                            .position(|l| l == cell)
                            .ok_or_else(|| Error::UnknownLevel {
                                row,
                                column: f.name.clone(),
                                level: cell.to_string(),
                            })?;
                    codes.push(code as u32);
                }
                (_, FeatureColumn::Numeric(values)) => {
                    values.push(parse_number(cell, row, &f.name)?);
                }
                _ => unreachable!(),
            }
        }
    }
    FeatureTable::new(schema.clone(), columns)
}

/// Writes a trial table with feature columns first (schema order), then
/// the treatment and effect columns under the given names. Numbers are
/// written with enough digits to round-trip exactly.
pub fn write_table(
    dataset: &Dataset,
    treatment_col: &str,
    effect_col: &str,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = dataset
        .schema()
        .features()
        .iter()
        .map(|f| f.name.clone())
        .collect();
    header.push(treatment_col.to_string());
    header.push(effect_col.to_string());
    writer.write_record(&header)?;

    for row in 0..dataset.n_rows() {
        let mut record: Vec<String> = Vec::with_capacity(header.len());
        for (j, f) in dataset.schema().features().iter().enumerate() {
            match (dataset.features().column(j), &f.kind) {
                (FeatureColumn::Numeric(v), _) => record.push(v[row].to_string()),
                (FeatureColumn::Categorical(codes), FeatureKind::Categorical { levels }) => {
                    record.push(levels[codes[row] as usize].clone())
                }
                _ => unreachable!(),
            }
        }
        record.push(dataset.treatment_names()[dataset.treatments()[row] as usize].clone());
        record.push(dataset.effects()[row].to_string());
        writer.write_record(&record)?;
    }

    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Config(format!("csv flush failed: {e}")))?;
    atomic_write(path, &bytes)
}
