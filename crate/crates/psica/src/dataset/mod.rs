//! Trial data model: typed feature tables, treatment arms, resampling.
//!
//! A [`Dataset`] holds one randomized-trial table: a feature block of
//! mixed numeric/categorical columns, one real-valued effect per row and
//! one treatment assignment per row. Datasets are immutable after
//! construction and safe to share across threads.

mod io;
mod schema;

pub use io::{atomic_write, load_feature_table, load_table, write_table};
pub use schema::{parse_feature_kind, parse_kv_pairs, TableSchema};

use rand::Rng;

use crate::error::{Error, Result};

/// The type of one feature column.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureKind {
    Numeric,
    /// Ordered integer-like values; split handling is identical to
    /// `Numeric`, the tag is kept for schema fidelity.
    OrdinalNumeric,
    /// Categorical with an ordered level list. Levels are unique and
    /// non-empty; values are stored as indexes into this list.
    Categorical { levels: Vec<String> },
}

impl FeatureKind {
    pub fn is_numeric(&self) -> bool {
        !matches!(self, FeatureKind::Categorical { .. })
    }

    pub fn levels(&self) -> Option<&[String]> {
        match self {
            FeatureKind::Categorical { levels } => Some(levels),
            _ => None,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if let FeatureKind::Categorical { levels } = self {
            if levels.is_empty() {
                return Err(Error::Schema(format!(
                    "categorical feature '{name}' has an empty level list"
                )));
            }
            for (i, a) in levels.iter().enumerate() {
                if levels[..i].contains(a) {
                    return Err(Error::Schema(format!(
                        "categorical feature '{name}' declares duplicate level '{a}'"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Name and kind of one feature column.
#[derive(Debug, Clone, PartialEq)]
pub struct Feature {
    pub name: String,
    pub kind: FeatureKind,
}

/// Ordered feature declarations shared by datasets and fitted models.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureSchema {
    features: Vec<Feature>,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>) -> Result<Self> {
        for (i, f) in features.iter().enumerate() {
            f.kind.validate(&f.name)?;
            if features[..i].iter().any(|g| g.name == f.name) {
                return Err(Error::Schema(format!("duplicate feature name '{}'", f.name)));
            }
        }
        Ok(FeatureSchema { features })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn feature(&self, index: usize) -> &Feature {
        &self.features[index]
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

/// One stored feature column; categorical cells are level codes.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureColumn {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

impl FeatureColumn {
    fn len(&self) -> usize {
        match self {
            FeatureColumn::Numeric(v) => v.len(),
            FeatureColumn::Categorical(v) => v.len(),
        }
    }

    fn value(&self, row: usize) -> Value {
        match self {
            FeatureColumn::Numeric(v) => Value::Num(v[row]),
            FeatureColumn::Categorical(v) => Value::Cat(v[row]),
        }
    }

    fn gather(&self, rows: &[usize]) -> FeatureColumn {
        match self {
            FeatureColumn::Numeric(v) => {
                FeatureColumn::Numeric(rows.iter().map(|&r| v[r]).collect())
            }
            FeatureColumn::Categorical(v) => {
                FeatureColumn::Categorical(rows.iter().map(|&r| v[r]).collect())
            }
        }
    }
}

/// One feature cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Num(f64),
    Cat(u32),
}

/// A binary split test on one feature value.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum SplitTest {
    /// Numeric: goes left iff `value <= threshold`.
    Threshold(f64),
    /// Categorical: goes left iff the level code is in the (sorted) set.
    LevelSet(Vec<u32>),
}

impl SplitTest {
    pub fn goes_left(&self, value: Value) -> bool {
        match (self, value) {
            (SplitTest::Threshold(t), Value::Num(x)) => x <= *t,
            (SplitTest::LevelSet(set), Value::Cat(code)) => set.binary_search(&code).is_ok(),
            // Schema conformance is checked before routing; a mismatch here
            // is a programming error.
            _ => unreachable!("split test applied to a value of the wrong kind"),
        }
    }
}

/// A split rule: which feature, and the test on it.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub test: SplitTest,
}

/// A feature block: schema plus column storage, no outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    schema: FeatureSchema,
    columns: Vec<FeatureColumn>,
    n_rows: usize,
}

impl FeatureTable {
    pub fn new(schema: FeatureSchema, columns: Vec<FeatureColumn>) -> Result<Self> {
        if schema.len() != columns.len() {
            return Err(Error::Schema(format!(
                "schema declares {} features but {} columns were provided",
                schema.len(),
                columns.len()
            )));
        }
        let n_rows = columns.first().map_or(0, FeatureColumn::len);
        for (f, c) in schema.features().iter().zip(&columns) {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column '{}' has {} entries, expected {}",
                    f.name,
                    c.len(),
                    n_rows
                )));
            }
            let kind_ok = match (&f.kind, c) {
                (FeatureKind::Categorical { .. }, FeatureColumn::Categorical(_)) => true,
                (FeatureKind::Categorical { .. }, _) => false,
                (_, FeatureColumn::Numeric(_)) => true,
                _ => false,
            };
            if !kind_ok {
                return Err(Error::Schema(format!(
                    "column '{}' storage does not match its declared kind",
                    f.name
                )));
            }
            if let (FeatureKind::Categorical { levels }, FeatureColumn::Categorical(codes)) =
                (&f.kind, c)
            {
                if let Some(&bad) = codes.iter().find(|&&code| code as usize >= levels.len()) {
                    return Err(Error::Schema(format!(
                        "column '{}' contains level code {bad} outside its {} declared levels",
                        f.name,
                        levels.len()
                    )));
                }
            }
        }
        Ok(FeatureTable {
            schema,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn column(&self, index: usize) -> &FeatureColumn {
        &self.columns[index]
    }

    pub fn value(&self, row: usize, feature: usize) -> Value {
        self.columns[feature].value(row)
    }

    /// Numeric view of a column; panics on categorical columns.
    pub fn numeric_column(&self, index: usize) -> &[f64] {
        match &self.columns[index] {
            FeatureColumn::Numeric(v) => v,
            FeatureColumn::Categorical(_) => panic!("column {index} is categorical"),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureTable {
        FeatureTable {
            schema: self.schema.clone(),
            columns: self.columns.iter().map(|c| c.gather(rows)).collect(),
            n_rows: rows.len(),
        }
    }
}

/// A subset of the treatment set, stored as a bitmask over treatment
/// indexes. Supports up to 64 treatments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub struct TreatmentSet(u64);

impl TreatmentSet {
    pub const MAX_TREATMENTS: usize = 64;

    pub fn empty() -> Self {
        TreatmentSet(0)
    }

    pub fn full(m: usize) -> Self {
        assert!(m <= Self::MAX_TREATMENTS);
        if m == Self::MAX_TREATMENTS {
            TreatmentSet(u64::MAX)
        } else {
            TreatmentSet((1u64 << m) - 1)
        }
    }

    pub fn insert(&mut self, k: usize) {
        assert!(k < Self::MAX_TREATMENTS);
        self.0 |= 1 << k;
    }

    pub fn contains(&self, k: usize) -> bool {
        k < Self::MAX_TREATMENTS && self.0 & (1 << k) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn complement(&self, m: usize) -> TreatmentSet {
        TreatmentSet(!self.0 & Self::full(m).0)
    }

    pub fn is_subset_of(&self, other: &TreatmentSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..Self::MAX_TREATMENTS).filter(move |&k| self.contains(k))
    }

    pub fn to_indices(&self) -> Vec<usize> {
        self.iter().collect()
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        let mut s = TreatmentSet::empty();
        for k in indices {
            s.insert(k);
        }
        s
    }

    /// Renders as `{name1, name2}` using the given treatment names.
    pub fn display_with(&self, names: &[String]) -> String {
        let mut out = String::from("{");
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            out.push_str(names.get(k).map(String::as_str).unwrap_or("?"));
        }
        out.push('}');
        out
    }
}

/// One randomized-trial dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: FeatureTable,
    effects: Vec<f64>,
    treatments: Vec<u32>,
    treatment_names: Vec<String>,
}

impl Dataset {
    /// Builds and validates a dataset. `treatments[i]` indexes into
    /// `treatment_names`, whose order is the treatment order used by every
    /// downstream index `k`.
    pub fn new(
        features: FeatureTable,
        effects: Vec<f64>,
        treatments: Vec<u32>,
        treatment_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.n_rows();
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if effects.len() != n || treatments.len() != n {
            return Err(Error::Schema(format!(
                "effects ({}) and treatments ({}) must both have {} entries",
                effects.len(),
                treatments.len(),
                n
            )));
        }
        if treatment_names.len() < 2 {
            return Err(Error::TooFewTreatments("treatment".into()));
        }
        if treatment_names.len() > TreatmentSet::MAX_TREATMENTS {
            return Err(Error::Schema(format!(
                "at most {} treatments are supported",
                TreatmentSet::MAX_TREATMENTS
            )));
        }
        for (i, name) in treatment_names.iter().enumerate() {
            if treatment_names[..i].contains(name) {
                return Err(Error::Schema(format!("duplicate treatment name '{name}'")));
            }
        }
        if let Some((row, &t)) = treatments
            .iter()
            .enumerate()
            .find(|(_, &t)| t as usize >= treatment_names.len())
        {
            return Err(Error::UnknownTreatment {
                row,
                treatment: format!("#{t}"),
            });
        }
        if let Some((row, &y)) = effects.iter().enumerate().find(|(_, y)| !y.is_finite()) {
            return Err(Error::BadNumber {
                row,
                column: "effect".into(),
                value: y.to_string(),
            });
        }
        Ok(Dataset {
            features,
            effects,
            treatments,
            treatment_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.n_rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.n_features()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatment_names.len()
    }

    pub fn features(&self) -> &FeatureTable {
        &self.features
    }

    pub fn schema(&self) -> &FeatureSchema {
        self.features.schema()
    }

    pub fn effects(&self) -> &[f64] {
        &self.effects
    }

    pub fn treatments(&self) -> &[u32] {
        &self.treatments
    }

    pub fn treatment_names(&self) -> &[String] {
        &self.treatment_names
    }

    pub fn treatment_index(&self, name: &str) -> Option<usize> {
        self.treatment_names.iter().position(|t| t == name)
    }

    /// The rows at `rows` (with repetition allowed), as a new dataset with
    /// the same schema and treatment set.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Dataset> {
        Dataset::new(
            self.features.select_rows(rows),
            rows.iter().map(|&r| self.effects[r]).collect(),
            rows.iter().map(|&r| self.treatments[r]).collect(),
            self.treatment_names.clone(),
        )
    }

    /// Splits into one dataset per treatment, in treatment order, each
    /// preserving the original relative row order. Errors if some arm has
    /// no observations.
    pub fn partition_by_treatment(&self) -> Result<Vec<Dataset>> {
        let m = self.n_treatments();
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (row, &t) in self.treatments.iter().enumerate() {
            groups[t as usize].push(row);
        }
        if let Some(k) = groups.iter().position(Vec::is_empty) {
            return Err(Error::EmptyTreatmentArm(self.treatment_names[k].clone()));
        }
        groups.iter().map(|rows| self.select_rows(rows)).collect()
    }

    /// Uniform resample with replacement of the same size.
    pub fn bootstrap_resample<R: Rng>(&self, rng: &mut R) -> Dataset {
        let rows = bootstrap_indices(self.n_rows(), rng);
        self.select_rows(&rows)
            .expect("resampling preserves validity")
    }
}

/// `n` uniform draws from `0..n`, in draw order.
pub fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(0..n)).collect()
}

/// Per-row multiplicities of a uniform resample with replacement.
pub fn bootstrap_counts<R: Rng>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.gen_range(0..n)] += 1;
    }
    counts
}
