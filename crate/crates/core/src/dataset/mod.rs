//! Cohort tables: column schema, ingestion from CSV, export, and the
//! participant-level accessors every other module builds on.
//!
//! Participants are addressed by their row index inside a [`Dataset`]. Text
//! ids only appear at the edges (CSV, JSON documents). Row order is ingestion
//! order and doubles as the "ascending id" scan order used by clustering and
//! nearest-neighbour tie breaking.

mod constraints;
mod matching;
mod normalize;

pub use constraints::{generate_constraints, ConstraintDoc, ConstraintSet};
pub use matching::{
    propensity_match, BalanceStat, MatchMethod, MatchOptions, MatchedCohorts, MatchedPair,
};
pub use normalize::NormalizedView;

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Participant row index inside a [`Dataset`].
pub type Row = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Outcome,
    Id,
}

/// One entry of the schema sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    pub role: ColumnRole,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ColumnSchema {
    pub fn numeric(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Numeric,
            role: ColumnRole::Feature,
            categories: Vec::new(),
            unit: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Feature,
            categories: categories.into_iter().map(Into::into).collect(),
            unit: None,
        }
    }

    pub fn id(name: impl Into<String>) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Id,
            categories: Vec::new(),
            unit: None,
        }
    }

    /// Binary outcome column. The second category is the positive class.
    pub fn outcome(name: impl Into<String>, negative: &str, positive: &str) -> Self {
        ColumnSchema {
            name: name.into(),
            kind: ColumnKind::Categorical,
            role: ColumnRole::Outcome,
            categories: vec![negative.to_string(), positive.to_string()],
            unit: None,
        }
    }

    pub fn with_unit(mut self, unit: impl Into<String>) -> Self {
        self.unit = Some(unit.into());
        self
    }

    pub fn is_feature(&self) -> bool {
        self.role == ColumnRole::Feature
    }
}

/// Checks the schema invariants: unique names, exactly one id column and
/// exactly one binary categorical outcome column.
pub fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    let mut seen = HashSet::new();
    for col in schema {
        if col.name.is_empty() {
            return Err(Error::Schema("empty column name".into()));
        }
        if !seen.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column `{}`", col.name)));
        }
        if col.role != ColumnRole::Id && col.kind == ColumnKind::Categorical {
            if col.categories.is_empty() {
                return Err(Error::Schema(format!(
                    "categorical column `{}` declares no categories",
                    col.name
                )));
            }
            let distinct: HashSet<_> = col.categories.iter().collect();
            if distinct.len() != col.categories.len() {
                return Err(Error::Schema(format!(
                    "column `{}` repeats a category",
                    col.name
                )));
            }
        }
        if col.kind == ColumnKind::Numeric && !col.categories.is_empty() {
            return Err(Error::Schema(format!(
                "numeric column `{}` declares categories",
                col.name
            )));
        }
    }
    let ids = schema.iter().filter(|c| c.role == ColumnRole::Id).count();
    if ids != 1 {
        return Err(Error::Schema(format!("expected one id column, found {ids}")));
    }
    let outcomes: Vec<_> = schema
        .iter()
        .filter(|c| c.role == ColumnRole::Outcome)
        .collect();
    if outcomes.len() != 1 {
        return Err(Error::Schema(format!(
            "expected one outcome column, found {}",
            outcomes.len()
        )));
    }
    let outcome = outcomes[0];
    if outcome.kind != ColumnKind::Categorical || outcome.categories.len() != 2 {
        return Err(Error::Schema(format!(
            "outcome column `{}` must be categorical with exactly two categories",
            outcome.name
        )));
    }
    Ok(())
}

/// Column storage, aligned with the schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnValues {
    /// The id column; ids live in [`Dataset::ids`].
    Id,
    Numeric(Vec<f64>),
    /// Indices into the column's declared categories.
    Categorical(Vec<u32>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetRepr {
    tag: String,
    schema: Vec<ColumnSchema>,
    ids: Vec<String>,
    columns: Vec<ColumnValues>,
}

/// A validated, immutable cohort table.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct Dataset {
    tag: String,
    schema: Vec<ColumnSchema>,
    ids: Vec<String>,
    columns: Vec<ColumnValues>,
    index: HashMap<String, Row>,
    by_name: HashMap<String, usize>,
    outcome: usize,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.tag == other.tag
            && self.schema == other.schema
            && self.ids == other.ids
            && self.columns == other.columns
    }
}

impl TryFrom<DatasetRepr> for Dataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        Dataset::from_parts(r.tag, r.schema, r.ids, r.columns)
    }
}

impl From<Dataset> for DatasetRepr {
    fn from(d: Dataset) -> Self {
        DatasetRepr {
            tag: d.tag,
            schema: d.schema,
            ids: d.ids,
            columns: d.columns,
        }
    }
}

/// A row dropped during ingestion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line number in the CSV, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: Dataset,
    pub rejected: Vec<RejectedRow>,
}

/// Summary returned to clients after an upload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub tag: String,
    pub rows: usize,
    pub rejected: usize,
    pub columns: usize,
    pub positive_rate: f64,
}

impl Ingested {
    pub fn summary(&self) -> IngestSummary {
        let ds = &self.dataset;
        IngestSummary {
            tag: ds.tag.clone(),
            rows: ds.len(),
            rejected: self.rejected.len(),
            columns: ds.schema.len(),
            positive_rate: ds.outcome_rate(ds.rows()),
        }
    }
}

impl Dataset {
    /// Assembles a dataset from column storage, checking every invariant.
    pub fn from_parts(
        tag: impl Into<String>,
        schema: Vec<ColumnSchema>,
        ids: Vec<String>,
        columns: Vec<ColumnValues>,
    ) -> Result<Self> {
        validate_schema(&schema)?;
        if columns.len() != schema.len() {
            return Err(Error::Schema(format!(
                "{} columns for {} schema entries",
                columns.len(),
                schema.len()
            )));
        }
        let n = ids.len();
        for (col, values) in schema.iter().zip(&columns) {
            match (col.role, col.kind, values) {
                (ColumnRole::Id, _, ColumnValues::Id) => {}
                (ColumnRole::Id, _, _) => {
                    return Err(Error::Schema(format!("id column `{}` holds values", col.name)))
                }
                (_, ColumnKind::Numeric, ColumnValues::Numeric(v)) => {
                    if v.len() != n {
                        return Err(Error::Schema(format!("column `{}` has wrong length", col.name)));
                    }
                    if v.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Schema(format!("column `{}` holds a non-finite value", col.name)));
                    }
                }
                (_, ColumnKind::Categorical, ColumnValues::Categorical(v)) => {
                    if v.len() != n {
                        return Err(Error::Schema(format!("column `{}` has wrong length", col.name)));
                    }
                    if v.iter().any(|&c| c as usize >= col.categories.len()) {
                        return Err(Error::Schema(format!("column `{}` holds an undeclared category", col.name)));
                    }
                }
                _ => {
                    return Err(Error::Schema(format!(
                        "column `{}` storage does not match its kind",
                        col.name
                    )))
                }
            }
        }
        let mut index = HashMap::with_capacity(n);
        for (row, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), row).is_some() {
                return Err(Error::DuplicateId(id.clone()));
            }
        }
        let by_name = schema
            .iter()
            .enumerate()
            .map(|(i, c)| (c.name.clone(), i))
            .collect();
        let outcome = schema
            .iter()
            .position(|c| c.role == ColumnRole::Outcome)
            .expect("validated schema has an outcome");
        Ok(Dataset {
            tag: tag.into(),
            schema,
            ids,
            columns,
            index,
            by_name,
            outcome,
        })
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Same data under another cohort tag.
    pub fn with_tag(mut self, tag: impl Into<String>) -> Self {
        self.tag = tag.into();
        self
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// All rows in scan order.
    pub fn rows(&self) -> Vec<Row> {
        (0..self.len()).collect()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: Row) -> &str {
        &self.ids[row]
    }

    pub fn row_of(&self, id: &str) -> Option<Row> {
        self.index.get(id).copied()
    }

    pub fn require_row(&self, id: &str) -> Result<Row> {
        self.row_of(id).ok_or_else(|| Error::UnknownId(id.to_string()))
    }

    /// Resolves text ids to sorted, de-duplicated rows.
    pub fn rows_of<S: AsRef<str>>(&self, ids: &[S]) -> Result<Vec<Row>> {
        let mut rows = ids
            .iter()
            .map(|id| self.require_row(id.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        rows.sort_unstable();
        rows.dedup();
        Ok(rows)
    }

    pub fn ids_of(&self, rows: &[Row]) -> Vec<String> {
        rows.iter().map(|&r| self.ids[r].clone()).collect()
    }

    /// The participants in `rows`, in that order, under the same tag.
    pub fn subset(&self, rows: &[Row]) -> Result<Dataset> {
        let columns = self
            .columns
            .iter()
            .map(|c| match c {
                ColumnValues::Id => ColumnValues::Id,
                ColumnValues::Numeric(v) => ColumnValues::Numeric(rows.iter().map(|&r| v[r]).collect()),
                ColumnValues::Categorical(v) => ColumnValues::Categorical(rows.iter().map(|&r| v[r]).collect()),
            })
            .collect();
        Dataset::from_parts(self.tag.clone(), self.schema.clone(), self.ids_of(rows), columns)
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn column(&self, name: &str) -> Result<&ColumnSchema> {
        Ok(&self.schema[self.column_index(name)?])
    }

    pub fn values(&self, col: usize) -> &ColumnValues {
        &self.columns[col]
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        match &self.columns[self.column_index(name)?] {
            ColumnValues::Numeric(v) => Ok(v),
            _ => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "numeric",
            }),
        }
    }

    pub fn categorical(&self, name: &str) -> Result<&[u32]> {
        match &self.columns[self.column_index(name)?] {
            ColumnValues::Categorical(v) => Ok(v),
            _ => Err(Error::ColumnKind {
                column: name.to_string(),
                expected: "categorical",
            }),
        }
    }

    /// Category label of a categorical cell.
    pub fn category(&self, col: usize, row: Row) -> Option<&str> {
        match &self.columns[col] {
            ColumnValues::Categorical(v) => Some(&self.schema[col].categories[v[row] as usize]),
            _ => None,
        }
    }

    /// Indices of feature columns in schema order.
    pub fn feature_columns(&self) -> Vec<usize> {
        self.schema
            .iter()
            .enumerate()
            .filter(|(_, c)| c.is_feature())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.feature_columns()
            .into_iter()
            .map(|i| self.schema[i].name.clone())
            .collect()
    }

    pub fn outcome_column(&self) -> &ColumnSchema {
        &self.schema[self.outcome]
    }

    pub fn outcome_codes(&self) -> &[u32] {
        match &self.columns[self.outcome] {
            ColumnValues::Categorical(v) => v,
            _ => unreachable!("outcome column is categorical"),
        }
    }

    /// Whether a participant is in the positive outcome class.
    pub fn is_positive(&self, row: Row) -> bool {
        self.outcome_codes()[row] == 1
    }

    pub fn positive_label(&self) -> &str {
        &self.outcome_column().categories[1]
    }

    pub fn negative_label(&self) -> &str {
        &self.outcome_column().categories[0]
    }

    pub fn outcome_label(&self, positive: bool) -> &str {
        if positive {
            self.positive_label()
        } else {
            self.negative_label()
        }
    }

    /// Fraction of positive participants among `rows` (0 when empty).
    pub fn outcome_rate(&self, rows: impl IntoIterator<Item = Row>) -> f64 {
        let (mut n, mut pos) = (0usize, 0usize);
        for r in rows {
            n += 1;
            pos += usize::from(self.is_positive(r));
        }
        if n == 0 {
            0.0
        } else {
            pos as f64 / n as f64
        }
    }

    /// Reads a cohort CSV. Rows with empty or unparseable numeric cells are
    /// rejected and reported; structural problems are errors.
    pub fn ingest_csv(
        path: impl AsRef<Path>,
        schema: Vec<ColumnSchema>,
        tag: impl Into<String>,
    ) -> Result<Ingested> {
        let file = File::open(path)?;
        Self::ingest_reader(file, schema, tag)
    }

    pub fn ingest_reader<R: Read>(
        reader: R,
        schema: Vec<ColumnSchema>,
        tag: impl Into<String>,
    ) -> Result<Ingested> {
        validate_schema(&schema)?;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "header has {} columns, schema has {}",
                header.len(),
                schema.len()
            )));
        }
        // position of each schema column in the CSV
        let mut source = Vec::with_capacity(schema.len());
        for col in &schema {
            let pos = header.iter().position(|h| h == col.name).ok_or_else(|| {
                Error::SchemaMismatch(format!("column `{}` missing from header", col.name))
            })?;
            source.push(pos);
        }
        let lookups: Vec<HashMap<&str, u32>> = schema
            .iter()
            .map(|c| {
                c.categories
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (s.as_str(), i as u32))
                    .collect()
            })
            .collect();

        let mut ids = Vec::new();
        let mut columns: Vec<ColumnValues> = schema
            .iter()
            .map(|c| match (c.role, c.kind) {
                (ColumnRole::Id, _) => ColumnValues::Id,
                (_, ColumnKind::Numeric) => ColumnValues::Numeric(Vec::new()),
                (_, ColumnKind::Categorical) => ColumnValues::Categorical(Vec::new()),
            })
            .collect();
        let mut rejected = Vec::new();
        let mut numeric_cells = vec![0.0; schema.len()];
        let mut category_cells = vec![0u32; schema.len()];

        'records: for record in rdr.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let mut id = None;
            for (ci, col) in schema.iter().enumerate() {
                let cell = record.get(source[ci]).unwrap_or("");
                if cell.is_empty() {
                    rejected.push(RejectedRow {
                        line,
                        reason: format!("missing value in `{}`", col.name),
                    });
                    continue 'records;
                }
                match (col.role, col.kind) {
                    (ColumnRole::Id, _) => id = Some(cell.to_string()),
                    (_, ColumnKind::Numeric) => match cell.parse::<f64>() {
                        Ok(x) if x.is_finite() => numeric_cells[ci] = x,
                        _ => {
                            rejected.push(RejectedRow {
                                line,
                                reason: format!("unparseable number `{cell}` in `{}`", col.name),
                            });
                            continue 'records;
                        }
                    },
                    (_, ColumnKind::Categorical) => match lookups[ci].get(cell) {
                        Some(&code) => category_cells[ci] = code,
                        None => {
                            return Err(Error::UnknownCategory {
                                column: col.name.clone(),
                                value: cell.to_string(),
                            })
                        }
                    },
                }
            }
            ids.push(id.expect("schema has an id column"));
            for (ci, values) in columns.iter_mut().enumerate() {
                match values {
                    ColumnValues::Id => {}
                    ColumnValues::Numeric(v) => v.push(numeric_cells[ci]),
                    ColumnValues::Categorical(v) => v.push(category_cells[ci]),
                }
            }
        }

        let dataset = Dataset::from_parts(tag, schema, ids, columns)?;
        Ok(Ingested { dataset, rejected })
    }

    /// Writes the table as CSV in schema column order.
    pub fn export_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(self.schema.iter().map(|c| c.name.as_str()))?;
        let mut record = Vec::with_capacity(self.schema.len());
        for row in 0..self.len() {
            record.clear();
            for (ci, values) in self.columns.iter().enumerate() {
                record.push(match values {
                    ColumnValues::Id => self.ids[row].clone(),
                    ColumnValues::Numeric(v) => v[row].to_string(),
                    ColumnValues::Categorical(v) => {
                        self.schema[ci].categories[v[row] as usize].clone()
                    }
                });
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Writes the CSV and its schema sidecar.
    pub fn export_files(&self, csv_path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<()> {
        self.export_csv(File::create(csv_path)?)?;
        let sidecar = serde_json::to_string_pretty(&self.schema)?;
        std::fs::write(schema_path, sidecar)?;
        Ok(())
    }
}

/// Reads a schema sidecar document.
pub fn read_schema(path: impl AsRef<Path>) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path)?;
    let schema: Vec<ColumnSchema> = serde_json::from_str(&text)?;
    validate_schema(&schema)?;
    Ok(schema)
}
