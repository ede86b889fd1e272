//! Schema-typed tabular data: CSV ingestion, validation, and protected-group
//! assignment.
//!
//! A [`Dataset`] is an immutable grid of [`Cell`]s described by a
//! [`FeatureSchema`]. Schemas are explicit (loaded from a sidecar schema file,
//! never inferred) so that every run is reproducible from files alone.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from dataset construction, ingestion, and group assignment.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("header mismatch: expected columns [{expected}], found [{found}]; offending: [{offending}]")]
    HeaderMismatch {
        expected: String,
        found: String,
        offending: String,
    },
    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NumericParse {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row} has {found} cells, schema has {expected} columns")]
    RowLength {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("row {row}, column '{column}': cell kind does not match column kind")]
    CellKind { row: usize, column: String },
    #[error("row {row}: semester token '{token}' not listed in semester_order")]
    UnknownSemester { row: usize, token: String },
    #[error("schema: {0}")]
    Schema(String),
    #[error("group spec '{attribute}': source column '{column}' not found or not token-valued")]
    GroupSourceColumn { attribute: String, column: String },
    #[error("group spec '{attribute}': token '{token}' not covered by the mapping")]
    UnmappedToken { attribute: String, token: String },
    #[error("split: train and test schemas differ")]
    SplitSchemaMismatch,
    #[error("split: record id {0:?} appears in both train and test")]
    SplitOverlap(String),
}

/// What a column holds and how the pipeline treats it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    /// Token-valued feature column.
    Categorical,
    /// Real-valued feature column.
    Numeric,
    /// Term token used for the chronological train/test split.
    Semester,
    /// The raw grade column the binary label is derived from.
    LabelSource,
    /// Token-valued feature that is also a protected attribute source.
    ProtectedSource,
    /// Record identifier (student id); never a feature.
    Id,
}

impl ColumnKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Categorical => "categorical",
            ColumnKind::Numeric => "numeric",
            ColumnKind::Semester => "semester",
            ColumnKind::LabelSource => "label-source",
            ColumnKind::ProtectedSource => "protected-source",
            ColumnKind::Id => "id",
        }
    }

    pub fn parse(token: &str) -> Option<ColumnKind> {
        Some(match token {
            "categorical" => ColumnKind::Categorical,
            "numeric" => ColumnKind::Numeric,
            "semester" => ColumnKind::Semester,
            "label-source" => ColumnKind::LabelSource,
            "protected-source" => ColumnKind::ProtectedSource,
            "id" => ColumnKind::Id,
            _ => return None,
        })
    }

    /// Numeric columns hold numbers; every other kind holds tokens.
    pub fn is_token_valued(self) -> bool {
        !matches!(self, ColumnKind::Numeric)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A named, kinded column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub kind: ColumnKind,
}

impl Column {
    pub fn new(name: impl Into<String>, kind: ColumnKind) -> Column {
        Column {
            name: name.into(),
            kind,
        }
    }
}

/// Ordered column list plus the label/semester/course designations.
///
/// Invariants enforced at construction: unique column names, exactly one
/// label-source column, at most one id and one semester column, and a
/// designated course column (when set) that exists and is token-valued.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    columns: Vec<Column>,
    label_name: String,
    semester_order: Vec<String>,
    course_column: Option<String>,
}

impl FeatureSchema {
    pub fn new(
        columns: Vec<Column>,
        label_name: impl Into<String>,
        semester_order: Vec<String>,
        course_column: Option<String>,
    ) -> Result<FeatureSchema, DataError> {
        let label_name = label_name.into();
        let schema = FeatureSchema {
            columns,
            label_name,
            semester_order,
            course_column,
        };
        schema.validate()?;
        Ok(schema)
    }

    fn validate(&self) -> Result<(), DataError> {
        let mut seen = HashSet::new();
        for col in &self.columns {
            if !seen.insert(col.name.as_str()) {
                return Err(DataError::Schema(format!(
                    "duplicate column name '{}'",
                    col.name
                )));
            }
        }
        if self.label_name.is_empty() {
            return Err(DataError::Schema("label name must be non-empty".into()));
        }
        let count = |k: ColumnKind| self.columns.iter().filter(|c| c.kind == k).count();
        if count(ColumnKind::LabelSource) != 1 {
            return Err(DataError::Schema(
                "schema must have exactly one label-source column".into(),
            ));
        }
        if count(ColumnKind::Id) > 1 {
            return Err(DataError::Schema("at most one id column allowed".into()));
        }
        if count(ColumnKind::Semester) > 1 {
            return Err(DataError::Schema(
                "at most one semester column allowed".into(),
            ));
        }
        if count(ColumnKind::Semester) == 1 {
            if self.semester_order.is_empty() {
                return Err(DataError::Schema(
                    "semester_order required when a semester column is declared".into(),
                ));
            }
            let mut seen = HashSet::new();
            for tok in &self.semester_order {
                if !seen.insert(tok.as_str()) {
                    return Err(DataError::Schema(format!(
                        "duplicate semester token '{tok}' in semester_order"
                    )));
                }
            }
        }
        // The derived label column may already exist (post-pipeline data),
        // in which case it must be numeric.
        if let Some(col) = self.columns.iter().find(|c| c.name == self.label_name) {
            if col.kind != ColumnKind::Numeric {
                return Err(DataError::Schema(format!(
                    "column '{}' carries the label name but is not numeric",
                    self.label_name
                )));
            }
        }
        if let Some(course) = &self.course_column {
            match self.columns.iter().find(|c| &c.name == course) {
                Some(c) if c.kind.is_token_valued() => {}
                _ => {
                    return Err(DataError::Schema(format!(
                        "course column '{course}' not found or not token-valued"
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    pub fn semester_order(&self) -> &[String] {
        &self.semester_order
    }

    pub fn course_column(&self) -> Option<&str> {
        self.course_column.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn index_of_kind(&self, kind: ColumnKind) -> Option<usize> {
        self.columns.iter().position(|c| c.kind == kind)
    }

    pub fn id_index(&self) -> Option<usize> {
        self.index_of_kind(ColumnKind::Id)
    }

    pub fn semester_index(&self) -> Option<usize> {
        self.index_of_kind(ColumnKind::Semester)
    }

    pub fn label_source_index(&self) -> usize {
        self.index_of_kind(ColumnKind::LabelSource)
            .expect("validated: exactly one label-source column")
    }

    pub fn course_index(&self) -> Option<usize> {
        self.course_column
            .as_deref()
            .and_then(|name| self.column_index(name))
    }

    /// Index of the derived label column, if it exists yet.
    pub fn label_index(&self) -> Option<usize> {
        self.column_index(&self.label_name)
    }

    /// New schema with `column` appended.
    pub fn with_column(&self, column: Column) -> Result<FeatureSchema, DataError> {
        let mut columns = self.columns.clone();
        columns.push(column);
        FeatureSchema::new(
            columns,
            self.label_name.clone(),
            self.semester_order.clone(),
            self.course_column.clone(),
        )
    }

    /// Parse the sidecar schema file format: one `name = kind` line per
    /// column, plus `label = <name>`, `semesters = tok1,tok2,...` and
    /// optional `course_column = <name>` entries. Full-line `#` comments
    /// and blank lines are ignored.
    pub fn parse(text: &str) -> Result<FeatureSchema, DataError> {
        let mut columns = Vec::new();
        let mut label = None;
        let mut semesters = Vec::new();
        let mut course_column = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                DataError::Schema(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim();
            let value = value.trim();
            match key {
                "label" => label = Some(value.to_string()),
                "semesters" => {
                    semesters = value
                        .split(',')
                        .map(|t| t.trim().to_string())
                        .filter(|t| !t.is_empty())
                        .collect();
                }
                "course_column" => course_column = Some(value.to_string()),
                _ => {
                    let kind = ColumnKind::parse(value).ok_or_else(|| {
                        DataError::Schema(format!(
                            "line {}: unknown column kind '{value}' for column '{key}'",
                            lineno + 1
                        ))
                    })?;
                    columns.push(Column::new(key, kind));
                }
            }
        }
        let label = label.ok_or_else(|| DataError::Schema("missing 'label = <name>' entry".into()))?;
        for col in &columns {
            if matches!(col.name.as_str(), "label" | "semesters" | "course_column") {
                return Err(DataError::Schema(format!(
                    "column name '{}' collides with a reserved schema key",
                    col.name
                )));
            }
        }
        FeatureSchema::new(columns, label, semesters, course_column)
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<FeatureSchema, DataError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        FeatureSchema::parse(&text)
    }

    /// Render the schema in the sidecar file format.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for col in &self.columns {
            out.push_str(&format!("{} = {}\n", col.name, col.kind));
        }
        out.push_str(&format!("label = {}\n", self.label_name));
        if !self.semester_order.is_empty() {
            out.push_str(&format!("semesters = {}\n", self.semester_order.join(",")));
        }
        if let Some(course) = &self.course_column {
            out.push_str(&format!("course_column = {course}\n"));
        }
        out
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// One grid value.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Category(String),
    Number(f64),
    Missing,
}

impl Cell {
    pub fn as_token(&self) -> Option<&str> {
        match self {
            Cell::Category(t) => Some(t),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

pub type Row = Vec<Cell>;

/// An immutable, schema-validated table.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: FeatureSchema,
    rows: Vec<Row>,
}

impl Dataset {
    /// Validates row lengths, cell kinds, finite numbers, and semester tokens.
    pub fn new(schema: FeatureSchema, rows: Vec<Row>) -> Result<Dataset, DataError> {
        let semester_idx = schema.semester_index();
        for (r, row) in rows.iter().enumerate() {
            if row.len() != schema.columns().len() {
                return Err(DataError::RowLength {
                    row: r + 1,
                    found: row.len(),
                    expected: schema.columns().len(),
                });
            }
            for (c, cell) in row.iter().enumerate() {
                let col = &schema.columns()[c];
                let ok = match cell {
                    Cell::Missing => true,
                    Cell::Number(v) => !col.kind.is_token_valued() && v.is_finite(),
                    Cell::Category(_) => col.kind.is_token_valued(),
                };
                if !ok {
                    return Err(DataError::CellKind {
                        row: r + 1,
                        column: col.name.clone(),
                    });
                }
            }
            if let Some(si) = semester_idx {
                if let Cell::Category(tok) = &row[si] {
                    if !schema.semester_order().iter().any(|t| t == tok) {
                        return Err(DataError::UnknownSemester {
                            row: r + 1,
                            token: tok.clone(),
                        });
                    }
                }
            }
        }
        Ok(Dataset { schema, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.rows[row][col]
    }

    /// Label vector from the derived label column (0/1 numeric).
    pub fn labels(&self) -> Result<Vec<bool>, DataError> {
        let idx = self.schema.label_index().ok_or_else(|| {
            DataError::Schema(format!(
                "label column '{}' not present; run label derivation first",
                self.schema.label_name()
            ))
        })?;
        self.rows
            .iter()
            .enumerate()
            .map(|(r, row)| match &row[idx] {
                Cell::Number(v) if *v == 0.0 => Ok(false),
                Cell::Number(v) if *v == 1.0 => Ok(true),
                _ => Err(DataError::CellKind {
                    row: r + 1,
                    column: self.schema.label_name().to_string(),
                }),
            })
            .collect()
    }

    /// Load a CSV file against an explicit schema. The header must match the
    /// schema's column names exactly and in order. Empty strings become
    /// [`Cell::Missing`] in every column kind.
    pub fn load_csv(path: impl AsRef<Path>, schema: &FeatureSchema) -> Result<Dataset, DataError> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(false)
            .from_path(path)
            .map_err(|source| DataError::Csv {
                path: path.display().to_string(),
                source,
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|source| DataError::Csv {
                path: path.display().to_string(),
                source,
            })?
            .iter()
            .map(|h| h.to_string())
            .collect();
        let expected: Vec<&str> = schema.columns().iter().map(|c| c.name.as_str()).collect();
        if headers != expected {
            let mut offending = Vec::new();
            for i in 0..expected.len().max(headers.len()) {
                let want = expected.get(i).copied().unwrap_or("<none>");
                let got = headers.get(i).map(String::as_str).unwrap_or("<none>");
                if want != got {
                    offending.push(format!("expected '{want}' found '{got}'"));
                }
            }
            return Err(DataError::HeaderMismatch {
                expected: expected.join(","),
                found: headers.join(","),
                offending: offending.join("; "),
            });
        }
        let mut rows = Vec::new();
        for (r, record) in reader.records().enumerate() {
            let record = record.map_err(|source| DataError::Csv {
                path: path.display().to_string(),
                source,
            })?;
            let mut row = Vec::with_capacity(schema.columns().len());
            for (c, field) in record.iter().enumerate() {
                let col = &schema.columns()[c];
                let cell = if field.is_empty() {
                    Cell::Missing
                } else if col.kind.is_token_valued() {
                    Cell::Category(field.to_string())
                } else {
                    let v: f64 = field.parse().map_err(|_| DataError::NumericParse {
                        row: r + 1,
                        column: col.name.clone(),
                        value: field.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(DataError::NumericParse {
                            row: r + 1,
                            column: col.name.clone(),
                            value: field.to_string(),
                        });
                    }
                    Cell::Number(v)
                };
                row.push(cell);
            }
            rows.push(row);
        }
        Dataset::new(schema.clone(), rows)
    }

    /// Write as CSV. Numbers use Rust's shortest round-trip formatting, so
    /// write-then-load reproduces the dataset cell for cell.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let mut writer = csv::Writer::from_path(path).map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let to_csv_err = |source| DataError::Csv {
            path: path.display().to_string(),
            source,
        };
        let header: Vec<&str> = self.schema.columns().iter().map(|c| c.name.as_str()).collect();
        writer.write_record(&header).map_err(to_csv_err)?;
        for row in &self.rows {
            let record: Vec<String> = row
                .iter()
                .map(|cell| match cell {
                    Cell::Category(t) => t.clone(),
                    Cell::Number(v) => format!("{v}"),
                    Cell::Missing => String::new(),
                })
                .collect();
            writer.write_record(&record).map_err(to_csv_err)?;
        }
        writer.flush().map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(())
    }
}

/// Per-row protected-group membership.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
    Excluded,
}

/// Binary protected-attribute definition: which raw tokens fall in group A,
/// group B, or are excluded from the audit. The mapping must be total over
/// the tokens that actually occur.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub attribute_name: String,
    pub source_column: String,
    pub group_a_label: String,
    pub group_b_label: String,
    pub mapping: BTreeMap<String, Group>,
}

/// Result of applying a [`GroupSpec`] to a dataset: one assignment per row.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupAssignments {
    pub attribute_name: String,
    pub label_a: String,
    pub label_b: String,
    pub groups: Vec<Group>,
}

impl GroupAssignments {
    pub fn label_of(&self, group: Group) -> Option<&str> {
        match group {
            Group::A => Some(&self.label_a),
            Group::B => Some(&self.label_b),
            Group::Excluded => None,
        }
    }

    pub fn mask(&self, group: Group) -> Vec<bool> {
        self.groups.iter().map(|g| *g == group).collect()
    }

    pub fn count(&self, group: Group) -> usize {
        self.groups.iter().filter(|g| **g == group).count()
    }
}

/// Assign each row to A, B, or excluded from its raw token in the group
/// definition's source column. Missing source cells map to excluded; an
/// unmapped token is an error (mappings must be total).
pub fn assign_groups(data: &Dataset, spec: &GroupSpec) -> Result<GroupAssignments, DataError> {
    let idx = match data.schema().column_index(&spec.source_column) {
        Some(i) if data.schema().columns()[i].kind.is_token_valued() => i,
        _ => {
            return Err(DataError::GroupSourceColumn {
                attribute: spec.attribute_name.clone(),
                column: spec.source_column.clone(),
            })
        }
    };
    let groups = data
        .rows()
        .iter()
        .map(|row| match &row[idx] {
            Cell::Missing => Ok(Group::Excluded),
            Cell::Category(tok) => {
                spec.mapping
                    .get(tok)
                    .copied()
                    .ok_or_else(|| DataError::UnmappedToken {
                        attribute: spec.attribute_name.clone(),
                        token: tok.clone(),
                    })
            }
            Cell::Number(_) => unreachable!("token-valued column validated on construction"),
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(GroupAssignments {
        attribute_name: spec.attribute_name.clone(),
        label_a: spec.group_a_label.clone(),
        label_b: spec.group_b_label.clone(),
        groups,
    })
}

/// Train/test pair with a shared schema and no overlapping records.
#[derive(Debug, Clone)]
pub struct LabeledSplit {
    pub train: Dataset,
    pub test: Dataset,
}

impl LabeledSplit {
    /// Record identity for the overlap check is (id, course) when those
    /// columns exist; rows with a missing id are never considered overlapping.
    pub fn new(train: Dataset, test: Dataset) -> Result<LabeledSplit, DataError> {
        if train.schema() != test.schema() {
            return Err(DataError::SplitSchemaMismatch);
        }
        if let Some(id_idx) = train.schema().id_index() {
            let course_idx = train.schema().course_index();
            let key = |row: &Row| -> Option<String> {
                let id = row[id_idx].as_token()?;
                match course_idx {
                    Some(ci) => Some(format!("{id}\u{1f}{}", row[ci].as_token().unwrap_or(""))),
                    None => Some(id.to_string()),
                }
            };
            let train_keys: HashSet<String> =
                train.rows().iter().filter_map(key).collect();
            for row in test.rows() {
                if let Some(k) = key(row) {
                    if train_keys.contains(&k) {
                        return Err(DataError::SplitOverlap(k.replace('\u{1f}', "/")));
                    }
                }
            }
        }
        Ok(LabeledSplit { train, test })
    }
}
