//! The cleaning pipeline for raw course records.
//!
//! Stage order is fixed: deduplicate, filter records, derive the binary
//! label, merge rare categories, impute missing numerics, split by semester.
//! [`clean`] runs everything up to the split and is idempotent on its own
//! output; [`run_pipeline`] adds the chronological split.

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::data::{Cell, Column, ColumnKind, DataError, Dataset, LabeledSplit, Row};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("dataset has no {0} column")]
    MissingColumn(&'static str),
    #[error("row {row}: grade cell is {problem}")]
    BadGrade { row: usize, problem: String },
    #[error("row {row}: course cell is missing")]
    MissingCourse { row: usize },
    #[error("row {row}: semester cell is missing")]
    MissingSemester { row: usize },
    #[error("course '{0}' has no letter-grade rows in the reference data")]
    CourseNotInReference(String),
    #[error("cannot split: only one semester present")]
    SingleSemester,
    #[error("indicator column '{0}' already exists")]
    IndicatorCollision(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Letter-grade vocabulary with grade points, plus the pass/fail tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct GradeScale {
    letters: Vec<(String, f64)>,
    pass_token: String,
    fail_token: String,
}

impl Default for GradeScale {
    fn default() -> GradeScale {
        let letters = [
            ("A", 4.0),
            ("A-", 3.7),
            ("B+", 3.3),
            ("B", 3.0),
            ("B-", 2.7),
            ("C+", 2.3),
            ("C", 2.0),
            ("C-", 1.7),
            ("D+", 1.3),
            ("D", 1.0),
            ("D-", 0.7),
            ("F", 0.0),
        ]
        .into_iter()
        .map(|(t, p)| (t.to_string(), p))
        .collect();
        GradeScale::new(letters, "pass", "fail").expect("default scale is valid")
    }
}

impl GradeScale {
    pub fn new(
        letters: Vec<(String, f64)>,
        pass_token: impl Into<String>,
        fail_token: impl Into<String>,
    ) -> Result<GradeScale, PreprocessError> {
        let pass_token = pass_token.into();
        let fail_token = fail_token.into();
        if letters.is_empty() {
            return Err(PreprocessError::Config("grade scale has no letters".into()));
        }
        for pair in letters.windows(2) {
            if pair[1].1 >= pair[0].1 {
                return Err(PreprocessError::Config(
                    "grade points must strictly decrease down the letter order".into(),
                ));
            }
        }
        if pass_token == fail_token
            || letters.iter().any(|(t, _)| *t == pass_token || *t == fail_token)
        {
            return Err(PreprocessError::Config(
                "pass/fail tokens must be distinct from each other and from letters".into(),
            ));
        }
        Ok(GradeScale {
            letters,
            pass_token,
            fail_token,
        })
    }

    pub fn points(&self, token: &str) -> Option<f64> {
        self.letters.iter().find(|(t, _)| t == token).map(|(_, p)| *p)
    }

    pub fn is_pass(&self, token: &str) -> bool {
        token == self.pass_token
    }

    pub fn is_fail(&self, token: &str) -> bool {
        token == self.fail_token
    }

    /// Letter grade or pass/fail.
    pub fn is_valid(&self, token: &str) -> bool {
        self.points(token).is_some() || self.is_pass(token) || self.is_fail(token)
    }
}

/// Knobs of the cleaning pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessConfig {
    /// Replacement for missing numeric cells; must sit outside the natural
    /// range of every numeric feature.
    pub placeholder_value: f64,
    /// Tokens with fewer occurrences than this are merged into "Other".
    pub rare_category_min: usize,
    pub grade_scale: GradeScale,
}

impl Default for PreprocessConfig {
    fn default() -> PreprocessConfig {
        PreprocessConfig {
            placeholder_value: -999.0,
            rare_category_min: 30,
            grade_scale: GradeScale::default(),
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.rare_category_min < 1 {
            return Err(PreprocessError::Config("rare_category_min must be >= 1".into()));
        }
        if !self.placeholder_value.is_finite() {
            return Err(PreprocessError::Config("placeholder must be finite".into()));
        }
        Ok(())
    }
}

// Hashable row key: numbers by bit pattern, tokens by bytes.
fn row_key(row: &Row) -> Vec<u8> {
    let mut key = Vec::new();
    for cell in row {
        match cell {
            Cell::Missing => key.push(0),
            Cell::Number(v) => {
                key.push(1);
                key.extend_from_slice(&v.to_bits().to_le_bytes());
            }
            Cell::Category(t) => {
                key.push(2);
                key.extend_from_slice(&(t.len() as u64).to_le_bytes());
                key.extend_from_slice(t.as_bytes());
            }
        }
    }
    key
}

/// Drop rows identical in every cell, keeping the first occurrence in order.
pub fn deduplicate(data: &Dataset) -> Dataset {
    let mut seen = HashSet::new();
    let rows: Vec<Row> = data
        .rows()
        .iter()
        .filter(|row| seen.insert(row_key(row)))
        .cloned()
        .collect();
    Dataset::new(data.schema().clone(), rows).expect("subset of a valid dataset")
}

/// Drop rows with missing grades, then all occurrences of (student, course)
/// pairs enrolled more than once, then rows whose grade token is neither a
/// letter grade nor pass/fail.
pub fn filter_records(data: &Dataset, scale: &GradeScale) -> Result<Dataset, PreprocessError> {
    let id_idx = data
        .schema()
        .id_index()
        .ok_or(PreprocessError::MissingColumn("id"))?;
    let course_idx = data
        .schema()
        .course_index()
        .ok_or(PreprocessError::MissingColumn("course"))?;
    let grade_idx = data.schema().label_source_index();

    let with_grade: Vec<&Row> = data
        .rows()
        .iter()
        .filter(|row| !row[grade_idx].is_missing())
        .collect();

    let pair_key = |row: &Row| -> Option<(String, String)> {
        Some((
            row[id_idx].as_token()?.to_string(),
            row[course_idx].as_token()?.to_string(),
        ))
    };
    let mut pair_counts: HashMap<(String, String), u32> = HashMap::new();
    for row in &with_grade {
        if let Some(key) = pair_key(row) {
            *pair_counts.entry(key).or_insert(0) += 1;
        }
    }

    let rows: Vec<Row> = with_grade
        .into_iter()
        .filter(|row| match pair_key(row) {
            Some(key) => pair_counts[&key] == 1,
            None => true,
        })
        .filter(|row| {
            row[grade_idx]
                .as_token()
                .map(|t| scale.is_valid(t))
                .unwrap_or(false)
        })
        .cloned()
        .collect();
    Ok(Dataset::new(data.schema().clone(), rows)?)
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Label each row: positive iff its letter grade reaches the per-course
/// median of the reference rows, pass rows positive, fail rows negative.
/// Medians use only the reference data, so relabeling a different dataset
/// against the same reference never shifts the boundary. The label column is
/// appended (or recomputed in place when it already exists); the raw grade
/// column is retained and later excluded from model features.
pub fn derive_label(
    data: &Dataset,
    scale: &GradeScale,
    reference: &Dataset,
) -> Result<Dataset, PreprocessError> {
    let course_idx = data
        .schema()
        .course_index()
        .ok_or(PreprocessError::MissingColumn("course"))?;
    let grade_idx = data.schema().label_source_index();
    let ref_course_idx = reference
        .schema()
        .course_index()
        .ok_or(PreprocessError::MissingColumn("course"))?;
    let ref_grade_idx = reference.schema().label_source_index();

    // Per-course sorted letter-grade points over the reference rows.
    let mut ref_points: HashMap<&str, Vec<f64>> = HashMap::new();
    for row in reference.rows() {
        let (Some(course), Some(grade)) = (
            row[ref_course_idx].as_token(),
            row[ref_grade_idx].as_token(),
        ) else {
            continue;
        };
        if let Some(points) = scale.points(grade) {
            ref_points.entry(course).or_default().push(points);
        }
    }
    for points in ref_points.values_mut() {
        points.sort_by(|a, b| a.partial_cmp(b).expect("grade points are finite"));
    }

    let mut labels = Vec::with_capacity(data.n_rows());
    for (r, row) in data.rows().iter().enumerate() {
        let grade = row[grade_idx].as_token().ok_or(PreprocessError::BadGrade {
            row: r + 1,
            problem: "missing".into(),
        })?;
        let label = if scale.is_pass(grade) {
            1.0
        } else if scale.is_fail(grade) {
            0.0
        } else {
            let points = scale.points(grade).ok_or(PreprocessError::BadGrade {
                row: r + 1,
                problem: format!("not a recognized grade: '{grade}'"),
            })?;
            let course = row[course_idx]
                .as_token()
                .ok_or(PreprocessError::MissingCourse { row: r + 1 })?;
            let course_points = ref_points
                .get(course)
                .ok_or_else(|| PreprocessError::CourseNotInReference(course.to_string()))?;
            if points >= median(course_points) {
                1.0
            } else {
                0.0
            }
        };
        labels.push(label);
    }

    let schema = data.schema();
    match schema.label_index() {
        Some(label_idx) => {
            let rows = data
                .rows()
                .iter()
                .zip(&labels)
                .map(|(row, label)| {
                    let mut row = row.clone();
                    row[label_idx] = Cell::Number(*label);
                    row
                })
                .collect();
            Ok(Dataset::new(schema.clone(), rows)?)
        }
        None => {
            let new_schema =
                schema.with_column(Column::new(schema.label_name(), ColumnKind::Numeric))?;
            let rows = data
                .rows()
                .iter()
                .zip(&labels)
                .map(|(row, label)| {
                    let mut row = row.clone();
                    row.push(Cell::Number(*label));
                    row
                })
                .collect();
            Ok(Dataset::new(new_schema, rows)?)
        }
    }
}

/// True for categorical columns that are imputation indicators
/// (`<numeric column>_reported`); those are bookkeeping, not raw feature
/// values, and are exempt from rare-category merging.
fn is_indicator_column(data: &Dataset, col: &Column) -> bool {
    col.name
        .strip_suffix("_reported")
        .and_then(|base| data.schema().column_index(base))
        .map(|i| data.schema().columns()[i].kind == ColumnKind::Numeric)
        .unwrap_or(false)
}

/// Replace every token with fewer than `rare_category_min` occurrences by
/// "Other", in categorical and protected-source columns. Counts come from
/// the input dataset before any replacement. The designated course column is
/// exempt (it is the key for label derivation), as are imputation
/// indicators; id, semester, and grade columns are out of scope by kind.
pub fn merge_rare_categories(data: &Dataset, cfg: &PreprocessConfig) -> Dataset {
    let course_idx = data.schema().course_index();
    let merge_cols: Vec<usize> = data
        .schema()
        .columns()
        .iter()
        .enumerate()
        .filter(|(i, c)| {
            matches!(c.kind, ColumnKind::Categorical | ColumnKind::ProtectedSource)
                && Some(*i) != course_idx
                && !is_indicator_column(data, c)
        })
        .map(|(i, _)| i)
        .collect();

    let mut rare: HashMap<usize, HashSet<&str>> = HashMap::new();
    for &col in &merge_cols {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for row in data.rows() {
            if let Some(tok) = row[col].as_token() {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        rare.insert(
            col,
            counts
                .into_iter()
                .filter(|(_, n)| *n < cfg.rare_category_min)
                .map(|(t, _)| t)
                .collect(),
        );
    }

    let rows: Vec<Row> = data
        .rows()
        .iter()
        .map(|row| {
            let mut row = row.clone();
            for &col in &merge_cols {
                if let Cell::Category(tok) = &row[col] {
                    if rare[&col].contains(tok.as_str()) {
                        row[col] = Cell::Category("Other".into());
                    }
                }
            }
            row
        })
        .collect();
    Dataset::new(data.schema().clone(), rows).expect("token replacement keeps cells valid")
}

/// Replace missing numeric cells with the placeholder and append a
/// `<name>_reported` yes/no indicator for every numeric column that had at
/// least one missing value.
pub fn impute_missing(data: &Dataset, cfg: &PreprocessConfig) -> Result<Dataset, PreprocessError> {
    cfg.validate()?;
    let numeric_cols: Vec<usize> = data
        .schema()
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| c.kind == ColumnKind::Numeric)
        .map(|(i, _)| i)
        .collect();
    let needs_indicator: Vec<usize> = numeric_cols
        .iter()
        .copied()
        .filter(|&col| data.rows().iter().any(|row| row[col].is_missing()))
        .collect();

    let mut schema = data.schema().clone();
    for &col in &needs_indicator {
        let name = format!("{}_reported", data.schema().columns()[col].name);
        if data.schema().column_index(&name).is_some() {
            return Err(PreprocessError::IndicatorCollision(name));
        }
        schema = schema.with_column(Column::new(name, ColumnKind::Categorical))?;
    }

    let rows: Vec<Row> = data
        .rows()
        .iter()
        .map(|row| {
            let mut row = row.clone();
            let mut indicators = Vec::with_capacity(needs_indicator.len());
            for &col in &needs_indicator {
                let reported = if row[col].is_missing() { "no" } else { "yes" };
                indicators.push(Cell::Category(reported.into()));
            }
            for &col in &numeric_cols {
                if row[col].is_missing() {
                    row[col] = Cell::Number(cfg.placeholder_value);
                }
            }
            row.extend(indicators);
            row
        })
        .collect();
    Ok(Dataset::new(schema, rows)?)
}

// Chronologically last semester among the rows, as an index into
// schema.semester_order. Errors on missing cells.
fn last_semester(data: &Dataset) -> Result<usize, PreprocessError> {
    let sem_idx = data
        .schema()
        .semester_index()
        .ok_or(PreprocessError::MissingColumn("semester"))?;
    let order = data.schema().semester_order();
    let mut last: Option<usize> = None;
    let mut distinct = HashSet::new();
    for (r, row) in data.rows().iter().enumerate() {
        let tok = row[sem_idx]
            .as_token()
            .ok_or(PreprocessError::MissingSemester { row: r + 1 })?;
        let pos = order
            .iter()
            .position(|t| t == tok)
            .expect("semester tokens validated against semester_order");
        distinct.insert(pos);
        last = Some(last.map_or(pos, |l| l.max(pos)));
    }
    if distinct.len() < 2 {
        return Err(PreprocessError::SingleSemester);
    }
    Ok(last.expect("at least two semesters present"))
}

/// Chronological split: rows of the most recent semester become the test
/// set, everything earlier is training data.
pub fn split_by_semester(data: &Dataset) -> Result<LabeledSplit, PreprocessError> {
    let last = last_semester(data)?;
    let sem_idx = data.schema().semester_index().expect("checked above");
    let order = data.schema().semester_order();
    let is_test = |row: &Row| row[sem_idx].as_token() == Some(order[last].as_str());
    let train: Vec<Row> = data.rows().iter().filter(|r| !is_test(r)).cloned().collect();
    let test: Vec<Row> = data.rows().iter().filter(|r| is_test(r)).cloned().collect();
    let train = Dataset::new(data.schema().clone(), train)?;
    let test = Dataset::new(data.schema().clone(), test)?;
    Ok(LabeledSplit::new(train, test)?)
}

/// The Dataset-to-Dataset part of the pipeline, in the fixed stage order.
/// Label medians are computed only over rows outside the most recent
/// semester (the eventual training set), so the later split leaks nothing.
pub fn clean(data: &Dataset, cfg: &PreprocessConfig) -> Result<Dataset, PreprocessError> {
    cfg.validate()?;
    let d = deduplicate(data);
    let d = filter_records(&d, &cfg.grade_scale)?;
    let last = last_semester(&d)?;
    let sem_idx = d.schema().semester_index().expect("checked above");
    let order = d.schema().semester_order();
    let reference_rows: Vec<Row> = d
        .rows()
        .iter()
        .filter(|row| row[sem_idx].as_token() != Some(order[last].as_str()))
        .cloned()
        .collect();
    let reference = Dataset::new(d.schema().clone(), reference_rows)?;
    let d = derive_label(&d, &cfg.grade_scale, &reference)?;
    let d = merge_rare_categories(&d, cfg);
    impute_missing(&d, cfg)
}

/// Full pipeline: [`clean`] then [`split_by_semester`].
pub fn run_pipeline(data: &Dataset, cfg: &PreprocessConfig) -> Result<LabeledSplit, PreprocessError> {
    let cleaned = clean(data, cfg)?;
    split_by_semester(&cleaned)
}
