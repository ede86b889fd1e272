//! Seeded synthetic student populations with controllable group gaps.
//!
//! The generator emits raw records in the same CSV schema the cleaning
//! pipeline consumes (id, semester, course, grade, protected group, numeric
//! and categorical features), so the whole train/audit loop runs end to end
//! without institutional data.
//!
//! Draw model, one ChaCha8 stream in row order:
//!
//! * group from the configured population shares, then the latent success
//!   label from that group's base rate;
//! * the grade from the label: successes get B+/A-/A (or "pass"), failures
//!   B- and below (or "fail"). Successful grades start at B+ and failing
//!   grades stop at B-, so per-course medians land between them and the
//!   pipeline's derived label reproduces the latent one whenever a course is
//!   majority-positive;
//! * numeric features from class-conditional normal distributions,
//!   `separability` apart (in noise units) and shifted down by `group_shift`
//!   for the first configured group;
//! * categorical features from label-skewed token distributions, the skew
//!   scaled by `separability` (one token is deliberately rare so downstream
//!   category merging has work to do);
//! * semesters round-robin over `term_01..term_k`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::data::{Cell, Column, ColumnKind, DataError, Dataset, FeatureSchema, Row};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    Invalid(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// One synthetic subpopulation.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupShare {
    /// Token written to the protected "group" column.
    pub token: String,
    /// Fraction of rows in this group; shares must sum to 1.
    pub share: f64,
    /// Probability of the positive (success) label.
    pub base_rate: f64,
}

/// Parametric description of a synthetic population.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    /// The first group is the disadvantaged one: `group_shift` is subtracted
    /// from its numeric feature means.
    pub groups: Vec<GroupShare>,
    pub n_rows: usize,
    pub n_numeric_features: usize,
    pub n_categorical_features: usize,
    /// Distance between class-conditional feature means, in noise units.
    pub separability: f64,
    /// Additive score disadvantage for the first group, in noise units.
    pub group_shift: f64,
    /// Missing-cell rate in every numeric feature column.
    pub missing_rate: f64,
    pub n_semesters: usize,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.groups.is_empty() {
            return Err(SynthError::Invalid("at least one group required".into()));
        }
        let share_sum: f64 = self.groups.iter().map(|g| g.share).sum();
        if (share_sum - 1.0).abs() > 1e-9 {
            return Err(SynthError::Invalid(format!(
                "population shares sum to {share_sum}, expected 1"
            )));
        }
        for g in &self.groups {
            if g.token.is_empty() {
                return Err(SynthError::Invalid("empty group token".into()));
            }
            if !(0.0..=1.0).contains(&g.base_rate) {
                return Err(SynthError::Invalid(format!(
                    "base rate {} outside [0, 1]",
                    g.base_rate
                )));
            }
            if g.share < 0.0 {
                return Err(SynthError::Invalid("negative population share".into()));
            }
        }
        let mut tokens: Vec<&str> = self.groups.iter().map(|g| g.token.as_str()).collect();
        tokens.sort_unstable();
        tokens.dedup();
        if tokens.len() != self.groups.len() {
            return Err(SynthError::Invalid("duplicate group tokens".into()));
        }
        if self.n_rows == 0 {
            return Err(SynthError::Invalid("n_rows must be >= 1".into()));
        }
        if self.n_semesters == 0 {
            return Err(SynthError::Invalid("n_semesters must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(SynthError::Invalid(format!(
                "missing rate {} outside [0, 1)",
                self.missing_rate
            )));
        }
        if self.separability < 0.0 {
            return Err(SynthError::Invalid("separability must be >= 0".into()));
        }
        Ok(())
    }

    /// Schema of the generated data (before any preprocessing).
    pub fn schema(&self) -> Result<FeatureSchema, SynthError> {
        self.validate()?;
        let mut columns = vec![
            Column::new("student_id", ColumnKind::Id),
            Column::new("semester", ColumnKind::Semester),
            Column::new("course", ColumnKind::Categorical),
            Column::new("grade", ColumnKind::LabelSource),
            Column::new("group", ColumnKind::ProtectedSource),
        ];
        for i in 1..=self.n_numeric_features {
            columns.push(Column::new(format!("score_{i:02}"), ColumnKind::Numeric));
        }
        for i in 1..=self.n_categorical_features {
            columns.push(Column::new(format!("cat_{i:02}"), ColumnKind::Categorical));
        }
        let semester_order = (1..=self.n_semesters).map(|i| format!("term_{i:02}")).collect();
        Ok(FeatureSchema::new(
            columns,
            "outcome",
            semester_order,
            Some("course".into()),
        )?)
    }
}

const N_COURSES: usize = 6;
const PASS_FAIL_RATE: f64 = 0.04;

// grades for successful rows: at B+ and above so the course median separates
const POSITIVE_GRADES: [(&str, f64); 3] = [("B+", 0.50), ("A-", 0.30), ("A", 0.20)];
// grades for failing rows: B- and below
const NEGATIVE_GRADES: [(&str, f64); 7] = [
    ("B-", 0.25),
    ("C+", 0.20),
    ("C", 0.20),
    ("C-", 0.15),
    ("D", 0.10),
    ("D+", 0.05),
    ("F", 0.05),
];

// label-skewed categorical token distributions; the last token stays rare.
// The skew scales with separability and vanishes at separability zero, so a
// zero-separability population really carries no class signal.
const CAT_TOKENS: [&str; 7] = [
    "tok_1", "tok_2", "tok_3", "tok_4", "tok_5", "tok_6", "tok_rare",
];
const CAT_WEIGHTS_POS: [f64; 7] = [0.30, 0.25, 0.19, 0.12, 0.08, 0.0575, 0.0025];
const CAT_WEIGHTS_NEG: [f64; 7] = [0.0575, 0.08, 0.12, 0.19, 0.25, 0.30, 0.0025];

fn cat_weights(separability: f64) -> (Vec<f64>, Vec<f64>) {
    let mix = (separability / 2.0).clamp(0.0, 1.0);
    let mut pos = Vec::with_capacity(CAT_TOKENS.len());
    let mut neg = Vec::with_capacity(CAT_TOKENS.len());
    for i in 0..CAT_TOKENS.len() {
        let mid = (CAT_WEIGHTS_POS[i] + CAT_WEIGHTS_NEG[i]) / 2.0;
        pos.push(mid + mix * (CAT_WEIGHTS_POS[i] - mid));
        neg.push(mid + mix * (CAT_WEIGHTS_NEG[i] - mid));
    }
    (pos, neg)
}

fn pick_weighted<'a>(rng: &mut ChaCha8Rng, items: &[(&'a str, f64)]) -> &'a str {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (tok, w) in items {
        acc += w;
        if u < acc {
            return tok;
        }
    }
    items.last().expect("non-empty").0
}

/// Generate a dataset. Byte-identical output for identical specs.
pub fn generate(spec: &SynthSpec) -> Result<Dataset, SynthError> {
    let schema = spec.schema()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let (weights_pos, weights_neg) = cat_weights(spec.separability);
    let cat_pos: Vec<(&str, f64)> = CAT_TOKENS.iter().copied().zip(weights_pos).collect();
    let cat_neg: Vec<(&str, f64)> = CAT_TOKENS.iter().copied().zip(weights_neg).collect();

    let mut rows: Vec<Row> = Vec::with_capacity(spec.n_rows);
    for i in 0..spec.n_rows {
        // group, then latent success label
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut group_idx = spec.groups.len() - 1;
        for (gi, g) in spec.groups.iter().enumerate() {
            acc += g.share;
            if u < acc {
                group_idx = gi;
                break;
            }
        }
        let group = &spec.groups[group_idx];
        let label = rng.random_bool(group.base_rate);

        let course = format!("course_{}", rng.random_range(0..N_COURSES) + 1);

        let grade: String = if rng.random::<f64>() < PASS_FAIL_RATE {
            if label { "pass" } else { "fail" }.to_string()
        } else if label {
            pick_weighted(&mut rng, &POSITIVE_GRADES).to_string()
        } else {
            pick_weighted(&mut rng, &NEGATIVE_GRADES).to_string()
        };

        let shift = if group_idx == 0 { spec.group_shift } else { 0.0 };
        let class_mean = if label {
            spec.separability / 2.0
        } else {
            -spec.separability / 2.0
        } - shift;

        let mut row: Row = vec![
            Cell::Category(format!("stu_{:06}", i + 1)),
            Cell::Category(format!("term_{:02}", (i % spec.n_semesters) + 1)),
            Cell::Category(course),
            Cell::Category(grade),
            Cell::Category(group.token.clone()),
        ];
        for _ in 0..spec.n_numeric_features {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let value = class_mean + noise;
            let missing = rng.random::<f64>() < spec.missing_rate;
            row.push(if missing { Cell::Missing } else { Cell::Number(value) });
        }
        for _ in 0..spec.n_categorical_features {
            let dist = if label { &cat_pos } else { &cat_neg };
            row.push(Cell::Category(pick_weighted(&mut rng, dist).to_string()));
        }
        rows.push(row);
    }
    Ok(Dataset::new(schema, rows)?)
}

/// The latent success label is recoverable from the emitted grade: B+ and
/// above (or "pass") means success. Used by tests and base-rate checks.
pub fn latent_label(grade: &str) -> bool {
    matches!(grade, "B+" | "A-" | "A" | "pass")
}
