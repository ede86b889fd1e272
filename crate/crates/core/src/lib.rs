//! Fairness auditing for student-success prediction.
//!
//! The crate covers the full experiment loop on tabular course records:
//!
//! * [`data`] — schema-typed datasets, CSV ingestion, protected-group assignment
//! * [`preprocess`] — cleaning pipeline (dedup, grade filters, label derivation,
//!   placeholder imputation, rare-category merging, semester split)
//! * [`forest`] — from-scratch weighted random forest with out-of-bag error
//! * [`fairness`] — per-group accuracy / recall / positive-rate / precision and deltas
//! * [`stats`] — two-proportion z-test and significance stars
//! * [`postprocess`] — threshold policies and the equal-opportunity threshold search
//! * [`synth`] — seeded synthetic student populations with controllable group gaps
//! * [`report`] — audit tables and probability-histogram exports
//!
//! Everything downstream of a seed is deterministic: same inputs, same bytes out.

pub mod data;
pub mod fairness;
pub mod forest;
pub mod postprocess;
pub mod preprocess;
pub mod report;
pub mod stats;
pub mod synth;

pub use data::{
    Cell, ColumnKind, Dataset, FeatureSchema, Group, GroupAssignments, GroupSpec, LabeledSplit,
};
pub use fairness::{ConfusionCounts, FairnessReport, GroupMetrics};
pub use forest::{ForestModel, TrainConfig};
pub use postprocess::ThresholdPolicy;
pub use preprocess::{GradeScale, PreprocessConfig};
pub use synth::SynthSpec;
