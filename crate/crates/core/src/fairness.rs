//! Per-group classification metrics and group deltas.
//!
//! Four quantities are audited per protected group: accuracy, recall
//! (equality of opportunity), positive-prediction rate (demographic parity)
//! and precision (positive predictive parity). All metrics are a single
//! division of exact integer counts; undefined ratios (empty denominators)
//! are represented explicitly, never as 0 or NaN.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Group, GroupAssignments};
use crate::stats::{significance_stars, two_prop_test};

#[derive(Debug, Error)]
pub enum FairnessError {
    #[error("input vectors have different lengths ({labels} labels, {preds} predictions, {groups} groups)")]
    LengthMismatch {
        labels: usize,
        preds: usize,
        groups: usize,
    },
    #[error("group '{0}' has no rows")]
    EmptyGroup(String),
    #[error("f-score undefined: no positive labels and no positive predictions")]
    FScoreUndefined,
}

/// Binary confusion counts for one group of rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub true_neg: u64,
    pub false_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.true_neg + self.false_neg
    }

    pub fn correct(&self) -> u64 {
        self.true_pos + self.true_neg
    }

    /// Rows predicted positive.
    pub fn predicted_pos(&self) -> u64 {
        self.true_pos + self.false_pos
    }

    /// Rows with a positive true label.
    pub fn actual_pos(&self) -> u64 {
        self.true_pos + self.false_neg
    }

    pub fn merged(self, other: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            true_pos: self.true_pos + other.true_pos,
            false_pos: self.false_pos + other.false_pos,
            true_neg: self.true_neg + other.true_neg,
            false_neg: self.false_neg + other.false_neg,
        }
    }
}

/// Count the confusion cells over rows where `mask` is true.
pub fn confusion(
    labels: &[bool],
    preds: &[bool],
    mask: &[bool],
) -> Result<ConfusionCounts, FairnessError> {
    if labels.len() != preds.len() || labels.len() != mask.len() {
        return Err(FairnessError::LengthMismatch {
            labels: labels.len(),
            preds: preds.len(),
            groups: mask.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for i in 0..labels.len() {
        if !mask[i] {
            continue;
        }
        match (labels[i], preds[i]) {
            (true, true) => c.true_pos += 1,
            (true, false) => c.false_neg += 1,
            (false, true) => c.false_pos += 1,
            (false, false) => c.true_neg += 1,
        }
    }
    Ok(c)
}

/// (tp + tn) / total. Errors on an empty group.
pub fn accuracy(c: &ConfusionCounts) -> Result<f64, FairnessError> {
    if c.total() == 0 {
        return Err(FairnessError::EmptyGroup("<empty>".into()));
    }
    Ok(c.correct() as f64 / c.total() as f64)
}

/// tp / (tp + fn); `None` when the group has no positive labels.
pub fn recall(c: &ConfusionCounts) -> Option<f64> {
    let denom = c.actual_pos();
    (denom > 0).then(|| c.true_pos as f64 / denom as f64)
}

/// (tp + fp) / total. Errors on an empty group.
pub fn positive_rate(c: &ConfusionCounts) -> Result<f64, FairnessError> {
    if c.total() == 0 {
        return Err(FairnessError::EmptyGroup("<empty>".into()));
    }
    Ok(c.predicted_pos() as f64 / c.total() as f64)
}

/// tp / (tp + fp); `None` when nothing was predicted positive.
pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    let denom = c.predicted_pos();
    (denom > 0).then(|| c.true_pos as f64 / denom as f64)
}

/// Overall F1: harmonic mean of precision and recall, computed as
/// 2tp / (2tp + fp + fn). Errors only when there are no positive labels and
/// no positive predictions (both component ratios undefined).
pub fn f_score(labels: &[bool], preds: &[bool]) -> Result<f64, FairnessError> {
    let mask = vec![true; labels.len()];
    let c = confusion(labels, preds, &mask)?;
    let denom = 2 * c.true_pos + c.false_pos + c.false_neg;
    if denom == 0 {
        return Err(FairnessError::FScoreUndefined);
    }
    Ok(2.0 * c.true_pos as f64 / denom as f64)
}

/// The four audited quantities for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group_label: String,
    pub n: u64,
    pub counts: ConfusionCounts,
    pub accuracy: f64,
    pub recall: Option<f64>,
    pub positive_rate: f64,
    pub precision: Option<f64>,
}

impl GroupMetrics {
    fn from_counts(group_label: String, c: ConfusionCounts) -> Result<GroupMetrics, FairnessError> {
        if c.total() == 0 {
            return Err(FairnessError::EmptyGroup(group_label));
        }
        Ok(GroupMetrics {
            group_label,
            n: c.total(),
            counts: c,
            accuracy: accuracy(&c)?,
            recall: recall(&c),
            positive_rate: positive_rate(&c)?,
            precision: precision(&c),
        })
    }

    pub fn value(&self, kind: MetricKind) -> Option<f64> {
        match kind {
            MetricKind::Accuracy => Some(self.accuracy),
            MetricKind::Recall => self.recall,
            MetricKind::PositiveRate => Some(self.positive_rate),
            MetricKind::Precision => self.precision,
        }
    }
}

/// The audited metrics, in the report's fixed row order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricKind {
    Accuracy,
    Recall,
    PositiveRate,
    Precision,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [
        MetricKind::Accuracy,
        MetricKind::Recall,
        MetricKind::PositiveRate,
        MetricKind::Precision,
    ];

    /// Row label used in rendered audit tables.
    pub fn display_name(self) -> &'static str {
        match self {
            MetricKind::Accuracy => "Accuracy",
            MetricKind::Recall => "Equality of opportunity (Recall)",
            MetricKind::PositiveRate => "Demographic Parity (Prop. Positive Predictions)",
            MetricKind::Precision => "Positive Predictive Parity (Precision)",
        }
    }
}

/// Group delta, test p-value, and stars for one metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    /// metric(B) - metric(A); `None` when either side is undefined.
    pub delta: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

/// Side-by-side group metrics for one protected attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub attribute_name: String,
    pub metrics_a: GroupMetrics,
    pub metrics_b: GroupMetrics,
    pub accuracy: MetricComparison,
    pub recall: MetricComparison,
    pub positive_rate: MetricComparison,
    pub precision: MetricComparison,
}

impl FairnessReport {
    pub fn comparison(&self, kind: MetricKind) -> &MetricComparison {
        match kind {
            MetricKind::Accuracy => &self.accuracy,
            MetricKind::Recall => &self.recall,
            MetricKind::PositiveRate => &self.positive_rate,
            MetricKind::Precision => &self.precision,
        }
    }
}

/// Build the per-attribute report: group metrics for A and B, deltas as
/// B - A, and a two-proportion test per metric. Each metric's test compares
/// the exact counts behind the ratio: correct/total for accuracy, tp/(tp+fn)
/// for recall, (tp+fp)/total for demographic parity, tp/(tp+fp) for
/// precision. Excluded rows are ignored.
pub fn build_report(
    labels: &[bool],
    preds: &[bool],
    groups: &GroupAssignments,
) -> Result<FairnessReport, FairnessError> {
    let counts_a = confusion(labels, preds, &groups.mask(Group::A))?;
    let counts_b = confusion(labels, preds, &groups.mask(Group::B))?;
    if counts_a.total() == 0 {
        return Err(FairnessError::EmptyGroup(groups.label_a.clone()));
    }
    if counts_b.total() == 0 {
        return Err(FairnessError::EmptyGroup(groups.label_b.clone()));
    }
    let metrics_a = GroupMetrics::from_counts(groups.label_a.clone(), counts_a)?;
    let metrics_b = GroupMetrics::from_counts(groups.label_b.clone(), counts_b)?;

    let compare = |value_a: Option<f64>,
                   value_b: Option<f64>,
                   x_a: u64,
                   n_a: u64,
                   x_b: u64,
                   n_b: u64|
     -> MetricComparison {
        let delta = match (value_a, value_b) {
            (Some(a), Some(b)) => Some(b - a),
            _ => None,
        };
        let p_value = if n_a > 0 && n_b > 0 {
            // counts validated above, test cannot fail
            Some(two_prop_test(x_a, n_a, x_b, n_b).expect("valid counts").p_two_sided)
        } else {
            None
        };
        let stars = p_value.map(significance_stars).unwrap_or("").to_string();
        MetricComparison {
            delta,
            p_value,
            stars,
        }
    };

    let (a, b) = (&metrics_a.counts, &metrics_b.counts);
    Ok(FairnessReport {
        attribute_name: groups.attribute_name.clone(),
        accuracy: compare(
            Some(metrics_a.accuracy),
            Some(metrics_b.accuracy),
            a.correct(),
            a.total(),
            b.correct(),
            b.total(),
        ),
        recall: compare(
            metrics_a.recall,
            metrics_b.recall,
            a.true_pos,
            a.actual_pos(),
            b.true_pos,
            b.actual_pos(),
        ),
        positive_rate: compare(
            Some(metrics_a.positive_rate),
            Some(metrics_b.positive_rate),
            a.predicted_pos(),
            a.total(),
            b.predicted_pos(),
            b.total(),
        ),
        precision: compare(
            metrics_a.precision,
            metrics_b.precision,
            a.true_pos,
            a.predicted_pos(),
            b.true_pos,
            b.predicted_pos(),
        ),
        metrics_a,
        metrics_b,
    })
}
