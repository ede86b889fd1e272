//! Rendered audit tables and probability-histogram exports.
//!
//! Rendering is byte-stable: values are banker's-rounded to 3 decimals
//! (Rust's `{:.3}` rounds the exact binary value, ties to even), stars are
//! appended to deltas, and undefined metrics render as em dashes.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::data::{Group, GroupAssignments};
use crate::fairness::{FairnessReport, MetricKind};
use crate::postprocess::ThresholdPolicy;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("orig and fair reports disagree on {0}")]
    MismatchedReports(String),
    #[error("histogram input is empty")]
    EmptyInput,
    #[error("n_bins must be >= 1")]
    InvalidBins,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("vector lengths differ")]
    LengthMismatch,
    #[error("file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

const UNDEFINED: &str = "—";

fn fmt_value(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.3}"),
        None => UNDEFINED.to_string(),
    }
}

fn fmt_delta(delta: Option<f64>, stars: &str) -> String {
    match delta {
        Some(d) => format!("{d:.3}{stars}"),
        None => UNDEFINED.to_string(),
    }
}

fn check_pair(orig: &FairnessReport, fair: &FairnessReport) -> Result<(), ReportError> {
    if orig.attribute_name != fair.attribute_name {
        return Err(ReportError::MismatchedReports("attribute name".into()));
    }
    if orig.metrics_a.group_label != fair.metrics_a.group_label
        || orig.metrics_b.group_label != fair.metrics_b.group_label
    {
        return Err(ReportError::MismatchedReports("group labels".into()));
    }
    Ok(())
}

/// Audit table with one section per protected attribute, each holding the
/// original and the fairness-corrected model side by side.
#[derive(Debug, Clone, Default)]
pub struct AuditTable {
    sections: Vec<(FairnessReport, FairnessReport)>,
}

impl AuditTable {
    pub fn new() -> AuditTable {
        AuditTable::default()
    }

    pub fn add_section(
        &mut self,
        orig: FairnessReport,
        fair: FairnessReport,
    ) -> Result<(), ReportError> {
        check_pair(&orig, &fair)?;
        self.sections.push((orig, fair));
        Ok(())
    }

    /// Plain-text rendering; metrics in the fixed audit order, one orig and
    /// one fair row per metric.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        for (i, (orig, fair)) in self.sections.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            render_section_text(&mut out, orig, fair);
        }
        out
    }

    /// Tab-separated rendering with the same rounded cells.
    pub fn render_tsv(&self) -> String {
        let mut out = String::from("attribute\tmetric\tmodel\tgroup_a\tgroup_b\tvalue_a\tvalue_b\tdelta\n");
        for (orig, fair) in &self.sections {
            for kind in MetricKind::ALL {
                for (model, report) in [("orig", orig), ("fair", fair)] {
                    let cmp = report.comparison(kind);
                    out.push_str(&format!(
                        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                        report.attribute_name,
                        kind.display_name(),
                        model,
                        report.metrics_a.group_label,
                        report.metrics_b.group_label,
                        fmt_value(report.metrics_a.value(kind)),
                        fmt_value(report.metrics_b.value(kind)),
                        fmt_delta(cmp.delta, &cmp.stars),
                    ));
                }
            }
        }
        out
    }
}

fn render_section_text(out: &mut String, orig: &FairnessReport, fair: &FairnessReport) {
    let metric_width = MetricKind::ALL
        .iter()
        .map(|k| k.display_name().len())
        .max()
        .unwrap_or(0);
    let label_a = &orig.metrics_a.group_label;
    let label_b = &orig.metrics_b.group_label;
    let col = |s: &str| -> usize { s.len().max(9) + 2 };
    let wa = col(label_a);
    let wb = col(label_b);

    out.push_str(&format!(
        "Attribute: {} (n_{} = {}, n_{} = {})\n",
        orig.attribute_name, label_a, orig.metrics_a.n, label_b, orig.metrics_b.n
    ));
    out.push_str(&format!(
        "{:<metric_width$}  {:<6}{:<wa$}{:<wb$}{}\n",
        "Metric", "Model", label_a, label_b, "Delta"
    ));
    for kind in MetricKind::ALL {
        for (row_label, report) in [("orig", orig), ("fair", fair)] {
            let cmp = report.comparison(kind);
            let name = if row_label == "orig" { kind.display_name() } else { "" };
            out.push_str(&format!(
                "{:<metric_width$}  {:<6}{:<wa$}{:<wb$}{}\n",
                name,
                row_label,
                fmt_value(report.metrics_a.value(kind)),
                fmt_value(report.metrics_b.value(kind)),
                fmt_delta(cmp.delta, &cmp.stars),
            ));
        }
    }
}

/// Single-section plain-text table.
pub fn render_table(orig: &FairnessReport, fair: &FairnessReport) -> Result<String, ReportError> {
    let mut table = AuditTable::new();
    table.add_section(orig.clone(), fair.clone())?;
    Ok(table.render_text())
}

/// Single-section tab-separated table.
pub fn render_table_tsv(
    orig: &FairnessReport,
    fair: &FairnessReport,
) -> Result<String, ReportError> {
    let mut table = AuditTable::new();
    table.add_section(orig.clone(), fair.clone())?;
    Ok(table.render_tsv())
}

/// Single-policy table (one row per metric), for audits of one policy file.
pub fn render_single(report: &FairnessReport) -> String {
    let metric_width = MetricKind::ALL
        .iter()
        .map(|k| k.display_name().len())
        .max()
        .unwrap_or(0);
    let label_a = &report.metrics_a.group_label;
    let label_b = &report.metrics_b.group_label;
    let wa = label_a.len().max(9) + 2;
    let wb = label_b.len().max(9) + 2;
    let mut out = format!(
        "Attribute: {} (n_{} = {}, n_{} = {})\n",
        report.attribute_name, label_a, report.metrics_a.n, label_b, report.metrics_b.n
    );
    out.push_str(&format!(
        "{:<metric_width$}  {:<wa$}{:<wb$}{}\n",
        "Metric", label_a, label_b, "Delta"
    ));
    for kind in MetricKind::ALL {
        let cmp = report.comparison(kind);
        out.push_str(&format!(
            "{:<metric_width$}  {:<wa$}{:<wb$}{}\n",
            kind.display_name(),
            fmt_value(report.metrics_a.value(kind)),
            fmt_value(report.metrics_b.value(kind)),
            fmt_delta(cmp.delta, &cmp.stars),
        ));
    }
    out
}

/// Tab-separated variant of [`render_single`].
pub fn render_single_tsv(report: &FairnessReport) -> String {
    let mut out =
        String::from("attribute\tmetric\tgroup_a\tgroup_b\tvalue_a\tvalue_b\tdelta\n");
    for kind in MetricKind::ALL {
        let cmp = report.comparison(kind);
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            report.attribute_name,
            kind.display_name(),
            report.metrics_a.group_label,
            report.metrics_b.group_label,
            fmt_value(report.metrics_a.value(kind)),
            fmt_value(report.metrics_b.value(kind)),
            fmt_delta(cmp.delta, &cmp.stars),
        ));
    }
    out
}

/// Per-group, per-true-class histogram of predicted probabilities, plus the
/// thresholds to annotate.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramExport {
    /// `(lower, upper)` edges; bins are `[lo, hi)` except the last, `[lo, 1]`.
    pub bins: Vec<(f64, f64)>,
    /// `(group label, true class, per-bin counts)`, groups in A/B order,
    /// class false before true.
    pub counts: Vec<(String, bool, Vec<u64>)>,
    /// `("default", t)` plus one entry per group override.
    pub thresholds: Vec<(String, f64)>,
}

/// Bin the predicted probabilities per group and true class over equal-width
/// bins of `[0, 1]`. Excluded rows are omitted.
pub fn export_histograms(
    probs: &[f64],
    labels: &[bool],
    groups: &GroupAssignments,
    policy: &ThresholdPolicy,
    n_bins: usize,
) -> Result<HistogramExport, ReportError> {
    if n_bins == 0 {
        return Err(ReportError::InvalidBins);
    }
    if probs.is_empty() {
        return Err(ReportError::EmptyInput);
    }
    if probs.len() != labels.len() || probs.len() != groups.groups.len() {
        return Err(ReportError::LengthMismatch);
    }
    let edges: Vec<f64> = (0..=n_bins).map(|i| i as f64 / n_bins as f64).collect();
    let bins: Vec<(f64, f64)> = edges.windows(2).map(|w| (w[0], w[1])).collect();

    let bin_of = |p: f64| -> Result<usize, ReportError> {
        if !(0.0..=1.0).contains(&p) {
            return Err(ReportError::InvalidProbability(p));
        }
        // last bin is closed on the right
        Ok((edges.partition_point(|&e| e <= p) - 1).min(n_bins - 1))
    };

    let mut counts = Vec::new();
    for (group, label) in [(Group::A, false), (Group::A, true), (Group::B, false), (Group::B, true)]
    {
        let group_label = groups.label_of(group).expect("A/B only").to_string();
        let mut bin_counts = vec![0u64; n_bins];
        for i in 0..probs.len() {
            if groups.groups[i] == group && labels[i] == label {
                bin_counts[bin_of(probs[i])?] += 1;
            }
        }
        counts.push((group_label, label, bin_counts));
    }

    let mut thresholds = vec![("default".to_string(), policy.default_threshold)];
    for (label, t) in &policy.overrides {
        thresholds.push((label.clone(), *t));
    }

    Ok(HistogramExport {
        bins,
        counts,
        thresholds,
    })
}

impl HistogramExport {
    /// CSV with columns `bin_lo,bin_hi,group,true_class,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,group,true_class,count\n");
        for (group, class, bin_counts) in &self.counts {
            for (bin, count) in self.bins.iter().zip(bin_counts) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    bin.0,
                    bin.1,
                    group,
                    u8::from(*class),
                    count
                ));
            }
        }
        out
    }

    /// Sidecar CSV with columns `group,threshold`.
    pub fn thresholds_csv(&self) -> String {
        let mut out = String::from("group,threshold\n");
        for (group, t) in &self.thresholds {
            out.push_str(&format!("{group},{t}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn write_thresholds_csv(&self, path: impl AsRef<Path>) -> Result<(), ReportError> {
        let path = path.as_ref();
        fs::write(path, self.thresholds_csv()).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
