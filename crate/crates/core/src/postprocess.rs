//! Threshold-based classification and the equal-opportunity correction.
//!
//! The correction searches a threshold grid per group and picks the pair
//! that makes the two groups' recalls as close as the data allows, mirroring
//! the post-hoc group-specific-threshold intervention.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Group, GroupAssignments};
use crate::fairness::{build_report, FairnessError, FairnessReport};

#[derive(Debug, Error)]
pub enum PostprocessError {
    #[error("probability and group vectors have different lengths ({probs} vs {groups})")]
    LengthMismatch { probs: usize, groups: usize },
    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("grid step {0} must be positive and divide 1 evenly")]
    InvalidGridStep(f64),
    #[error("group '{0}' has no positive labels; recall is undefined")]
    NoPositiveLabels(String),
    #[error("policy file {path}: {reason}")]
    PolicyFormat { path: String, reason: String },
    #[error("file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Fairness(#[from] FairnessError),
}

/// Default classification threshold plus optional per-group overrides.
/// Classification uses `probability >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPolicy {
    pub default_threshold: f64,
    pub overrides: BTreeMap<String, f64>,
}

impl Default for ThresholdPolicy {
    fn default() -> ThresholdPolicy {
        ThresholdPolicy {
            default_threshold: 0.5,
            overrides: BTreeMap::new(),
        }
    }
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<(), PostprocessError> {
        for &t in std::iter::once(&self.default_threshold).chain(self.overrides.values()) {
            if !(0.0..=1.0).contains(&t) {
                return Err(PostprocessError::InvalidThreshold(t));
            }
        }
        Ok(())
    }

    /// Threshold for a group label; rows outside the audited groups get the
    /// default.
    pub fn threshold_for(&self, group_label: Option<&str>) -> f64 {
        group_label
            .and_then(|l| self.overrides.get(l).copied())
            .unwrap_or(self.default_threshold)
    }

    /// Text form: `default = <t>` then one `group.<label> = <t>` per override.
    pub fn render(&self) -> String {
        let mut out = format!("default = {}\n", self.default_threshold);
        for (label, t) in &self.overrides {
            out.push_str(&format!("group.{label} = {t}\n"));
        }
        out
    }

    pub fn parse(text: &str, path: &str) -> Result<ThresholdPolicy, PostprocessError> {
        let mut policy = ThresholdPolicy::default();
        let mut saw_default = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| PostprocessError::PolicyFormat {
                path: path.to_string(),
                reason: format!("line {}: expected 'key = value'", lineno + 1),
            })?;
            let key = key.trim();
            let value: f64 = value.trim().parse().map_err(|_| PostprocessError::PolicyFormat {
                path: path.to_string(),
                reason: format!("line {}: '{}' is not a number", lineno + 1, value.trim()),
            })?;
            if key == "default" {
                policy.default_threshold = value;
                saw_default = true;
            } else if let Some(label) = key.strip_prefix("group.") {
                policy.overrides.insert(label.to_string(), value);
            } else {
                return Err(PostprocessError::PolicyFormat {
                    path: path.to_string(),
                    reason: format!("line {}: unknown key '{key}'", lineno + 1),
                });
            }
        }
        if !saw_default {
            return Err(PostprocessError::PolicyFormat {
                path: path.to_string(),
                reason: "missing 'default =' line".into(),
            });
        }
        policy.validate()?;
        Ok(policy)
    }

    pub fn parse_file(path: impl AsRef<Path>) -> Result<ThresholdPolicy, PostprocessError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| PostprocessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        ThresholdPolicy::parse(&text, &path.display().to_string())
    }

    pub fn write_file(&self, path: impl AsRef<Path>) -> Result<(), PostprocessError> {
        let path = path.as_ref();
        fs::write(path, self.render()).map_err(|source| PostprocessError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}

/// Classify each row: positive iff its probability reaches its group's
/// threshold (override when present, default otherwise; excluded rows always
/// use the default).
pub fn apply_policy(
    probs: &[f64],
    groups: &GroupAssignments,
    policy: &ThresholdPolicy,
) -> Result<Vec<bool>, PostprocessError> {
    if probs.len() != groups.groups.len() {
        return Err(PostprocessError::LengthMismatch {
            probs: probs.len(),
            groups: groups.groups.len(),
        });
    }
    policy.validate()?;
    Ok(probs
        .iter()
        .zip(&groups.groups)
        .map(|(&p, &g)| p >= policy.threshold_for(groups.label_of(g)))
        .collect())
}

// Per-group per-threshold counts: true positives and correct predictions.
struct GroupCurve {
    positives: u64,
    true_pos: Vec<u64>,
    correct: Vec<u64>,
}

fn group_curve(probs: &[f64], labels: &[bool], member: &[bool], grid: &[f64]) -> GroupCurve {
    let positives = labels
        .iter()
        .zip(member)
        .filter(|(l, m)| **l && **m)
        .count() as u64;
    let mut true_pos = Vec::with_capacity(grid.len());
    let mut correct = Vec::with_capacity(grid.len());
    for &t in grid {
        let mut tp = 0u64;
        let mut ok = 0u64;
        for i in 0..probs.len() {
            if !member[i] {
                continue;
            }
            let pred = probs[i] >= t;
            if pred && labels[i] {
                tp += 1;
            }
            if pred == labels[i] {
                ok += 1;
            }
        }
        true_pos.push(tp);
        correct.push(ok);
    }
    GroupCurve {
        positives,
        true_pos,
        correct,
    }
}

/// Exhaustive grid search for per-group thresholds that equalize recall.
///
/// The grid is `{0, grid_step, ..., 1}` (so `1/grid_step` must be an
/// integer); every `(threshold_A, threshold_B)` pair is scored by
/// `|recall_A - recall_B|` with recalls computed as `tp as f64 / positives
/// as f64`. Ties break by (1) higher overall accuracy over the two groups,
/// (2) smaller `|t_A - 0.5| + |t_B - 0.5|`, (3) lexicographically smaller
/// pair. Returns a policy with both overrides set and a 0.5 default.
pub fn equalize_opportunity(
    probs: &[f64],
    labels: &[bool],
    groups: &GroupAssignments,
    grid_step: f64,
) -> Result<ThresholdPolicy, PostprocessError> {
    if probs.len() != groups.groups.len() || probs.len() != labels.len() {
        return Err(PostprocessError::LengthMismatch {
            probs: probs.len(),
            groups: groups.groups.len(),
        });
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(PostprocessError::InvalidGridStep(grid_step));
    }
    let n_steps = (1.0 / grid_step).round();
    if !(n_steps >= 1.0 && (n_steps * grid_step - 1.0).abs() < 1e-9) {
        return Err(PostprocessError::InvalidGridStep(grid_step));
    }
    let n_steps = n_steps as usize;
    let grid: Vec<f64> = (0..=n_steps).map(|i| i as f64 / n_steps as f64).collect();

    let mask_a = groups.mask(Group::A);
    let mask_b = groups.mask(Group::B);
    let curve_a = group_curve(probs, labels, &mask_a, &grid);
    let curve_b = group_curve(probs, labels, &mask_b, &grid);
    if curve_a.positives == 0 {
        return Err(PostprocessError::NoPositiveLabels(groups.label_a.clone()));
    }
    if curve_b.positives == 0 {
        return Err(PostprocessError::NoPositiveLabels(groups.label_b.clone()));
    }

    let mut best: Option<(f64, u64, f64, usize, usize)> = None;
    for i in 0..grid.len() {
        let recall_a = curve_a.true_pos[i] as f64 / curve_a.positives as f64;
        for j in 0..grid.len() {
            let recall_b = curve_b.true_pos[j] as f64 / curve_b.positives as f64;
            let gap = (recall_a - recall_b).abs();
            let acc = curve_a.correct[i] + curve_b.correct[j];
            let centrality = (grid[i] - 0.5).abs() + (grid[j] - 0.5).abs();
            let better = match &best {
                None => true,
                Some((g, a, c, _, _)) => {
                    // scan order is lexicographic, so strict improvement
                    // implements the final tie-break automatically
                    gap < *g || (gap == *g && (acc > *a || (acc == *a && centrality < *c)))
                }
            };
            if better {
                best = Some((gap, acc, centrality, i, j));
            }
        }
    }
    let (_, _, _, i, j) = best.expect("grid is never empty");
    let mut overrides = BTreeMap::new();
    overrides.insert(groups.label_a.clone(), grid[i]);
    overrides.insert(groups.label_b.clone(), grid[j]);
    Ok(ThresholdPolicy {
        default_threshold: 0.5,
        overrides,
    })
}

/// Audit the same predictions under two policies, side by side.
pub fn audit_pair(
    probs: &[f64],
    labels: &[bool],
    groups: &GroupAssignments,
    policy_orig: &ThresholdPolicy,
    policy_fair: &ThresholdPolicy,
) -> Result<(FairnessReport, FairnessReport), PostprocessError> {
    let preds_orig = apply_policy(probs, groups, policy_orig)?;
    let preds_fair = apply_policy(probs, groups, policy_fair)?;
    let orig = build_report(labels, &preds_orig, groups)?;
    let fair = build_report(labels, &preds_fair, groups)?;
    Ok((orig, fair))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn assignments(groups: Vec<Group>) -> GroupAssignments {
        GroupAssignments {
            attribute_name: "ethnicity".into(),
            label_a: "URM".into(),
            label_b: "non-URM".into(),
            groups,
        }
    }

    #[test]
    fn default_policy_is_global_half_threshold() {
        let probs = [0.0, 0.49, 0.5, 0.51, 1.0];
        let groups = assignments(vec![Group::A, Group::B, Group::Excluded, Group::A, Group::B]);
        let preds = apply_policy(&probs, &groups, &ThresholdPolicy::default()).unwrap();
        assert_eq!(preds, vec![false, false, true, true, true]);
    }

    #[test]
    fn probability_equal_to_threshold_is_positive() {
        let mut policy = ThresholdPolicy::default();
        policy.overrides.insert("URM".into(), 0.46);
        let groups = assignments(vec![Group::A]);
        let preds = apply_policy(&[0.46], &groups, &policy).unwrap();
        assert_eq!(preds, vec![true]);
    }

    #[test]
    fn group_specific_overrides_match_hand_classification() {
        let mut policy = ThresholdPolicy::default();
        policy.overrides.insert("URM".into(), 0.46);
        policy.overrides.insert("non-URM".into(), 0.59);
        let probs = [0.45, 0.46, 0.47, 0.58, 0.59, 0.60, 0.50, 0.50];
        let groups = assignments(vec![
            Group::A,
            Group::A,
            Group::A,
            Group::B,
            Group::B,
            Group::B,
            Group::B,
            Group::Excluded, // default 0.5 applies
        ]);
        let preds = apply_policy(&probs, &groups, &policy).unwrap();
        // hand-applied >= rule per group
        assert_eq!(
            preds,
            vec![false, true, true, false, true, true, false, true]
        );
    }

    #[test]
    fn invalid_threshold_rejected() {
        let mut policy = ThresholdPolicy::default();
        policy.overrides.insert("URM".into(), 1.5);
        let groups = assignments(vec![Group::A]);
        assert!(apply_policy(&[0.5], &groups, &policy).is_err());
    }

    #[test]
    fn policy_file_round_trip() {
        let mut policy = ThresholdPolicy::default();
        policy.overrides.insert("URM".into(), 0.46);
        policy.overrides.insert("non-URM".into(), 0.59);
        let parsed = ThresholdPolicy::parse(&policy.render(), "<mem>").unwrap();
        assert_eq!(parsed, policy);
    }

    #[test]
    fn policy_parse_rejects_garbage() {
        assert!(ThresholdPolicy::parse("default = x\n", "<mem>").is_err());
        assert!(ThresholdPolicy::parse("group.URM = 0.4\n", "<mem>").is_err());
        assert!(ThresholdPolicy::parse("default = 0.5\nwhat = 0.4\n", "<mem>").is_err());
    }

    // interleave two per-group (prob, label) sets into flat vectors
    fn two_group_fixture(
        a: &[(f64, bool)],
        b: &[(f64, bool)],
    ) -> (Vec<f64>, Vec<bool>, GroupAssignments) {
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for &(p, l) in a {
            probs.push(p);
            labels.push(l);
            groups.push(Group::A);
        }
        for &(p, l) in b {
            probs.push(p);
            labels.push(l);
            groups.push(Group::B);
        }
        (probs, labels, assignments(groups))
    }

    #[test]
    fn symmetric_groups_get_equal_thresholds() {
        let side = [
            (0.9, true),
            (0.7, true),
            (0.6, false),
            (0.4, true),
            (0.2, false),
        ];
        let (probs, labels, groups) = two_group_fixture(&side, &side);
        let policy = equalize_opportunity(&probs, &labels, &groups, 0.01).unwrap();
        let ta = policy.overrides["URM"];
        let tb = policy.overrides["non-URM"];
        assert_eq!(ta, tb);
        let preds = apply_policy(&probs, &groups, &policy).unwrap();
        let report = build_report(&labels, &preds, &groups).unwrap();
        assert_eq!(report.recall.delta, Some(0.0));
    }

    #[test]
    fn depressed_group_gets_lower_threshold() {
        // group A's scores sit 0.15 below group B's for the same labels
        let b: Vec<(f64, bool)> = vec![
            (0.95, true),
            (0.85, true),
            (0.75, true),
            (0.65, true),
            (0.6, false),
            (0.55, true),
            (0.45, false),
            (0.35, false),
            (0.25, false),
            (0.15, false),
        ];
        let a: Vec<(f64, bool)> = b.iter().map(|&(p, l)| (p - 0.15, l)).collect();
        let (probs, labels, groups) = two_group_fixture(&a, &b);
        let policy = equalize_opportunity(&probs, &labels, &groups, 0.01).unwrap();
        assert!(policy.overrides["URM"] < policy.overrides["non-URM"]);
    }

    #[test]
    fn no_positive_labels_is_an_error() {
        let (probs, labels, groups) =
            two_group_fixture(&[(0.5, false)], &[(0.5, true)]);
        let err = equalize_opportunity(&probs, &labels, &groups, 0.01).unwrap_err();
        assert!(matches!(err, PostprocessError::NoPositiveLabels(l) if l == "URM"));
    }

    // Independent brute force: rebuild recalls per pair from scratch with the
    // documented tie-break chain.
    fn brute_force(
        probs: &[f64],
        labels: &[bool],
        groups: &GroupAssignments,
        n_steps: usize,
    ) -> (f64, f64) {
        let grid: Vec<f64> = (0..=n_steps).map(|i| i as f64 / n_steps as f64).collect();
        let mut best: Option<(f64, u64, f64, usize, usize)> = None;
        for i in 0..grid.len() {
            for j in 0..grid.len() {
                let (mut tp_a, mut pos_a, mut ok_a) = (0u64, 0u64, 0u64);
                let (mut tp_b, mut pos_b, mut ok_b) = (0u64, 0u64, 0u64);
                for r in 0..probs.len() {
                    match groups.groups[r] {
                        Group::A => {
                            let pred = probs[r] >= grid[i];
                            if labels[r] {
                                pos_a += 1;
                                if pred {
                                    tp_a += 1;
                                }
                            }
                            if pred == labels[r] {
                                ok_a += 1;
                            }
                        }
                        Group::B => {
                            let pred = probs[r] >= grid[j];
                            if labels[r] {
                                pos_b += 1;
                                if pred {
                                    tp_b += 1;
                                }
                            }
                            if pred == labels[r] {
                                ok_b += 1;
                            }
                        }
                        Group::Excluded => {}
                    }
                }
                let gap = (tp_a as f64 / pos_a as f64 - tp_b as f64 / pos_b as f64).abs();
                let acc = ok_a + ok_b;
                let cent = (grid[i] - 0.5).abs() + (grid[j] - 0.5).abs();
                let better = match &best {
                    None => true,
                    Some((g, a, c, _, _)) => {
                        gap < *g || (gap == *g && (acc > *a || (acc == *a && cent < *c)))
                    }
                };
                if better {
                    best = Some((gap, acc, cent, i, j));
                }
            }
        }
        let (_, _, _, i, j) = best.unwrap();
        (grid[i], grid[j])
    }

    #[test]
    fn search_matches_brute_force_on_random_fixtures() {
        let mut rng = StdRng::seed_from_u64(7);
        let mut checked = 0;
        while checked < 15 {
            let na = rng.random_range(3..30);
            let nb = rng.random_range(3..30);
            // lattice probabilities so threshold boundaries actually land on data
            let mut side = |n: usize, rate: f64| -> Vec<(f64, bool)> {
                (0..n)
                    .map(|_| (rng.random_range(0..=20) as f64 / 20.0, rng.random_bool(rate)))
                    .collect()
            };
            let a = side(na, 0.5);
            let b = side(nb, 0.7);
            if !a.iter().any(|(_, l)| *l) || !b.iter().any(|(_, l)| *l) {
                continue;
            }
            let (probs, labels, groups) = two_group_fixture(&a, &b);
            let policy = equalize_opportunity(&probs, &labels, &groups, 0.01).unwrap();
            let (ta, tb) = brute_force(&probs, &labels, &groups, 100);
            assert_eq!(policy.overrides["URM"], ta);
            assert_eq!(policy.overrides["non-URM"], tb);
            checked += 1;
        }
    }

    #[test]
    fn monotonicity_of_recall_and_positive_rate_in_threshold() {
        let mut rng = StdRng::seed_from_u64(11);
        let probs: Vec<f64> = (0..60).map(|_| rng.random_range(0.0..=1.0)).collect();
        let labels: Vec<bool> = (0..60).map(|_| rng.random_bool(0.6)).collect();
        let groups = assignments(vec![Group::A; 60]);
        let mut prev_recall = f64::INFINITY;
        let mut prev_rate = f64::INFINITY;
        for i in 0..=100 {
            let mut policy = ThresholdPolicy::default();
            policy.overrides.insert("URM".into(), i as f64 / 100.0);
            let preds = apply_policy(&probs, &groups, &policy).unwrap();
            let mask = vec![true; 60];
            let c = crate::fairness::confusion(&labels, &preds, &mask).unwrap();
            let recall = crate::fairness::recall(&c).unwrap();
            let rate = crate::fairness::positive_rate(&c).unwrap();
            assert!(recall <= prev_recall);
            assert!(rate <= prev_rate);
            prev_recall = recall;
            prev_rate = rate;
        }
    }

    #[test]
    fn refining_the_grid_never_increases_the_gap() {
        let mut rng = StdRng::seed_from_u64(13);
        for _ in 0..10 {
            let a: Vec<(f64, bool)> = (0..20)
                .map(|_| (rng.random_range(0.0..=1.0), rng.random_bool(0.5)))
                .collect();
            let b: Vec<(f64, bool)> = (0..20)
                .map(|_| (rng.random_range(0.0..=1.0), rng.random_bool(0.7)))
                .collect();
            let (probs, labels, groups) = two_group_fixture(&a, &b);
            if !labels.iter().zip(&groups.groups).any(|(l, g)| *l && *g == Group::A)
                || !labels.iter().zip(&groups.groups).any(|(l, g)| *l && *g == Group::B)
            {
                continue;
            }
            let gap_at = |step: f64| {
                let policy = equalize_opportunity(&probs, &labels, &groups, step).unwrap();
                let preds = apply_policy(&probs, &groups, &policy).unwrap();
                let report = build_report(&labels, &preds, &groups).unwrap();
                report.recall.delta.unwrap().abs()
            };
            assert!(gap_at(0.005) <= gap_at(0.01) + 1e-15);
        }
    }

    #[test]
    fn audit_pair_identical_policies_identical_reports() {
        let (probs, labels, groups) = two_group_fixture(
            &[(0.8, true), (0.3, false), (0.6, true)],
            &[(0.7, true), (0.4, false), (0.9, true)],
        );
        let policy = ThresholdPolicy::default();
        let (orig, fair) = audit_pair(&probs, &labels, &groups, &policy, &policy).unwrap();
        assert_eq!(orig, fair);
    }

    #[test]
    fn corrected_gap_never_exceeds_original_on_the_tuning_set() {
        let mut rng = StdRng::seed_from_u64(17);
        for _ in 0..20 {
            let a: Vec<(f64, bool)> = (0..25)
                .map(|_| (rng.random_range(0.0..=1.0) * 0.8, rng.random_bool(0.5)))
                .collect();
            let b: Vec<(f64, bool)> = (0..25)
                .map(|_| (rng.random_range(0.0..=1.0), rng.random_bool(0.7)))
                .collect();
            let (probs, labels, groups) = two_group_fixture(&a, &b);
            let any_pos = |g: Group| {
                labels
                    .iter()
                    .zip(&groups.groups)
                    .any(|(l, gg)| *l && *gg == g)
            };
            if !any_pos(Group::A) || !any_pos(Group::B) {
                continue;
            }
            let fair_policy = equalize_opportunity(&probs, &labels, &groups, 0.01).unwrap();
            let (orig, fair) =
                audit_pair(&probs, &labels, &groups, &ThresholdPolicy::default(), &fair_policy)
                    .unwrap();
            assert!(
                fair.recall.delta.unwrap().abs() <= orig.recall.delta.unwrap().abs(),
                "optimizer contract violated"
            );
        }
    }
}
