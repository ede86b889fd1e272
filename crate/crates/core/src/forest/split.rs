//! Best-split search for one node.
//!
//! All node statistics are integer occurrence counts; weighted tallies are a
//! single multiplication by the class weight. Scores, category orderings and
//! tie-breaks are written to be exactly symmetric under a global label flip
//! and invariant under a common scaling of the class weights, which the
//! model's symmetry and weight-cancellation contracts rely on.

use super::EncodedColumn;

/// Split rule candidate produced by the search.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum CandidateRule {
    /// `value <= threshold` routes left.
    Numeric { threshold: f64 },
    /// `category id in set` routes left; the set is canonical (it contains
    /// the smallest category id present at the node).
    Categorical { in_set: Vec<u32> },
}

#[derive(Debug, Clone)]
pub(crate) struct Candidate {
    pub rule: CandidateRule,
    /// Sum of the two children's weighted Gini impurities (lower is better).
    pub children_score: f64,
}

/// Weighted Gini impurity times node weight: `w - (p^2 + n^2)/w`.
/// Exactly symmetric in its arguments.
#[inline]
pub(crate) fn gini_score(pos_weight: f64, neg_weight: f64) -> f64 {
    let w = pos_weight + neg_weight;
    if w <= 0.0 {
        return 0.0;
    }
    w - (pos_weight * pos_weight + neg_weight * neg_weight) / w
}

#[inline]
fn side_score(pos_occ: u64, neg_occ: u64, w_pos: f64, w_neg: f64) -> f64 {
    gini_score(pos_occ as f64 * w_pos, neg_occ as f64 * w_neg)
}

/// Best split of `rows` (bootstrap occurrences, with repeats) on one feature.
/// Returns `None` when the feature admits no two-sided split.
pub(crate) fn best_split_for_feature(
    column: &EncodedColumn,
    rows: &[u32],
    labels: &[bool],
    w_pos: f64,
    w_neg: f64,
) -> Option<Candidate> {
    match column {
        EncodedColumn::Numeric(values) => best_numeric_split(values, rows, labels, w_pos, w_neg),
        EncodedColumn::Categorical { codes, vocab_len } => {
            best_categorical_split(codes, *vocab_len, rows, labels, w_pos, w_neg)
        }
    }
}

fn best_numeric_split(
    values: &[f64],
    rows: &[u32],
    labels: &[bool],
    w_pos: f64,
    w_neg: f64,
) -> Option<Candidate> {
    // Aggregate occurrence counts per distinct value, in ascending order.
    let mut pairs: Vec<(f64, bool)> = rows
        .iter()
        .map(|&r| (values[r as usize], labels[r as usize]))
        .collect();
    pairs.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));

    let mut distinct: Vec<(f64, u64, u64)> = Vec::new();
    for (v, label) in pairs {
        match distinct.last_mut() {
            Some((last, pos, neg)) if *last == v => {
                if label {
                    *pos += 1;
                } else {
                    *neg += 1;
                }
            }
            _ => distinct.push((v, label as u64, !label as u64)),
        }
    }
    if distinct.len() < 2 {
        return None;
    }

    let total_pos: u64 = distinct.iter().map(|(_, p, _)| p).sum();
    let total_neg: u64 = distinct.iter().map(|(_, _, n)| n).sum();

    let mut best: Option<Candidate> = None;
    let mut left_pos = 0u64;
    let mut left_neg = 0u64;
    for k in 0..distinct.len() - 1 {
        left_pos += distinct[k].1;
        left_neg += distinct[k].2;
        let score = side_score(left_pos, left_neg, w_pos, w_neg)
            + side_score(total_pos - left_pos, total_neg - left_neg, w_pos, w_neg);
        // strict improvement keeps the smallest qualifying threshold on ties
        if best.as_ref().is_none_or(|b| score < b.children_score) {
            let (a, b) = (distinct[k].0, distinct[k + 1].0);
            let mut threshold = (a + b) / 2.0;
            if threshold >= b {
                // midpoint rounded up to the right value; fall back so that
                // `a` still routes left and `b` right
                threshold = a;
            }
            best = Some(Candidate {
                rule: CandidateRule::Numeric { threshold },
                children_score: score,
            });
        }
    }
    best
}

// Positive-rate ordering of categories by exact integer cross-multiplication:
// rate(a) < rate(b) iff pos_a * neg_b < pos_b * neg_a.
fn rate_order(a: (u64, u64), b: (u64, u64)) -> std::cmp::Ordering {
    let left = a.0 as u128 * b.1 as u128;
    let right = b.0 as u128 * a.1 as u128;
    left.cmp(&right)
}

fn best_categorical_split(
    codes: &[u32],
    vocab_len: usize,
    rows: &[u32],
    labels: &[bool],
    w_pos: f64,
    w_neg: f64,
) -> Option<Candidate> {
    let mut stats: Vec<(u64, u64)> = vec![(0, 0); vocab_len];
    for &r in rows {
        let code = codes[r as usize] as usize;
        if labels[r as usize] {
            stats[code].0 += 1;
        } else {
            stats[code].1 += 1;
        }
    }
    let mut present: Vec<u32> = (0..vocab_len as u32)
        .filter(|&c| {
            let (p, n) = stats[c as usize];
            p + n > 0
        })
        .collect();
    if present.len() < 2 {
        return None;
    }
    // Order by positive rate; equal-rate categories form atomic blocks so the
    // candidate partitions are identical under a label flip.
    present.sort_unstable_by(|&a, &b| {
        rate_order(stats[a as usize], stats[b as usize]).then(a.cmp(&b))
    });
    let mut blocks: Vec<Vec<u32>> = Vec::new();
    for &cat in &present {
        match blocks.last_mut() {
            Some(block)
                if rate_order(stats[block[0] as usize], stats[cat as usize])
                    == std::cmp::Ordering::Equal =>
            {
                block.push(cat)
            }
            _ => blocks.push(vec![cat]),
        }
    }
    if blocks.len() < 2 {
        return None;
    }

    let total_pos: u64 = present.iter().map(|&c| stats[c as usize].0).sum();
    let total_neg: u64 = present.iter().map(|&c| stats[c as usize].1).sum();
    let min_cat = *present.iter().min().expect("non-empty");

    // Scan block-boundary prefixes; for binary labels one of them attains the
    // optimum over all two-set partitions.
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut prefix: Vec<u32> = Vec::new();
    let mut left_pos = 0u64;
    let mut left_neg = 0u64;
    for block in &blocks[..blocks.len() - 1] {
        for &cat in block {
            prefix.push(cat);
            left_pos += stats[cat as usize].0;
            left_neg += stats[cat as usize].1;
        }
        let score = side_score(left_pos, left_neg, w_pos, w_neg)
            + side_score(total_pos - left_pos, total_neg - left_neg, w_pos, w_neg);
        // canonicalize: the stored set is the side holding the smallest
        // present category, so rules don't depend on scan direction
        let canonical = |side: &[u32]| -> Vec<u32> {
            let mut side = side.to_vec();
            side.sort_unstable();
            side
        };
        let in_set = if prefix.contains(&min_cat) {
            canonical(&prefix)
        } else {
            let complement: Vec<u32> = present
                .iter()
                .copied()
                .filter(|c| !prefix.contains(c))
                .collect();
            canonical(&complement)
        };
        let better = match &best {
            None => true,
            Some((s, set)) => score < *s || (score == *s && in_set < *set),
        };
        if better {
            best = Some((score, in_set));
        }
    }
    best.map(|(children_score, in_set)| Candidate {
        rule: CandidateRule::Categorical { in_set },
        children_score,
    })
}
