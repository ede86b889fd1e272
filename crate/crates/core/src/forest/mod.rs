//! From-scratch random forest classifier with inverse-label-proportion
//! instance weighting and out-of-bag error.
//!
//! Design notes that tests rely on:
//!
//! * RNG is ChaCha8 (`rand_chacha`), a fixed portable generator. One master
//!   seed; tree `t` draws from stream `t`, so per-tree work is independent of
//!   execution order and training parallelizes without changing results.
//! * Instance weighting is weighted bootstrap sampling (probability
//!   proportional to weight) plus weighted Gini and leaf tallies. Positive
//!   rows weigh `1 / p_pos`, negative rows `1 / p_neg`, with `p_pos`/`p_neg`
//!   the training label proportions.
//! * Tree votes break ties toward the positive class; probabilities are the
//!   fraction of trees voting positive, so they sit on a `k / n_trees`
//!   lattice.
//! * Unseen category tokens (and missing cells seen at prediction time)
//!   route to the complement branch of a membership split.
//! * Feature columns are the categorical, protected-source and numeric
//!   schema columns except the derived label; id, semester and raw grade
//!   columns never feed the model.

mod split;

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Cell, ColumnKind, DataError, Dataset, FeatureSchema, Row};
use split::{best_split_for_feature, gini_score, Candidate, CandidateRule};

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("training data is empty")]
    EmptyDataset,
    #[error("training data has only one label class")]
    SingleClass,
    #[error("no feature columns in schema")]
    NoFeatures,
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("row {row}, column '{column}': missing numeric value; run imputation first")]
    MissingNumeric { row: usize, column: String },
    #[error("row does not conform to the training schema: {0}")]
    SchemaMismatch(String),
    #[error("no rows had any out-of-bag tree")]
    NoOobRows,
    #[error("model file {path}: {reason}")]
    ModelFormat { path: String, reason: String },
    #[error("file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Training knobs. Defaults mirror a stock classification forest: 500 trees,
/// `mtry = floor(sqrt(#features))`, fully grown trees, bootstrap size `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub n_trees: usize,
    /// Features sampled per node; `None` means `floor(sqrt(#features))`.
    pub mtry: Option<usize>,
    /// Nodes with at most this many bootstrap occurrences become leaves.
    pub min_node_size: usize,
    /// `None` grows trees until pure.
    pub max_depth: Option<usize>,
    pub seed: u64,
    /// Inverse-label-proportion instance weighting.
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            n_trees: 500,
            mtry: None,
            min_node_size: 1,
            max_depth: None,
            seed: 0,
            class_weighting: true,
        }
    }
}

/// One feature column as the model sees it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FeatureInfo {
    Numeric { name: String },
    /// `vocab` is sorted; the empty string encodes a missing training cell.
    Categorical { name: String, vocab: Vec<String> },
}

impl FeatureInfo {
    pub fn name(&self) -> &str {
        match self {
            FeatureInfo::Numeric { name } => name,
            FeatureInfo::Categorical { name, .. } => name,
        }
    }
}

/// Flat tree node; children are indices into the tree's node vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        pos: f64,
        neg: f64,
    },
    NumericSplit {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    CategoricalSplit {
        feature: u32,
        in_set: Vec<u32>,
        left: u32,
        right: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Per-row tree vote tally.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VoteCounts {
    pub pos: u32,
    pub neg: u32,
    pub ties: u32,
}

impl VoteCounts {
    /// Vote fraction with ties counted toward the positive class.
    pub fn positive_fraction(&self, n_trees: usize) -> f64 {
        (self.pos + self.ties) as f64 / n_trees as f64
    }
}

/// A trained forest plus everything needed to reproduce and audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    config: TrainConfig,
    schema: FeatureSchema,
    features: Vec<FeatureInfo>,
    trees: Vec<Tree>,
    bootstrap: Vec<Vec<u32>>,
    instance_weights: Vec<f64>,
    oob_error: f64,
}

// Training-side encoded feature column.
pub(crate) enum EncodedColumn {
    Numeric(Vec<f64>),
    Categorical { codes: Vec<u32>, vocab_len: usize },
}

// One row as the trees see it. NaN in Num marks a missing numeric cell at
// prediction time; u32::MAX in Cat marks an unseen or missing token.
#[derive(Clone, Copy)]
enum RowValue {
    Num(f64),
    Cat(u32),
}

fn feature_column_indices(schema: &FeatureSchema) -> Vec<usize> {
    schema
        .columns()
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            matches!(
                c.kind,
                ColumnKind::Categorical | ColumnKind::ProtectedSource | ColumnKind::Numeric
            ) && c.name != schema.label_name()
        })
        .map(|(i, _)| i)
        .collect()
}

fn encode_training(
    data: &Dataset,
    col_indices: &[usize],
) -> Result<(Vec<FeatureInfo>, Vec<EncodedColumn>), ForestError> {
    let mut features = Vec::with_capacity(col_indices.len());
    let mut columns = Vec::with_capacity(col_indices.len());
    for &ci in col_indices {
        let col = &data.schema().columns()[ci];
        if col.kind == ColumnKind::Numeric {
            let mut values = Vec::with_capacity(data.n_rows());
            for (r, row) in data.rows().iter().enumerate() {
                match &row[ci] {
                    Cell::Number(v) => values.push(*v),
                    _ => {
                        return Err(ForestError::MissingNumeric {
                            row: r + 1,
                            column: col.name.clone(),
                        })
                    }
                }
            }
            features.push(FeatureInfo::Numeric {
                name: col.name.clone(),
            });
            columns.push(EncodedColumn::Numeric(values));
        } else {
            let mut tokens: BTreeSet<&str> = BTreeSet::new();
            for row in data.rows() {
                tokens.insert(row[ci].as_token().unwrap_or(""));
            }
            let vocab: Vec<String> = tokens.into_iter().map(str::to_string).collect();
            let codes: Vec<u32> = data
                .rows()
                .iter()
                .map(|row| {
                    let tok = row[ci].as_token().unwrap_or("");
                    vocab.binary_search_by(|v| v.as_str().cmp(tok)).expect("token in vocab") as u32
                })
                .collect();
            let vocab_len = vocab.len();
            features.push(FeatureInfo::Categorical {
                name: col.name.clone(),
                vocab,
            });
            columns.push(EncodedColumn::Categorical { codes, vocab_len });
        }
    }
    Ok((features, columns))
}

// Weighted sampling with replacement: inverse-CDF over the cumulative
// weights. One uniform draw per sample, so draws are invariant under a
// common scaling of all weights.
struct WeightedSampler {
    cum: Vec<f64>,
    total: f64,
}

impl WeightedSampler {
    fn new(weights: &[f64]) -> WeightedSampler {
        let mut cum = Vec::with_capacity(weights.len());
        let mut acc = 0.0;
        for &w in weights {
            acc += w;
            cum.push(acc);
        }
        WeightedSampler { total: acc, cum }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let u: f64 = rand::Rng::random(rng);
        let target = u * self.total;
        self.cum
            .partition_point(|&c| c <= target)
            .min(self.cum.len() - 1)
    }
}

struct TreeBuilder<'a> {
    columns: &'a [EncodedColumn],
    labels: &'a [bool],
    w_pos: f64,
    w_neg: f64,
    mtry: usize,
    min_node_size: usize,
    max_depth: Option<usize>,
    nodes: Vec<Node>,
}

impl TreeBuilder<'_> {
    fn grow(&mut self, rows: Vec<u32>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let pos_occ = rows.iter().filter(|&&r| self.labels[r as usize]).count() as u64;
        let neg_occ = rows.len() as u64 - pos_occ;

        let depth_reached = self.max_depth.is_some_and(|d| depth >= d);
        let stop = pos_occ == 0 || neg_occ == 0 || rows.len() <= self.min_node_size || depth_reached;
        if !stop {
            if let Some((feature, cand)) = self.search(&rows, rng) {
                let parent_score =
                    gini_score(pos_occ as f64 * self.w_pos, neg_occ as f64 * self.w_neg);
                // relative threshold keeps the accept decision invariant
                // under a common scaling of the class weights
                if parent_score - cand.children_score > parent_score * 1e-10 {
                    return self.split_node(feature, cand, rows, depth, rng);
                }
            }
        }
        self.nodes.push(Node::Leaf {
            pos: pos_occ as f64 * self.w_pos,
            neg: neg_occ as f64 * self.w_neg,
        });
        (self.nodes.len() - 1) as u32
    }

    fn search(&self, rows: &[u32], rng: &mut ChaCha8Rng) -> Option<(u32, Candidate)> {
        let sampled = rand::seq::index::sample(rng, self.columns.len(), self.mtry);
        let mut best: Option<(u32, Candidate)> = None;
        for f in sampled.iter() {
            if let Some(cand) =
                best_split_for_feature(&self.columns[f], rows, self.labels, self.w_pos, self.w_neg)
            {
                // strictly-better keeps the earliest sampled feature on ties
                if best
                    .as_ref()
                    .is_none_or(|(_, b)| cand.children_score < b.children_score)
                {
                    best = Some((f as u32, cand));
                }
            }
        }
        best
    }

    fn split_node(
        &mut self,
        feature: u32,
        cand: Candidate,
        rows: Vec<u32>,
        depth: usize,
        rng: &mut ChaCha8Rng,
    ) -> u32 {
        let goes_left = |r: u32| -> bool {
            match (&self.columns[feature as usize], &cand.rule) {
                (EncodedColumn::Numeric(values), CandidateRule::Numeric { threshold }) => {
                    values[r as usize] <= *threshold
                }
                (EncodedColumn::Categorical { codes, .. }, CandidateRule::Categorical { in_set }) => {
                    in_set.binary_search(&codes[r as usize]).is_ok()
                }
                _ => unreachable!("rule kind matches column kind"),
            }
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
            rows.into_iter().partition(|&r| goes_left(r));
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let idx = self.nodes.len();
        self.nodes.push(Node::Leaf { pos: 0.0, neg: 0.0 }); // placeholder
        let left = self.grow(left_rows, depth + 1, rng);
        let right = self.grow(right_rows, depth + 1, rng);
        self.nodes[idx] = match cand.rule {
            CandidateRule::Numeric { threshold } => Node::NumericSplit {
                feature,
                threshold,
                left,
                right,
            },
            CandidateRule::Categorical { in_set } => Node::CategoricalSplit {
                feature,
                in_set,
                left,
                right,
            },
        };
        idx as u32
    }
}

/// Train a forest. Deterministic given `(data, cfg)`.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<ForestModel, ForestError> {
    if data.n_rows() == 0 {
        return Err(ForestError::EmptyDataset);
    }
    if cfg.n_trees == 0 {
        return Err(ForestError::BadConfig("n_trees must be >= 1".into()));
    }
    if cfg.min_node_size == 0 {
        return Err(ForestError::BadConfig("min_node_size must be >= 1".into()));
    }
    let labels = data
        .labels()
        .map_err(|e| ForestError::SchemaMismatch(e.to_string()))?;
    let n = labels.len();
    let pos_count = labels.iter().filter(|l| **l).count();
    if pos_count == 0 || pos_count == n {
        return Err(ForestError::SingleClass);
    }

    let col_indices = feature_column_indices(data.schema());
    if col_indices.is_empty() {
        return Err(ForestError::NoFeatures);
    }
    let (features, columns) = encode_training(data, &col_indices)?;

    let mtry = match cfg.mtry {
        Some(m) => {
            if m == 0 || m > features.len() {
                return Err(ForestError::BadConfig(format!(
                    "mtry {m} outside 1..={}",
                    features.len()
                )));
            }
            m
        }
        None => ((features.len() as f64).sqrt().floor() as usize).max(1),
    };

    let (w_pos, w_neg) = if cfg.class_weighting {
        let p_pos = pos_count as f64 / n as f64;
        let p_neg = (n - pos_count) as f64 / n as f64;
        (1.0 / p_pos, 1.0 / p_neg)
    } else {
        (1.0, 1.0)
    };
    let instance_weights: Vec<f64> = labels
        .iter()
        .map(|&l| if l { w_pos } else { w_neg })
        .collect();
    let sampler = WeightedSampler::new(&instance_weights);

    let built: Vec<(Tree, Vec<u32>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let bootstrap: Vec<u32> = (0..n).map(|_| sampler.sample(&mut rng) as u32).collect();
            let mut builder = TreeBuilder {
                columns: &columns,
                labels: &labels,
                w_pos,
                w_neg,
                mtry,
                min_node_size: cfg.min_node_size,
                max_depth: cfg.max_depth,
                nodes: Vec::new(),
            };
            let root = builder.grow(bootstrap.clone(), 0, &mut rng);
            debug_assert_eq!(root, 0);
            (Tree { nodes: builder.nodes }, bootstrap)
        })
        .collect();

    let (trees, bootstrap): (Vec<Tree>, Vec<Vec<u32>>) = built.into_iter().unzip();

    let mut model = ForestModel {
        config: cfg.clone(),
        schema: data.schema().clone(),
        features,
        trees,
        bootstrap,
        instance_weights,
        oob_error: 0.0,
    };
    model.oob_error = compute_oob(&model, data)?;
    Ok(model)
}

fn walk(tree: &Tree, row: &[RowValue]) -> (f64, f64) {
    let mut idx = 0usize;
    loop {
        match &tree.nodes[idx] {
            Node::Leaf { pos, neg } => return (*pos, *neg),
            Node::NumericSplit {
                feature,
                threshold,
                left,
                right,
            } => {
                let RowValue::Num(v) = row[*feature as usize] else {
                    unreachable!("numeric split on numeric feature");
                };
                // NaN (missing at prediction time) routes right
                idx = if v <= *threshold { *left } else { *right } as usize;
            }
            Node::CategoricalSplit {
                feature,
                in_set,
                left,
                right,
            } => {
                let RowValue::Cat(code) = row[*feature as usize] else {
                    unreachable!("membership split on categorical feature");
                };
                idx = if in_set.binary_search(&code).is_ok() {
                    *left
                } else {
                    *right
                } as usize;
            }
        }
    }
}

impl ForestModel {
    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn features(&self) -> &[FeatureInfo] {
        &self.features
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Out-of-bag error recorded at training time.
    pub fn oob_error(&self) -> f64 {
        self.oob_error
    }

    /// Bootstrap row indices of one tree.
    pub fn bootstrap(&self, tree: usize) -> &[u32] {
        &self.bootstrap[tree]
    }

    fn encode_row(&self, row: &Row) -> Result<Vec<RowValue>, ForestError> {
        if row.len() != self.schema.columns().len() {
            return Err(ForestError::SchemaMismatch(format!(
                "row has {} cells, schema has {} columns",
                row.len(),
                self.schema.columns().len()
            )));
        }
        let mut values = Vec::with_capacity(self.features.len());
        for feature in &self.features {
            let ci = self
                .schema
                .column_index(feature.name())
                .expect("feature names come from the schema");
            let value = match (feature, &row[ci]) {
                (FeatureInfo::Numeric { .. }, Cell::Number(v)) => RowValue::Num(*v),
                (FeatureInfo::Numeric { .. }, Cell::Missing) => RowValue::Num(f64::NAN),
                (FeatureInfo::Categorical { vocab, .. }, cell @ (Cell::Category(_) | Cell::Missing)) => {
                    let tok = cell.as_token().unwrap_or("");
                    let code = vocab
                        .binary_search_by(|v| v.as_str().cmp(tok))
                        .map(|i| i as u32)
                        .unwrap_or(u32::MAX);
                    RowValue::Cat(code)
                }
                (feature, _) => {
                    return Err(ForestError::SchemaMismatch(format!(
                        "cell kind does not match feature '{}'",
                        feature.name()
                    )))
                }
            };
            values.push(value);
        }
        Ok(values)
    }

    /// Per-tree votes for one row.
    pub fn vote_counts(&self, row: &Row) -> Result<VoteCounts, ForestError> {
        let values = self.encode_row(row)?;
        Ok(self.vote_encoded(&values))
    }

    fn vote_encoded(&self, values: &[RowValue]) -> VoteCounts {
        let mut counts = VoteCounts {
            pos: 0,
            neg: 0,
            ties: 0,
        };
        for tree in &self.trees {
            let (pos, neg) = walk(tree, values);
            if pos > neg {
                counts.pos += 1;
            } else if pos < neg {
                counts.neg += 1;
            } else {
                counts.ties += 1;
            }
        }
        counts
    }

    /// Fraction of trees voting positive (ties vote positive); always on the
    /// `k / n_trees` lattice.
    pub fn predict_proba(&self, row: &Row) -> Result<f64, ForestError> {
        Ok(self.vote_counts(row)?.positive_fraction(self.trees.len()))
    }

    /// Element-wise [`Self::predict_proba`] over a dataset with the training
    /// schema; order preserved.
    pub fn predict_proba_batch(&self, data: &Dataset) -> Result<Vec<f64>, ForestError> {
        if data.schema() != &self.schema {
            return Err(ForestError::SchemaMismatch(
                "dataset schema differs from the training schema".into(),
            ));
        }
        let encoded: Vec<Vec<RowValue>> = data
            .rows()
            .iter()
            .map(|row| self.encode_row(row))
            .collect::<Result<_, _>>()?;
        Ok(encoded
            .par_iter()
            .map(|values| self.vote_encoded(values).positive_fraction(self.trees.len()))
            .collect())
    }

    /// Write the model as versioned JSON. Loading reproduces predictions
    /// bit-exactly.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForestError> {
        let path = path.as_ref();
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        let json = serde_json::to_string(&file).expect("model serialization cannot fail");
        fs::write(path, json).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<ForestModel, ForestError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ForestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let file: ModelFile = serde_json::from_str(&text).map_err(|e| ForestError::ModelFormat {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ForestError::ModelFormat {
                path: path.display().to_string(),
                reason: format!(
                    "unsupported format '{}' version {} (expected '{}' version {})",
                    file.format, file.version, MODEL_FORMAT, MODEL_VERSION
                ),
            });
        }
        Ok(file.model)
    }
}

const MODEL_FORMAT: &str = "fairaudit-forest";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: ForestModel,
}

/// Out-of-bag error: per row, majority vote over the trees whose bootstrap
/// excluded that row (ties positive); rows with no out-of-bag tree are
/// skipped.
pub fn compute_oob(model: &ForestModel, data: &Dataset) -> Result<f64, ForestError> {
    if data.schema() != model.schema() {
        return Err(ForestError::SchemaMismatch(
            "dataset schema differs from the training schema".into(),
        ));
    }
    let labels = data
        .labels()
        .map_err(|e| ForestError::SchemaMismatch(e.to_string()))?;
    let n = data.n_rows();
    let encoded: Vec<Vec<RowValue>> = data
        .rows()
        .iter()
        .map(|row| model.encode_row(row))
        .collect::<Result<_, _>>()?;

    let mut in_bag = vec![false; n];
    let mut pos_votes = vec![0u32; n];
    let mut total_votes = vec![0u32; n];
    for (tree, bootstrap) in model.trees.iter().zip(&model.bootstrap) {
        in_bag.iter_mut().for_each(|b| *b = false);
        for &r in bootstrap {
            in_bag[r as usize] = true;
        }
        for r in 0..n {
            if in_bag[r] {
                continue;
            }
            let (pos, neg) = walk(tree, &encoded[r]);
            if pos >= neg {
                pos_votes[r] += 1;
            }
            total_votes[r] += 1;
        }
    }

    let mut evaluated = 0u64;
    let mut wrong = 0u64;
    for r in 0..n {
        if total_votes[r] == 0 {
            continue;
        }
        evaluated += 1;
        let fraction = pos_votes[r] as f64 / total_votes[r] as f64;
        let pred = fraction >= 0.5;
        if pred != labels[r] {
            wrong += 1;
        }
    }
    if evaluated == 0 {
        return Err(ForestError::NoOobRows);
    }
    Ok(wrong as f64 / evaluated as f64)
}
