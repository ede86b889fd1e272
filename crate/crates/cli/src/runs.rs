//! Subcommand implementations: synth, train, fairfix, audit, pipeline.

use std::fs;
use std::path::Path;

use serde::Serialize;

use fairaudit::data::{assign_groups, Dataset, FeatureSchema, GroupAssignments, LabeledSplit};
use fairaudit::fairness::{build_report, f_score, FairnessReport};
use fairaudit::forest::{self, ForestModel};
use fairaudit::postprocess::{apply_policy, equalize_opportunity, ThresholdPolicy};
use fairaudit::preprocess;
use fairaudit::report::{export_histograms, render_single, render_single_tsv, AuditTable};

use crate::config::{RunConfig, TuneOn};
use crate::CliError;

fn data_err(stage: &str) -> impl Fn(Box<dyn std::error::Error>) -> CliError + '_ {
    move |e| CliError::Data(format!("stage {stage}: {e}"))
}

fn runtime_err(stage: &str) -> impl Fn(Box<dyn std::error::Error>) -> CliError + '_ {
    move |e| CliError::Runtime(format!("stage {stage}: {e}"))
}

fn write_file(path: &Path, contents: &str, stage: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Runtime(format!("stage {stage}: writing {}: {e}", path.display())))
}

/// Generate the configured synthetic population and write the data CSV plus
/// its schema file.
pub fn cmd_synth(cfg: &RunConfig) -> Result<(), CliError> {
    let spec = cfg.require_synth()?;
    let data = fairaudit::synth::generate(spec)
        .map_err(|e| CliError::Runtime(format!("stage synth: {e}")))?;
    for path in [&cfg.data_csv, &cfg.data_schema] {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| {
                    CliError::Runtime(format!("stage synth: creating {}: {e}", parent.display()))
                })?;
            }
        }
    }
    data.write_csv(&cfg.data_csv)
        .map_err(|e| runtime_err("synth")(Box::new(e)))?;
    data.schema()
        .write_file(&cfg.data_schema)
        .map_err(|e| runtime_err("synth")(Box::new(e)))?;

    let group_idx = data.schema().column_index("group").expect("synth schema has a group column");
    let mut counts: std::collections::BTreeMap<&str, usize> = Default::default();
    for row in data.rows() {
        if let Some(tok) = row[group_idx].as_token() {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let summary: Vec<String> = counts.iter().map(|(t, n)| format!("{t}: {n}")).collect();
    println!(
        "[synth] wrote {} rows to {} ({})",
        data.n_rows(),
        cfg.data_csv.display(),
        summary.join(", ")
    );
    Ok(())
}

/// Load the configured data and run the cleaning pipeline.
pub fn prepare(cfg: &RunConfig) -> Result<LabeledSplit, CliError> {
    cfg.require_data_files()?;
    let schema = FeatureSchema::parse_file(&cfg.data_schema)
        .map_err(|e| data_err("load-schema")(Box::new(e)))?;
    let raw = Dataset::load_csv(&cfg.data_csv, &schema)
        .map_err(|e| data_err("load-csv")(Box::new(e)))?;
    preprocess::run_pipeline(&raw, &cfg.preprocess).map_err(|e| data_err("preprocess")(Box::new(e)))
}

fn train_model(cfg: &RunConfig, split: &LabeledSplit) -> Result<ForestModel, CliError> {
    forest::train(&split.train, &cfg.train).map_err(|e| match e {
        forest::ForestError::BadConfig(_) => CliError::Config(format!("stage train: {e}")),
        forest::ForestError::EmptyDataset
        | forest::ForestError::SingleClass
        | forest::ForestError::NoFeatures
        | forest::ForestError::MissingNumeric { .. }
        | forest::ForestError::SchemaMismatch(_) => CliError::Data(format!("stage train: {e}")),
        other => CliError::Runtime(format!("stage train: {other}")),
    })
}

/// Preprocess, train, and persist the model.
pub fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let split = prepare(cfg)?;
    let model = train_model(cfg, &split)?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("stage train: creating out dir: {e}")))?;
    let model_path = cfg.out_dir.join("model.json");
    model
        .save(&model_path)
        .map_err(|e| runtime_err("train")(Box::new(e)))?;
    println!(
        "[train] {} trees on {} rows, oob error {:.4}; model at {}",
        model.n_trees(),
        split.train.n_rows(),
        model.oob_error(),
        model_path.display()
    );
    Ok(())
}

struct TunedAttribute {
    groups_eval: GroupAssignments,
    policy_fair: ThresholdPolicy,
}

fn tune_attribute(
    cfg: &RunConfig,
    spec: &fairaudit::data::GroupSpec,
    split: &LabeledSplit,
    probs_eval: &[f64],
    probs_train: &[f64],
) -> Result<TunedAttribute, CliError> {
    let groups_eval =
        assign_groups(&split.test, spec).map_err(|e| data_err("assign-groups")(Box::new(e)))?;
    let (tune_probs, tune_labels, tune_groups) = match cfg.tune_on {
        TuneOn::Test => (
            probs_eval,
            split.test.labels().map_err(|e| data_err("labels")(Box::new(e)))?,
            groups_eval.clone(),
        ),
        TuneOn::Train => (
            probs_train,
            split.train.labels().map_err(|e| data_err("labels")(Box::new(e)))?,
            assign_groups(&split.train, spec).map_err(|e| data_err("assign-groups")(Box::new(e)))?,
        ),
    };
    let policy_fair = equalize_opportunity(tune_probs, &tune_labels, &tune_groups, cfg.grid_step)
        .map_err(|e| data_err("threshold-search")(Box::new(e)))?;
    Ok(TunedAttribute {
        groups_eval,
        policy_fair,
    })
}

#[derive(Serialize)]
struct OverallMetrics {
    n_test: usize,
    accuracy: f64,
    f_score: f64,
    positive_label_fraction: f64,
    oob_error: f64,
}

#[derive(Serialize)]
struct AttributeMetrics {
    attribute: String,
    policy_orig: ThresholdPolicy,
    policy_fair: ThresholdPolicy,
    orig: FairnessReport,
    fair: FairnessReport,
}

#[derive(Serialize)]
struct MetricsFile {
    seed: u64,
    overall: OverallMetrics,
    attributes: Vec<AttributeMetrics>,
}

fn overall_metrics(
    labels: &[bool],
    probs: &[f64],
    threshold: f64,
    oob: f64,
) -> Result<OverallMetrics, CliError> {
    let preds: Vec<bool> = probs.iter().map(|p| *p >= threshold).collect();
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    let positives = labels.iter().filter(|l| **l).count();
    let f1 = f_score(labels, &preds).map_err(|e| runtime_err("metrics")(Box::new(e)))?;
    Ok(OverallMetrics {
        n_test: labels.len(),
        accuracy: correct as f64 / labels.len() as f64,
        f_score: f1,
        positive_label_fraction: positives as f64 / labels.len() as f64,
        oob_error: oob,
    })
}

/// Full run: preprocess, train, audit at 0.5, equalize opportunity per
/// attribute, re-audit, and write every artifact.
pub fn cmd_pipeline(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.require_groups()?;
    let split = prepare(cfg)?;
    println!(
        "[pipeline] train rows: {}, test rows: {}",
        split.train.n_rows(),
        split.test.n_rows()
    );

    let model = train_model(cfg, &split)?;
    println!(
        "[pipeline] forest: {} trees, oob error {:.4}",
        model.n_trees(),
        model.oob_error()
    );

    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("stage pipeline: creating out dir: {e}")))?;
    model
        .save(cfg.out_dir.join("model.json"))
        .map_err(|e| runtime_err("save-model")(Box::new(e)))?;

    let probs_eval = model
        .predict_proba_batch(&split.test)
        .map_err(|e| runtime_err("predict")(Box::new(e)))?;
    let probs_train = model
        .predict_proba_batch(&split.train)
        .map_err(|e| runtime_err("predict")(Box::new(e)))?;
    let labels_eval = split
        .test
        .labels()
        .map_err(|e| data_err("labels")(Box::new(e)))?;

    let policy_orig = ThresholdPolicy::default();
    policy_orig
        .write_file(cfg.out_dir.join("policy_orig.policy"))
        .map_err(|e| runtime_err("save-policy")(Box::new(e)))?;

    let overall = overall_metrics(
        &labels_eval,
        &probs_eval,
        policy_orig.default_threshold,
        model.oob_error(),
    )?;

    let mut attributes = Vec::new();
    for spec in &cfg.groups {
        let tuned = tune_attribute(cfg, spec, &split, &probs_eval, &probs_train)?;
        let attr = &spec.attribute_name;
        tuned
            .policy_fair
            .write_file(cfg.out_dir.join(format!("policy_fair_{attr}.policy")))
            .map_err(|e| runtime_err("save-policy")(Box::new(e)))?;

        let preds_orig = apply_policy(&probs_eval, &tuned.groups_eval, &policy_orig)
            .map_err(|e| runtime_err("apply-policy")(Box::new(e)))?;
        let preds_fair = apply_policy(&probs_eval, &tuned.groups_eval, &tuned.policy_fair)
            .map_err(|e| runtime_err("apply-policy")(Box::new(e)))?;
        let orig = build_report(&labels_eval, &preds_orig, &tuned.groups_eval)
            .map_err(|e| data_err("audit")(Box::new(e)))?;
        let fair = build_report(&labels_eval, &preds_fair, &tuned.groups_eval)
            .map_err(|e| data_err("audit")(Box::new(e)))?;

        let mut table = AuditTable::new();
        table
            .add_section(orig.clone(), fair.clone())
            .map_err(|e| runtime_err("render")(Box::new(e)))?;
        write_file(
            &cfg.out_dir.join(format!("audit_{attr}.txt")),
            &table.render_text(),
            "render",
        )?;
        write_file(
            &cfg.out_dir.join(format!("audit_{attr}.tsv")),
            &table.render_tsv(),
            "render",
        )?;

        let hist = export_histograms(
            &probs_eval,
            &labels_eval,
            &tuned.groups_eval,
            &tuned.policy_fair,
            50,
        )
        .map_err(|e| runtime_err("histograms")(Box::new(e)))?;
        hist.write_csv(cfg.out_dir.join(format!("hist_{attr}.csv")))
            .map_err(|e| runtime_err("histograms")(Box::new(e)))?;
        hist.write_thresholds_csv(cfg.out_dir.join(format!("hist_{attr}_thresholds.csv")))
            .map_err(|e| runtime_err("histograms")(Box::new(e)))?;

        let fmt_gap = |r: &FairnessReport| {
            let cmp = &r.recall;
            match cmp.delta {
                Some(d) => format!("{d:+.3}{}", cmp.stars),
                None => "undefined".into(),
            }
        };
        println!(
            "[pipeline] attribute '{attr}': recall delta orig {} -> fair {} (thresholds: {} {}, {} {})",
            fmt_gap(&orig),
            fmt_gap(&fair),
            spec.group_a_label,
            tuned.policy_fair.overrides[&spec.group_a_label],
            spec.group_b_label,
            tuned.policy_fair.overrides[&spec.group_b_label],
        );

        attributes.push(AttributeMetrics {
            attribute: attr.clone(),
            policy_orig: policy_orig.clone(),
            policy_fair: tuned.policy_fair,
            orig,
            fair,
        });
    }

    let metrics = MetricsFile {
        seed: cfg.seed,
        overall,
        attributes,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_file(&cfg.out_dir.join("metrics.json"), &json, "metrics")?;
    println!("[pipeline] artifacts written to {}", cfg.out_dir.display());
    Ok(())
}

/// Tune fair policies for every configured attribute against a saved model.
pub fn cmd_fairfix(cfg: &RunConfig, model_path: &Path) -> Result<(), CliError> {
    cfg.require_groups()?;
    let model = ForestModel::load(model_path).map_err(|e| data_err("load-model")(Box::new(e)))?;
    let split = prepare(cfg)?;
    let probs_eval = model
        .predict_proba_batch(&split.test)
        .map_err(|e| runtime_err("predict")(Box::new(e)))?;
    let probs_train = model
        .predict_proba_batch(&split.train)
        .map_err(|e| runtime_err("predict")(Box::new(e)))?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("stage fairfix: creating out dir: {e}")))?;
    for spec in &cfg.groups {
        let tuned = tune_attribute(cfg, spec, &split, &probs_eval, &probs_train)?;
        let path = cfg
            .out_dir
            .join(format!("policy_fair_{}.policy", spec.attribute_name));
        tuned
            .policy_fair
            .write_file(&path)
            .map_err(|e| runtime_err("save-policy")(Box::new(e)))?;
        println!(
            "[fairfix] attribute '{}': policy at {}",
            spec.attribute_name,
            path.display()
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct AuditAttribute {
    attribute: String,
    report: FairnessReport,
}

#[derive(Serialize)]
struct AuditMetricsFile {
    policy: ThresholdPolicy,
    overall: OverallMetrics,
    attributes: Vec<AuditAttribute>,
}

/// Audit a saved model under a saved policy, without retraining or
/// re-tuning.
pub fn cmd_audit(cfg: &RunConfig, model_path: &Path, policy_path: &Path) -> Result<(), CliError> {
    cfg.require_groups()?;
    let model = ForestModel::load(model_path).map_err(|e| data_err("load-model")(Box::new(e)))?;
    let policy =
        ThresholdPolicy::parse_file(policy_path).map_err(|e| data_err("load-policy")(Box::new(e)))?;
    let split = prepare(cfg)?;
    let probs = model
        .predict_proba_batch(&split.test)
        .map_err(|e| runtime_err("predict")(Box::new(e)))?;
    let labels = split
        .test
        .labels()
        .map_err(|e| data_err("labels")(Box::new(e)))?;
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| CliError::Runtime(format!("stage audit: creating out dir: {e}")))?;

    let overall = overall_metrics(&labels, &probs, policy.default_threshold, model.oob_error())?;
    let mut attributes = Vec::new();
    for spec in &cfg.groups {
        let groups =
            assign_groups(&split.test, spec).map_err(|e| data_err("assign-groups")(Box::new(e)))?;
        let preds = apply_policy(&probs, &groups, &policy)
            .map_err(|e| runtime_err("apply-policy")(Box::new(e)))?;
        let report =
            build_report(&labels, &preds, &groups).map_err(|e| data_err("audit")(Box::new(e)))?;
        let attr = &spec.attribute_name;
        write_file(
            &cfg.out_dir.join(format!("audit_{attr}.txt")),
            &render_single(&report),
            "render",
        )?;
        write_file(
            &cfg.out_dir.join(format!("audit_{attr}.tsv")),
            &render_single_tsv(&report),
            "render",
        )?;
        println!("[audit] attribute '{attr}' written");
        attributes.push(AuditAttribute {
            attribute: attr.clone(),
            report,
        });
    }
    let metrics = AuditMetricsFile {
        policy,
        overall,
        attributes,
    };
    let json = serde_json::to_string_pretty(&metrics).expect("metrics serialize");
    write_file(&cfg.out_dir.join("metrics.json"), &json, "metrics")?;
    Ok(())
}
