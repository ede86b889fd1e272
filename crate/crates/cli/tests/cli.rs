//! Black-box tests of the `fairaudit` binary: exit codes, artifact layout,
//! determinism, and audit/pipeline consistency.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairaudit"))
}

fn small_config(dir: &Path) -> PathBuf {
    let out = dir.join("out");
    let text = format!(
        "\
seed = 7
out.dir = {out}
data.csv = {out}/data.csv
data.schema = {out}/data.schema
train.n_trees = 40
group.group.source = group
group.group.a = group_a
group.group.b = group_b
synth.rows = 600
synth.numeric = 4
synth.categorical = 2
synth.separability = 1.0
synth.shift = 0.6
synth.missing_rate = 0.05
synth.semesters = 4
synth.groups = group_a:0.35:0.5, group_b:0.65:0.75
",
        out = out.display()
    );
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path
}

fn run_ok(cmd: &mut Command) -> Output {
    let output = cmd.output().expect("binary runs");
    assert!(
        output.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn synth_then_pipeline_produces_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    let out = run_ok(bin().args(["pipeline", "--config"]).arg(&config));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("artifacts written"), "{stdout}");

    let out_dir = dir.path().join("out");
    for name in [
        "data.csv",
        "data.schema",
        "model.json",
        "policy_orig.policy",
        "policy_fair_group.policy",
        "audit_group.txt",
        "audit_group.tsv",
        "hist_group.csv",
        "hist_group_thresholds.csv",
        "metrics.json",
    ] {
        assert!(out_dir.join(name).is_file(), "missing artifact {name}");
    }

    // summary row count matches the CSV line count minus header
    let csv = fs::read_to_string(out_dir.join("data.csv")).unwrap();
    assert_eq!(csv.lines().count() - 1, 600);

    // the machine-readable metrics carry all table numbers at full precision
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["seed"], 7);
    assert!(metrics["attributes"][0]["orig"]["recall"]["delta"].is_f64());
    assert!(metrics["attributes"][0]["fair"]["precision"]["p_value"].is_f64());
    assert!(metrics["overall"]["oob_error"].is_f64());
}

#[test]
fn same_seed_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));

    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_ok(bin().args(["pipeline", "--config"]).arg(&config).arg("--out").arg(&out_a));
    run_ok(bin().args(["pipeline", "--config"]).arg(&config).arg("--out").arg(&out_b));
    for entry in fs::read_dir(&out_a).unwrap() {
        let name = entry.unwrap().file_name();
        let a = fs::read(out_a.join(&name)).unwrap();
        let b = fs::read(out_b.join(&name)).unwrap();
        assert_eq!(a, b, "artifact {name:?} differs between identical runs");
    }
}

#[test]
fn synth_same_seed_same_bytes_different_seed_differs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    let first = fs::read(dir.path().join("out/data.csv")).unwrap();
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    let second = fs::read(dir.path().join("out/data.csv")).unwrap();
    assert_eq!(first, second);
    run_ok(bin().args(["synth", "--config"]).arg(&config).args(["--seed", "8"]));
    let third = fs::read(dir.path().join("out/data.csv")).unwrap();
    assert_ne!(first, third);
}

#[test]
fn missing_data_path_is_a_config_error_with_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    // no synth step: data.csv does not exist
    let output = bin()
        .args(["pipeline", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("config error"), "{stderr}");
    assert!(
        !dir.path().join("out").join("metrics.json").exists(),
        "partial outputs written on config error"
    );
    assert!(!dir.path().join("out").join("model.json").exists());
}

#[test]
fn bad_config_key_and_zero_rows_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let mut text = fs::read_to_string(&config).unwrap();
    text.push_str("mystery.knob = 1\n");
    fs::write(&config, &text).unwrap();
    let output = bin().args(["synth", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(1));

    let config2 = small_config(dir.path());
    let output = bin()
        .args(["synth", "--config"])
        .arg(&config2)
        .args(["--rows", "0"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
}

#[test]
fn malformed_csv_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    // corrupt one numeric cell
    let csv_path = dir.path().join("out/data.csv");
    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines: Vec<String> = csv.lines().map(str::to_string).collect();
    let cols: Vec<&str> = lines[0].split(',').collect();
    let score_col = cols.iter().position(|c| *c == "score_01").unwrap();
    let mut fields: Vec<&str> = lines[3].split(',').collect();
    fields[score_col] = "not-a-number";
    lines[3] = fields.join(",");
    fs::write(&csv_path, lines.join("\n") + "\n").unwrap();

    let output = bin().args(["pipeline", "--config"]).arg(&config).output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("data error"), "{stderr}");
    assert!(stderr.contains("row 3"), "{stderr}");
}

#[test]
fn audit_of_orig_policy_reproduces_pipeline_orig_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    run_ok(bin().args(["pipeline", "--config"]).arg(&config));

    let out = dir.path().join("out");
    let audit_out = dir.path().join("audit");
    run_ok(
        bin()
            .args(["audit", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(out.join("model.json"))
            .arg("--policy")
            .arg(out.join("policy_orig.policy"))
            .arg("--out")
            .arg(&audit_out),
    );
    let pipeline: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    let audit: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(audit_out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(
        pipeline["attributes"][0]["orig"],
        audit["attributes"][0]["report"]
    );

    // audit twice -> identical output
    let audit2 = dir.path().join("audit2");
    run_ok(
        bin()
            .args(["audit", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(out.join("model.json"))
            .arg("--policy")
            .arg(out.join("policy_orig.policy"))
            .arg("--out")
            .arg(&audit2),
    );
    assert_eq!(
        fs::read(audit_out.join("metrics.json")).unwrap(),
        fs::read(audit2.join("metrics.json")).unwrap()
    );
}

#[test]
fn corrupted_model_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    let model = dir.path().join("broken-model.json");
    fs::write(&model, "{\"format\":\"fairaudit-forest\",\"version\":99}").unwrap();
    let output = bin()
        .args(["audit", "--config"])
        .arg(&config)
        .arg("--model")
        .arg(&model)
        .arg("--policy")
        .arg(&model)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn single_worker_thread_reproduces_default_run() {
    // per-tree RNG streams make results independent of execution order
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    let out_par = dir.path().join("par");
    let out_seq = dir.path().join("seq");
    run_ok(bin().args(["pipeline", "--config"]).arg(&config).arg("--out").arg(&out_par));
    run_ok(
        bin()
            .args(["pipeline", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out_seq)
            .env("FAIRAUDIT_THREADS", "1"),
    );
    for name in ["model.json", "metrics.json", "audit_group.txt"] {
        assert_eq!(
            fs::read(out_par.join(name)).unwrap(),
            fs::read(out_seq.join(name)).unwrap(),
            "{name} depends on worker count"
        );
    }
}

#[test]
fn train_then_fairfix_match_pipeline_policies() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    run_ok(bin().args(["synth", "--config"]).arg(&config));
    run_ok(bin().args(["pipeline", "--config"]).arg(&config));

    let out = dir.path().join("out");
    let fix_out = dir.path().join("fix");
    run_ok(
        bin()
            .args(["fairfix", "--config"])
            .arg(&config)
            .arg("--model")
            .arg(out.join("model.json"))
            .arg("--out")
            .arg(&fix_out),
    );
    assert_eq!(
        fs::read(out.join("policy_fair_group.policy")).unwrap(),
        fs::read(fix_out.join("policy_fair_group.policy")).unwrap()
    );
}
