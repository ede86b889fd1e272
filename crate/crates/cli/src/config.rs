//! Flat `key = value` run configuration with dotted sections.
//!
//! Full-line `#` comments and blank lines are ignored. Command-line flags
//! override file values before extraction, so one file can drive every
//! subcommand.

use std::collections::BTreeMap;
use std::path::PathBuf;

use fairaudit::data::{Group, GroupSpec};
use fairaudit::forest::TrainConfig;
use fairaudit::preprocess::PreprocessConfig;
use fairaudit::synth::{GroupShare, SynthSpec};

use crate::CliError;

/// Which rows the threshold search tunes on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TuneOn {
    /// Tune on the evaluation (test) rows, mirroring the audited setup.
    Test,
    /// Tune on training rows, keeping the test set untouched.
    Train,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data_csv: PathBuf,
    pub data_schema: PathBuf,
    pub grid_step: f64,
    pub tune_on: TuneOn,
    pub preprocess: PreprocessConfig,
    pub train: TrainConfig,
    pub groups: Vec<GroupSpec>,
    pub synth: Option<SynthSpec>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parse the raw key-value map. Duplicate keys are rejected.
pub fn parse_map(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| config_err(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if map.insert(key.clone(), value).is_some() {
            return Err(config_err(format!("duplicate key '{key}'")));
        }
    }
    Ok(map)
}

fn known_key(key: &str) -> bool {
    matches!(
        key,
        "seed"
            | "out.dir"
            | "data.csv"
            | "data.schema"
            | "grid_step"
            | "tune.on"
            | "preprocess.placeholder"
            | "preprocess.rare_min"
            | "train.n_trees"
            | "train.mtry"
            | "train.min_node_size"
            | "train.max_depth"
            | "train.class_weighting"
            | "synth.rows"
            | "synth.numeric"
            | "synth.categorical"
            | "synth.separability"
            | "synth.shift"
            | "synth.missing_rate"
            | "synth.semesters"
            | "synth.groups"
    ) || {
        let mut parts = key.splitn(3, '.');
        parts.next() == Some("group")
            && parts.next().is_some()
            && matches!(
                parts.next(),
                Some("source" | "label_a" | "label_b" | "a" | "b" | "excluded")
            )
    }
}

struct Extractor<'a> {
    map: &'a BTreeMap<String, String>,
}

impl Extractor<'_> {
    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(String::as_str)
    }

    fn required(&self, key: &str) -> Result<&str, CliError> {
        self.get(key)
            .ok_or_else(|| config_err(format!("missing required key '{key}'")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| config_err(format!("key '{key}': cannot parse '{v}'"))),
        }
    }

    fn parse_required<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.required(key)?;
        v.parse()
            .map_err(|_| config_err(format!("key '{key}': cannot parse '{v}'")))
    }
}

fn parse_groups(map: &BTreeMap<String, String>) -> Result<Vec<GroupSpec>, CliError> {
    let mut attrs: Vec<String> = Vec::new();
    for key in map.keys() {
        if let Some(rest) = key.strip_prefix("group.") {
            if let Some((attr, _)) = rest.rsplit_once('.') {
                if !attrs.iter().any(|a| a == attr) {
                    attrs.push(attr.to_string());
                }
            }
        }
    }
    let list = |attr: &str, field: &str| -> Vec<String> {
        map.get(&format!("group.{attr}.{field}"))
            .map(|v| {
                v.split(',')
                    .map(|t| t.trim().to_string())
                    .filter(|t| !t.is_empty())
                    .collect()
            })
            .unwrap_or_default()
    };
    let mut specs = Vec::new();
    for attr in attrs {
        let source = map
            .get(&format!("group.{attr}.source"))
            .ok_or_else(|| config_err(format!("group '{attr}': missing 'source'")))?
            .clone();
        let a_tokens = list(&attr, "a");
        let b_tokens = list(&attr, "b");
        let excluded = list(&attr, "excluded");
        if a_tokens.is_empty() || b_tokens.is_empty() {
            return Err(config_err(format!(
                "group '{attr}': both 'a' and 'b' token lists are required"
            )));
        }
        let label_a = map
            .get(&format!("group.{attr}.label_a"))
            .cloned()
            .unwrap_or_else(|| a_tokens[0].clone());
        let label_b = map
            .get(&format!("group.{attr}.label_b"))
            .cloned()
            .unwrap_or_else(|| b_tokens[0].clone());
        let mut mapping = BTreeMap::new();
        for (tokens, side) in [
            (&a_tokens, Group::A),
            (&b_tokens, Group::B),
            (&excluded, Group::Excluded),
        ] {
            for tok in tokens {
                if mapping.insert(tok.clone(), side).is_some() {
                    return Err(config_err(format!(
                        "group '{attr}': token '{tok}' listed twice"
                    )));
                }
            }
        }
        specs.push(GroupSpec {
            attribute_name: attr,
            source_column: source,
            group_a_label: label_a,
            group_b_label: label_b,
            mapping,
        });
    }
    Ok(specs)
}

fn parse_synth(map: &BTreeMap<String, String>, seed: u64) -> Result<Option<SynthSpec>, CliError> {
    if !map.keys().any(|k| k.starts_with("synth.")) {
        return Ok(None);
    }
    let x = Extractor { map };
    let groups_raw = x.required("synth.groups")?;
    let mut groups = Vec::new();
    for part in groups_raw.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let fields: Vec<&str> = part.split(':').collect();
        if fields.len() != 3 {
            return Err(config_err(format!(
                "synth.groups entry '{part}': expected token:share:base_rate"
            )));
        }
        let share: f64 = fields[1]
            .trim()
            .parse()
            .map_err(|_| config_err(format!("synth.groups: bad share in '{part}'")))?;
        let base_rate: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|_| config_err(format!("synth.groups: bad base rate in '{part}'")))?;
        groups.push(GroupShare {
            token: fields[0].trim().to_string(),
            share,
            base_rate,
        });
    }
    let spec = SynthSpec {
        seed,
        groups,
        n_rows: x.parse_required("synth.rows")?,
        n_numeric_features: x.parse("synth.numeric", 6)?,
        n_categorical_features: x.parse("synth.categorical", 4)?,
        separability: x.parse("synth.separability", 1.0)?,
        group_shift: x.parse("synth.shift", 0.0)?,
        missing_rate: x.parse("synth.missing_rate", 0.0)?,
        n_semesters: x.parse("synth.semesters", 5)?,
    };
    spec.validate().map_err(|e| config_err(e.to_string()))?;
    Ok(Some(spec))
}

/// Extract a typed config from the merged key-value map.
pub fn extract(map: &BTreeMap<String, String>) -> Result<RunConfig, CliError> {
    for key in map.keys() {
        if !known_key(key) {
            return Err(config_err(format!("unknown key '{key}'")));
        }
    }
    let x = Extractor { map };
    let seed: u64 = x.parse_required("seed")?;

    let tune_on = match x.get("tune.on").unwrap_or("test") {
        "test" => TuneOn::Test,
        "train" => TuneOn::Train,
        other => return Err(config_err(format!("tune.on must be test|train, got '{other}'"))),
    };

    let preprocess = PreprocessConfig {
        placeholder_value: x.parse("preprocess.placeholder", -999.0)?,
        rare_category_min: x.parse("preprocess.rare_min", 30)?,
        ..Default::default()
    };
    preprocess.validate().map_err(|e| config_err(e.to_string()))?;

    let mtry = match x.get("train.mtry").unwrap_or("auto") {
        "auto" => None,
        v => Some(
            v.parse()
                .map_err(|_| config_err(format!("train.mtry: cannot parse '{v}'")))?,
        ),
    };
    let max_depth = match x.get("train.max_depth").unwrap_or("none") {
        "none" => None,
        v => Some(
            v.parse()
                .map_err(|_| config_err(format!("train.max_depth: cannot parse '{v}'")))?,
        ),
    };
    let train = TrainConfig {
        n_trees: x.parse("train.n_trees", 500)?,
        mtry,
        min_node_size: x.parse("train.min_node_size", 1)?,
        max_depth,
        seed,
        class_weighting: x.parse("train.class_weighting", true)?,
    };

    let grid_step: f64 = x.parse("grid_step", 0.01)?;

    Ok(RunConfig {
        seed,
        out_dir: PathBuf::from(x.required("out.dir")?),
        data_csv: PathBuf::from(x.required("data.csv")?),
        data_schema: PathBuf::from(x.required("data.schema")?),
        grid_step,
        tune_on,
        preprocess,
        train,
        groups: parse_groups(map)?,
        synth: parse_synth(map, seed)?,
    })
}

impl RunConfig {
    /// Input files must exist before a stage that reads them runs.
    pub fn require_data_files(&self) -> Result<(), CliError> {
        for path in [&self.data_csv, &self.data_schema] {
            if !path.is_file() {
                return Err(config_err(format!(
                    "referenced path '{}' does not exist",
                    path.display()
                )));
            }
        }
        Ok(())
    }

    pub fn require_groups(&self) -> Result<(), CliError> {
        if self.groups.is_empty() {
            return Err(config_err(
                "at least one group.<attribute>.* spec is required",
            ));
        }
        Ok(())
    }

    pub fn require_synth(&self) -> Result<&SynthSpec, CliError> {
        self.synth
            .as_ref()
            .ok_or_else(|| config_err("synth.* keys are required for this command"))
    }
}
