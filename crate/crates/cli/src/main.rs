//! `fairaudit` — train a student-success classifier, audit its group
//! fairness, and correct it with per-group decision thresholds.

mod config;
mod runs;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Errors carry their exit code: 1 config, 2 data, 3 runtime.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "fairaudit",
    about = "Group-fairness auditing and threshold correction for a student-success random forest",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flag overrides mirror config keys and take precedence over file values.
#[derive(Args, Clone, Default)]
struct Overrides {
    /// Master seed (config key `seed`)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (config key `out.dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Data CSV path (config key `data.csv`)
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema file path (config key `data.schema`)
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic row count (config key `synth.rows`)
    #[arg(long)]
    rows: Option<usize>,
    /// Number of trees (config key `train.n_trees`)
    #[arg(long)]
    trees: Option<usize>,
    /// Threshold grid step (config key `grid_step`)
    #[arg(long)]
    grid_step: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic population and write data.csv + schema
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Preprocess, train, and save the forest model
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tune per-group thresholds for equality of opportunity
    Fairfix {
        #[arg(long)]
        config: PathBuf,
        /// Saved model file
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Audit a saved model under a saved threshold policy
    Audit {
        #[arg(long)]
        config: PathBuf,
        /// Saved model file
        #[arg(long)]
        model: PathBuf,
        /// Threshold policy file
        #[arg(long)]
        policy: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Full loop: preprocess, train, audit, correct, re-audit, report
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

fn load_config(path: &PathBuf, overrides: &Overrides) -> Result<config::RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let mut map = config::parse_map(&text)?;
    let mut set = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            map.insert(key.to_string(), v);
        }
    };
    set("seed", overrides.seed.map(|v| v.to_string()));
    set("out.dir", overrides.out.as_ref().map(|p| p.display().to_string()));
    set("data.csv", overrides.data.as_ref().map(|p| p.display().to_string()));
    set(
        "data.schema",
        overrides.schema.as_ref().map(|p| p.display().to_string()),
    );
    set("synth.rows", overrides.rows.map(|v| v.to_string()));
    set("train.n_trees", overrides.trees.map(|v| v.to_string()));
    set("grid_step", overrides.grid_step.map(|v| v.to_string()));
    config::extract(&map)
}

// Worker-thread count: FAIRAUDIT_THREADS when set, all cores otherwise.
fn init_threads() -> Result<(), CliError> {
    if let Ok(value) = std::env::var("FAIRAUDIT_THREADS") {
        let threads: usize = value.parse().map_err(|_| {
            CliError::Config(format!("FAIRAUDIT_THREADS: cannot parse '{value}'"))
        })?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run() -> Result<(), CliError> {
    init_threads()?;
    match Cli::parse().command {
        Command::Synth { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            runs::cmd_synth(&cfg)
        }
        Command::Train { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            runs::cmd_train(&cfg)
        }
        Command::Fairfix {
            config,
            model,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            runs::cmd_fairfix(&cfg, &model)
        }
        Command::Audit {
            config,
            model,
            policy,
            overrides,
        } => {
            let cfg = load_config(&config, &overrides)?;
            runs::cmd_audit(&cfg, &model, &policy)
        }
        Command::Pipeline { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            runs::cmd_pipeline(&cfg)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
