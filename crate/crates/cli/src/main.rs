//! `lpgrade`: batch runner for rubric scoring, level mapping, feedback,
//! reliability gating, agreement reports, SMOTE and the text classifier.
//!
//! Exit codes: 0 success, 2 invalid input, 1 internal failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "lpgrade", version)]
#[command(about = "Score rubric category vectors, map learning-progression levels and report agreement")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Rubric JSON file; the built-in electroscope rubric when omitted
    #[arg(long, global = true, env = "LPGRADE_RUBRIC")]
    pub rubric: Option<PathBuf>,

    /// TOML file with per-command settings
    #[arg(long, global = true, env = "LPGRADE_CONFIG")]
    pub config: Option<PathBuf>,

    /// Seed for every random choice (overrides the config file)
    #[arg(long, global = true, env = "LPGRADE_SEED")]
    pub seed: Option<u64>,

    /// Output format, where the command supports more than one
    #[arg(long, global = true, value_enum, env = "LPGRADE_FORMAT")]
    pub format: Option<Format>,

    /// Output file; stdout when omitted. A manifest is written beside it.
    #[arg(long, short, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
    Jsonl,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Wald,
    Bootstrap,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Assign model and explanation levels to each labelled response
    Map {
        /// Label CSV; repeat to join modality files on response_id
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
    },

    /// Compose feedback text for each labelled response
    Feedback {
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,

        /// Template pack JSON; the built-in pack when omitted
        #[arg(long, env = "LPGRADE_TEMPLATES")]
        templates: Option<PathBuf>,
    },

    /// Krippendorff's alpha per category with a pass/fail gate
    Irr {
        /// Ratings CSV: unit_id,rater_id,category_id,value
        #[arg(long)]
        ratings: PathBuf,

        #[arg(long)]
        threshold: Option<f64>,
    },

    /// Human-machine agreement per category, plus the class-balance report
    Agree {
        #[arg(long)]
        human: PathBuf,

        #[arg(long)]
        machine: PathBuf,

        #[arg(long, value_enum)]
        ci: Option<CiKind>,

        /// Bootstrap resamples
        #[arg(long)]
        resamples: Option<usize>,

        #[arg(long)]
        confidence: Option<f64>,
    },

    /// Percent of positive cases per category
    Imbalance {
        #[arg(long, required = true)]
        labels: Vec<PathBuf>,
    },

    /// Oversample the minority class of a feature CSV
    Smote {
        /// Feature CSV: id,f1,...,fd,label
        #[arg(long)]
        features: PathBuf,

        #[arg(long)]
        k: Option<usize>,

        /// Target minority/majority ratio
        #[arg(long)]
        ratio: Option<f64>,
    },

    /// Train the explanation classifier from JSON Lines records
    TrainText {
        #[arg(long)]
        data: PathBuf,

        #[arg(long)]
        learning_rate: Option<f64>,

        #[arg(long)]
        max_epochs: Option<usize>,

        #[arg(long)]
        patience: Option<usize>,
    },

    /// Predict explanation categories; writes a label CSV
    PredictText {
        #[arg(long)]
        model: PathBuf,

        #[arg(long)]
        data: PathBuf,

        #[arg(long)]
        threshold: Option<f64>,
    },

    /// Check a rubric and template pack, including feedback totality
    RubricValidate {
        #[arg(long, env = "LPGRADE_TEMPLATES")]
        templates: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match commands::run(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            eprintln!("error: {:#}", failure.error());
            ExitCode::from(failure.code())
        }
    }
}
