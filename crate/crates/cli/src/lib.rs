//! Command-line front end for the `dimabsa` toolkit.

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use dimabsa::dataio::Container;
use dimabsa::genio::ModelFamily;
use dimabsa::{Domain, Language, Subtask};

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::Outcome;
pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "dimabsa",
    version,
    about = "Dimensional aspect-based sentiment analysis toolkit"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// asr, aste or asqp
    #[arg(long, global = true)]
    pub subtask: Option<Subtask>,
    /// Language code, e.g. ENG or ZHO
    #[arg(long = "lang", global = true)]
    pub language: Option<Language>,
    /// Domain, e.g. Restaurant
    #[arg(long, global = true)]
    pub domain: Option<Domain>,
    #[arg(long, global = true)]
    pub train: Option<PathBuf>,
    #[arg(long, global = true)]
    pub dev: Option<PathBuf>,
    #[arg(long, global = true)]
    pub test: Option<PathBuf>,
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (default: $DIMABSA_CACHE_DIR/<command> or runs/<command>)
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a data file against the schema
    Validate { input: PathBuf },
    /// Score predictions against gold
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Train the VA regressor on --train, selecting on --dev
    Train {
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
    },
    /// Predict VA for the aspects in --test
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Flatten an ASR file into one row per (review, aspect)
    Flatten {
        input: PathBuf,
        /// Input carries aspects without VA labels
        #[arg(long)]
        unlabeled: bool,
    },
    /// Build generation prompts for the reviews in --test
    MakePrompts {
        #[arg(long)]
        profile: Option<ModelFamily>,
        /// Number of demonstrations drawn from --train
        #[arg(long)]
        demos: Option<usize>,
        #[arg(long)]
        templates: Option<PathBuf>,
        /// Emit training prompts for --train with gold answers appended
        #[arg(long)]
        with_answers: bool,
    },
    /// Turn raw generations (JSONL of {"ID", "Output"}) into a submission
    ParseGenerations {
        input: PathBuf,
        /// Write JSON Lines instead of a JSON array
        #[arg(long)]
        jsonl: bool,
    },
    /// Split statistics and distribution shift against train
    Eda,
    /// Write a synthetic ASR train/dev pair
    Synth {
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 0.2)]
        dev_fraction: f64,
    },
    /// Write the adapter fine-tuning configuration
    AdapterConfig {
        /// Start from an existing file instead of the defaults
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

/// Loads the config file if given, then applies the flags on top.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let g = global.clone();
    cfg.subtask = g.subtask.or(cfg.subtask);
    cfg.language = g.language.or(cfg.language);
    cfg.domain = g.domain.or(cfg.domain);
    cfg.seed = g.seed.or(cfg.seed);
    cfg.paths.train = g.train.or(cfg.paths.train);
    cfg.paths.dev = g.dev.or(cfg.paths.dev);
    cfg.paths.test = g.test.or(cfg.paths.test);
    cfg.paths.output = g.out.or(cfg.paths.output);
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Outcome> {
    let mut cfg = resolve_config(&cli.global)?;
    match cli.command {
        Command::Validate { input } => commands::validate(&cfg, &input),
        Command::Eval { pred, gold } => Ok(commands::eval(&cfg, &pred, &gold)?.0),
        Command::Train {
            lr,
            epochs,
            batch_size,
        } => {
            let o = commands::TrainOverrides {
                learning_rate: lr,
                max_epochs: epochs,
                batch_size,
            };
            Ok(commands::train_cmd(&cfg, &o)?.outcome)
        }
        Command::Predict { checkpoint } => commands::predict(&cfg, &checkpoint),
        Command::Flatten { input, unlabeled } => commands::flatten(&cfg, &input, unlabeled),
        Command::MakePrompts {
            profile,
            demos,
            templates,
            with_answers,
        } => {
            if let Some(p) = profile {
                cfg.prompt.profile = p;
            }
            if let Some(k) = demos {
                cfg.prompt.demos = k;
            }
            if templates.is_some() {
                cfg.prompt.templates = templates;
            }
            commands::make_prompts(&cfg, with_answers)
        }
        Command::ParseGenerations { input, jsonl } => {
            let container = if jsonl {
                Container::JsonLines
            } else {
                Container::JsonArray
            };
            commands::parse_generations(&cfg, &input, container)
        }
        Command::Eda => Ok(commands::eda(&cfg)?.0),
        Command::Synth { n, dev_fraction } => commands::synth(&cfg, n, dev_fraction),
        Command::AdapterConfig { from } => commands::adapter_config(&cfg, from.as_deref()),
    }
}
