//! `cdfa`: synthetic corpora, augmentation previews, training runs,
//! evaluation and plots.

mod commands;
mod config;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use cdfa_core::data::Split;
use cdfa_core::trainer::PRESETS;
use cdfa_core::{CdfaError, ErrorClass};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};

use commands::PreviewOp;

#[derive(Parser, Debug)]
#[command(
    name = "cdfa",
    version,
    about = "Curricular dynamic forgery augmentation toolkit"
)]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output (-v debug, -vv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    /// Only warnings and errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic face-video corpus.
    GenData {
        /// TOML run configuration (see the defaults below).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; must not exist or be empty.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed and CDFA_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Write pseudo-fake previews and their blending masks as PNG files.
    Augment {
        /// TOML run configuration (see the defaults below).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory written by gen-data.
        #[arg(long)]
        corpus: PathBuf,
        /// Video id from the corpus manifest.
        #[arg(long)]
        video: String,
        /// Frame indices (comma separated); all frames by default.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<usize>>,
        #[arg(long, value_enum)]
        op: PreviewOp,
        /// Trained run checkpoint whose policy network picks the operator.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Overrides the config seed and CDFA_SEED.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a detector and write checkpoints plus a per-epoch CSV.
    Train {
        /// TOML run configuration (see the defaults below).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Corpus directory written by gen-data.
        #[arg(long)]
        corpus: PathBuf,
        /// Run directory; must not exist or be empty.
        #[arg(long)]
        out: PathBuf,
        /// Ablation preset applied on top of the [train] section.
        #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESETS))]
        preset: Option<String>,
        /// Overrides the config seed and CDFA_SEED.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides train.total_epochs.
        #[arg(long)]
        epochs: Option<usize>,
        /// Keep a numbered checkpoint every N epochs (0 disables).
        #[arg(long, default_value_t = 10)]
        checkpoint_every: usize,
    },
    /// Score a split with a checkpoint and print frame and video AUC.
    Eval {
        /// Checkpoint written by train.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Corpus directory written by gen-data.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Restrict o-fakes to these manipulation tags (comma separated).
        #[arg(long, value_delimiter = ',')]
        tags: Option<Vec<String>>,
        /// Per-frame scores CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render loss.svg and policy.svg from a run directory's epochs.csv.
    Plot { run_dir: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<CdfaError>())
        .map_or(4, |e| match e.class() {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Runtime => 4,
        })
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CdfaError::Config("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CdfaError::Config(format!("thread pool: {e}")))?;
    }
    log::debug!("using {} worker threads", rayon::current_num_threads());
    match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data(config.as_deref(), &out, seed),
        Command::Augment {
            config,
            corpus,
            video,
            frames,
            op,
            checkpoint,
            seed,
            out,
        } => commands::augment(commands::AugmentArgs {
            config: config.as_deref(),
            corpus: &corpus,
            video: &video,
            frames: frames.as_deref(),
            op,
            checkpoint: checkpoint.as_deref(),
            seed,
            out: &out,
        }),
        Command::Train {
            config,
            corpus,
            out,
            preset,
            seed,
            epochs,
            checkpoint_every,
        } => commands::train(commands::TrainArgs {
            config: config.as_deref(),
            corpus: &corpus,
            out: &out,
            preset: preset.as_deref(),
            seed,
            epochs,
            checkpoint_every,
        }),
        Command::Eval {
            checkpoint,
            corpus,
            split,
            tags,
            out,
        } => commands::eval(commands::EvalArgs {
            checkpoint: &checkpoint,
            corpus: &corpus,
            split,
            tags: tags.as_deref(),
            out: out.as_deref(),
        }),
        Command::Plot { run_dir } => commands::plot(&run_dir),
    }
}

fn main() -> ExitCode {
    let defaults = config::defaults_help();
    let matches = Cli::command()
        .mut_subcommand("gen-data", |c| c.after_long_help(defaults.clone()))
        .mut_subcommand("augment", |c| c.after_long_help(defaults.clone()))
        .mut_subcommand("train", |c| c.after_long_help(defaults.clone()))
        .get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => "warn",
        (false, 0) => "info",
        (false, 1) => "debug",
        _ => "trace",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
