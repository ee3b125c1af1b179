use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lrgan_cli::commands::{
    cmd_eval, cmd_generate, cmd_gradcheck, cmd_stats, cmd_train_encdec, cmd_train_gan,
};
use lrgan_cli::sweep::cmd_sweep;
use lrgan_cli::{CliError, CliResult, RunConfig};

/// Latent-space GAN data augmentation for low-resource translation.
#[derive(Parser)]
#[command(name = "lrgan", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Flags layered over the config file, which is layered over the defaults.
#[derive(Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Tab-separated sentence-pair file.
    #[arg(long, global = true)]
    data: Option<String>,
    /// Output root directory.
    #[arg(long, global = true)]
    out: Option<String>,
    #[arg(long, global = true)]
    max_pairs: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch: Option<usize>,
    #[arg(long, global = true)]
    gan_epochs: Option<usize>,
    #[arg(long, global = true)]
    gan_batch: Option<usize>,
    /// Number of sentences to generate.
    #[arg(long, global = true)]
    n: Option<usize>,
    /// Any config key, e.g. `--set lr=0.001`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Stage 1: train the encoder-decoder.
    TrainEncdec,
    /// Stage 2: train the generator against the frozen encoder.
    TrainGan,
    /// Stage 3: decode generator samples into a labelled corpus.
    Generate,
    /// Per-language corpus statistics for the train and test splits.
    Stats,
    /// Loss and token accuracy of the stage-1 checkpoint on every split.
    Eval,
    /// Finite-difference check of every layer's gradients.
    Gradcheck {
        #[arg(long, hide = true)]
        corrupt: Option<String>,
    },
    /// Reduced-scale grid search over configuration values.
    Sweep {
        /// Sweep definition file.
        #[arg(long)]
        spec: PathBuf,
    },
}

fn resolve(c: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = [
        ("seed", c.seed.map(|v| v.to_string())),
        ("data", c.data.clone()),
        ("out", c.out.clone()),
        ("max_pairs", c.max_pairs.map(|v| v.to_string())),
        ("epochs", c.epochs.map(|v| v.to_string())),
        ("batch", c.batch.map(|v| v.to_string())),
        ("gan_epochs", c.gan_epochs.map(|v| v.to_string())),
        ("gan_batch", c.gan_batch.map(|v| v.to_string())),
        ("n", c.n.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    for kv in &c.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult {
    let cfg = resolve(&cli.common)?;
    match cli.command {
        Command::TrainEncdec => cmd_train_encdec(&cfg),
        Command::TrainGan => cmd_train_gan(&cfg),
        Command::Generate => cmd_generate(&cfg),
        Command::Stats => cmd_stats(&cfg),
        Command::Eval => cmd_eval(&cfg),
        Command::Gradcheck { corrupt } => cmd_gradcheck(corrupt.as_deref()),
        Command::Sweep { spec } => cmd_sweep(&spec, &cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
