//! Command-line front end: `train`, `eval`, `energy` and `inspect`.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, bad config)
//! and 2 for failures while running.

pub mod config;
pub mod energy;
pub mod error;
pub mod eval;
pub mod inspect;
pub mod train;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use popsan::energy::OpCosts;

use crate::config::RunConfig;
use crate::energy::{EnergyArgs, Observations};
pub use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "popsan",
    version,
    about = "Spiking actor networks trained with TD3"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train an actor, writing metrics and checkpoints to the output directory.
    Train(TrainArgs),
    /// Noise-free evaluation of a checkpoint's actor.
    Eval(EvalArgs),
    /// Operation counts and energy per forward pass against a dense baseline.
    Energy(EnergyCmd),
    /// List the tensors stored in a checkpoint.
    Inspect { checkpoint: PathBuf },
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// `key = value` config file; unset keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides a config key; may be repeated.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    actor: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    max_env_steps: Option<u64>,
    /// Continue the run stored in this checkpoint.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    checkpoint: PathBuf,
    /// Defaults to the environment recorded in the checkpoint.
    #[arg(long)]
    env: Option<String>,
    #[arg(long, default_value_t = 10)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Directory for the stats file; defaults to the checkpoint's directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EnergyCmd {
    checkpoint: PathBuf,
    #[arg(long)]
    env: Option<String>,
    /// Observations gathered from noise-free rollouts of the actor.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON array of observation rows, used instead of rollouts.
    #[arg(long, conflicts_with_all = ["samples", "seed"])]
    observations: Option<PathBuf>,
    /// Comma-separated hidden widths of the dense baseline; defaults to the
    /// actor's own.
    #[arg(long, value_delimiter = ',')]
    baseline_hidden: Option<Vec<usize>>,
    /// Run a spiking actor with this many timesteps.
    #[arg(long)]
    timesteps: Option<usize>,
    /// Picojoules per multiply-accumulate.
    #[arg(long, default_value_t = OpCosts::default().e_mac)]
    e_mac: f64,
    /// Picojoules per accumulate.
    #[arg(long, default_value_t = OpCosts::default().e_ac)]
    e_ac: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config file, then `--set` overrides, then the dedicated flags.
fn resolve_config(args: &TrainArgs) -> Result<RunConfig, CliError> {
    let mut config = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::Usage(format!("cannot read config {}: {e}", path.display()))
            })?;
            RunConfig::from_text(&text)
                .map_err(|e| CliError::Usage(format!("{}: {}", path.display(), e.message())))?
        }
        None => RunConfig::default(),
    };
    config.apply_overrides(&args.set)?;
    let flags = [
        ("env", args.env.clone()),
        ("actor", args.actor.clone()),
        ("seed", args.seed.map(|s| s.to_string())),
        (
            "out_dir",
            args.out_dir.as_ref().map(|p| p.display().to_string()),
        ),
        ("max_env_steps", args.max_env_steps.map(|s| s.to_string())),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            config.set(key, &v)?;
        }
    }
    Ok(config)
}

fn execute(command: Command) -> Result<String, CliError> {
    match command {
        Command::Train(args) => {
            let config = resolve_config(&args)?;
            let s = train::train(&config, args.resume.as_deref())?;
            let eval = s
                .last_eval
                .map(|e| format!(", last eval success_rate {:.2}", e.success_rate))
                .unwrap_or_default();
            Ok(format!(
                "trained {} steps over {} episodes{eval}; final checkpoint {}\n",
                s.steps,
                s.episodes,
                s.final_checkpoint.display()
            ))
        }
        Command::Eval(a) => {
            let (report, _) = eval::eval(
                &a.checkpoint,
                a.env.as_deref(),
                a.episodes,
                a.seed,
                a.out.as_deref(),
            )?;
            serde_json::to_string_pretty(&report)
                .map(|s| s + "\n")
                .map_err(|e| CliError::runtime("encoding report", e))
        }
        Command::Energy(a) => {
            let costs =
                OpCosts::new(a.e_mac, a.e_ac).map_err(|e| CliError::Usage(e.to_string()))?;
            let observations = match a.observations {
                Some(path) => Observations::File(path),
                None => Observations::Rollouts {
                    samples: a.samples,
                    seed: a.seed,
                },
            };
            let (report, _) = energy::energy(&EnergyArgs {
                checkpoint: a.checkpoint,
                env: a.env,
                observations,
                baseline_hidden: a.baseline_hidden,
                timesteps: a.timesteps,
                costs,
                out: a.out,
            })?;
            Ok(energy::render_table(&report))
        }
        Command::Inspect { checkpoint } => inspect::inspect(&checkpoint),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
