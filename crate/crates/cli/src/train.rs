//! `popsan train`: metrics stream, periodic and final checkpoints, resume.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use popsan::actor::{ActorKind, ActorModel, AnyActor, BaselineActor, ACTOR_KIND_TENSOR};
use popsan::checkpoint::Checkpoint;
use popsan::popsan::PopSanParams;
use popsan::rollout::EvalStats;
use popsan::train::{MetricRecord, Trainer};
use popsan::Error;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

pub const CONFIG_FILE: &str = "config.txt";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const FINAL_CHECKPOINT: &str = "final.psan";

/// One line of the metrics stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricLine {
    pub step: u64,
    pub episode: u64,
    pub mean_reward: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub success_rate: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
    /// Milliseconds since the command started; always 0 unless
    /// `log_wall_time` is set, which keeps the stream reproducible.
    pub wall_ms: u64,
}

impl MetricLine {
    fn new(r: MetricRecord, wall_ms: u64) -> Self {
        Self {
            step: r.step,
            episode: r.episode,
            mean_reward: r.mean_reward,
            mean_episode_length: r.mean_episode_length,
            success_rate: r.success_rate,
            critic_loss: r.critic_loss,
            actor_loss: r.actor_loss,
            wall_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub steps: u64,
    pub episodes: u64,
    pub last_eval: Option<EvalStats>,
    pub final_checkpoint: PathBuf,
}

pub fn checkpoint_path(out_dir: &Path, step: u64) -> PathBuf {
    out_dir
        .join(CHECKPOINT_DIR)
        .join(format!("step_{step:08}.psan"))
}

/// Writes through a temporary sibling so readers never see a partial file.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CliError> {
    let tmp = path.with_extension("psan.tmp");
    ck.save(&tmp)
        .and_then(|_| fs::rename(&tmp, path).map_err(Error::from))
        .map_err(|e| CliError::runtime(format!("writing {}", path.display()), e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    Checkpoint::load(path).map_err(|e| CliError::runtime(format!("loading {}", path.display()), e))
}

/// Creates the run directory and records the resolved config in it. Any
/// failure here is reported before training starts.
fn prepare_out_dir(config: &RunConfig) -> Result<(), CliError> {
    let dir = &config.out_dir;
    let unwritable = |e: std::io::Error| {
        CliError::Runtime(format!(
            "output directory {} is not writable: {e}",
            dir.display()
        ))
    };
    fs::create_dir_all(dir.join(CHECKPOINT_DIR)).map_err(unwritable)?;
    fs::write(dir.join(CONFIG_FILE), config.to_text()).map_err(unwritable)
}

/// Opens the metrics stream. A resumed run keeps the records up to its
/// starting step and drops any written after it.
fn open_metrics(path: &Path, resume_step: Option<u64>) -> Result<File, CliError> {
    let io = |e: std::io::Error| CliError::runtime(format!("writing {}", path.display()), e);
    let Some(start) = resume_step else {
        return File::create(path).map_err(io);
    };
    let kept = match fs::read_to_string(path) {
        Ok(text) => {
            let mut kept = String::new();
            for line in text.lines() {
                let m: MetricLine = serde_json::from_str(line)
                    .map_err(|e| CliError::runtime(format!("reading {}", path.display()), e))?;
                if m.step <= start {
                    kept.push_str(line);
                    kept.push('\n');
                }
            }
            kept
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io(e)),
    };
    fs::write(path, kept).map_err(io)?;
    OpenOptions::new().append(true).open(path).map_err(io)
}

pub fn train(config: &RunConfig, resume: Option<&Path>) -> Result<TrainSummary, CliError> {
    config.validate()?;
    let spec = config.env_spec()?;
    prepare_out_dir(config)?;
    let started = Instant::now();

    let resumed = resume.map(load_checkpoint).transpose()?;
    let training = |e: Error| CliError::runtime("cannot start training", e);
    match &resumed {
        Some(ck) => {
            let stored = ck
                .scalar(ACTOR_KIND_TENSOR)
                .and_then(ActorKind::from_code)
                .map_err(training)?;
            if stored != config.actor {
                return Err(CliError::Usage(format!(
                    "checkpoint holds a {} actor but the config asks for {}",
                    stored.name(),
                    config.actor.name()
                )));
            }
            match config.actor {
                ActorKind::Spiking => drive(
                    Trainer::<PopSanParams>::restore(
                        &config.env,
                        ck,
                        config.td3.clone(),
                        config.log_interval,
                    )
                    .map_err(training)?,
                    config,
                    true,
                    started,
                ),
                ActorKind::Baseline => drive(
                    Trainer::<BaselineActor>::restore(
                        &config.env,
                        ck,
                        config.td3.clone(),
                        config.log_interval,
                    )
                    .map_err(training)?,
                    config,
                    true,
                    started,
                ),
            }
        }
        None => {
            let actor = AnyActor::init(config.actor, &config.arch(&spec), &spec, config.seed)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            match actor {
                AnyActor::Spiking(a) => drive(
                    Trainer::new(&config.env, a, config.td3.clone(), config.log_interval)
                        .map_err(training)?,
                    config,
                    false,
                    started,
                ),
                AnyActor::Baseline(a) => drive(
                    Trainer::new(&config.env, a, config.td3.clone(), config.log_interval)
                        .map_err(training)?,
                    config,
                    false,
                    started,
                ),
            }
        }
    }
}

fn drive<A: ActorModel>(
    mut trainer: Trainer<A>,
    config: &RunConfig,
    resumed: bool,
    started: Instant,
) -> Result<TrainSummary, CliError> {
    let out = &config.out_dir;
    let metrics_path = out.join(METRICS_FILE);
    let mut metrics = open_metrics(&metrics_path, resumed.then(|| trainer.steps()))?;
    while !trainer.is_finished() {
        let outcome = trainer.step().map_err(|e| match e {
            Error::Training(msg) => CliError::Runtime(format!("training aborted: {msg}")),
            other => CliError::runtime(format!("step {}", trainer.steps() + 1), other),
        })?;
        if let Some(e) = outcome.eval {
            eprintln!(
                "step {}: eval success_rate {:.2} mean_reward {:.3} mean_episode_length {:.1}",
                trainer.steps(),
                e.success_rate,
                e.mean_reward,
                e.mean_episode_length
            );
        }
        if let Some(record) = outcome.metric {
            let wall_ms = if config.log_wall_time {
                started.elapsed().as_millis() as u64
            } else {
                0
            };
            let mut line = serde_json::to_string(&MetricLine::new(record, wall_ms))
                .map_err(|e| CliError::runtime("encoding metrics", e))?;
            line.push('\n');
            // one write per record so that tailing readers see whole lines
            metrics
                .write_all(line.as_bytes())
                .and_then(|_| metrics.flush())
                .map_err(|e| CliError::runtime(format!("writing {}", metrics_path.display()), e))?;
        }
        if trainer.steps().is_multiple_of(config.checkpoint_interval) {
            save_checkpoint(&trainer.snapshot(), &checkpoint_path(out, trainer.steps()))?;
        }
    }
    let final_checkpoint = out.join(FINAL_CHECKPOINT);
    save_checkpoint(&trainer.snapshot(), &final_checkpoint)?;
    Ok(TrainSummary {
        steps: trainer.steps(),
        episodes: trainer.episodes(),
        last_eval: trainer.last_eval(),
        final_checkpoint,
    })
}
