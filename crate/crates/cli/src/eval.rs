//! `popsan eval` and the helpers shared with `popsan energy`.

use std::fs;
use std::path::{Path, PathBuf};

use popsan::actor::AnyActor;
use popsan::checkpoint::Checkpoint;
use popsan::envs::{make_env, Environment};
use popsan::rollout::evaluate;
use popsan::train::snapshot_env;
use serde::Serialize;

use crate::error::CliError;
use crate::train::load_checkpoint;

pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub checkpoint: String,
    pub env: String,
    pub actor: String,
    pub episodes: usize,
    pub seed: u64,
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub success_rate: f64,
}

/// Directory a read-only command writes into: `--out` if given, otherwise
/// the checkpoint's own directory.
pub fn output_dir(out: Option<&Path>, checkpoint: &Path) -> PathBuf {
    match out {
        Some(dir) => dir.to_path_buf(),
        None => checkpoint
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(".")),
    }
}

/// Loads a checkpoint's actor together with a matching environment, taken
/// from `env` or else from the checkpoint itself.
pub fn load_actor(
    checkpoint: &Path,
    env: Option<&str>,
) -> Result<(Checkpoint, AnyActor, Box<dyn Environment>), CliError> {
    let ck = load_checkpoint(checkpoint)?;
    let actor = AnyActor::read_checkpoint(&ck).map_err(|e| {
        CliError::runtime(format!("reading actor from {}", checkpoint.display()), e)
    })?;
    let stored = snapshot_env(&ck).map_err(|e| CliError::runtime("reading checkpoint", e))?;
    let name = match (env, stored) {
        (Some(e), _) => e.to_string(),
        (None, Some(s)) => s.to_string(),
        (None, None) => {
            return Err(CliError::Usage(
                "checkpoint does not record its environment; pass --env".into(),
            ))
        }
    };
    let environment = make_env(&name).map_err(|e| CliError::Usage(e.to_string()))?;
    let spec = environment.spec();
    if actor.obs_dim() != spec.obs_dim || actor.act_dim() != spec.act_dim {
        return Err(CliError::Usage(format!(
            "actor maps {} observations to {} actions but {name} has {} and {}",
            actor.obs_dim(),
            actor.act_dim(),
            spec.obs_dim,
            spec.act_dim
        )));
    }
    Ok((ck, actor, environment))
}

pub fn write_json(dir: &Path, file: &str, value: &impl Serialize) -> Result<PathBuf, CliError> {
    let path = dir.join(file);
    let text =
        serde_json::to_string_pretty(value).map_err(|e| CliError::runtime("encoding report", e))?;
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&path, text + "\n"))
        .map_err(|e| CliError::runtime(format!("writing {}", path.display()), e))?;
    Ok(path)
}

pub fn eval(
    checkpoint: &Path,
    env: Option<&str>,
    episodes: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<(EvalReport, PathBuf), CliError> {
    if episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let (_, actor, mut environment) = load_actor(checkpoint, env)?;
    let stats = evaluate(environment.as_mut(), &actor, episodes, seed)
        .map_err(|e| CliError::runtime("evaluation failed", e))?;
    let report = EvalReport {
        checkpoint: checkpoint.display().to_string(),
        env: environment.spec().name.to_string(),
        actor: actor.kind().name().to_string(),
        episodes,
        seed,
        mean_reward: stats.mean_reward,
        mean_episode_length: stats.mean_episode_length,
        success_rate: stats.success_rate,
    };
    let path = write_json(&output_dir(out, checkpoint), EVAL_FILE, &report)?;
    Ok((report, path))
}
