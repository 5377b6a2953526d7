//! Run configuration: a flat, line-oriented `key = value` document.
//!
//! Blank lines and lines starting with `#` are ignored. Every key may appear
//! at most once. [`RunConfig::to_text`] writes every key with its resolved
//! value, so the file saved next to a run reproduces it exactly.

use std::fmt::Display;
use std::path::PathBuf;
use std::str::FromStr;

use popsan::actor::ActorKind;
use popsan::envs::{make_env, EnvSpec};
use popsan::popsan::PopSanArch;
use popsan::snn::LifConfig;
use popsan::td3::Td3Config;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub env: String,
    pub actor: ActorKind,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub pop_size: usize,
    pub hidden_sizes: Vec<usize>,
    pub timesteps: usize,
    pub lif: LifConfig,
    /// Its `seed` field is kept equal to [`RunConfig::seed`].
    pub td3: Td3Config,
    pub log_interval: u64,
    pub checkpoint_interval: u64,
    pub log_wall_time: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arch = PopSanArch::new(1, 1);
        Self {
            env: "point_reach".into(),
            actor: ActorKind::Spiking,
            seed: 0,
            out_dir: PathBuf::from("runs/default"),
            pop_size: arch.pop_size,
            hidden_sizes: arch.hidden_sizes,
            timesteps: arch.timesteps,
            lif: arch.lif,
            td3: Td3Config::default(),
            log_interval: 100,
            checkpoint_interval: 10_000,
            log_wall_time: false,
        }
    }
}

/// Every recognised key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: [&str; 29] = [
    "env",
    "actor",
    "seed",
    "out_dir",
    "pop_size",
    "hidden_sizes",
    "timesteps",
    "current_decay",
    "voltage_decay",
    "threshold",
    "surrogate_width",
    "discount",
    "polyak",
    "actor_lr",
    "critic_lr",
    "batch_size",
    "buffer_capacity",
    "exploration_noise",
    "target_noise",
    "target_noise_clip",
    "policy_delay",
    "start_steps",
    "max_env_steps",
    "eval_interval",
    "eval_episodes",
    "critic_hidden",
    "log_interval",
    "checkpoint_interval",
    "log_wall_time",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError>
where
    T::Err: Display,
{
    value
        .parse()
        .map_err(|e| CliError::Usage(format!("invalid value `{value}` for `{key}`: {e}")))
}

/// Comma-separated widths; an empty value means no hidden layers.
fn parse_sizes(key: &str, value: &str) -> Result<Vec<usize>, CliError> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|s| parse(key, s.trim())).collect()
}

fn join(sizes: &[usize]) -> String {
    sizes
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    /// Parses a config document on top of the defaults.
    pub fn from_text(text: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        let mut seen = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!(
                    "line {}: expected `key = value`, got `{line}`",
                    n + 1
                ))
            })?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::Usage(format!(
                    "line {}: `{key}` is set twice",
                    n + 1
                )));
            }
            seen.push(key);
            config
                .set(key, value.trim())
                .map_err(|e| CliError::Usage(format!("line {}: {}", n + 1, e.message())))?;
        }
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let t = &mut self.td3;
        match key {
            "env" => self.env = value.to_string(),
            "actor" => {
                self.actor = value
                    .parse()
                    .map_err(|e: popsan::Error| CliError::Usage(e.to_string()))?
            }
            "seed" => self.seed = parse(key, value)?,
            "out_dir" => self.out_dir = PathBuf::from(value),
            "pop_size" => self.pop_size = parse(key, value)?,
            "hidden_sizes" => self.hidden_sizes = parse_sizes(key, value)?,
            "timesteps" => self.timesteps = parse(key, value)?,
            "current_decay" => self.lif.current_decay = parse(key, value)?,
            "voltage_decay" => self.lif.voltage_decay = parse(key, value)?,
            "threshold" => self.lif.threshold = parse(key, value)?,
            "surrogate_width" => self.lif.surrogate_width = parse(key, value)?,
            "discount" => t.discount = parse(key, value)?,
            "polyak" => t.polyak = parse(key, value)?,
            "actor_lr" => t.actor_lr = parse(key, value)?,
            "critic_lr" => t.critic_lr = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "buffer_capacity" => t.buffer_capacity = parse(key, value)?,
            "exploration_noise" => t.exploration_noise = parse(key, value)?,
            "target_noise" => t.target_noise = parse(key, value)?,
            "target_noise_clip" => t.target_noise_clip = parse(key, value)?,
            "policy_delay" => t.policy_delay = parse(key, value)?,
            "start_steps" => t.start_steps = parse(key, value)?,
            "max_env_steps" => t.max_env_steps = parse(key, value)?,
            "eval_interval" => t.eval_interval = parse(key, value)?,
            "eval_episodes" => t.eval_episodes = parse(key, value)?,
            "critic_hidden" => t.critic_hidden = parse_sizes(key, value)?,
            "log_interval" => self.log_interval = parse(key, value)?,
            "checkpoint_interval" => self.checkpoint_interval = parse(key, value)?,
            "log_wall_time" => self.log_wall_time = parse(key, value)?,
            other => return Err(CliError::Usage(format!("unknown config key `{other}`"))),
        }
        self.td3.seed = self.seed;
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<(), CliError> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("override `{o}` is not `key=value`")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.td3;
        Some(match key {
            "env" => self.env.clone(),
            "actor" => self.actor.name().to_string(),
            "seed" => self.seed.to_string(),
            "out_dir" => self.out_dir.display().to_string(),
            "pop_size" => self.pop_size.to_string(),
            "hidden_sizes" => join(&self.hidden_sizes),
            "timesteps" => self.timesteps.to_string(),
            "current_decay" => self.lif.current_decay.to_string(),
            "voltage_decay" => self.lif.voltage_decay.to_string(),
            "threshold" => self.lif.threshold.to_string(),
            "surrogate_width" => self.lif.surrogate_width.to_string(),
            "discount" => t.discount.to_string(),
            "polyak" => t.polyak.to_string(),
            "actor_lr" => t.actor_lr.to_string(),
            "critic_lr" => t.critic_lr.to_string(),
            "batch_size" => t.batch_size.to_string(),
            "buffer_capacity" => t.buffer_capacity.to_string(),
            "exploration_noise" => t.exploration_noise.to_string(),
            "target_noise" => t.target_noise.to_string(),
            "target_noise_clip" => t.target_noise_clip.to_string(),
            "policy_delay" => t.policy_delay.to_string(),
            "start_steps" => t.start_steps.to_string(),
            "max_env_steps" => t.max_env_steps.to_string(),
            "eval_interval" => t.eval_interval.to_string(),
            "eval_episodes" => t.eval_episodes.to_string(),
            "critic_hidden" => join(&t.critic_hidden),
            "log_interval" => self.log_interval.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "log_wall_time" => self.log_wall_time.to_string(),
            _ => return None,
        })
    }

    /// Every key with its resolved value. Floats use the shortest decimal
    /// form that parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# resolved popsan run configuration\n");
        for key in KEYS {
            out.push_str(&format!("{key} = {}\n", self.get(key).expect("listed key")));
        }
        out
    }

    pub fn env_spec(&self) -> Result<EnvSpec, CliError> {
        Ok(make_env(&self.env)
            .map_err(|e| CliError::Usage(e.to_string()))?
            .spec()
            .clone())
    }

    pub fn arch(&self, spec: &EnvSpec) -> PopSanArch {
        PopSanArch {
            obs_dim: spec.obs_dim,
            act_dim: spec.act_dim,
            pop_size: self.pop_size,
            hidden_sizes: self.hidden_sizes.clone(),
            timesteps: self.timesteps,
            lif: self.lif,
        }
    }

    /// Checks everything that can be checked before touching the disk.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: popsan::Error| CliError::Usage(e.to_string());
        self.env_spec()?;
        self.td3.validate().map_err(usage)?;
        self.lif.validate().map_err(usage)?;
        let bad = |msg: &str| Err(CliError::Usage(msg.to_string()));
        if self.pop_size == 0 || self.timesteps == 0 {
            return bad("pop_size and timesteps must be positive");
        }
        if self.hidden_sizes.contains(&0) {
            return bad("hidden sizes must be positive");
        }
        if self.log_interval == 0 || self.checkpoint_interval == 0 {
            return bad("log_interval and checkpoint_interval must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolved_text_round_trips() {
        let mut c = RunConfig::default();
        c.apply_overrides(&[
            "actor_lr=0.0003".into(),
            "hidden_sizes=64,32".into(),
            "critic_hidden=".into(),
            "seed=17".into(),
            "threshold=0.1".into(),
        ])
        .unwrap();
        let back = RunConfig::from_text(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.td3.seed, 17);
        assert!(back.td3.critic_hidden.is_empty());
    }

    #[test]
    fn every_key_is_settable() {
        let c = RunConfig::default();
        for key in KEYS {
            let mut d = RunConfig::default();
            d.set(key, &c.get(key).unwrap()).unwrap();
            assert_eq!(d, c, "{key}");
        }
    }

    #[test]
    fn malformed_documents_are_usage_errors() {
        for text in [
            "seed 3",
            "seed = x",
            "nope = 1",
            "seed = 1\nseed = 2",
            "actor = lstm",
        ] {
            assert!(
                matches!(RunConfig::from_text(text), Err(CliError::Usage(_))),
                "{text}"
            );
        }
        let c = RunConfig::from_text("# comment\n\n env = planar_pick \n").unwrap();
        assert_eq!(c.env, "planar_pick");
    }

    #[test]
    fn validation_catches_bad_values() {
        let mut c = RunConfig::default();
        assert!(c.validate().is_ok());
        c.env = "cartpole".into();
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.td3.discount = 1.5;
        assert!(c.validate().is_err());
        let c = RunConfig {
            log_interval: 0,
            ..RunConfig::default()
        };
        assert!(c.validate().is_err());
    }
}
