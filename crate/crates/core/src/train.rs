//! The step-driven TD3 training loop.
//!
//! One iteration is one environment step followed, once warm-up is over, by
//! one [`Td3Agent::update`]. All randomness of step `s` comes from a ChaCha8
//! generator seeded with the run seed on stream `s`, so a run restored from a
//! snapshot continues exactly as the uninterrupted run would.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::actor::read_mlp;
use crate::actor::{ActorModel, Policy, ACTOR_KIND_TENSOR};
use crate::checkpoint::{Checkpoint, Tensor};
use crate::envs::{make_env, Environment, ENV_NAMES};
use crate::error::{ensure, Error, Result};
use crate::optim::{Adam, AdamConfig};
use crate::replay::{ReplayBuffer, Transition};
use crate::rollout::{derive_seed, evaluate, noisy_action, EvalStats};
use crate::td3::{Td3Agent, Td3Config};

const TRAIN_SALT: u64 = 0x7472_6169_6e00_0000;
const EVAL_SALT: u64 = 0x6576_616c_0000_0000;
const CRITIC_SALT: u64 = 0x6372_6974_6963_0000;

/// Index into [`ENV_NAMES`] of the environment a snapshot was trained on.
pub const ENV_TENSOR: &str = "meta.env";

/// Name of the environment recorded in a trainer snapshot, if any.
pub fn snapshot_env(ck: &Checkpoint) -> Result<Option<&'static str>> {
    let Some(t) = ck.get(ENV_TENSOR) else {
        return Ok(None);
    };
    let code = t.data.first().copied().unwrap_or(f64::NAN);
    ENV_NAMES
        .iter()
        .enumerate()
        .find(|(k, _)| *k as f64 == code)
        .map(|(_, &name)| Some(name))
        .ok_or_else(|| Error::Format(format!("unknown environment code {code}")))
}

/// Aggregates over one logging window. Episode means cover training episodes
/// that finished inside the window; `success_rate` is the most recent
/// evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricRecord {
    pub step: u64,
    pub episode: u64,
    pub mean_reward: Option<f64>,
    pub mean_episode_length: Option<f64>,
    pub success_rate: Option<f64>,
    pub critic_loss: Option<f64>,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Window {
    reward_sum: f64,
    length_sum: f64,
    episodes: u64,
    critic_sum: f64,
    critic_count: u64,
    actor_sum: f64,
    actor_count: u64,
}

impl Window {
    const FIELDS: usize = 7;

    fn to_vec(self) -> Vec<f64> {
        vec![
            self.reward_sum,
            self.length_sum,
            self.episodes as f64,
            self.critic_sum,
            self.critic_count as f64,
            self.actor_sum,
            self.actor_count as f64,
        ]
    }

    fn from_slice(v: &[f64]) -> Self {
        Self {
            reward_sum: v[0],
            length_sum: v[1],
            episodes: v[2] as u64,
            critic_sum: v[3],
            critic_count: v[4] as u64,
            actor_sum: v[5],
            actor_count: v[6] as u64,
        }
    }
}

fn mean(sum: f64, n: u64) -> Option<f64> {
    (n > 0).then(|| sum / n as f64)
}

/// What happened during one call to [`Trainer::step`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    pub metric: Option<MetricRecord>,
    pub eval: Option<EvalStats>,
}

pub struct Trainer<A: ActorModel> {
    pub config: Td3Config,
    pub log_interval: u64,
    pub agent: Td3Agent<A>,
    pub buffer: ReplayBuffer,
    env: Box<dyn Environment>,
    eval_env: Box<dyn Environment>,
    step: u64,
    episode: u64,
    obs: Vec<f64>,
    episode_reward: f64,
    episode_length: u64,
    window: Window,
    last_eval: Option<EvalStats>,
}

impl<A: ActorModel> Trainer<A> {
    pub fn new(env_name: &str, actor: A, config: Td3Config, log_interval: u64) -> Result<Self> {
        config.validate()?;
        ensure!(log_interval >= 1, "log interval must be positive");
        let mut env = make_env(env_name)?;
        let eval_env = make_env(env_name)?;
        let spec = env.spec().clone();
        ensure!(
            actor.obs_dim() == spec.obs_dim && actor.act_dim() == spec.act_dim,
            "actor dimensions ({}, {}) do not match {} ({}, {})",
            actor.obs_dim(),
            actor.act_dim(),
            spec.name,
            spec.obs_dim,
            spec.act_dim
        );
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, CRITIC_SALT));
        let agent = Td3Agent::new(actor, &spec.action_ranges, &config.critic_hidden, &mut rng)?;
        let buffer = ReplayBuffer::new(config.buffer_capacity, spec.obs_dim, spec.act_dim)?;
        let obs = env.reset(derive_seed(config.seed ^ TRAIN_SALT, 0));
        Ok(Self {
            config,
            log_interval,
            agent,
            buffer,
            env,
            eval_env,
            step: 0,
            episode: 0,
            obs,
            episode_reward: 0.0,
            episode_length: 0,
            window: Window::default(),
            last_eval: None,
        })
    }

    pub fn env_name(&self) -> &'static str {
        self.env.spec().name
    }

    /// Environment steps taken so far.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Completed training episodes.
    pub fn episodes(&self) -> u64 {
        self.episode
    }

    pub fn last_eval(&self) -> Option<EvalStats> {
        self.last_eval
    }

    pub fn is_finished(&self) -> bool {
        self.step >= self.config.max_env_steps
    }

    /// Noise-free evaluation on the fixed evaluation seeds.
    pub fn evaluate(&mut self) -> Result<EvalStats> {
        let stats = evaluate(
            self.eval_env.as_mut(),
            &self.agent.actor as &dyn Policy,
            self.config.eval_episodes,
            self.config.seed ^ EVAL_SALT,
        )?;
        self.last_eval = Some(stats);
        Ok(stats)
    }

    pub fn step(&mut self) -> Result<StepOutcome> {
        ensure!(
            !self.is_finished(),
            "training budget of {} steps is exhausted",
            self.config.max_env_steps
        );
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(self.step);
        let spec = self.env.spec().clone();

        let action = if self.step < self.config.start_steps {
            spec.action_ranges
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        } else {
            noisy_action(
                &self.agent.actor.act(&self.obs)?,
                &spec,
                self.config.exploration_noise,
                &mut rng,
            )
        };
        let result = self.env.step(&action)?;
        self.buffer.push(&Transition {
            obs: std::mem::take(&mut self.obs),
            action,
            reward: result.reward,
            next_obs: result.obs.clone(),
            done: result.success,
        })?;
        self.episode_reward += result.reward;
        self.episode_length += 1;
        self.obs = result.obs;
        if result.done {
            self.window.reward_sum += self.episode_reward;
            self.window.length_sum += self.episode_length as f64;
            self.window.episodes += 1;
            self.episode += 1;
            self.episode_reward = 0.0;
            self.episode_length = 0;
            self.obs = self
                .env
                .reset(derive_seed(self.config.seed ^ TRAIN_SALT, self.episode));
        }

        if self.step >= self.config.start_steps && self.buffer.len() >= self.config.batch_size {
            let batch = self.buffer.sample(self.config.batch_size, &mut rng)?;
            let stats = self
                .agent
                .update(&batch, &self.config, &mut rng)
                .map_err(|e| match e {
                    Error::Training(msg) => {
                        Error::Training(format!("step {}: {msg}", self.step + 1))
                    }
                    other => other,
                })?;
            self.window.critic_sum += stats.critic_loss;
            self.window.critic_count += 1;
            if let Some(a) = stats.actor_loss {
                self.window.actor_sum += a;
                self.window.actor_count += 1;
            }
        }
        self.step += 1;

        let mut outcome = StepOutcome::default();
        if self.step.is_multiple_of(self.config.eval_interval) {
            outcome.eval = Some(self.evaluate()?);
        }
        if self.step.is_multiple_of(self.log_interval) {
            outcome.metric = Some(self.take_metric());
        }
        Ok(outcome)
    }

    /// Closes the current logging window.
    pub fn take_metric(&mut self) -> MetricRecord {
        let w = std::mem::take(&mut self.window);
        MetricRecord {
            step: self.step,
            episode: self.episode,
            mean_reward: mean(w.reward_sum, w.episodes),
            mean_episode_length: mean(w.length_sum, w.episodes),
            success_rate: self.last_eval.map(|e| e.success_rate),
            critic_loss: mean(w.critic_sum, w.critic_count),
            actor_loss: mean(w.actor_sum, w.actor_count),
        }
    }

    /// Everything needed to resume: networks, optimiser moments, replay
    /// contents, environment state and counters.
    pub fn snapshot(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push(Tensor::scalar(ACTOR_KIND_TENSOR, A::KIND.code()));
        let env_code = ENV_NAMES.iter().position(|&n| n == self.env_name());
        ck.push(Tensor::scalar(
            ENV_TENSOR,
            env_code.expect("trainer environments come from the registry") as f64,
        ));
        self.agent.actor.write_checkpoint("actor", &mut ck);
        self.agent
            .actor_target
            .write_checkpoint("actor_target", &mut ck);
        for k in 0..2 {
            ck.push_params(&format!("critic.{k}"), &self.agent.critics[k]);
            ck.push_params(&format!("critic_target.{k}"), &self.agent.critic_targets[k]);
            self.agent.critic_opts[k].write_checkpoint(&format!("opt.critic.{k}"), &mut ck);
        }
        self.agent.actor_opt.write_checkpoint("opt.actor", &mut ck);
        ck.push(Tensor::scalar("train.updates", self.agent.updates as f64));

        let b = &self.buffer;
        ck.push(Tensor::vector(
            "replay.meta",
            vec![b.capacity() as f64, b.cursor() as f64, b.len() as f64],
        ));
        for (name, data, cols) in b.columns() {
            ck.push(Tensor {
                name: format!("replay.{name}"),
                dims: vec![b.capacity(), cols],
                data: data.to_vec(),
            });
        }

        ck.push(Tensor::vector("train.env_state", self.env.state()));
        ck.push(Tensor::vector("train.obs", self.obs.clone()));
        ck.push(Tensor::vector(
            "train.counters",
            vec![
                self.step as f64,
                self.episode as f64,
                self.episode_reward,
                self.episode_length as f64,
            ],
        ));
        ck.push(Tensor::vector("train.window", self.window.to_vec()));
        if let Some(e) = self.last_eval {
            ck.push(Tensor::vector(
                "train.last_eval",
                vec![e.mean_reward, e.mean_episode_length, e.success_rate],
            ));
        }
        ck
    }

    /// Rebuilds a trainer from [`Trainer::snapshot`]. `config` must describe
    /// the same run; only `max_env_steps` and the cadences may differ.
    pub fn restore(
        env_name: &str,
        ck: &Checkpoint,
        config: Td3Config,
        log_interval: u64,
    ) -> Result<Self> {
        let kind = crate::actor::ActorKind::from_code(ck.scalar(ACTOR_KIND_TENSOR)?)?;
        if kind != A::KIND {
            return Err(Error::Format(format!(
                "checkpoint holds a {} actor, expected {}",
                kind.name(),
                A::KIND.name()
            )));
        }
        if let Some(stored) = snapshot_env(ck)? {
            ensure!(
                stored == env_name,
                "checkpoint was trained on {stored}, not {env_name}"
            );
        }
        let actor = A::read_checkpoint("actor", ck)?;
        let mut t = Self::new(env_name, actor, config, log_interval)?;
        t.agent.actor_target = A::read_checkpoint("actor_target", ck)?;
        for k in 0..2 {
            t.agent.critics[k] = read_mlp(&format!("critic.{k}"), ck, false)?;
            t.agent.critic_targets[k] = read_mlp(&format!("critic_target.{k}"), ck, false)?;
            t.agent.critic_opts[k] =
                Adam::read_checkpoint(&format!("opt.critic.{k}"), ck, AdamConfig::default())?;
        }
        t.agent.actor_opt = Adam::read_checkpoint("opt.actor", ck, AdamConfig::default())?;
        t.agent.updates = ck.scalar("train.updates")? as u64;
        let critic_in = t.agent.critics[0].input_dim();
        ensure!(
            critic_in == t.agent.actor.obs_dim() + t.agent.actor.act_dim(),
            "stored critic input width {critic_in} does not match the environment"
        );

        let meta = &ck.require("replay.meta")?.data;
        ensure!(meta.len() == 3, "replay metadata must hold 3 values");
        let capacity = meta[0] as usize;
        ensure!(
            capacity == t.config.buffer_capacity,
            "checkpoint replay capacity {capacity} differs from configured {}",
            t.config.buffer_capacity
        );
        let col = |name: &str| {
            ck.require(&format!("replay.{name}"))
                .map(|t| t.data.as_slice())
        };
        t.buffer = ReplayBuffer::from_columns(
            capacity,
            t.buffer.obs_dim(),
            t.buffer.act_dim(),
            meta[1] as usize,
            meta[2] as usize,
            [
                col("obs")?,
                col("actions")?,
                col("rewards")?,
                col("next_obs")?,
                col("dones")?,
            ],
        )?;

        t.env.restore(&ck.require("train.env_state")?.data)?;
        t.obs = ck.require("train.obs")?.data.clone();
        ensure!(
            t.obs.len() == t.env.spec().obs_dim,
            "stored observation has the wrong width"
        );
        let c = &ck.require("train.counters")?.data;
        ensure!(c.len() == 4, "training counters must hold 4 values");
        t.step = c[0] as u64;
        t.episode = c[1] as u64;
        t.episode_reward = c[2];
        t.episode_length = c[3] as u64;
        let w = &ck.require("train.window")?.data;
        ensure!(
            w.len() == Window::FIELDS,
            "training window must hold {} values",
            Window::FIELDS
        );
        t.window = Window::from_slice(w);
        t.last_eval = match ck.get("train.last_eval") {
            Some(e) if e.data.len() == 3 => Some(EvalStats {
                mean_reward: e.data[0],
                mean_episode_length: e.data[1],
                success_rate: e.data[2],
            }),
            Some(_) => return Err(Error::Format("last evaluation must hold 3 values".into())),
            None => None,
        };
        Ok(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::BaselineActor;
    use crate::envs::point_reach_spec;

    fn small_config() -> Td3Config {
        Td3Config {
            batch_size: 8,
            buffer_capacity: 300,
            start_steps: 20,
            max_env_steps: 120,
            eval_interval: 50,
            eval_episodes: 2,
            critic_hidden: vec![8],
            seed: 3,
            ..Default::default()
        }
    }

    fn trainer() -> Trainer<BaselineActor> {
        let spec = point_reach_spec();
        let actor = BaselineActor::new(spec.obs_dim, &[8], &spec.action_ranges, 3).unwrap();
        Trainer::new("point_reach", actor, small_config(), 10).unwrap()
    }

    fn run(t: &mut Trainer<BaselineActor>, until: u64) -> Vec<MetricRecord> {
        let mut out = Vec::new();
        while t.steps() < until {
            out.extend(t.step().unwrap().metric);
        }
        out
    }

    #[test]
    fn resumed_run_matches_uninterrupted_run() {
        let mut a = trainer();
        let full = run(&mut a, 120);
        let mut b = trainer();
        let mut first = run(&mut b, 70);
        let ck = b.snapshot();
        let mut bytes = Vec::new();
        ck.write_to(&mut bytes).unwrap();
        let ck = Checkpoint::read_from(bytes.as_slice()).unwrap();
        let mut c =
            Trainer::<BaselineActor>::restore("point_reach", &ck, small_config(), 10).unwrap();
        first.extend(run(&mut c, 120));
        assert_eq!(first, full);
        assert_eq!(c.agent.actor, a.agent.actor);
        assert_eq!(c.buffer, a.buffer);
    }

    #[test]
    fn budget_is_enforced() {
        let mut t = trainer();
        run(&mut t, 120);
        assert!(t.is_finished());
        assert!(t.step().is_err());
    }

    #[test]
    fn wrong_actor_kind_is_rejected() {
        let t = trainer();
        let ck = t.snapshot();
        assert!(Trainer::<crate::popsan::PopSanParams>::restore(
            "point_reach",
            &ck,
            small_config(),
            10
        )
        .is_err());
    }

    #[test]
    fn snapshot_records_its_environment() {
        let ck = trainer().snapshot();
        assert_eq!(snapshot_env(&ck).unwrap(), Some("point_reach"));
        assert!(Trainer::<BaselineActor>::restore("planar_pick", &ck, small_config(), 10).is_err());
    }
}
