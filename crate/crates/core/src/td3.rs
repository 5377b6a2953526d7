//! Twin-delayed deterministic policy gradient (TD3) with a pluggable actor.
//!
//! Critics are rectifier MLPs on the concatenated `(obs, action)` input. The
//! actor is anything implementing [`ActorModel`]; its gradient is
//! `d(-mean Q1(s, actor(s)))/da`, handed to the actor's own backward pass.

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::actor::ActorModel;
use crate::error::{ensure, Error, Result};
use crate::mlp::{Mlp, MlpGrads, OutputActivation};
use crate::optim::Adam;
use crate::params::polyak_update;
use crate::replay::Batch;

#[derive(Debug, Clone, PartialEq)]
pub struct Td3Config {
    pub discount: f64,
    pub polyak: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Gaussian exploration noise, as a fraction of the action half-range.
    pub exploration_noise: f64,
    /// Target smoothing noise, as a fraction of the action half-range.
    pub target_noise: f64,
    pub target_noise_clip: f64,
    pub policy_delay: u64,
    /// Uniform random actions are taken for this many initial steps.
    pub start_steps: u64,
    pub max_env_steps: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub critic_hidden: Vec<usize>,
    pub seed: u64,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            discount: 0.99,
            polyak: 0.005,
            actor_lr: 1e-4,
            critic_lr: 1e-3,
            batch_size: 256,
            buffer_capacity: 100_000,
            exploration_noise: 0.1,
            target_noise: 0.2,
            target_noise_clip: 0.5,
            policy_delay: 2,
            start_steps: 1000,
            max_env_steps: 100_000,
            eval_interval: 2000,
            eval_episodes: 10,
            critic_hidden: vec![256, 256],
            seed: 0,
        }
    }
}

impl Td3Config {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.discount > 0.0 && self.discount < 1.0,
            "discount must lie in (0, 1)"
        );
        ensure!(
            self.polyak > 0.0 && self.polyak <= 1.0,
            "polyak must lie in (0, 1]"
        );
        ensure!(self.policy_delay >= 1, "policy_delay must be at least 1");
        ensure!(self.batch_size >= 1, "batch_size must be positive");
        ensure!(
            self.buffer_capacity > self.batch_size,
            "buffer capacity must exceed batch size"
        );
        ensure!(
            self.actor_lr > 0.0 && self.critic_lr > 0.0,
            "learning rates must be positive"
        );
        ensure!(
            self.exploration_noise >= 0.0
                && self.target_noise >= 0.0
                && self.target_noise_clip >= 0.0,
            "noise scales must be non-negative"
        );
        ensure!(
            self.eval_interval >= 1 && self.eval_episodes >= 1,
            "evaluation cadence must be positive"
        );
        ensure!(
            self.critic_hidden.iter().all(|&h| h > 0),
            "critic hidden sizes must be positive"
        );
        Ok(())
    }
}

pub fn init_critic<R: Rng + ?Sized>(
    obs_dim: usize,
    act_dim: usize,
    hidden: &[usize],
    rng: &mut R,
) -> Result<Mlp> {
    let mut sizes = vec![obs_dim + act_dim];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    Mlp::new(&sizes, OutputActivation::Linear, rng)
}

fn critic_input(obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
    ensure!(
        obs.nrows() == actions.nrows(),
        "observation and action batches differ in length"
    );
    concatenate(Axis(1), &[obs, actions]).map_err(|e| Error::Contract(e.to_string()))
}

/// `Q(s, a)` for every row.
pub fn critic_forward(
    critic: &Mlp,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
) -> Result<Array1<f64>> {
    ensure!(critic.output_dim() == 1, "critic must have a single output");
    let x = critic_input(obs, actions)?;
    Ok(critic.forward(x.view())?.output.column(0).to_owned())
}

/// Gradient of `(1/B) sum_b (Q(s_b, a_b) - y_b)^2`, returned with the loss.
pub fn critic_backward(
    critic: &Mlp,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    targets: ArrayView1<f64>,
) -> Result<(MlpGrads, f64)> {
    let batch = obs.nrows();
    ensure!(batch > 0, "critic batch must be non-empty");
    ensure!(targets.len() == batch, "target count does not match batch");
    if targets.iter().any(|y| !y.is_finite()) {
        return Err(Error::Training("non-finite Bellman targets".into()));
    }
    let x = critic_input(obs, actions)?;
    let trace = critic.forward(x.view())?;
    let q = trace.output.column(0);
    let residual = &q - &targets;
    let loss = residual.mapv(|r| r * r).sum() / batch as f64;
    let grad_q = (residual * (2.0 / batch as f64)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&trace, grad_q.view())?;
    Ok((grads, loss))
}

/// `dQ/da` for every row, i.e. the action block of the input gradient.
pub fn critic_action_gradient(
    critic: &Mlp,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
) -> Result<(Array1<f64>, Array2<f64>)> {
    let x = critic_input(obs, actions)?;
    let trace = critic.forward(x.view())?;
    let ones = Array2::ones((obs.nrows(), 1));
    let (_, gx) = critic.backward(&trace, ones.view())?;
    Ok((
        trace.output.column(0).to_owned(),
        gx.slice(s![.., obs.ncols()..]).to_owned(),
    ))
}

/// `y = r + gamma * (1 - done) * min(q1, q2)`.
pub fn bellman_targets(
    rewards: ArrayView1<f64>,
    dones: ArrayView1<f64>,
    q1_next: ArrayView1<f64>,
    q2_next: ArrayView1<f64>,
    discount: f64,
) -> Array1<f64> {
    let mut y = rewards.to_owned();
    for i in 0..y.len() {
        if dones[i] == 0.0 {
            y[i] += discount * q1_next[i].min(q2_next[i]);
        }
    }
    y
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    /// Mean of the two critic losses.
    pub critic_loss: f64,
    /// Present on steps where the actor was updated.
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3Agent<A: ActorModel> {
    pub actor: A,
    pub actor_target: A,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub act_low: Vec<f64>,
    pub act_high: Vec<f64>,
    /// Number of completed [`Td3Agent::update`] calls.
    pub updates: u64,
}

impl<A: ActorModel> Td3Agent<A> {
    pub fn new<R: Rng + ?Sized>(
        actor: A,
        action_ranges: &[(f64, f64)],
        critic_hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        ensure!(
            action_ranges.len() == actor.act_dim(),
            "action ranges do not match actor output"
        );
        let (o, a) = (actor.obs_dim(), actor.act_dim());
        let c1 = init_critic(o, a, critic_hidden, rng)?;
        let c2 = init_critic(o, a, critic_hidden, rng)?;
        Ok(Self {
            actor_target: actor.clone(),
            actor,
            critic_targets: [c1.clone(), c2.clone()],
            critics: [c1, c2],
            actor_opt: Adam::default(),
            critic_opts: [Adam::default(), Adam::default()],
            act_low: action_ranges.iter().map(|r| r.0).collect(),
            act_high: action_ranges.iter().map(|r| r.1).collect(),
            updates: 0,
        })
    }

    fn half_range(&self, j: usize) -> f64 {
        0.5 * (self.act_high[j] - self.act_low[j])
    }

    /// Smoothed target actions for `next_obs`, clamped to the action bounds.
    pub fn target_actions<R: Rng + ?Sized>(
        &self,
        next_obs: ArrayView2<f64>,
        config: &Td3Config,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let (mut a, _) = self.actor_target.forward_batch(next_obs)?;
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        for mut row in a.rows_mut() {
            for (j, x) in row.iter_mut().enumerate() {
                let h = self.half_range(j);
                let clip = config.target_noise_clip * h;
                let noise = (normal.sample(rng) * config.target_noise * h).clamp(-clip, clip);
                *x = (*x + noise).clamp(self.act_low[j], self.act_high[j]);
            }
        }
        Ok(a)
    }

    /// One TD3 iteration on `batch`.
    pub fn update<R: Rng + ?Sized>(
        &mut self,
        batch: &Batch,
        config: &Td3Config,
        rng: &mut R,
    ) -> Result<UpdateStats> {
        ensure!(!batch.is_empty(), "empty batch");
        let next_actions = self.target_actions(batch.next_obs.view(), config, rng)?;
        let q1n = critic_forward(
            &self.critic_targets[0],
            batch.next_obs.view(),
            next_actions.view(),
        )?;
        let q2n = critic_forward(
            &self.critic_targets[1],
            batch.next_obs.view(),
            next_actions.view(),
        )?;
        let y = bellman_targets(
            batch.rewards.view(),
            batch.dones.view(),
            q1n.view(),
            q2n.view(),
            config.discount,
        );

        let mut critic_loss = 0.0;
        for k in 0..2 {
            let (grads, loss) = critic_backward(
                &self.critics[k],
                batch.obs.view(),
                batch.actions.view(),
                y.view(),
            )?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "critic {} loss is not finite",
                    k + 1
                )));
            }
            self.critic_opts[k].step(&mut self.critics[k], &grads, config.critic_lr)?;
            critic_loss += 0.5 * loss;
        }

        self.updates += 1;
        let mut actor_loss = None;
        if self.updates.is_multiple_of(config.policy_delay) {
            actor_loss = Some(self.update_actor(batch.obs.view(), config)?);
            polyak_update(&mut self.actor_target, &self.actor, config.polyak)?;
            for k in 0..2 {
                polyak_update(&mut self.critic_targets[k], &self.critics[k], config.polyak)?;
            }
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
        })
    }

    /// Gradient step on `-mean Q1(s, actor(s))`; returns that loss.
    pub fn update_actor(&mut self, obs: ArrayView2<f64>, config: &Td3Config) -> Result<f64> {
        let (actions, trace) = self.actor.forward_batch(obs)?;
        let (q, dq_da) = critic_action_gradient(&self.critics[0], obs, actions.view())?;
        let batch = obs.nrows() as f64;
        let loss = -q.mean().unwrap_or(0.0);
        if !loss.is_finite() {
            return Err(Error::Training("actor loss is not finite".into()));
        }
        let grad_actions = dq_da * (-1.0 / batch);
        let grads = self.actor.backward(&trace, grad_actions.view())?;
        self.actor
            .apply_gradients(&grads, &mut self.actor_opt, config.actor_lr)?;
        Ok(loss)
    }
}
