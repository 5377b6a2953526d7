//! Small deterministic continuous-control tasks.
//!
//! Both tasks are kinematic, seeded only through [`Environment::reset`], and
//! clamp actions to their declared ranges, so any bounded action sequence
//! keeps the state inside the workspace.

pub mod planar_pick;
pub mod point_reach;
mod scripted;

pub use planar_pick::{planar_pick_spec, planar_pick_step, PlanarPick, PlanarPickState};
pub use point_reach::{point_reach_spec, point_reach_step, PointReach, PointReachState};
pub use scripted::{planar_pick_expert, point_reach_expert};

use crate::error::{ensure, Error, Result};

/// Reward added on the step a task is solved.
pub const SUCCESS_BONUS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvSpec {
    pub name: &'static str,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs_ranges: Vec<(f64, f64)>,
    pub action_ranges: Vec<(f64, f64)>,
    pub horizon: usize,
    /// Integration step in seconds.
    pub dt: f64,
}

impl EnvSpec {
    pub fn action_low(&self) -> Vec<f64> {
        self.action_ranges.iter().map(|r| r.0).collect()
    }

    pub fn action_high(&self) -> Vec<f64> {
        self.action_ranges.iter().map(|r| r.1).collect()
    }

    pub fn clamp_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(&self.action_ranges)
            .map(|(a, &(lo, hi))| a.clamp(lo, hi))
            .collect()
    }

    pub(crate) fn check_action(&self, action: &[f64]) -> Result<()> {
        ensure!(
            action.len() == self.act_dim,
            "{} expects {} action dimensions, got {}",
            self.name,
            self.act_dim,
            action.len()
        );
        ensure!(
            action.iter().all(|a| a.is_finite()),
            "action contains non-finite values"
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    /// Episode over: task solved or horizon reached.
    pub done: bool,
    pub success: bool,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts a new episode; initial poses are a pure function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    fn observe(&self) -> Vec<f64>;

    /// Full internal state, enough to resume an episode mid-way.
    fn state(&self) -> Vec<f64>;

    fn restore(&mut self, state: &[f64]) -> Result<()>;
}

pub const ENV_NAMES: [&str; 2] = ["point_reach", "planar_pick"];

/// Maps an observation to an action.
pub type Controller = fn(&[f64]) -> Vec<f64>;

/// The scripted reference controller for a task.
pub fn expert_for(name: &str) -> Result<Controller> {
    match name {
        "point_reach" => Ok(point_reach_expert),
        "planar_pick" => Ok(planar_pick_expert),
        other => Err(Error::Contract(format!("unknown environment `{other}`"))),
    }
}

pub fn make_env(name: &str) -> Result<Box<dyn Environment>> {
    match name {
        "point_reach" => Ok(Box::new(PointReach::new())),
        "planar_pick" => Ok(Box::new(PlanarPick::new())),
        other => Err(Error::Contract(format!(
            "unknown environment `{other}` (known: {})",
            ENV_NAMES.join(", ")
        ))),
    }
}

pub(crate) fn clip_obs(obs: &mut [f64], ranges: &[(f64, f64)]) {
    for (x, &(lo, hi)) in obs.iter_mut().zip(ranges) {
        *x = x.clamp(lo, hi);
    }
}
