//! Planar double integrator that has to reach a goal point.
//!
//! Observation: `[x, y, vx, vy, goal_x - x, goal_y - y]`. Action: acceleration
//! per axis in `[-1, 1]`. Reward per step is the negative distance to the goal,
//! plus [`SUCCESS_BONUS`] on the step the point enters the goal radius.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_obs, EnvSpec, Environment, StepResult, SUCCESS_BONUS};
use crate::error::{ensure, Result};

pub const GOAL_RADIUS: f64 = 0.05;
pub const SPEED_CAP: f64 = 1.0;
pub const WORKSPACE: f64 = 1.0;
const SPAWN: f64 = 0.8;
const MIN_START_DISTANCE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointReachState {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
    pub goal: [f64; 2],
    pub t: usize,
}

impl PointReachState {
    pub fn distance(&self) -> f64 {
        (self.pos[0] - self.goal[0]).hypot(self.pos[1] - self.goal[1])
    }

    pub fn observe(&self, spec: &EnvSpec) -> Vec<f64> {
        let mut obs = vec![
            self.pos[0],
            self.pos[1],
            self.vel[0],
            self.vel[1],
            self.goal[0] - self.pos[0],
            self.goal[1] - self.pos[1],
        ];
        clip_obs(&mut obs, &spec.obs_ranges);
        obs
    }
}

pub fn point_reach_spec() -> EnvSpec {
    let w = WORKSPACE;
    EnvSpec {
        name: "point_reach",
        obs_dim: 6,
        act_dim: 2,
        obs_ranges: vec![
            (-w, w),
            (-w, w),
            (-SPEED_CAP, SPEED_CAP),
            (-SPEED_CAP, SPEED_CAP),
            (-2.0 * w, 2.0 * w),
            (-2.0 * w, 2.0 * w),
        ],
        action_ranges: vec![(-1.0, 1.0); 2],
        horizon: 100,
        dt: 0.05,
    }
}

/// One integration step: clamp the acceleration, update and cap the velocity,
/// then move and clamp the position to the workspace box.
pub fn point_reach_step(
    state: &PointReachState,
    action: &[f64],
    spec: &EnvSpec,
) -> (PointReachState, StepResult) {
    let accel = spec.clamp_action(action);
    let mut next = *state;
    for (v, &acc) in next.vel.iter_mut().zip(&accel) {
        *v += acc * spec.dt;
    }
    let speed = next.vel[0].hypot(next.vel[1]);
    if speed > SPEED_CAP {
        let scale = SPEED_CAP / speed;
        next.vel[0] *= scale;
        next.vel[1] *= scale;
    }
    for k in 0..2 {
        next.pos[k] += next.vel[k] * spec.dt;
        if next.pos[k].abs() > WORKSPACE {
            next.pos[k] = next.pos[k].clamp(-WORKSPACE, WORKSPACE);
            next.vel[k] = 0.0;
        }
    }
    next.t += 1;
    let dist = next.distance();
    let success = dist < GOAL_RADIUS;
    let reward = -dist + if success { SUCCESS_BONUS } else { 0.0 };
    let done = success || next.t >= spec.horizon;
    let obs = next.observe(spec);
    (
        next,
        StepResult {
            obs,
            reward,
            done,
            success,
        },
    )
}

#[derive(Debug, Clone)]
pub struct PointReach {
    spec: EnvSpec,
    state: PointReachState,
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl PointReach {
    pub fn new() -> Self {
        Self {
            spec: point_reach_spec(),
            state: PointReachState {
                pos: [0.0; 2],
                vel: [0.0; 2],
                goal: [0.5, 0.5],
                t: 0,
            },
        }
    }

    pub fn current(&self) -> &PointReachState {
        &self.state
    }

    pub fn set_current(&mut self, state: PointReachState) {
        self.state = state;
    }
}

impl Environment for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pos = [
            rng.random_range(-SPAWN..SPAWN),
            rng.random_range(-SPAWN..SPAWN),
        ];
        let goal = loop {
            let g = [
                rng.random_range(-SPAWN..SPAWN),
                rng.random_range(-SPAWN..SPAWN),
            ];
            if (g[0] - pos[0]).hypot(g[1] - pos[1]) >= MIN_START_DISTANCE {
                break g;
            }
        };
        self.state = PointReachState {
            pos,
            vel: [0.0; 2],
            goal,
            t: 0,
        };
        self.state.observe(&self.spec)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.spec.check_action(action)?;
        let (next, result) = point_reach_step(&self.state, action, &self.spec);
        self.state = next;
        Ok(result)
    }

    fn observe(&self) -> Vec<f64> {
        self.state.observe(&self.spec)
    }

    fn state(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            s.pos[0], s.pos[1], s.vel[0], s.vel[1], s.goal[0], s.goal[1], s.t as f64,
        ]
    }

    fn restore(&mut self, v: &[f64]) -> Result<()> {
        ensure!(
            v.len() == 7,
            "point_reach state has 7 entries, got {}",
            v.len()
        );
        self.state = PointReachState {
            pos: [v[0], v[1]],
            vel: [v[2], v[3]],
            goal: [v[4], v[5]],
            t: v[6] as usize,
        };
        Ok(())
    }
}
