//! Two-link planar arm that has to grasp an object and lift it to a target
//! height.
//!
//! The arm is a kinematic integrator: actions are joint velocity commands.
//! The third action channel is the gripper; values above
//! [`GRIP_THRESHOLD`] close it. A closed gripper within [`GRASP_RADIUS`] of the
//! object grasps it, after which the object follows the end effector until
//! the gripper opens and the object drops back to the table.
//!
//! Reward is staged: before the grasp it is the negative end-effector to
//! object distance, afterwards the negative height error. Holding the object
//! within [`HEIGHT_TOLERANCE`] of the target for [`HOLD_STEPS`] consecutive
//! steps solves the task.
//!
//! Observation: `[q1, q2, ee_x, ee_y, obj_x - ee_x, obj_y - ee_y,
//! target - obj_y, held]`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{clip_obs, EnvSpec, Environment, StepResult, SUCCESS_BONUS};
use crate::error::{ensure, Result};

pub const LINK_LENGTHS: [f64; 2] = [0.5, 0.5];
/// Joint speed at full command, rad/s.
pub const MAX_JOINT_SPEED: f64 = 2.0;
pub const GRIP_THRESHOLD: f64 = 0.5;
pub const GRASP_RADIUS: f64 = 0.05;
pub const HEIGHT_TOLERANCE: f64 = 0.02;
pub const HOLD_STEPS: usize = 10;
pub const TABLE_HEIGHT: f64 = 0.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarPickState {
    pub joints: [f64; 2],
    pub object: [f64; 2],
    pub target_height: f64,
    pub held: bool,
    /// Consecutive steps the held object has been within tolerance.
    pub hold_count: usize,
    pub t: usize,
}

pub fn forward_kinematics(joints: [f64; 2]) -> [f64; 2] {
    let [l1, l2] = LINK_LENGTHS;
    let a = joints[0];
    let b = joints[0] + joints[1];
    [l1 * a.cos() + l2 * b.cos(), l1 * a.sin() + l2 * b.sin()]
}

impl PlanarPickState {
    pub fn end_effector(&self) -> [f64; 2] {
        forward_kinematics(self.joints)
    }

    pub fn grasp_distance(&self) -> f64 {
        let ee = self.end_effector();
        (ee[0] - self.object[0]).hypot(ee[1] - self.object[1])
    }

    pub fn observe(&self, spec: &EnvSpec) -> Vec<f64> {
        let ee = self.end_effector();
        let mut obs = vec![
            self.joints[0],
            self.joints[1],
            ee[0],
            ee[1],
            self.object[0] - ee[0],
            self.object[1] - ee[1],
            self.target_height - self.object[1],
            if self.held { 1.0 } else { 0.0 },
        ];
        clip_obs(&mut obs, &spec.obs_ranges);
        obs
    }
}

pub fn planar_pick_spec() -> EnvSpec {
    EnvSpec {
        name: "planar_pick",
        obs_dim: 8,
        act_dim: 3,
        obs_ranges: vec![
            (-PI, PI),
            (-PI, PI),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-2.0, 2.0),
            (-2.0, 2.0),
            (-1.0, 1.0),
            (0.0, 1.0),
        ],
        action_ranges: vec![(-1.0, 1.0); 3],
        horizon: 200,
        dt: 0.05,
    }
}

pub fn planar_pick_step(
    state: &PlanarPickState,
    action: &[f64],
    spec: &EnvSpec,
) -> (PlanarPickState, StepResult) {
    let a = spec.clamp_action(action);
    let mut next = *state;
    for (joint, &speed) in next.joints.iter_mut().zip(&a[..2]) {
        *joint = (*joint + speed * MAX_JOINT_SPEED * spec.dt).clamp(-PI, PI);
    }
    let closed = a[2] > GRIP_THRESHOLD;
    let ee = next.end_effector();
    if next.held && !closed {
        next.held = false;
        next.object[1] = TABLE_HEIGHT;
    } else if !next.held && closed && next.grasp_distance() < GRASP_RADIUS {
        next.held = true;
    }
    if next.held {
        // the table stops a carried object from following the gripper down
        next.object = [ee[0], ee[1].max(TABLE_HEIGHT)];
    }

    let reward = if next.held {
        let err = (next.object[1] - next.target_height).abs();
        next.hold_count = if err < HEIGHT_TOLERANCE {
            next.hold_count + 1
        } else {
            0
        };
        -err
    } else {
        next.hold_count = 0;
        -next.grasp_distance()
    };
    next.t += 1;
    let success = next.hold_count >= HOLD_STEPS;
    let done = success || next.t >= spec.horizon;
    let obs = next.observe(spec);
    (
        next,
        StepResult {
            obs,
            reward: reward + if success { SUCCESS_BONUS } else { 0.0 },
            done,
            success,
        },
    )
}

#[derive(Debug, Clone)]
pub struct PlanarPick {
    spec: EnvSpec,
    state: PlanarPickState,
}

impl Default for PlanarPick {
    fn default() -> Self {
        Self::new()
    }
}

impl PlanarPick {
    pub fn new() -> Self {
        Self {
            spec: planar_pick_spec(),
            state: PlanarPickState {
                joints: [PI / 2.0, -PI / 2.0],
                object: [0.45, TABLE_HEIGHT],
                target_height: 0.35,
                held: false,
                hold_count: 0,
                t: 0,
            },
        }
    }

    pub fn current(&self) -> &PlanarPickState {
        &self.state
    }

    pub fn set_current(&mut self, state: PlanarPickState) {
        self.state = state;
    }
}

impl Environment for PlanarPick {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.state = PlanarPickState {
            joints: [rng.random_range(1.2..1.9), rng.random_range(-2.0..-1.2)],
            object: [rng.random_range(0.3..0.6), TABLE_HEIGHT],
            target_height: rng.random_range(0.2..0.5),
            held: false,
            hold_count: 0,
            t: 0,
        };
        self.state.observe(&self.spec)
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        self.spec.check_action(action)?;
        let (next, result) = planar_pick_step(&self.state, action, &self.spec);
        self.state = next;
        Ok(result)
    }

    fn observe(&self) -> Vec<f64> {
        self.state.observe(&self.spec)
    }

    fn state(&self) -> Vec<f64> {
        let s = &self.state;
        vec![
            s.joints[0],
            s.joints[1],
            s.object[0],
            s.object[1],
            s.target_height,
            if s.held { 1.0 } else { 0.0 },
            s.hold_count as f64,
            s.t as f64,
        ]
    }

    fn restore(&mut self, v: &[f64]) -> Result<()> {
        ensure!(
            v.len() == 8,
            "planar_pick state has 8 entries, got {}",
            v.len()
        );
        self.state = PlanarPickState {
            joints: [v[0], v[1]],
            object: [v[2], v[3]],
            target_height: v[4],
            held: v[5] != 0.0,
            hold_count: v[6] as usize,
            t: v[7] as usize,
        };
        Ok(())
    }
}

/// Elbow-down inverse kinematics (`q2 <= 0`). Targets outside the annulus of
/// reachable points are projected onto it.
pub fn inverse_kinematics(target: [f64; 2]) -> [f64; 2] {
    let [l1, l2] = LINK_LENGTHS;
    let r2 = target[0] * target[0] + target[1] * target[1];
    let c = ((r2 - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
    let q2 = -c.acos();
    let q1 = target[1].atan2(target[0]) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
    [wrap_angle(q1), q2]
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a < -PI {
        a += 2.0 * PI;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_state() -> PlanarPickState {
        PlanarPickState {
            joints: [PI / 2.0, -PI / 2.0],
            object: [0.45, TABLE_HEIGHT],
            target_height: 0.35,
            held: false,
            hold_count: 0,
            t: 0,
        }
    }

    #[test]
    fn closing_far_from_object_does_not_grasp() {
        let spec = planar_pick_spec();
        let s = base_state();
        let (next, r) = planar_pick_step(&s, &[0.0, 0.0, 1.0], &spec);
        assert!(!next.held);
        assert_eq!(r.reward, -next.grasp_distance());
    }

    #[test]
    fn closing_near_object_grasps() {
        let spec = planar_pick_spec();
        let mut s = base_state();
        s.object = s.end_effector();
        s.object[0] += 0.03;
        let (next, r) = planar_pick_step(&s, &[0.0, 0.0, 1.0], &spec);
        assert!(next.held);
        assert_eq!(next.object, next.end_effector());
        assert_eq!(r.reward, -(next.object[1] - next.target_height).abs());
    }

    #[test]
    fn holding_at_target_height_for_ten_steps_succeeds() {
        let spec = planar_pick_spec();
        let mut s = base_state();
        s.held = true;
        s.object = s.end_effector();
        s.target_height = s.object[1];
        for k in 1..=HOLD_STEPS {
            let (next, r) = planar_pick_step(&s, &[0.0, 0.0, 1.0], &spec);
            s = next;
            assert_eq!(r.success, k == HOLD_STEPS);
            assert_eq!(r.done, k == HOLD_STEPS);
            if r.success {
                assert_eq!(r.reward, SUCCESS_BONUS);
            }
        }
    }

    #[test]
    fn opening_drops_the_object() {
        let spec = planar_pick_spec();
        let mut s = base_state();
        s.held = true;
        s.object = s.end_effector();
        let (next, _) = planar_pick_step(&s, &[0.0, 0.0, 0.0], &spec);
        assert!(!next.held);
        assert_eq!(next.object[1], TABLE_HEIGHT);
        assert_eq!(next.hold_count, 0);
    }

    #[test]
    fn inverse_kinematics_round_trips() {
        for target in [[0.3, 0.0], [0.6, 0.0], [0.45, 0.5], [0.2, 0.3]] {
            let ee = forward_kinematics(inverse_kinematics(target));
            assert!(
                (ee[0] - target[0]).abs() < 1e-12 && (ee[1] - target[1]).abs() < 1e-12,
                "{target:?} -> {ee:?}"
            );
        }
    }

    #[test]
    fn reset_is_seeded_and_state_round_trips() {
        let mut env = PlanarPick::new();
        let a = env.reset(9);
        assert_eq!(a, env.reset(9));
        assert_ne!(a, env.reset(10));
        assert_eq!(a.len(), 8);
        env.step(&[0.5, -0.5, 0.0]).unwrap();
        let saved = env.state();
        let r1 = env.step(&[0.1, 0.2, 1.0]).unwrap();
        env.restore(&saved).unwrap();
        assert_eq!(env.step(&[0.1, 0.2, 1.0]).unwrap(), r1);
    }
}
