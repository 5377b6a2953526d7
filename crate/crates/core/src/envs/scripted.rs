//! Hand-written reference controllers. They read only the observation, so
//! they can drive any rollout the learned actors can.

use super::planar_pick::{inverse_kinematics, wrap_angle, GRASP_RADIUS, MAX_JOINT_SPEED};

/// PD controller on the goal offset of a `point_reach` observation.
pub fn point_reach_expert(obs: &[f64]) -> Vec<f64> {
    const KP: f64 = 8.0;
    const KD: f64 = 4.0;
    (0..2)
        .map(|k| (KP * obs[4 + k] - KD * obs[2 + k]).clamp(-1.0, 1.0))
        .collect()
}

/// Reach the object, close the gripper once inside the grasp radius, then
/// lift until the height error vanishes.
pub fn planar_pick_expert(obs: &[f64]) -> Vec<f64> {
    let q = [obs[0], obs[1]];
    let ee = [obs[2], obs[3]];
    let held = obs[7] > 0.5;
    let (target, grip) = if held {
        ([ee[0], ee[1] + obs[6]], 1.0)
    } else {
        let close = obs[4].hypot(obs[5]) < 0.8 * GRASP_RADIUS;
        (
            [ee[0] + obs[4], ee[1] + obs[5]],
            if close { 1.0 } else { 0.0 },
        )
    };
    let q_star = inverse_kinematics(target);
    // half the remaining joint error per step, within the speed limit
    let gain = 0.5 / (MAX_JOINT_SPEED * 0.05);
    vec![
        (gain * wrap_angle(q_star[0] - q[0])).clamp(-1.0, 1.0),
        (gain * (q_star[1] - q[1])).clamp(-1.0, 1.0),
        grip,
    ]
}
