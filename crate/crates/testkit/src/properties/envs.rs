use popsan::actor::FnPolicy;
use popsan::envs::{
    expert_for, make_env, Environment, PlanarPick, PointReach, ENV_NAMES, SUCCESS_BONUS,
};
use popsan::rollout::evaluate_episodes;
use proptest::prelude::*;

fn actions(act_dim: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-3.0..3.0f64, act_dim), 1..250)
}

/// (obs, reward, done, success, state) after each step.
type Record = (Vec<f64>, f64, bool, bool, Vec<f64>);

fn trajectory(env: &mut dyn Environment, seed: u64, acts: &[Vec<f64>]) -> Vec<Record> {
    let mut out = vec![(env.reset(seed), 0.0, false, false, env.state())];
    for a in acts {
        let r = env.step(a).unwrap();
        let done = r.done;
        out.push((r.obs, r.reward, r.done, r.success, env.state()));
        if done {
            break;
        }
    }
    out
}

pub fn point_reach_is_deterministic_bounded_and_capped() {
    proptest!(|(seed in any::<u64>(), acts in actions(2))| {
        let mut env = PointReach::new();
        let a = trajectory(&mut env, seed, &acts);
        prop_assert_eq!(&a, &trajectory(&mut env, seed, &acts));
        let spec = env.spec().clone();
        for (obs, reward, _, _, state) in &a {
            prop_assert!(*reward <= SUCCESS_BONUS);
            prop_assert!(state[0].abs() <= 1.0 && state[1].abs() <= 1.0);
            for (x, (lo, hi)) in obs.iter().zip(&spec.obs_ranges) {
                prop_assert!(x >= lo && x <= hi);
            }
        }
    });
}

pub fn planar_pick_is_deterministic_bounded_and_capped() {
    proptest!(|(seed in any::<u64>(), acts in actions(3))| {
        let mut env = PlanarPick::new();
        let a = trajectory(&mut env, seed, &acts);
        prop_assert_eq!(&a, &trajectory(&mut env, seed, &acts));
        let spec = env.spec().clone();
        for (obs, reward, _, _, state) in &a {
            prop_assert!(*reward <= SUCCESS_BONUS);
            for (x, (lo, hi)) in obs.iter().zip(&spec.obs_ranges) {
                prop_assert!(x >= lo && x <= hi);
            }
            // joints within limits, object within reach and never under the table
            prop_assert!(state[0].abs() <= std::f64::consts::PI && state[1].abs() <= std::f64::consts::PI);
            prop_assert!(state[2].hypot(state[3]) <= 1.0 + 1e-12);
            prop_assert!(state[3] >= 0.0);
        }
    });
}

pub fn scripted_controllers_solve_every_seed() {
    for name in ENV_NAMES {
        let mut env = make_env(name).unwrap();
        let expert = FnPolicy(expert_for(name).unwrap());
        let episodes = evaluate_episodes(env.as_mut(), &expert, 100, 77).unwrap();
        let failures: Vec<usize> = episodes
            .iter()
            .enumerate()
            .filter(|(_, e)| !e.success)
            .map(|(k, _)| k)
            .collect();
        assert!(
            failures.is_empty(),
            "{name}: scripted controller failed on episodes {failures:?}"
        );
    }
}

pub fn full_thrust_from_unit_distance_arrives_within_forty_steps() {
    use popsan::envs::{point_reach_spec, point_reach_step, PointReachState};
    let spec = point_reach_spec();
    let mut s = PointReachState {
        pos: [-0.5, 0.0],
        vel: [0.0, 0.0],
        goal: [0.5, 0.0],
        t: 0,
    };
    let mut steps = 0;
    loop {
        let (next, r) = point_reach_step(&s, &[1.0, 0.0], &spec);
        s = next;
        steps += 1;
        if r.success {
            break;
        }
        assert!(steps < 40, "not there after 40 steps");
    }
    assert!(steps <= 40);
}
