//! Episode rollouts and noise-free evaluation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::actor::Policy;
use crate::envs::{EnvSpec, Environment};
use crate::error::{ensure, Result};
use crate::replay::Transition;

/// Raw per-episode signals as reported by the environment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeStats {
    pub total_reward: f64,
    pub length: usize,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalStats {
    pub mean_reward: f64,
    pub mean_episode_length: f64,
    pub success_rate: f64,
}

impl EvalStats {
    pub fn from_episodes(episodes: &[EpisodeStats]) -> Option<Self> {
        if episodes.is_empty() {
            return None;
        }
        let n = episodes.len() as f64;
        Some(Self {
            mean_reward: episodes.iter().map(|e| e.total_reward).sum::<f64>() / n,
            mean_episode_length: episodes.iter().map(|e| e.length as f64).sum::<f64>() / n,
            success_rate: episodes.iter().filter(|e| e.success).count() as f64 / n,
        })
    }
}

/// SplitMix64 finaliser over `base` and `index`, used to derive per-episode
/// reset seeds from a run seed.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Adds Gaussian noise with standard deviation `noise_std * half_range` to
/// every action component, then clamps to the action bounds.
pub fn noisy_action<R: Rng + ?Sized>(
    action: &[f64],
    spec: &EnvSpec,
    noise_std: f64,
    rng: &mut R,
) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    action
        .iter()
        .zip(&spec.action_ranges)
        .map(|(&a, &(lo, hi))| {
            let a = if noise_std > 0.0 {
                a + normal.sample(rng) * noise_std * 0.5 * (hi - lo)
            } else {
                a
            };
            a.clamp(lo, hi)
        })
        .collect()
}

/// Runs one episode from the environment's current state until it reports
/// `done`. The stored `done` flag marks task success only; hitting the
/// horizon is a truncation, not a terminal state.
pub fn rollout<R: Rng + ?Sized>(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    noise_std: f64,
    rng: &mut R,
) -> Result<(Vec<Transition>, EpisodeStats)> {
    let spec = env.spec().clone();
    let mut obs = env.observe();
    let mut transitions = Vec::new();
    let mut stats = EpisodeStats {
        total_reward: 0.0,
        length: 0,
        success: false,
    };
    loop {
        let action = noisy_action(&policy.act(&obs)?, &spec, noise_std, rng);
        let step = env.step(&action)?;
        stats.total_reward += step.reward;
        stats.length += 1;
        stats.success |= step.success;
        transitions.push(Transition {
            obs: std::mem::replace(&mut obs, step.obs.clone()),
            action,
            reward: step.reward,
            next_obs: step.obs,
            done: step.success,
        });
        if step.done {
            return Ok((transitions, stats));
        }
    }
}

/// Noise-free episodes, episode `k` reset with `derive_seed(seed, k)`.
pub fn evaluate_episodes(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<Vec<EpisodeStats>> {
    ensure!(episodes >= 1, "evaluation needs at least one episode");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    (0..episodes as u64)
        .map(|k| {
            env.reset(derive_seed(seed, k));
            Ok(rollout(env, policy, 0.0, &mut rng)?.1)
        })
        .collect()
}

pub fn evaluate(
    env: &mut dyn Environment,
    policy: &dyn Policy,
    episodes: usize,
    seed: u64,
) -> Result<EvalStats> {
    let eps = evaluate_episodes(env, policy, episodes, seed)?;
    Ok(EvalStats::from_episodes(&eps).expect("at least one episode"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actor::FnPolicy;
    use crate::envs::make_env;

    #[test]
    fn noise_free_rollouts_repeat() {
        let mut env = make_env("point_reach").unwrap();
        let policy = FnPolicy(|o: &[f64]| vec![0.3 * o[4], -0.2 * o[5]]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        env.reset(3);
        let a = rollout(env.as_mut(), &policy, 0.0, &mut rng).unwrap();
        env.reset(3);
        let b = rollout(env.as_mut(), &policy, 0.0, &mut rng).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn idle_policy_runs_to_horizon() {
        let mut env = make_env("point_reach").unwrap();
        let policy = FnPolicy(|_: &[f64]| vec![0.0, 0.0]);
        env.reset(5);
        let (tr, stats) = rollout(
            env.as_mut(),
            &policy,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(!stats.success);
        assert_eq!(stats.length, env.spec().horizon);
        assert_eq!(tr.len(), stats.length);
        assert!(tr.iter().all(|t| !t.done));
        assert!(tr.windows(2).all(|w| w[0].next_obs == w[1].obs));
    }

    #[test]
    fn single_episode_means_are_that_episode() {
        let mut env = make_env("point_reach").unwrap();
        let policy = FnPolicy(|o: &[f64]| vec![o[4], o[5]]);
        let eps = evaluate_episodes(env.as_mut(), &policy, 1, 11).unwrap();
        let stats = evaluate(env.as_mut(), &policy, 1, 11).unwrap();
        assert_eq!(stats.mean_reward, eps[0].total_reward);
        assert_eq!(stats.mean_episode_length, eps[0].length as f64);
        assert_eq!(stats.success_rate, if eps[0].success { 1.0 } else { 0.0 });
        assert!(evaluate(env.as_mut(), &policy, 0, 11).is_err());
    }

    #[test]
    fn noise_is_clamped_to_bounds() {
        let spec = make_env("planar_pick").unwrap().spec().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = noisy_action(&[0.99, -0.99, 0.0], &spec, 5.0, &mut rng);
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: Vec<u64> = (0..100).map(|k| derive_seed(7, k)).collect();
        let mut sorted = s.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), s.len());
        assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
    }
}
