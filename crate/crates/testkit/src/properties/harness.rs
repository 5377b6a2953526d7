use ndarray::Array1;
use popsan::actor::{ActorModel, BaselineActor};
use popsan::envs::point_reach_spec;
use popsan::params::polyak_update;
use popsan::popsan::{init_popsan, PopSanArch, PopSanParams};
use popsan::replay::{ReplayBuffer, Transition};
use popsan::td3::{bellman_targets, Td3Config};
use popsan::train::Trainer;
use popsan::Parameters;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn replay_sampling_is_uniform() {
    let mut buf = ReplayBuffer::new(100, 1, 1).unwrap();
    for k in 0..100 {
        buf.push(&Transition {
            obs: vec![k as f64],
            action: vec![0.0],
            reward: 0.0,
            next_obs: vec![0.0],
            done: false,
        })
        .unwrap();
    }
    let draws = 100_000;
    let mut counts = [0u32; 100];
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in buf.sample_indices(draws, &mut rng).unwrap() {
        counts[i] += 1;
    }
    let p = 0.01;
    let expected = draws as f64 * p;
    let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
    for (i, &c) in counts.iter().enumerate() {
        assert!(
            (c as f64 - expected).abs() <= 3.0 * sigma,
            "index {i} drawn {c} times, expected {expected} +- {}",
            3.0 * sigma
        );
    }
    // Pearson chi-square with 99 degrees of freedom; 148.2 is the 0.999 quantile
    let chi2: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    assert!(chi2 < 148.2, "chi-square {chi2}");
}

fn small_popsan(seed: u64) -> PopSanParams {
    let mut a = PopSanArch::new(2, 1);
    a.pop_size = 3;
    a.hidden_sizes = vec![4];
    init_popsan(&a, &[(-1.0, 1.0); 2], seed).unwrap()
}

pub fn soft_update_moves_target_towards_online() {
    proptest!(|(s1 in any::<u64>(), s2 in any::<u64>(), tau in 0.001..=1.0f64)| {
        let online = small_popsan(s1);
        let old = small_popsan(s2);
        let mut target = old.clone();
        polyak_update(&mut target, &online, tau).unwrap();
        for ((&t, &o), &n) in target.flatten().iter().zip(&old.flatten()).zip(&online.flatten()) {
            prop_assert!(t >= o.min(n) && t <= o.max(n));
        }
    });
}

pub fn target_takes_the_smaller_critic() {
    proptest!(|(rows in prop::collection::vec((-10.0..10.0f64, -50.0..50.0f64, -50.0..50.0f64, prop::bool::ANY), 1..20), gamma in 0.0..1.0f64)| {
        let r = Array1::from_iter(rows.iter().map(|x| x.0));
        let q1 = Array1::from_iter(rows.iter().map(|x| x.1));
        let q2 = Array1::from_iter(rows.iter().map(|x| x.2));
        let d = Array1::from_iter(rows.iter().map(|x| if x.3 { 1.0 } else { 0.0 }));
        let y = bellman_targets(r.view(), d.view(), q1.view(), q2.view(), gamma);
        for i in 0..y.len() {
            if d[i] == 1.0 {
                prop_assert_eq!(y[i], r[i]);
            } else {
                let lo = r[i] + gamma * q1[i].min(q2[i]);
                let hi = r[i] + gamma * q1[i].max(q2[i]);
                prop_assert!(y[i] >= lo && y[i] <= hi);
                prop_assert_eq!(y[i], lo);
            }
        }
    });
}

fn tiny_config() -> Td3Config {
    Td3Config {
        batch_size: 16,
        buffer_capacity: 500,
        start_steps: 30,
        max_env_steps: 200,
        eval_interval: 100,
        eval_episodes: 1,
        critic_hidden: vec![16],
        seed: 9,
        ..Default::default()
    }
}

fn drive<A: ActorModel>(actor: A) -> (A, A) {
    let before = actor.clone();
    let mut t = Trainer::new("point_reach", actor, tiny_config(), 50).unwrap();
    let mut evals = 0;
    while !t.is_finished() {
        evals += t.step().unwrap().eval.is_some() as usize;
    }
    assert_eq!(evals, 2);
    assert_eq!(t.agent.updates, 200 - 30);
    (before, t.agent.actor.clone())
}

pub fn both_actor_kinds_train_through_the_same_loop() {
    let spec = point_reach_spec();
    let mut a = PopSanArch::new(spec.obs_dim, spec.act_dim);
    a.hidden_sizes = vec![16];
    let (before, after) = drive(init_popsan(&a, &spec.obs_ranges, 1).unwrap());
    assert_ne!(before.flatten(), after.flatten());
    let (before, after) =
        drive(BaselineActor::new(spec.obs_dim, &[16], &spec.action_ranges, 1).unwrap());
    assert_ne!(before.flatten(), after.flatten());
}
