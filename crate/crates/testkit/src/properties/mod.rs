//! Invariants of every module, grouped by module.

pub mod energy;
pub mod envs;
pub mod harness;
pub mod popsan;
pub mod snn;

/// Every invariant check by name, in module order.
pub fn all() -> Vec<(&'static str, fn())> {
    vec![
        (
            "snn: binary spikes at threshold crossings",
            snn::spikes_are_binary_and_mark_threshold_crossings,
        ),
        (
            "snn: deterministic simulation",
            snn::simulation_is_deterministic,
        ),
        (
            "snn: current decays without drive",
            snn::current_decays_without_drive,
        ),
        (
            "snn: weight gradient sums per-step outer products",
            snn::weight_gradient_is_sum_of_per_step_outer_products,
        ),
        ("snn: BPTT matches unrolled oracle", || {
            crate::oracle::lif_stack_matches_unrolled_oracle(0..200);
        }),
        (
            "popsan: actions within decoder reach",
            popsan::actions_stay_within_decoder_reach,
        ),
        (
            "popsan: rates are counts over T",
            popsan::rates_are_counts_over_steps,
        ),
        (
            "popsan: initial encoder covers the range",
            popsan::initial_encoder_covers_the_range,
        ),
        (
            "popsan: spike count monotone in activation",
            popsan::spike_count_is_monotone_in_activation,
        ),
        (
            "popsan: gradient covers every trainable tensor",
            popsan::gradient_covers_every_trainable_tensor,
        ),
        ("popsan: full network matches unrolled oracle", || {
            crate::oracle::popsan_backward_matches_unrolled_oracle(0..100, Some((3, 3)));
        }),
        (
            "harness: uniform replay sampling",
            harness::replay_sampling_is_uniform,
        ),
        (
            "harness: polyak contraction",
            harness::soft_update_moves_target_towards_online,
        ),
        (
            "harness: twin-min target",
            harness::target_takes_the_smaller_critic,
        ),
        ("harness: critic gradients match finite differences", || {
            crate::fd::critic_gradients_match_finite_differences();
        }),
        (
            "harness: both actor kinds share the training loop",
            harness::both_actor_kinds_train_through_the_same_loop,
        ),
        (
            "envs: point_reach deterministic, bounded, capped",
            envs::point_reach_is_deterministic_bounded_and_capped,
        ),
        (
            "envs: planar_pick deterministic, bounded, capped",
            envs::planar_pick_is_deterministic_bounded_and_capped,
        ),
        (
            "envs: scripted controllers solve every seed",
            envs::scripted_controllers_solve_every_seed,
        ),
        (
            "energy: linear in counts",
            energy::doubling_counts_doubles_energy,
        ),
        (
            "energy: monotone in T",
            energy::more_timesteps_never_reduce_accumulates,
        ),
        (
            "energy: reference table is self-consistent",
            energy::reference_savings_follow_from_reference_energies,
        ),
    ]
}
