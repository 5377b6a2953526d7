use testkit::properties::harness;

#[test]
fn replay_sampling_is_uniform() {
    harness::replay_sampling_is_uniform();
}

#[test]
fn soft_update_moves_target_towards_online() {
    harness::soft_update_moves_target_towards_online();
}

#[test]
fn target_takes_the_smaller_critic() {
    harness::target_takes_the_smaller_critic();
}

#[test]
fn both_actor_kinds_train_through_the_same_loop() {
    harness::both_actor_kinds_train_through_the_same_loop();
}
