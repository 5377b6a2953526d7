use testkit::properties::popsan;

#[test]
fn actions_stay_within_decoder_reach() {
    popsan::actions_stay_within_decoder_reach();
}

#[test]
fn rates_are_counts_over_steps() {
    popsan::rates_are_counts_over_steps();
}

#[test]
fn initial_encoder_covers_the_range() {
    popsan::initial_encoder_covers_the_range();
}

#[test]
fn spike_count_is_monotone_in_activation() {
    popsan::spike_count_is_monotone_in_activation();
}

#[test]
fn gradient_covers_every_trainable_tensor() {
    popsan::gradient_covers_every_trainable_tensor();
}
