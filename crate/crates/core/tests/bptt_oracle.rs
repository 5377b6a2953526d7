//! Analytic BPTT against reverse-mode differentiation of the unrolled graph.

use testkit::oracle;

#[test]
fn lif_stack_matches_unrolled_oracle() {
    oracle::lif_stack_matches_unrolled_oracle(0..200);
}

#[test]
fn popsan_backward_matches_unrolled_oracle() {
    oracle::popsan_backward_matches_unrolled_oracle(0..200, None);
}

#[test]
fn popsan_oracle_with_three_hidden_neurons_and_three_steps() {
    oracle::popsan_backward_matches_unrolled_oracle(0..100, Some((3, 3)));
}
