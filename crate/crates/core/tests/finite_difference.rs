use testkit::fd;

#[test]
fn decoder_gradients_match_central_differences() {
    fd::decoder_gradients_match_central_differences();
}

#[test]
fn encoder_gradients_match_central_differences() {
    fd::encoder_gradients_match_central_differences();
}

#[test]
fn critic_gradients_match_finite_differences() {
    fd::critic_gradients_match_finite_differences();
}
