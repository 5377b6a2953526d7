use testkit::hand_trace;

#[test]
fn scalar_network_two_steps() {
    hand_trace::scalar_network_two_steps();
}
