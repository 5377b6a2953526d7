use testkit::properties::energy;

#[test]
fn doubling_counts_doubles_energy() {
    energy::doubling_counts_doubles_energy();
}

#[test]
fn more_timesteps_never_reduce_accumulates() {
    energy::more_timesteps_never_reduce_accumulates();
}

#[test]
fn reference_savings_follow_from_reference_energies() {
    energy::reference_savings_follow_from_reference_energies();
}
