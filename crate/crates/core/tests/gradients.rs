#[path = "support/gradchecks.rs"]
mod gradchecks;

#[test]
fn elementwise_and_binary_ops() {
    gradchecks::elementwise_and_binary_ops();
}

#[test]
fn matrix_ops() {
    gradchecks::matrix_ops();
}

#[test]
fn mlp_and_gcn_layers() {
    gradchecks::mlp_and_gcn_layers();
}

#[test]
fn assignment_losses_and_aggregation() {
    gradchecks::assignment_losses_and_aggregation();
}

#[test]
fn latent_ode_through_both_solvers() {
    gradchecks::latent_ode_through_both_solvers();
}

#[test]
fn refiner_bank_and_expansion() {
    gradchecks::refiner_bank_and_expansion();
}

#[test]
fn full_training_loss_on_toy_graph() {
    gradchecks::full_training_loss_on_toy_graph();
}
