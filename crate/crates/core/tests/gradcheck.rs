mod support;

use support::gradcheck::{instance, run_suite, INSTANCES};

#[test]
fn finite_differences_match_backprop() {
    let (coords, failed) = run_suite();
    println!("{INSTANCES} instances, {coords} coordinates checked");
    assert!(failed.is_empty(), "{}", failed.join("\n"));
}

#[test]
fn zero_rho_leaves_g_without_gradient() {
    let mut inst = instance(1000);
    inst.rho = 0.0;
    let (_, grads) = inst.model.loss_gradients(&inst.x, &inst.y, 0.0).unwrap();
    assert!(grads.phi.iter().all(|&g| g == 0.0));
    assert!(grads.theta.iter().any(|&g| g != 0.0));
}
