//! Analytic gradients against central differences on random small networks.

mod common;

use common::gradcheck::{bc_case, critic_case, ppo_case};

const CASES: u64 = 60;
const TOLERANCE: f64 = 1e-4;

fn check(name: &str, case: fn(u64) -> f64) {
    let worst = (0..CASES).map(|s| (case(s), s)).fold((0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    assert!(worst.0 <= TOLERANCE, "{name}: relative error {:.3e} on case {}", worst.0, worst.1);
}

#[test]
fn ppo_composite_gradient_matches_differences() {
    check("ppo", ppo_case);
}

#[test]
fn bc_gradient_matches_differences() {
    check("bc", bc_case);
}

#[test]
fn critic_gradient_matches_differences() {
    check("critic", critic_case);
}
