mod support {
    pub mod gof;
}

use aabsp::{Plan, Theta};
use support::gof::joint_density_gof;

fn check(plan: Plan, theta: Theta, seed: u64) {
    let rep = joint_density_gof(&plan, &theta, &theta, 100_000, seed);
    println!("chi2 {:.2} on {} dof, p = {:.3}", rep.statistic, rep.dof, rep.p_value);
    assert!((rep.mass - 1.0).abs() < 1e-6, "mass {}", rep.mass);
    assert!(rep.p_value > 0.01, "chi2 {} on {} dof, p = {}", rep.statistic, rep.dof, rep.p_value);
}

#[test]
fn simulated_outcomes_follow_the_joint_density_two_causes() {
    let theta = Theta::new(vec![0.3, 0.2], vec![2.0, 3.5]).unwrap();
    check(Plan::new(5, 3, 2, 0.6).unwrap(), theta, 11);
}

#[test]
fn simulated_outcomes_follow_the_joint_density_one_cause() {
    let theta = Theta::new(vec![0.5], vec![4.0]).unwrap();
    check(Plan::new(4, 3, 1, 0.3).unwrap(), theta, 12);
}

#[test]
fn misspecified_rates_are_detected() {
    let plan = Plan::new(5, 3, 2, 0.6).unwrap();
    let truth = Theta::new(vec![0.3, 0.2], vec![2.0, 3.5]).unwrap();
    let model = Theta::new(vec![0.3, 0.2], vec![2.0, 3.0]).unwrap();
    let rep = joint_density_gof(&plan, &truth, &model, 100_000, 13);
    assert!(rep.p_value < 1e-6, "p = {}", rep.p_value);
}
