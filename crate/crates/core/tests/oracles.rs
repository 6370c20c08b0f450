//! Library results against independent brute-force oracles.

mod common;

use common::checks;

fn ok(r: checks::Check) {
    match r {
        Ok(summary) => println!("{summary}"),
        Err(e) => panic!("{e}"),
    }
}

#[test]
fn region_annuli_match_pose_sampler() {
    ok(checks::regions_vs_sampler(20));
}

#[test]
fn planner_objectives_match_dense_oracles() {
    ok(checks::planners_vs_dense(50));
}

#[test]
fn replan_matches_dense_oracle() {
    ok(checks::replan_vs_dense(100));
}

#[test]
fn p_feasible_matches_quadrature() {
    ok(checks::p_feasible_vs_quadrature(50));
}

#[test]
fn capm_never_loses_to_decoupled_on_its_objective() {
    ok(checks::capm_dominates_decoupled(500));
}
