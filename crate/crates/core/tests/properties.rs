mod common;

use common::properties::*;
use proptest::prelude::*;

const CASES: u32 = 64;

fn check(result: Result<u32, String>) {
    if let Err(msg) = result {
        panic!("{msg}");
    }
}

#[test]
fn within_transform_zero_sums() {
    check(run_property(CASES, panel_case(), within_zero_sums));
}

#[test]
fn residuals_orthogonal_to_regressors() {
    check(run_property(CASES, panel_case(), residual_orthogonality));
}

#[test]
fn kmeans_objective_never_increases() {
    check(run_property(CASES, kmeans_case(), lloyd_monotone));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    check(run_property(16, any::<u64>(), thread_count_determinism));
}

#[test]
fn draws_reconstruct_exactly() {
    check(run_property(CASES, dgp_case(), reconstruction));
}
