mod common;

use adaptids_core::neural::HeadLoss;

fn pass(c: common::Check) {
    match c {
        Ok(msg) => println!("{msg}"),
        Err(msg) => panic!("{msg}"),
    }
}

#[test]
fn analytic_gradients_match_finite_differences() {
    pass(common::gradient_oracle());
}

#[test]
fn gradient_check_covers_nearly_every_parameter() {
    let r = common::gradient_check(HeadLoss::OneVsRest, true, 11);
    assert!(r.skipped * 20 < r.checked, "{} skipped of {}", r.skipped, r.checked);
}

#[test]
fn hand_computed_losses() {
    pass(common::loss_oracles());
}

#[test]
fn openmax_conservation_and_degeneracy() {
    pass(common::openmax_properties(1000));
}

#[test]
fn weibull_mle_recovers_parameters() {
    pass(common::weibull_recovery());
}

#[test]
fn quality_matches_direct_entropy_on_all_small_partitions() {
    pass(common::quality_enumeration());
}

#[test]
fn partition_counts_are_stirling_sums() {
    // S(n,1) + S(n,2) + S(n,3)
    let expected = [1, 2, 5, 14, 41, 122, 365, 1094];
    for (n, &e) in (1..=8).zip(&expected) {
        assert_eq!(common::partitions(n, 3).len(), e, "n = {n}");
    }
}

#[test]
fn kmeans_monotone_and_recovers_planted_clusters() {
    pass(common::kmeans_checks());
}
