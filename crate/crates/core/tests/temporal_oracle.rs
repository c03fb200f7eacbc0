//! Temporal rules against brute-force definitions over every label pattern.

mod common;

#[test]
fn exhaustive_up_to_eight_frames() {
    let tally = common::exhaustive_temporal(8, &[1, 3, 5], &[0, 1, 2]);
    assert_eq!(tally.mismatches, 0, "{:?}", tally.first_mismatch);
    assert!(tally.cases > 500_000);
}

#[test]
fn oracle_matches_the_worked_examples() {
    use common::{majority_oracle, validate_oracle};
    let (p, n) = (true, false);
    assert_eq!(majority_oracle(&[p, p, n], 3), vec![p, p, n]);
    assert_eq!(validate_oracle(&[n, p, n], &[p, n, n], 1), vec![n, p, n]);
    assert_eq!(
        validate_oracle(&majority_oracle(&[p, p, n], 3), &[n, n, p], 1),
        vec![n, p, n]
    );
}
