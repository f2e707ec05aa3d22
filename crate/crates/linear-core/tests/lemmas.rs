mod common;

use common::props::{irrelevance, linear_vs_delta, partitions, unrestricted_vs_empty_delta};

const INSTANCES: usize = 500;

#[test]
fn linear_and_delta_bound_variables_are_interchangeable() {
    let (t, accepted) = linear_vs_delta(400);
    assert!(t.ok(INSTANCES), "{}", t.summary());
    assert!(accepted > 0 && accepted < t.instances, "{accepted} of {} accepted", t.instances);
}

#[test]
fn unrestricted_and_empty_delta_bound_variables_are_interchangeable() {
    let t = unrestricted_vs_empty_delta(300);
    assert!(t.ok(INSTANCES), "{}", t.summary());
}

#[test]
fn irrelevant_alternatives_typecheck_for_every_partition() {
    let (t, splits) = irrelevance(INSTANCES, 7);
    assert!(t.ok(INSTANCES), "{}", t.summary());
    assert!(splits > t.instances);
}

#[test]
fn partitions_are_enumerated() {
    assert_eq!(partitions(&[1, 2, 3], 2).len(), 8);
    assert_eq!(partitions(&[1], 1), vec![vec![vec![1]]]);
    assert_eq!(partitions::<u8>(&[], 2), vec![vec![vec![], vec![]]]);
}
