mod common;

use common::brute_force_lcs;
use otextsum::rouge::{lcs_len, rouge_l, rouge_n, rouge_tokens, score_texts, RougeScore};
use proptest::prelude::*;

fn words(max: usize) -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d"]), 0..=max)
        .prop_map(|v| v.into_iter().map(String::from).collect())
}

fn in_unit_range(s: &RougeScore) -> bool {
    [s.precision, s.recall, s.f1].iter().all(|x| (0.0..=1.0).contains(x))
}

proptest! {
    #[test]
    fn lcs_matches_brute_force(a in words(6), b in words(6)) {
        prop_assert_eq!(lcs_len(&a, &b), brute_force_lcs(&a, &b));
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(a in words(10), b in words(10)) {
        for (x, y) in [
            (rouge_n(&a, &b, 1), rouge_n(&b, &a, 1)),
            (rouge_n(&a, &b, 2), rouge_n(&b, &a, 2)),
            (rouge_l(&a, &b), rouge_l(&b, &a)),
        ] {
            prop_assert_eq!(x.precision, y.recall);
            prop_assert_eq!(x.recall, y.precision);
            prop_assert!((x.f1 - y.f1).abs() < 1e-15);
            prop_assert!(in_unit_range(&x));
        }
    }
}

#[test]
fn hand_counted_examples() {
    let s = rouge_n(&["the", "cat", "sat"], &["the", "cat"], 1);
    assert!((s.precision - 2.0 / 3.0).abs() < 1e-15);
    assert_eq!(s.recall, 1.0);
    assert!((s.f1 - 0.8).abs() < 1e-15);

    let l = rouge_l(&["a", "b", "c"], &["a", "x", "c"]);
    assert!((l.precision - 2.0 / 3.0).abs() < 1e-15);
    assert!((l.recall - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn reversed_distinct_tokens_share_one() {
    let a = ["p", "q", "r", "s", "t"];
    let b: Vec<&str> = a.iter().rev().copied().collect();
    assert_eq!(lcs_len(&a, &b), 1);
}

#[test]
fn identity_and_disjoint() {
    let t = rouge_tokens("The quick brown fox.");
    for s in [rouge_n(&t, &t, 1), rouge_n(&t, &t, 2), rouge_l(&t, &t)] {
        assert_eq!((s.precision, s.recall, s.f1), (1.0, 1.0, 1.0));
    }
    let triple = score_texts("alpha beta", "gamma delta");
    for s in [triple.rouge1, triple.rouge2, triple.rouge_l] {
        assert_eq!((s.precision, s.recall, s.f1), (0.0, 0.0, 0.0));
    }
}
