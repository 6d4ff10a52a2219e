mod common;

use common::*;
use proptest::prelude::*;

const CASES: u32 = 10_000;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn refine_keeps_satisfying_states(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = gamma(&mut r);
        let e = pred(&mut r, 2);
        if let Err(msg) = check_refine(&g, &e, &two_vars()) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn join_keeps_intervals(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = 1 + (seed % 4) as usize;
        let set: Vec<_> = (0..n).map(|_| gamma(&mut r)).collect();
        if let Err(msg) = check_join(&set) {
            prop_assert!(false, "{}", msg);
        }
    }

    #[test]
    fn update_preserves_typing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = gamma(&mut r);
        let lv = lval(&mut r);
        let t = bv(&mut r, width_of(&lv));
        if let Err(msg) = check_update(&g, &lv, &t) {
            prop_assert!(false, "{}", msg);
        }
    }
}

/// The statement-level suites walk seeds in order until 10⁴ generated
/// cases have typed.
fn high_cases(mut check: impl FnMut(&HighRun) -> Result<(), String>) {
    let mut checked = 0;
    let mut seed = 0;
    while checked < CASES {
        for case in 0..ifcp4::oracle::POLICY_CASES {
            if let Some(h) = high_run(seed, case) {
                if let Err(msg) = check(&h) {
                    panic!("seed {seed} case {case}: {msg}");
                }
                checked += 1;
            }
        }
        seed += 1;
    }
}

#[test]
fn branch_on_high_preserves_low_state() {
    high_cases(check_branch_on_high);
}

#[test]
fn high_context_never_lowers_labels() {
    high_cases(check_high_monotone);
}

#[test]
fn generator_covers_multi_slice_types() {
    let mut r = rng(1);
    let many = (0..200)
        .filter(|_| bv(&mut r, 4).slices().len() > 1)
        .count();
    assert!(many > 20);
}

#[test]
fn checkers_reject_unraised_assignments() {
    let options = ifcp4::typer::TyperOptions {
        raise_to_pc: false,
        ..Default::default()
    };
    let runs: Vec<HighRun> = (0..200)
        .filter_map(|s| high_run_with(s, 0, options))
        .collect();
    assert!(runs.iter().any(|h| check_branch_on_high(h).is_err()));
    assert!(runs.iter().any(|h| check_high_monotone(h).is_err()));
}
