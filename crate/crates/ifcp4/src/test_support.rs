//! Shared random generators for unit tests.

use proptest::prelude::*;

use crate::abstract_domain::{BvType, Interval, Label, Slice};
use crate::lang_ast::mask;

pub fn arb_interval(w: u32) -> impl Strategy<Value = Interval> {
    (0..=mask(w), 0..=mask(w)).prop_map(|(a, b)| Interval::new(a.min(b), a.max(b)))
}

pub fn arb_label() -> impl Strategy<Value = Label> {
    prop_oneof![Just(Label::Low), Just(Label::High)]
}

/// Random non-empty type of total width `w` with up to three slices.
pub fn arb_bv(w: u32) -> impl Strategy<Value = BvType> {
    prop::collection::vec(1..w.max(2), 0..3)
        .prop_flat_map(move |cuts| {
            let mut cs: Vec<u32> = cuts.into_iter().filter(|c| *c < w).collect();
            cs.sort_unstable();
            cs.dedup();
            let mut bounds = vec![w];
            bounds.extend(cs.into_iter().rev());
            bounds.push(0);
            let widths: Vec<u32> = bounds.windows(2).map(|p| p[0] - p[1]).collect();
            widths
                .into_iter()
                .map(|sw| {
                    (arb_interval(sw), arb_label()).prop_map(move |(i, l)| Slice::new(i, l, sw))
                })
                .collect::<Vec<_>>()
        })
        .prop_map(|s| BvType::new(s).unwrap())
}
