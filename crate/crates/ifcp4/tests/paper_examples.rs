//! Small worked examples with hand-checked results.

use std::path::PathBuf;

use ifcp4::abstract_domain::{BvType, Interval, Label, Slice, Ty};
use ifcp4::frontend::{parse_contracts, parse_expr, parse_policy, parse_program};
use ifcp4::lang_ast::LValue;
use ifcp4::policy::{analyze, Contracts};
use ifcp4::state_types::StateType;
use ifcp4::typer::{Typer, TyperOptions};

use Label::{High as H, Low as L};

fn corpus(rel: &str) -> String {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../corpus")
        .join(rel);
    std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn x_2_8() -> StateType {
    StateType::new(
        vec![(
            "x".into(),
            Ty::Bv(BvType::single(Interval::new(2, 8), L, 4)),
        )],
        vec![],
    )
}

#[test]
fn update_loses_low_bits() {
    let g = x_2_8()
        .update(
            &LValue::var("x").slice(3, 3),
            &Ty::Bv(BvType::constant(1, 0, H)),
        )
        .unwrap();
    assert_eq!(g.render(), "{x ↦ [0]^H_1 · [*]^L_3}");
}

#[test]
fn refine_on_top_bit() {
    let p = parse_program("bit<4> x; control { }").unwrap();
    let e = parse_expr("x[3:3] < 1", &p, &[]).unwrap();
    assert_eq!(x_2_8().refine(&e, &p).render(), "{x ↦ [0]^L_1 · [*]^L_3}");
}

#[test]
fn join_raises_overlapping_label() {
    let other = StateType::new(
        vec![(
            "x".into(),
            Ty::Bv(
                BvType::new(vec![
                    Slice::new(Interval::full(1), H, 1),
                    Slice::new(Interval::full(3), L, 3),
                ])
                .unwrap(),
            ),
        )],
        vec![],
    );
    assert_eq!(x_2_8().join(&other).unwrap().render(), "{x ↦ [2,8]^H_4}");
}

#[test]
fn decrease_through_copy_out() {
    let p = parse_program(
        "bit<8> ttl;
         function decrease(inout bit<8> x) { x = x - 1; }
         control { decrease(ttl); }",
    )
    .unwrap();
    let g = StateType::new(
        vec![(
            "ttl".into(),
            Ty::Bv(BvType::single(Interval::new(1, 10), L, 8)),
        )],
        vec![],
    );
    let c = Contracts::default();
    let out = Typer::new(&p, &c, TyperOptions::default())
        .analyze_case(&g)
        .unwrap();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].render(), "{ttl ↦ [0,9]^L_8}");
}

#[test]
fn low_branches_are_not_merged() {
    let p = parse_program(
        "bit<3> x; bit<1> b;
         control { if (b == 1) { x[0:0] = 0; } else { x[0:0] = 1; } }",
    )
    .unwrap();
    let g = StateType::new(
        vec![
            ("x".into(), Ty::Bv(BvType::full(3, H))),
            ("b".into(), Ty::Bv(BvType::full(1, L))),
        ],
        vec![],
    );
    let c = Contracts::default();
    let out = Typer::new(&p, &c, TyperOptions::default())
        .analyze_case(&g)
        .unwrap();
    let r: Vec<String> = out.iter().map(|g| g.render()).collect();
    assert_eq!(
        r,
        [
            "{x ↦ [*]^H_2 · [0]^L_1, b ↦ [1]^L_1}",
            "{x ↦ [*]^H_2 · [1]^L_1, b ↦ [0]^L_1}"
        ]
    );
}

#[test]
fn table_keeps_one_row() {
    let p = parse_program(&corpus("table_example/table.mp4")).unwrap();
    let c = parse_contracts(&corpus("table_example/tables.ctr"), &p).unwrap();
    let inputs = parse_policy(&corpus("table_example/in.pol"), &p)
        .unwrap()
        .inputs();
    let v = analyze(&p, &inputs, &[], &c, TyperOptions::default()).unwrap();
    let gs = &v.cases[0].gammas;
    assert_eq!(gs.len(), 1);
    let leaves = gs[0].leaves();
    let find = |k: &str| leaves.iter().find(|(p, _)| p == k).unwrap().1.render();
    assert_eq!(find("standard_metadata.egress_spec"), "[1,9]^L_9");
    assert_eq!(find("hdr.eth.dstAddr"), "[*]^H_48");
    assert_eq!(find("hdr.ipv4.dstAddr"), "[192]^L_8 · [168]^L_8 · [*]^L_16");
}
