//! Seeded generators and checkers shared by the property suites and the
//! acceptance harness. Each checker returns `Err` with a description of the
//! first violation.
#![allow(dead_code)]

use ifcp4::abstract_domain::{BvType, Interval, Label, Slice, Ty};
use ifcp4::frontend::parse_program;
use ifcp4::interp::{ConcState, DynamicEnv, Interpreter};
use ifcp4::lang_ast::{mask, BinOp, CmpOp, Expr, LValue, Program, UnOp, Value};
use ifcp4::oracle::{
    enumerate_states, instantiate_env_pair, random_scenario, OracleConfig, ProgramLimits,
};
use ifcp4::state_types::{join_set, StateType};
use ifcp4::typer::{join_on_high, Typer, TyperOptions};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const W: u32 = 4;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_vars() -> Program {
    parse_program("bit<4> x;\nbit<4> y;\ncontrol {\n}\n").expect("fixed program")
}

pub fn xy(a: u64, b: u64) -> ConcState {
    ConcState::new(
        vec![
            ("x".into(), Value::bits(W, a)),
            ("y".into(), Value::bits(W, b)),
        ],
        Vec::new(),
    )
}

pub fn all_xy() -> impl Iterator<Item = ConcState> {
    (0..16).flat_map(|a| (0..16).map(move |b| xy(a, b)))
}

fn interval(r: &mut ChaCha8Rng, w: u32) -> Interval {
    let m = mask(w);
    match r.gen_range(0..10) {
        0..=2 => Interval::full(w),
        3 | 4 => Interval::singleton(r.gen_range(0..=m)),
        _ => {
            let a = r.gen_range(0..=m);
            let b = r.gen_range(0..=m);
            Interval::new(a.min(b), a.max(b))
        }
    }
}

fn label(r: &mut ChaCha8Rng) -> Label {
    if r.gen_bool(0.5) {
        Label::Low
    } else {
        Label::High
    }
}

/// One to three slices with random cuts, intervals and labels.
pub fn bv(r: &mut ChaCha8Rng, w: u32) -> BvType {
    let mut bounds = vec![0];
    bounds.extend((1..w).filter(|_| r.gen_bool(0.3)).take(2));
    bounds.push(w);
    let parts = bounds
        .windows(2)
        .rev()
        .map(|p| {
            let sw = p[1] - p[0];
            Slice::new(interval(r, sw), label(r), sw)
        })
        .collect();
    BvType::new(parts).expect("widths add up")
}

pub fn gamma(r: &mut ChaCha8Rng) -> StateType {
    StateType::new(
        vec![
            ("x".into(), Ty::Bv(bv(r, W))),
            ("y".into(), Ty::Bv(bv(r, W))),
        ],
        Vec::new(),
    )
}

pub fn lval(r: &mut ChaCha8Rng) -> LValue {
    let n = if r.gen_bool(0.5) { "x" } else { "y" };
    if r.gen_bool(0.4) {
        LValue::var(n)
    } else {
        let a = r.gen_range(0..W);
        let b = r.gen_range(0..W);
        LValue::var(n).slice(a.max(b), a.min(b))
    }
}

pub fn width_of(lv: &LValue) -> u32 {
    match lv.place().range {
        Some((hi, lo)) => hi - lo + 1,
        None => W,
    }
}

/// Boolean predicates over `x`, `y` and their slices.
pub fn pred(r: &mut ChaCha8Rng, depth: u32) -> Expr {
    if depth > 0 {
        match r.gen_range(0..6) {
            0 => return pred(r, depth - 1).and(pred(r, depth - 1)),
            1 => return Expr::binop(BinOp::Or, pred(r, depth - 1), pred(r, depth - 1)),
            2 => return pred(r, depth - 1).not(),
            _ => {}
        }
    }
    let lv = lval(r);
    let w = width_of(&lv);
    let op = *CmpOp::ALL.choose(r).expect("nonempty");
    match r.gen_range(0..4) {
        0 => {
            let o = lval(r);
            if width_of(&o) == w {
                Expr::cmp(op, lv.to_expr(), o.to_expr())
            } else {
                Expr::cmp(op, lv.to_expr(), Expr::bits(w, r.gen_range(0..=mask(w))))
            }
        }
        1 => Expr::cmp(op, Expr::bits(w, r.gen_range(0..=mask(w))), lv.to_expr()),
        _ if w == 1 => lv.to_expr(),
        _ => Expr::cmp(op, lv.to_expr(), Expr::bits(w, r.gen_range(0..=mask(w)))),
    }
}

/// A boolean-free expression of width `w` over `x` and `y`.
pub fn arith(r: &mut ChaCha8Rng, w: u32, depth: u32) -> Expr {
    if depth > 0 && r.gen_bool(0.5) {
        if r.gen_bool(0.7) {
            let op = *BinOp::ALL.choose(r).expect("nonempty");
            return Expr::binop(op, arith(r, w, depth - 1), arith(r, w, depth - 1));
        }
        let op = *[UnOp::Neg, UnOp::BitNot].choose(r).expect("nonempty");
        return Expr::unop(op, arith(r, w, depth - 1));
    }
    if r.gen_bool(0.25) {
        return Expr::bits(w, r.gen_range(0..=mask(w)));
    }
    let n = if r.gen_bool(0.5) { "x" } else { "y" };
    let lo = r.gen_range(0..=W - w);
    if w == W {
        Expr::var(n)
    } else {
        Expr::var(n).slice(lo + w - 1, lo)
    }
}

/// States typed by `g` for which `e` holds are typed by `refine(g, e)`, and
/// the same for `!e`; no label is lowered.
pub fn check_refine(g: &StateType, e: &Expr, p: &Program) -> Result<(), String> {
    let env = DynamicEnv::default();
    let interp = Interpreter::new(p, &env);
    let pos = g.refine(e, p);
    let neg = g.refine(&e.clone().not(), p);
    for m in all_xy() {
        if !g.types_state(&m).map_err(|e| e.to_string())? {
            continue;
        }
        let holds = interp.holds(&m, e).map_err(|e| e.to_string())?;
        let r = if holds { &pos } else { &neg };
        if !r.types_state(&m).map_err(|e| e.to_string())? {
            return Err(format!(
                "refine({g}, {e:?}) = {r} drops {m} (holds: {holds})"
            ));
        }
    }
    for r in [&pos, &neg] {
        for ((_, a), (_, b)) in g.leaves().into_iter().zip(r.leaves()) {
            if a.high_mask() & !b.high_mask() != 0 {
                return Err(format!("refine lowered a label: {g} to {r}"));
            }
        }
    }
    Ok(())
}

/// For every state typed by a member of `set`, some element of
/// `join_set(set)` types it and is at least as restrictive as that member.
pub fn check_join(set: &[StateType]) -> Result<(), String> {
    let joined = join_set(set).map_err(|e| e.to_string())?;
    for g in set {
        for m in all_xy() {
            if !g.types_state(&m).map_err(|e| e.to_string())? {
                continue;
            }
            let mut found = false;
            for j in &joined {
                if j.types_state(&m).map_err(|e| e.to_string())?
                    && g.restrictive_leq(j).map_err(|e| e.to_string())?
                {
                    found = true;
                    break;
                }
            }
            if !found {
                return Err(format!("{m} typed by {g} but by no joined element"));
            }
        }
    }
    Ok(())
}

/// `γ ⊢ m` and `v : t` give `γ[lv ↦ t] ⊢ m[lv ↦ v]`.
pub fn check_update(g: &StateType, lv: &LValue, t: &BvType) -> Result<(), String> {
    let w = width_of(lv);
    let u = g
        .update(lv, &Ty::Bv(t.clone()))
        .map_err(|e| e.to_string())?;
    let values: Vec<u64> = (0..=mask(w)).filter(|v| t.value_has_type(*v)).collect();
    for m in all_xy() {
        if !g.types_state(&m).map_err(|e| e.to_string())? {
            continue;
        }
        for &v in &values {
            let mut m2 = m.clone();
            m2.set(lv, Value::bits(w, v)).map_err(|e| e.to_string())?;
            if !u.types_state(&m2).map_err(|e| e.to_string())? {
                return Err(format!("{g}[{lv} ↦ {t}] = {u} does not type {m2}"));
            }
        }
    }
    Ok(())
}

/// One program typed from one input case under a HIGH context, plus a
/// concrete environment and a few sampled input states.
pub struct HighRun {
    pub program: Program,
    pub input: StateType,
    pub finals: Vec<StateType>,
    pub env: DynamicEnv,
    pub states: Vec<ConcState>,
}

/// `None` when the generated case does not type (extern preconditions,
/// arithmetic on several slices) or is over the state budget.
pub fn high_run(seed: u64, case: usize) -> Option<HighRun> {
    high_run_with(seed, case, TyperOptions::default())
}

pub fn high_run_with(seed: u64, case: usize, options: TyperOptions) -> Option<HighRun> {
    let sc = random_scenario(seed, ProgramLimits::default()).ok()?;
    let input = sc.inputs.get(case)?.gamma.clone();
    let typer = Typer::new(&sc.program, &sc.contracts, options);
    let finals = typer
        .type_stmt(Label::High, &input, &sc.program.entry())
        .ok()?;
    let space = enumerate_states(&input, &OracleConfig::default()).ok()?;
    let (env, _) = instantiate_env_pair(&sc.program, &sc.contracts, seed).ok()?;
    let mut r = rng(seed ^ 0x5eed);
    let states = if space.is_empty() {
        Vec::new()
    } else {
        (0..8)
            .map(|_| space.get(r.gen_range(0..space.len())))
            .collect()
    };
    Some(HighRun {
        program: sc.program,
        input,
        finals,
        env,
        states,
    })
}

fn leaf_values(m: &ConcState) -> Vec<(String, u64)> {
    m.leaves()
        .into_iter()
        .map(|(p, b)| (p, b.value()))
        .collect()
}

/// Running under a HIGH context leaves unchanged every bit that some
/// element of the joined result set labels LOW.
pub fn check_branch_on_high(h: &HighRun) -> Result<(), String> {
    let joined = join_on_high(h.finals.clone(), Label::High).map_err(|e| e.to_string())?;
    let interp = Interpreter::new(&h.program, &h.env);
    for m in &h.states {
        let out = interp.run(m.clone()).map_err(|e| e.to_string())?;
        let before = leaf_values(m);
        let after = leaf_values(&out);
        for g in &joined {
            for ((path, t), ((_, a), (_, b))) in
                g.leaves().into_iter().zip(before.iter().zip(&after))
            {
                let low = mask(t.width()) & !t.high_mask();
                if (a ^ b) & low != 0 {
                    return Err(format!("{path} changed from {a} to {b} but is LOW in {g}"));
                }
            }
        }
    }
    Ok(())
}

/// Every final state type under a HIGH context is at least as HIGH as the
/// input, bit by bit.
pub fn check_high_monotone(h: &HighRun) -> Result<(), String> {
    for g in &h.finals {
        for ((path, a), (_, b)) in h.input.leaves().into_iter().zip(g.leaves()) {
            if a.high_mask() & !b.high_mask() != 0 {
                return Err(format!("{path}: {a} lowered to {b}"));
            }
        }
    }
    Ok(())
}
