//! Brute-force noninterference checking at small widths, and a seeded
//! differential harness that compares it with the analyzer.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::abstract_domain::{BvType, Label, Ty};
use crate::frontend::{parse_contracts, parse_policy, parse_program};
use crate::interp::{
    ConcState, ConcreteTable, DynamicEnv, ExternCase, ExternImpl, ExternOp, InterpError,
    Interpreter, TableRow,
};
use crate::lang_ast::{mask, CmpOp, Expr, LValue, Program, Value};
use crate::policy::{analyze_case, check_contracts, Contracts, PolicyCase, Severity};
use crate::state_types::{StateError, StateType};
use crate::typer::{TypeError, TyperOptions};

/// Hard ceiling on the enumerated state space, in bits.
pub const MAX_BITS: u32 = 20;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("state space needs {bits} bits, budget is {limit}")]
    Budget { bits: u32, limit: u32 },
    #[error("cannot instantiate contract: {0}")]
    Unsatisfiable(String),
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error("generated scenario does not load: {0}")]
    Generate(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OracleConfig {
    /// Budget for `log2` of the number of enumerated states.
    pub max_bits: u32,
    /// Programs generated by `differential_check`.
    pub programs: usize,
    pub seed: u64,
    /// Environment pairs sampled per program.
    pub env_pairs: usize,
}

impl Default for OracleConfig {
    fn default() -> OracleConfig {
        OracleConfig {
            max_bits: 12,
            programs: 500,
            seed: 0,
            env_pairs: 3,
        }
    }
}

fn ceil_log2(n: u128) -> u32 {
    if n <= 1 {
        0
    } else {
        128 - (n - 1).leading_zeros()
    }
}

struct Digit {
    leaf: usize,
    shift: u32,
    base: u64,
    count: u64,
}

/// Every state typed by a state type, in a fixed order. LOW slices vary
/// slowest, so consecutive blocks of `class_size` states form exactly the
/// low-equivalence classes.
pub struct StateSpace {
    template: ConcState,
    leaves: Vec<(LValue, u32)>,
    digits: Vec<Digit>,
    class_size: u64,
    len: u64,
}

impl StateSpace {
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn class_size(&self) -> u64 {
        self.class_size
    }

    pub fn classes(&self) -> u64 {
        if self.len == 0 {
            0
        } else {
            self.len / self.class_size
        }
    }

    /// The `i`-th state; `i < len()`.
    pub fn get(&self, mut i: u64) -> ConcState {
        let mut vals = vec![0u64; self.leaves.len()];
        for d in self.digits.iter().rev() {
            vals[d.leaf] |= (d.base + i % d.count) << d.shift;
            i /= d.count;
        }
        let mut m = self.template.clone();
        for ((lv, w), v) in self.leaves.iter().zip(vals) {
            m.set(lv, Value::bits(*w, v)).expect("leaf of the template");
        }
        m
    }

    pub fn iter(&self) -> impl Iterator<Item = ConcState> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

fn zero_of(t: &Ty) -> Value {
    match t {
        Ty::Bv(b) => Value::bits(b.width(), 0),
        Ty::Rec(fs) => Value::Record(fs.iter().map(|(n, t)| (n.clone(), zero_of(t))).collect()),
    }
}

/// `{m : γ ⊢ m}` over the globals of `g`.
pub fn enumerate_states(g: &StateType, config: &OracleConfig) -> Result<StateSpace, OracleError> {
    let limit = config.max_bits.min(MAX_BITS);
    let template = ConcState::new(
        g.globals
            .iter()
            .map(|(n, t)| (n.clone(), zero_of(t)))
            .collect(),
        Vec::new(),
    );
    let globals = g.without_locals();
    let leaves = globals.leaves();
    let mut low = Vec::new();
    let mut high = Vec::new();
    let mut total: u128 = 1;
    for (i, (_, t)) in leaves.iter().enumerate() {
        for ((_, lo), s) in t.spans().into_iter().zip(t.slices()) {
            let Some((a, b)) = s.interval.bounds() else {
                total = 0;
                continue;
            };
            let d = Digit {
                leaf: i,
                shift: lo,
                base: a,
                count: b - a + 1,
            };
            total = total.saturating_mul(d.count as u128);
            if s.label == Label::Low {
                low.push(d);
            } else {
                high.push(d);
            }
        }
    }
    let bits = ceil_log2(total);
    if bits > limit {
        return Err(OracleError::Budget { bits, limit });
    }
    let class_size = high.iter().map(|d| d.count).product::<u64>().max(1);
    low.extend(high);
    Ok(StateSpace {
        template,
        leaves: leaves
            .iter()
            .map(|(p, t)| (LValue::path(p), t.width()))
            .collect(),
        digits: low,
        class_size,
        len: total as u64,
    })
}

/// LOW bits of every leaf of `m` under `g`, in leaf order.
fn low_key(g: &StateType, m: &ConcState) -> Vec<u64> {
    fn go(t: &Ty, v: &Value, out: &mut Vec<u64>) {
        match (t, v) {
            (Ty::Bv(b), Value::Bits(x)) => out.push(x.value() & !b.high_mask()),
            (Ty::Rec(fs), Value::Record(vs)) => {
                fs.iter().zip(vs).for_each(|((_, t), (_, v))| go(t, v, out))
            }
            _ => out.push(u64::MAX),
        }
    }
    let mut out = Vec::new();
    for (n, t) in &g.globals {
        match m.lookup(n) {
            Some(v) => go(t, v, &mut out),
            None => out.push(u64::MAX),
        }
    }
    out
}

fn slice_values(
    rng: &mut ChaCha8Rng,
    t: &BvType,
    distinct_high: bool,
) -> Result<(u64, u64), OracleError> {
    let (mut v1, mut v2) = (0u64, 0u64);
    for ((_, lo), s) in t.spans().into_iter().zip(t.slices()) {
        let (a, b) = s.interval.bounds().ok_or_else(|| {
            OracleError::Unsatisfiable(format!("empty interval in {}", t.render()))
        })?;
        let x = rng.gen_range(a..=b);
        let y = if s.label == Label::Low {
            x
        } else if distinct_high && b > a {
            let y = rng.gen_range(a..b);
            if y >= x {
                y + 1
            } else {
                y
            }
        } else {
            rng.gen_range(a..=b)
        };
        v1 |= x << lo;
        v2 |= y << lo;
    }
    Ok((v1, v2))
}

/// Two values typed by `t`, equal on LOW slices and, where the interval
/// allows, different on every HIGH slice.
fn value_pair(rng: &mut ChaCha8Rng, t: &Ty) -> Result<(Value, Value), OracleError> {
    match t {
        Ty::Bv(b) => {
            let (x, y) = slice_values(rng, b, true)?;
            Ok((Value::bits(b.width(), x), Value::bits(b.width(), y)))
        }
        Ty::Rec(fs) => {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for (n, t) in fs {
                let (x, y) = value_pair(rng, t)?;
                a.push((n.clone(), x));
                b.push((n.clone(), y));
            }
            Ok((Value::Record(a), Value::Record(b)))
        }
    }
}

fn key_width(program: &Program, key: &Expr) -> Result<u32, OracleError> {
    let env = DynamicEnv::default();
    let m = ConcState::zero(program)?;
    let v = Interpreter::new(program, &env).eval(&m, key)?;
    v.as_bits()
        .map(|b| b.width())
        .ok_or_else(|| OracleError::Unsatisfiable("record-valued table key".into()))
}

/// Concrete tables and extern stand-ins for two environments that are
/// indistinguishable under the contracts. Tables get one row per contract
/// row, sometimes preceded by a row pinned to a single key value. Externs
/// share one stand-in.
pub fn instantiate_env_pair(
    program: &Program,
    contracts: &Contracts,
    seed: u64,
) -> Result<(DynamicEnv, DynamicEnv), OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e1 = DynamicEnv::default();
    let mut e2 = DynamicEnv::default();
    for c in &contracts.tables {
        let widths = c
            .keys
            .iter()
            .map(|k| key_width(program, k))
            .collect::<Result<Vec<_>, _>>()?;
        let (mut pinned1, mut pinned2, mut rows1, mut rows2) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for r in &c.rows {
            let push = |guard: Expr,
                        rng: &mut ChaCha8Rng,
                        r1: &mut Vec<TableRow>,
                        r2: &mut Vec<TableRow>| {
                let (mut a1, mut a2) = (Vec::new(), Vec::new());
                for t in &r.arg_types {
                    let (x, y) = value_pair(rng, t)?;
                    a1.push(x);
                    a2.push(y);
                }
                r1.push(TableRow {
                    guard: guard.clone(),
                    action: r.action.clone(),
                    args: a1,
                });
                r2.push(TableRow {
                    guard,
                    action: r.action.clone(),
                    args: a2,
                });
                Ok::<(), OracleError>(())
            };
            if !c.keys.is_empty() && rng.gen_bool(0.5) {
                let pin = c
                    .keys
                    .iter()
                    .zip(&widths)
                    .fold(r.cond.clone(), |g, (k, w)| {
                        g.and(Expr::cmp(
                            CmpOp::Eq,
                            k.clone(),
                            Expr::bits(*w, rng.gen_range(0..=mask(*w))),
                        ))
                    });
                push(pin, &mut rng, &mut pinned1, &mut pinned2)?;
            }
            push(r.cond.clone(), &mut rng, &mut rows1, &mut rows2)?;
        }
        pinned1.extend(rows1);
        pinned2.extend(rows2);
        e1.tables
            .push((c.table.clone(), ConcreteTable { rows: pinned1 }));
        e2.tables
            .push((c.table.clone(), ConcreteTable { rows: pinned2 }));
    }
    for c in &contracts.externs {
        let mut cases = Vec::new();
        for t in &c.tuples {
            let ops = match &t.ops {
                Some(ops) => ops.clone(),
                None => t
                    .effect
                    .iter()
                    .map(|(lv, ty)| {
                        Ok(ExternOp::Set(
                            lv.clone(),
                            value_pair(&mut rng, &ty.raise(Label::Low))?.0,
                        ))
                    })
                    .collect::<Result<_, OracleError>>()?,
            };
            cases.push(ExternCase {
                guard: t.cond.clone(),
                ops,
            });
        }
        let imp = ExternImpl { cases };
        e1.externs.push((c.name.clone(), imp.clone()));
        e2.externs.push((c.name.clone(), imp));
    }
    Ok((e1, e2))
}

fn lookup_action(
    program: &Program,
    m: &ConcState,
    env: &DynamicEnv,
    table: &str,
) -> Result<(String, Vec<Value>), OracleError> {
    let interp = Interpreter::new(program, env);
    if let Some(t) = env.table(table) {
        for r in &t.rows {
            if interp.holds(m, &r.guard)? {
                return Ok((r.action.clone(), r.args.clone()));
            }
        }
    }
    let decl = program
        .table(table)
        .ok_or_else(|| InterpError::UnknownTable(table.into()))?;
    Ok((decl.default_action.clone(), Vec::new()))
}

/// `E₁ ≡_T E₂` checked straight from its definition: for every key value
/// (all of them up to 16 key bits, a fixed sample beyond) and every
/// contract row whose condition holds, both environments pick the row's
/// action with arguments that fit the row's types and agree where the
/// type is LOW.
pub fn envs_indistinguishable(
    program: &Program,
    contracts: &Contracts,
    e1: &DynamicEnv,
    e2: &DynamicEnv,
) -> Result<bool, OracleError> {
    let env = DynamicEnv::default();
    let interp = Interpreter::new(program, &env);
    for c in &contracts.tables {
        let keys: Vec<LValue> = c
            .keys
            .iter()
            .map(|k| {
                k.as_lvalue()
                    .ok_or_else(|| OracleError::Unsatisfiable("table key is not an lvalue".into()))
            })
            .collect::<Result<_, _>>()?;
        let widths = c
            .keys
            .iter()
            .map(|k| key_width(program, k))
            .collect::<Result<Vec<_>, _>>()?;
        let bits: u32 = widths.iter().sum();
        let points: Vec<u128> = if bits <= 16 {
            (0..1u128 << bits).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(0x7ab1e);
            (0..4096)
                .map(|_| rng.gen::<u128>() & ((1u128 << bits.min(127)) - 1))
                .collect()
        };
        for p in points {
            let mut m = ConcState::zero(program)?;
            let mut rest = p;
            for (lv, w) in keys.iter().zip(&widths).rev() {
                m.set(lv, Value::bits(*w, (rest & mask(*w) as u128) as u64))?;
                rest >>= w;
            }
            let (a1, v1) = lookup_action(program, &m, e1, &c.table)?;
            let (a2, v2) = lookup_action(program, &m, e2, &c.table)?;
            for r in &c.rows {
                if !interp.holds(&m, &r.cond)? {
                    continue;
                }
                if a1 != r.action
                    || a2 != r.action
                    || v1.len() != r.arg_types.len()
                    || v2.len() != r.arg_types.len()
                {
                    return Ok(false);
                }
                for ((t, x), y) in r.arg_types.iter().zip(&v1).zip(&v2) {
                    let fits = t.value_has_type(x).unwrap_or(false)
                        && t.value_has_type(y).unwrap_or(false);
                    if !fits || (t.lbl() == Label::Low && x != y) {
                        return Ok(false);
                    }
                }
            }
        }
    }
    for c in &contracts.externs {
        if e1.extern_impl(&c.name) != e2.extern_impl(&c.name) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Which conclusion of the noninterference definition failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Violation {
    /// The first run satisfies the output policy, the second does not.
    Typing,
    /// Both satisfy it but differ on LOW bits.
    Equality,
    /// The second run has no result.
    Termination,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Counterexample {
    pub first: ConcState,
    pub second: ConcState,
    /// Seed the environment pair was drawn from.
    pub env_seed: u64,
    pub first_env: DynamicEnv,
    pub second_env: DynamicEnv,
    pub first_final: ConcState,
    pub second_final: Option<ConcState>,
    pub violation: Violation,
}

impl Counterexample {
    /// Re-runs both executions and checks that the same clause still fails.
    pub fn replays(&self, program: &Program, output: &StateType) -> Result<bool, OracleError> {
        let f1 = Interpreter::new(program, &self.first_env).run(self.first.clone())?;
        if f1 != self.first_final || !output.types_state(&f1)? {
            return Ok(false);
        }
        let f2 = Interpreter::new(program, &self.second_env)
            .run(self.second.clone())
            .ok();
        if f2 != self.second_final {
            return Ok(false);
        }
        Ok(match (&f2, self.violation) {
            (None, Violation::Termination) => true,
            (Some(f2), Violation::Typing) => !output.types_state(f2)?,
            (Some(f2), Violation::Equality) => {
                output.types_state(f2)? && !output.low_equiv(&f1, f2)?
            }
            _ => false,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "violation: {:?}", self.violation);
        let _ = writeln!(s, "environment seed: {}", self.env_seed);
        let block = |s: &mut String, name: &str, m: Option<&ConcState>| {
            let _ = writeln!(s, "{name}:");
            match m {
                Some(m) => {
                    for line in m.to_string().lines() {
                        let _ = writeln!(s, "  {line}");
                    }
                }
                None => s.push_str("  (no result)\n"),
            }
        };
        block(&mut s, "first", Some(&self.first));
        block(&mut s, "second", Some(&self.second));
        block(&mut s, "first final", Some(&self.first_final));
        block(&mut s, "second final", self.second_final.as_ref());
        s
    }
}

struct Run {
    out: Option<ConcState>,
    typed: bool,
    key: Vec<u64>,
}

fn run_all(
    program: &Program,
    env: &DynamicEnv,
    output: &StateType,
    states: &[ConcState],
) -> Result<Vec<Run>, OracleError> {
    let interp = Interpreter::new(program, env);
    states
        .iter()
        .map(|m| match interp.run(m.clone()) {
            Ok(f) => {
                let typed = output.types_state(&f)?;
                let key = if typed {
                    low_key(output, &f)
                } else {
                    Vec::new()
                };
                Ok(Run {
                    out: Some(f),
                    typed,
                    key,
                })
            }
            Err(_) => Ok(Run {
                out: None,
                typed: false,
                key: Vec::new(),
            }),
        })
        .collect()
}

/// First violating pair within one low-equivalence class.
fn class_violation(r1: &[Run], r2: &[Run]) -> Option<(usize, usize, Violation)> {
    let typed1: Vec<usize> = (0..r1.len()).filter(|&i| r1[i].typed).collect();
    let &first = typed1.first()?;
    // Distinct LOW projections among the second runs, with where they first occur.
    let mut distinct: Vec<(&[u64], usize)> = Vec::new();
    for (j, r) in r2.iter().enumerate() {
        if r.typed && !distinct.iter().any(|(k, _)| *k == r.key.as_slice()) {
            distinct.push((&r.key, j));
        }
    }
    for &i in &typed1 {
        if let Some(j) = distinct
            .iter()
            .filter(|(k, _)| *k != r1[i].key.as_slice())
            .map(|(_, j)| *j)
            .min()
        {
            return Some((i, j, Violation::Equality));
        }
    }
    if let Some(j) = r2.iter().position(|r| r.out.is_none()) {
        return Some((first, j, Violation::Termination));
    }
    r2.iter()
        .position(|r| !r.typed)
        .map(|j| (first, j, Violation::Typing))
}

fn env_seed(seed: u64, pair: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        .wrapping_add(pair as u64)
}

/// Searches for a violation of noninterference for one input and one
/// output policy case over every low-equivalent pair of input states and
/// `config.env_pairs` sampled environment pairs.
pub fn noninterference_oracle(
    program: &Program,
    input: &StateType,
    output: &StateType,
    contracts: &Contracts,
    config: &OracleConfig,
) -> Result<Option<Counterexample>, OracleError> {
    let space = enumerate_states(input, config)?;
    let mut seen: Vec<(DynamicEnv, DynamicEnv)> = Vec::new();
    for p in 0..config.env_pairs.max(1) {
        let seed = env_seed(config.seed, p);
        let (e1, e2) = instantiate_env_pair(program, contracts, seed)?;
        if seen.iter().any(|(a, b)| *a == e1 && *b == e2) {
            continue;
        }
        for c in 0..space.classes() {
            let states: Vec<ConcState> = (c * space.class_size()..(c + 1) * space.class_size())
                .map(|i| space.get(i))
                .collect();
            let r1 = run_all(program, &e1, output, &states)?;
            let r2_own;
            let r2 = if e1 == e2 {
                &r1
            } else {
                r2_own = run_all(program, &e2, output, &states)?;
                &r2_own
            };
            if let Some((i, j, violation)) = class_violation(&r1, r2) {
                return Ok(Some(Counterexample {
                    first: states[i].clone(),
                    second: states[j].clone(),
                    env_seed: seed,
                    first_final: r1[i].out.clone().expect("typed runs have a result"),
                    second_final: r2[j].out.clone(),
                    first_env: e1,
                    second_env: e2,
                    violation,
                }));
            }
        }
        seen.push((e1, e2));
    }
    Ok(None)
}

/// Sizes for generated programs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ProgramLimits {
    pub vars: usize,
    pub max_width: u32,
    pub max_depth: u32,
}

impl Default for ProgramLimits {
    fn default() -> ProgramLimits {
        ProgramLimits {
            vars: 3,
            max_width: 4,
            max_depth: 4,
        }
    }
}

/// Input and output cases generated per program; every pair is checked.
pub const POLICY_CASES: usize = 3;

/// A generated program with contracts and policy cases.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub seed: u64,
    pub source: String,
    pub contract_source: String,
    pub policy_source: String,
    pub program: Program,
    pub contracts: Contracts,
    pub inputs: Vec<PolicyCase>,
    pub outputs: Vec<PolicyCase>,
}

struct Gen {
    rng: ChaCha8Rng,
    vars: Vec<(String, u32)>,
    func: Option<u32>,
    table: bool,
    ext: Option<u32>,
}

impl Gen {
    fn pick<'v>(&mut self, vs: &'v [(String, u32)]) -> &'v (String, u32) {
        vs.choose(&mut self.rng).expect("scope is never empty")
    }

    /// Small constants dominate so equality tests hit assigned values.
    fn constant(&mut self, w: u32) -> String {
        let v = if self.rng.gen_bool(0.6) {
            self.rng.gen_range(0..4) & mask(w)
        } else {
            self.rng.gen_range(0..=mask(w))
        };
        v.to_string()
    }

    /// A variable or slice of width `w` from `scope`; some variable is always at least that wide.
    fn leaf(&mut self, scope: &[(String, u32)], w: u32) -> String {
        let wide: Vec<(String, u32)> = scope.iter().filter(|(_, vw)| *vw >= w).cloned().collect();
        let (n, vw) = self.pick(&wide).clone();
        if vw == w && self.rng.gen_bool(0.7) {
            n
        } else {
            let lo = self.rng.gen_range(0..=vw - w);
            format!("{n}[{}:{lo}]", lo + w - 1)
        }
    }

    fn expr(&mut self, scope: &[(String, u32)], w: u32, depth: u32) -> String {
        let k = if depth == 0 {
            self.rng.gen_range(0..2)
        } else {
            self.rng.gen_range(0..5)
        };
        match k {
            0 => self.leaf(scope, w),
            1 => self.constant(w),
            2 | 3 => {
                let op = ["+", "-", "&", "|", "^"]
                    .choose(&mut self.rng)
                    .expect("nonempty");
                let a = self.leaf(scope, w);
                let b = self.expr(scope, w, depth - 1);
                format!("({a} {op} {b})")
            }
            _ => {
                let op = ["~", "-"].choose(&mut self.rng).expect("nonempty");
                format!("{op}({})", self.expr(scope, w, depth - 1))
            }
        }
    }

    fn cond(&mut self, scope: &[(String, u32)], depth: u32) -> String {
        let k = self.rng.gen_range(0..6);
        if depth > 0 && k == 0 {
            let a = self.cond(scope, 0);
            let b = self.cond(scope, 0);
            return format!("{a} && {b}");
        }
        if depth > 0 && k == 1 {
            return format!("!({})", self.cond(scope, 0));
        }
        let w = self.pick(scope).1;
        let w = self.rng.gen_range(1..=w);
        let op = ["==", "==", "==", "==", "!=", "<", "<=", ">", ">="]
            .choose(&mut self.rng)
            .expect("nonempty");
        let a = self.leaf(scope, w);
        let b = if self.rng.gen_bool(0.6) {
            self.constant(w)
        } else {
            self.leaf(scope, w)
        };
        format!("({a} {op} {b})")
    }

    fn of_width(&self, w: u32) -> Vec<(String, u32)> {
        self.vars
            .iter()
            .filter(|(_, vw)| *vw == w)
            .cloned()
            .collect()
    }

    /// `calls` allows calls, applies and extern calls.
    fn stmt(
        &mut self,
        read: &[(String, u32)],
        write: &[(String, u32)],
        depth: u32,
        calls: bool,
        ind: usize,
    ) -> String {
        let pad = "    ".repeat(ind);
        let mut kinds = vec![0, 0, 0, 1];
        if depth > 0 {
            kinds.extend([2, 2, 3]);
        }
        if calls {
            if self.func.is_some() {
                kinds.push(4);
            }
            if self.table {
                kinds.extend([5, 5]);
            }
            if self.ext.is_some() {
                kinds.extend([6, 6]);
            }
        }
        match *kinds.choose(&mut self.rng).expect("nonempty") {
            0 => {
                let (n, w) = self.pick(write).clone();
                let e = self.expr(read, w, 2);
                format!("{pad}{n} = {e};\n")
            }
            1 => {
                let (n, w) = self.pick(write).clone();
                let sw = self.rng.gen_range(1..=w);
                let lo = self.rng.gen_range(0..=w - sw);
                let e = self.expr(read, sw, 1);
                format!("{pad}{n}[{}:{lo}] = {e};\n", lo + sw - 1)
            }
            2 => {
                let c = self.cond(read, 1);
                let t = self.stmt(read, write, depth - 1, calls, ind + 1);
                if self.rng.gen_bool(0.5) {
                    format!("{pad}if ({c}) {{\n{t}{pad}}}\n")
                } else {
                    let e = self.stmt(read, write, depth - 1, calls, ind + 1);
                    format!("{pad}if ({c}) {{\n{t}{pad}}} else {{\n{e}{pad}}}\n")
                }
            }
            3 => {
                let n = self.rng.gen_range(2..=3);
                (0..n)
                    .map(|_| self.stmt(read, write, depth - 1, calls, ind))
                    .collect()
            }
            4 => {
                let w = self.func.expect("function declared");
                let (n, _) = self.pick(&self.of_width(w)).clone();
                format!("{pad}f0({n});\n")
            }
            5 => format!("{pad}t0.apply();\n"),
            _ => {
                let w = self.ext.expect("extern declared");
                let (n, _) = self.pick(&self.of_width(w)).clone();
                format!("{pad}e0({n});\n")
            }
        }
    }

    /// Two or three conditionals, each testing the variable the previous
    /// one wrote.
    fn chain(&mut self, ind: usize) -> String {
        let pad = "    ".repeat(ind);
        let mut order = self.vars.clone();
        order.shuffle(&mut self.rng);
        let mut cur = order[0].clone();
        let mut out = String::new();
        for k in 0..self.rng.gen_range(2..=3) {
            let next = order[(k + 1) % order.len()].clone();
            let op = ["==", "==", "!=", "<=", ">"]
                .choose(&mut self.rng)
                .expect("nonempty");
            let c = self.constant(cur.1);
            let t = self.constant(next.1);
            let _ = write!(
                out,
                "{pad}if ({} {op} {c}) {{\n{pad}    {} = {t};\n{pad}}}",
                cur.0, next.0
            );
            if self.rng.gen_bool(0.5) {
                let e = self.constant(next.1);
                let _ = write!(out, " else {{\n{pad}    {} = {e};\n{pad}}}", next.0);
            }
            out.push('\n');
            cur = next;
        }
        out
    }

    fn interval(&mut self, w: u32, full_bias: f64) -> String {
        if self.rng.gen_bool(full_bias) {
            return "*".into();
        }
        if self.rng.gen_bool(0.3) {
            return self.constant(w);
        }
        let a = self.rng.gen_range(0..=mask(w));
        let b = self.rng.gen_range(0..=mask(w));
        let (a, b) = (a.min(b), a.max(b));
        if a == b {
            a.to_string()
        } else {
            format!("{a},{b}")
        }
    }

    fn label(&mut self) -> char {
        if self.rng.gen_bool(0.5) {
            'L'
        } else {
            'H'
        }
    }

    fn ty(&mut self, w: u32, full_bias: f64) -> String {
        if w >= 2 && self.rng.gen_bool(0.15) {
            let w1 = self.rng.gen_range(1..w);
            let (i1, l1) = (self.interval(w1, full_bias), self.label());
            let (i2, l2) = (self.interval(w - w1, full_bias), self.label());
            format!("[{i1}]^{l1}_{w1} · [{i2}]^{l2}_{}", w - w1)
        } else {
            let (i, l) = (self.interval(w, full_bias), self.label());
            format!("[{i}]^{l}_{w}")
        }
    }
}

/// Generates a program, its contracts and a pair of policy cases.
pub fn random_scenario(seed: u64, limits: ProgramLimits) -> Result<Scenario, OracleError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nvars = rng.gen_range(1..=limits.vars.max(1));
    let vars: Vec<(String, u32)> = (0..nvars)
        .map(|i| (format!("v{i}"), rng.gen_range(1..=limits.max_width.max(1))))
        .collect();
    let bits: u32 = vars.iter().map(|(_, w)| w).sum();
    let parser = bits < 12 && rng.gen_bool(0.25);
    let func = rng
        .gen_bool(0.3)
        .then(|| vars.choose(&mut rng).expect("nonempty").1);
    let table = rng.gen_bool(0.35);
    let ext = rng
        .gen_bool(0.3)
        .then(|| vars.choose(&mut rng).expect("nonempty").1);
    let mut g = Gen {
        rng,
        vars: vars.clone(),
        func,
        table,
        ext,
    };

    let mut src = String::new();
    for (n, w) in &vars {
        let _ = writeln!(src, "bit<{w}> {n};");
    }
    if let Some(w) = func {
        let mut scope = vars.clone();
        scope.push(("p0".into(), w));
        let body = g.stmt(&scope, &scope, 2, false, 1);
        let _ = write!(src, "\nfunction f0(inout bit<{w}> p0) {{\n{body}}}\n");
    }
    let mut ctr = String::new();
    if table {
        let (target, aw) = g.pick(&vars).clone();
        let mut scope = vars.clone();
        scope.push(("q".into(), aw));
        let rest = if g.rng.gen_bool(0.5) {
            g.stmt(&scope, &vars, 1, false, 1)
        } else {
            String::new()
        };
        let _ = write!(
            src,
            "\naction a0(bit<{aw}> q) {{\n    {target} = q;\n{rest}}}\n"
        );
        let body = if g.rng.gen_bool(0.7) {
            g.stmt(&vars, &vars, 1, false, 1)
        } else {
            String::new()
        };
        let _ = write!(src, "\naction a1() {{\n{body}}}\n");
        let (key, kw) = g.pick(&vars).clone();
        let _ = write!(
            src,
            "\ntable t0 {{\n    key = {{ {key}; }}\n    actions = {{ a0; a1; }}\n    default_action = a1;\n}}\n"
        );
        let c = g.rng.gen_range(0..=mask(kw));
        let arg = g.ty(aw, 0.4);
        let (first, second) = if g.rng.gen_bool(0.5) {
            (format!("a0({arg})"), "a1()".to_string())
        } else {
            ("a1()".to_string(), format!("a0({arg})"))
        };
        let _ = write!(
            ctr,
            "[table t0]\nrow {key} <= {c} -> {first}\nrow {key} > {c} -> {second}\n\n"
        );
    }
    if let Some(w) = ext {
        let _ = write!(src, "\nextern e0(inout bit<{w}> p);\n");
        let high_in = g.rng.gen_bool(0.5);
        let c = g.rng.gen_range(0..=mask(w));
        let _ = writeln!(ctr, "[extern e0]");
        for guard in [format!("p <= {c}"), format!("p > {c}")] {
            let a = g.rng.gen_range(0..=mask(w));
            let b = g.rng.gen_range(a..=mask(w));
            let l = if high_in { 'H' } else { g.label() };
            let _ = writeln!(
                ctr,
                "case\n    in p : [*]^{}_{w}\n    when {guard}\n    out p : [{a},{b}]^{l}_{w}",
                if high_in { 'H' } else { 'L' }
            );
            if g.rng.gen_bool(0.5) {
                let v = g.rng.gen_range(a..=b);
                let _ = writeln!(ctr, "    impl set p = {v}");
            }
        }
        ctr.push('\n');
    }
    if parser {
        let (sv, sw) = g.pick(&vars).clone();
        let pre = if g.rng.gen_bool(0.5) {
            g.stmt(&vars, &vars, 1, true, 2)
        } else {
            String::new()
        };
        let arm = g.constant(sw);
        let other = if g.rng.gen_bool(0.2) {
            "reject"
        } else {
            "accept"
        };
        let body = g.stmt(&vars, &vars, 1, true, 2);
        let end = if g.rng.gen_bool(0.15) {
            "reject"
        } else {
            "accept"
        };
        let _ = write!(
            src,
            "\nparser {{\n    state start {{\n{pre}        transition select({sv}) {{\n            {arm}: s1;\n            default: {other};\n        }}\n    }}\n    state s1 {{\n{body}        transition {end};\n    }}\n}}\n"
        );
    }
    let n = g.rng.gen_range(1..=3);
    let body: String = (0..n)
        .map(|_| {
            if g.rng.gen_bool(0.6) {
                g.chain(1)
            } else {
                g.stmt(&vars, &vars, limits.max_depth.saturating_sub(1), true, 1)
            }
        })
        .collect();
    let _ = write!(src, "\ncontrol {{\n{body}}}\n");

    let mut pol = String::new();
    for (kind, full_bias) in [("input", 0.4), ("output", 0.6)] {
        for i in 0..POLICY_CASES {
            let _ = writeln!(pol, "[{kind} {kind}{i}]");
            for (n, w) in &vars {
                let t = g.ty(*w, full_bias);
                let _ = writeln!(pol, "{n} : {t}");
            }
            pol.push('\n');
        }
    }

    let fail = |what: &str, e: &dyn std::fmt::Display, text: &str| {
        OracleError::Generate(format!("{what}: {e}\n{text}"))
    };
    let program = parse_program(&src).map_err(|e| fail("program", &e, &src))?;
    let contracts = parse_contracts(&ctr, &program).map_err(|e| fail("contracts", &e, &ctr))?;
    let policy = parse_policy(&pol, &program).map_err(|e| fail("policy", &e, &pol))?;
    let (inputs, outputs) = (policy.inputs(), policy.outputs());
    Ok(Scenario {
        seed,
        source: src,
        contract_source: ctr,
        policy_source: pol,
        program,
        contracts,
        inputs,
        outputs,
    })
}

/// A generated, validated program.
pub fn random_program(seed: u64, limits: ProgramLimits) -> Program {
    match random_scenario(seed, limits) {
        Ok(s) => s.program,
        Err(e) => panic!("generator produced an invalid program: {e}"),
    }
}

#[derive(Clone, Debug)]
pub enum Outcome {
    /// Contracts rejected, typing error, or over budget.
    Skipped(String),
    Checked {
        secure: bool,
        counterexample: Option<Box<Counterexample>>,
    },
}

/// Verdicts for every input/output pair of one scenario.
#[derive(Clone, Debug, Default)]
pub struct ScenarioResult {
    /// `(input, output, outcome)`, inputs outermost.
    pub cases: Vec<(usize, usize, Outcome)>,
    /// Per input case: a final state no final state type describes.
    pub untyped_finals: Vec<(usize, ConcState)>,
}

#[derive(Clone, Debug)]
pub struct Finding {
    pub seed: u64,
    pub input: usize,
    pub output: usize,
    pub counterexample: Counterexample,
}

#[derive(Clone, Debug, Default)]
pub struct DiffReport {
    pub programs: usize,
    /// Input/output pairs analyzed.
    pub cases: usize,
    pub secure: usize,
    pub insecure: usize,
    pub skipped: usize,
    /// The analyzer said secure and the oracle disagreed.
    pub soundness_violations: Vec<Finding>,
    /// `(seed, input case, final state)` escaping every final state type.
    pub abstraction_violations: Vec<(u64, usize, ConcState)>,
    /// Insecure verdicts without an oracle counterexample.
    pub incomplete: usize,
}

impl DiffReport {
    pub fn is_sound(&self) -> bool {
        self.soundness_violations.is_empty() && self.abstraction_violations.is_empty()
    }

    pub fn incompleteness_rate(&self) -> f64 {
        if self.insecure == 0 {
            0.0
        } else {
            self.incomplete as f64 / self.insecure as f64
        }
    }

    pub fn render(&self) -> String {
        format!(
            "programs: {}\ncases: {}\nsecure: {}\ninsecure: {}\nskipped: {}\nsoundness violations: {}\nabstraction violations: {}\nincompleteness: {}/{} ({:.1}%)\n",
            self.programs,
            self.cases,
            self.secure,
            self.insecure,
            self.skipped,
            self.soundness_violations.len(),
            self.abstraction_violations.len(),
            self.incomplete,
            self.insecure,
            100.0 * self.incompleteness_rate()
        )
    }
}

/// Every concrete result from `input` is typed by some state type in `gammas`.
fn first_untyped(
    s: &Scenario,
    input: &StateType,
    gammas: &[StateType],
    config: &OracleConfig,
) -> Result<Option<ConcState>, OracleError> {
    let space = enumerate_states(input, config)?;
    for p in 0..config.env_pairs.max(1) {
        let (e1, e2) = instantiate_env_pair(&s.program, &s.contracts, env_seed(config.seed, p))?;
        for env in [&e1, &e2] {
            let interp = Interpreter::new(&s.program, env);
            for m in space.iter() {
                let f = interp.run(m)?;
                let mut typed = false;
                for g in gammas {
                    if g.types_state(&f)? {
                        typed = true;
                        break;
                    }
                }
                if !typed {
                    return Ok(Some(f));
                }
            }
        }
    }
    Ok(None)
}

/// Analyzer and oracle on every policy pair of one generated scenario.
pub fn check_scenario(
    s: &Scenario,
    config: &OracleConfig,
    options: TyperOptions,
) -> ScenarioResult {
    let mut r = ScenarioResult::default();
    let errors: Vec<String> = check_contracts(&s.program, &s.contracts)
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .map(|d| d.to_string())
        .collect();
    let oc = OracleConfig {
        seed: s.seed,
        ..*config
    };
    for (i, input) in s.inputs.iter().enumerate() {
        let mut gammas = None;
        for (o, output) in s.outputs.iter().enumerate() {
            let outcome = if !errors.is_empty() {
                Outcome::Skipped(errors.join("; "))
            } else {
                match analyze_case(
                    &s.program,
                    input,
                    std::slice::from_ref(output),
                    &s.contracts,
                    options,
                ) {
                    Err(e) => Outcome::Skipped(e.to_string()),
                    Ok(v) => match noninterference_oracle(
                        &s.program,
                        &input.gamma,
                        &output.gamma,
                        &s.contracts,
                        &oc,
                    ) {
                        Err(e) => Outcome::Skipped(e.to_string()),
                        Ok(counterexample) => {
                            let secure = v.is_secure();
                            gammas = Some(v.gammas);
                            Outcome::Checked {
                                secure,
                                counterexample: counterexample.map(Box::new),
                            }
                        }
                    },
                }
            };
            r.cases.push((i, o, outcome));
        }
        if let Some(gs) = gammas {
            if let Ok(Some(f)) = first_untyped(s, &input.gamma, &gs, &oc) {
                r.untyped_finals.push((i, f));
            }
        }
    }
    r
}

/// Runs `config.programs` generated scenarios through analyzer and oracle.
/// Seeds are `config.seed`, `config.seed + 1`, and so on.
pub fn differential_check(config: &OracleConfig, options: TyperOptions) -> DiffReport {
    let results: Vec<(u64, Result<ScenarioResult, String>)> = (0..config.programs as u64)
        .into_par_iter()
        .map(|i| {
            let seed = config.seed.wrapping_add(i);
            let r = random_scenario(seed, ProgramLimits::default())
                .map(|s| check_scenario(&s, config, options))
                .map_err(|e| e.to_string());
            (seed, r)
        })
        .collect();
    let mut rep = DiffReport {
        programs: results.len(),
        ..DiffReport::default()
    };
    for (seed, r) in results {
        let Ok(r) = r else {
            rep.skipped += 1;
            continue;
        };
        for (input, output, o) in r.cases {
            rep.cases += 1;
            match o {
                Outcome::Skipped(_) => rep.skipped += 1,
                Outcome::Checked {
                    secure: true,
                    counterexample,
                } => {
                    rep.secure += 1;
                    if let Some(counterexample) = counterexample {
                        rep.soundness_violations.push(Finding {
                            seed,
                            input,
                            output,
                            counterexample: *counterexample,
                        });
                    }
                }
                Outcome::Checked {
                    secure: false,
                    counterexample,
                } => {
                    rep.insecure += 1;
                    rep.incomplete += usize::from(counterexample.is_none());
                }
            }
        }
        rep.abstraction_violations
            .extend(r.untyped_finals.into_iter().map(|(i, f)| (seed, i, f)));
    }
    rep
}
