//! Policies, table and extern contracts, their load-time checks, and the
//! final verdict.

use std::collections::BTreeSet;
use std::fmt;

use crate::abstract_domain::{type_leq, BvType, Label, Ty};
use crate::interp::{ConcState, DynamicEnv, ExternOp, Interpreter};
use crate::lang_ast::{Expr, LValue, Program, Shape, Value};
use crate::state_types::{PartialGamma, StateError, StateType};
use crate::typer::{TypeError, Typer, TyperOptions};

/// One input or output policy case.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolicyCase {
    pub name: String,
    pub gamma: StateType,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractRow {
    pub cond: Expr,
    pub action: String,
    pub arg_types: Vec<Ty>,
}

/// Bounded model of a table: which action runs, with which argument types,
/// under which condition on the keys.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableContract {
    pub table: String,
    pub keys: Vec<Expr>,
    pub rows: Vec<ContractRow>,
}

/// One case of an extern contract.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternTuple {
    /// Required of the globals and parameters at the call.
    pub input: PartialGamma,
    pub cond: Expr,
    /// Side effects.
    pub effect: PartialGamma,
    /// Optional executable stand-in used by the oracle.
    pub ops: Option<Vec<ExternOp>>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternContract {
    pub name: String,
    pub tuples: Vec<ExternTuple>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Contracts {
    pub tables: Vec<TableContract>,
    pub externs: Vec<ExternContract>,
}

impl Contracts {
    pub fn table(&self, name: &str) -> Option<&TableContract> {
        self.tables.iter().find(|t| t.table == name)
    }

    pub fn extern_contract(&self, name: &str) -> Option<&ExternContract> {
        self.externs.iter().find(|e| e.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Note,
    Warning,
    Error,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractDiag {
    pub severity: Severity,
    pub subject: String,
    pub message: String,
}

impl ContractDiag {
    fn new(severity: Severity, subject: &str, message: impl Into<String>) -> ContractDiag {
        ContractDiag {
            severity,
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for ContractDiag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Note => "note",
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(f, "{sev}: {}: {}", self.subject, self.message)
    }
}

/// Lvalues read by an expression, outermost access paths only.
fn reads(e: &Expr, out: &mut Vec<LValue>) {
    if let Some(lv) = e.as_lvalue() {
        out.push(lv);
        return;
    }
    match e {
        Expr::Const(_) | Expr::Var(_) => {}
        Expr::Unop(_, a) | Expr::Field(a, _) | Expr::Slice(a, _, _) => reads(a, out),
        Expr::Binop(_, a, b) | Expr::Cmp(_, a, b) => {
            reads(a, out);
            reads(b, out);
        }
        Expr::Record(fs) => fs.iter().for_each(|(_, fe)| reads(fe, out)),
    }
}

/// `a` and `b` name overlapping storage (ignoring bit ranges).
fn overlaps(a: &LValue, b: &LValue) -> bool {
    let (pa, pb) = (a.place(), b.place());
    pa.root == pb.root && pa.fields.iter().zip(&pb.fields).all(|(x, y)| x == y)
}

fn min_label(t: &Ty) -> Label {
    let mut leaves = Vec::new();
    t.leaves("", &mut leaves);
    if leaves
        .iter()
        .any(|(_, b)| b.slices().iter().any(|s| s.label == Label::Low))
    {
        Label::Low
    } else {
        Label::High
    }
}

/// Shape a contract lvalue refers to at a call of `name`: globals, or
/// parameters whose declared type is known.
fn contract_place_shape(
    program: &Program,
    params: &[crate::lang_ast::Param],
    lv: &LValue,
) -> Option<Option<Shape>> {
    let place = lv.place();
    if let Some(p) = params.iter().find(|p| p.name == place.root) {
        let Some(ty) = &p.ty else { return Some(None) };
        let mut shape = program.resolve(ty).ok()?;
        for f in &place.fields {
            shape = shape.field(f)?.clone();
        }
        return Some(Some(match place.range {
            None => shape,
            Some((hi, lo)) => {
                let w = shape.width()?;
                if hi < lo || hi >= w {
                    return None;
                }
                Shape::Bits(hi - lo + 1)
            }
        }));
    }
    program.global_place_shape(&place).map(Some)
}

fn ty_fits_shape(t: &Ty, s: &Shape) -> bool {
    match (t, s) {
        (Ty::Bv(b), Shape::Bits(w)) => b.width() == *w,
        (Ty::Rec(fs), Shape::Record { fields, .. }) => {
            fs.len() == fields.len()
                && fs
                    .iter()
                    .zip(fields)
                    .all(|((n, t), (m, s))| n == m && ty_fits_shape(t, s))
        }
        _ => false,
    }
}

pub fn check_extern_contract(program: &Program, c: &ExternContract) -> Vec<ContractDiag> {
    let mut out = Vec::new();
    let Some(decl) = program.extern_decl(&c.name) else {
        out.push(ContractDiag::new(
            Severity::Error,
            &c.name,
            "contract for an undeclared extern",
        ));
        return out;
    };
    if c.tuples.is_empty() {
        out.push(ContractDiag::new(
            Severity::Error,
            &c.name,
            "no cases: condition coverage impossible",
        ));
    }
    for (i, tuple) in c.tuples.iter().enumerate() {
        let subject = format!("{} case {}", c.name, i + 1);
        for (lv, t) in tuple.input.iter().chain(&tuple.effect) {
            match contract_place_shape(program, &decl.params, lv) {
                None => out.push(ContractDiag::new(
                    Severity::Error,
                    &subject,
                    format!("`{lv}` is not a global or parameter"),
                )),
                Some(Some(s)) if !ty_fits_shape(t, &s) => out.push(ContractDiag::new(
                    Severity::Error,
                    &subject,
                    format!("type of `{lv}` does not fit its shape"),
                )),
                Some(_) => {}
            }
        }
        for (lv, _) in &tuple.effect {
            let root = lv.root();
            if let Some(p) = decl.params.iter().find(|p| p.name == root) {
                if !p.dir.is_out() {
                    out.push(ContractDiag::new(
                        Severity::Error,
                        &subject,
                        format!("effect on `{lv}`, but parameter `{root}` is not out or inout"),
                    ));
                }
            }
        }
        // reading HIGH data in the condition makes the choice of case secret
        let mut read = Vec::new();
        reads(&tuple.cond, &mut read);
        let floor = tuple
            .effect
            .iter()
            .map(|(_, t)| min_label(t))
            .fold(Label::High, Label::glb);
        for lv in read {
            if program.constant(lv.root()).is_some() && lv.place().fields.is_empty() {
                continue;
            }
            let related: Vec<&Ty> = tuple
                .input
                .iter()
                .filter(|(x, _)| overlaps(x, &lv))
                .map(|(_, t)| t)
                .collect();
            let label = if related.is_empty() {
                Label::High
            } else {
                related.iter().fold(Label::Low, |l, t| l.lub(t.lbl()))
            };
            if !label.leq(floor) {
                out.push(ContractDiag::new(
                    Severity::Error,
                    &subject,
                    format!(
                        "condition reads `{lv}`, which may be HIGH, but the effect has LOW parts"
                    ),
                ));
            }
        }
        for op in tuple.ops.iter().flatten() {
            let target = match op {
                ExternOp::Set(lv, _) | ExternOp::Copy(lv, _) => lv.clone(),
                ExternOp::Extract(h) => h.clone().field(crate::lang_ast::VALID_FIELD),
            };
            let covered = tuple.effect.iter().any(|(lv, _)| {
                overlaps(lv, &target) && lv.place().fields.len() <= target.place().fields.len()
            });
            if !covered {
                out.push(ContractDiag::new(
                    Severity::Error,
                    &subject,
                    format!("stand-in writes `{target}` outside the effect"),
                ));
            }
            if let ExternOp::Set(lv, v) = op {
                if let Some((_, t)) = tuple.effect.iter().find(|(x, _)| x == lv) {
                    if !t.value_has_type(v).unwrap_or(false) {
                        out.push(ContractDiag::new(
                            Severity::Error,
                            &subject,
                            format!("stand-in value for `{lv}` is outside its effect type"),
                        ));
                    }
                }
            }
        }
    }
    out
}

/// Largest key space enumerated for the exhaustiveness check.
const EXHAUSTIVE_BITS: u32 = 16;

pub fn check_table_contract(program: &Program, c: &TableContract) -> Vec<ContractDiag> {
    let mut out = Vec::new();
    let subject = c.table.as_str();
    let Some(decl) = program.table(&c.table) else {
        out.push(ContractDiag::new(
            Severity::Error,
            subject,
            "contract for an undeclared table",
        ));
        return out;
    };
    for (i, row) in c.rows.iter().enumerate() {
        let at = format!("{subject} row {}", i + 1);
        if !decl.actions.contains(&row.action) {
            out.push(ContractDiag::new(
                Severity::Error,
                &at,
                format!("`{}` is not an action of the table", row.action),
            ));
            continue;
        }
        let Some(action) = program.func(&row.action) else {
            out.push(ContractDiag::new(
                Severity::Error,
                &at,
                format!("unknown action `{}`", row.action),
            ));
            continue;
        };
        if action.params.len() != row.arg_types.len() {
            out.push(ContractDiag::new(
                Severity::Error,
                &at,
                format!(
                    "`{}` takes {} arguments, contract gives {}",
                    row.action,
                    action.params.len(),
                    row.arg_types.len()
                ),
            ));
            continue;
        }
        for (p, t) in action.params.iter().zip(&row.arg_types) {
            let fits = match p.ty.as_ref().map(|ty| program.resolve(ty)) {
                Some(Ok(s)) => ty_fits_shape(t, &s),
                _ => false,
            };
            if !fits {
                out.push(ContractDiag::new(
                    Severity::Error,
                    &at,
                    format!(
                        "argument type for `{}` does not match its declaration",
                        p.name
                    ),
                ));
            }
        }
        let mut read = Vec::new();
        reads(&row.cond, &mut read);
        for lv in read {
            if program.constant(lv.root()).is_some() {
                continue;
            }
            if !c
                .keys
                .iter()
                .filter_map(Expr::as_lvalue)
                .any(|k| within_key(&lv, &k))
            {
                out.push(ContractDiag::new(
                    Severity::Error,
                    &at,
                    format!("condition reads `{lv}`, which is not a key"),
                ));
            }
        }
    }
    if out.iter().all(|d| d.severity != Severity::Error) {
        out.extend(exhaustiveness(program, c));
    }
    out
}

fn within_key(lv: &LValue, key: &LValue) -> bool {
    let (a, k) = (lv.place(), key.place());
    a.root == k.root && a.fields == k.fields && (k.range.is_none() || a.range == k.range)
}

/// Enumerates the key bits the conditions read and reports an assignment no
/// row covers.
fn exhaustiveness(program: &Program, c: &TableContract) -> Vec<ContractDiag> {
    let subject = c.table.as_str();
    let keys: Option<Vec<LValue>> = c.keys.iter().map(Expr::as_lvalue).collect();
    let Some(keys) = keys else {
        return vec![ContractDiag::new(
            Severity::Note,
            subject,
            "exhaustiveness not checked: a key is not an lvalue",
        )];
    };
    let Ok(zero) = ConcState::zero(program) else {
        return Vec::new();
    };
    // (key index, bit) pairs the conditions depend on
    let mut bits: BTreeSet<(usize, u32)> = BTreeSet::new();
    for row in &c.rows {
        let mut read = Vec::new();
        reads(&row.cond, &mut read);
        for lv in read {
            for (i, k) in keys.iter().enumerate() {
                if !within_key(&lv, k) {
                    continue;
                }
                let Some(width) = zero
                    .get(k)
                    .ok()
                    .and_then(|v| v.as_bits())
                    .map(|b| b.width())
                else {
                    continue;
                };
                let (hi, lo) = match (lv.place().range, k.place().range) {
                    (Some((hi, lo)), None) => (hi, lo),
                    _ => (width - 1, 0),
                };
                bits.extend((lo..=hi).map(|b| (i, b)));
            }
        }
    }
    let bits: Vec<(usize, u32)> = bits.into_iter().collect();
    if bits.len() as u32 > EXHAUSTIVE_BITS {
        return vec![ContractDiag::new(
            Severity::Note,
            subject,
            format!(
                "exhaustiveness not checked: conditions read {} key bits",
                bits.len()
            ),
        )];
    }
    let env = DynamicEnv::default();
    let interp = Interpreter::new(program, &env);
    for n in 0u64..(1 << bits.len()) {
        let mut m = zero.clone();
        let mut values: Vec<u64> = vec![0; keys.len()];
        for (j, (i, b)) in bits.iter().enumerate() {
            values[*i] |= ((n >> j) & 1) << b;
        }
        for (k, v) in keys.iter().zip(&values) {
            let Ok(Value::Bits(cur)) = m.get(k) else {
                return Vec::new();
            };
            if m.set(k, Value::bits(cur.width(), *v)).is_err() {
                return Vec::new();
            }
        }
        let covered = c
            .rows
            .iter()
            .any(|r| interp.holds(&m, &r.cond).unwrap_or(true));
        if !covered {
            let shown: Vec<String> = keys
                .iter()
                .zip(&values)
                .map(|(k, v)| format!("{k} = {v}"))
                .collect();
            return vec![ContractDiag::new(
                Severity::Warning,
                subject,
                format!(
                    "rows are not exhaustive: no row matches {}",
                    shown.join(", ")
                ),
            )];
        }
    }
    Vec::new()
}

/// Diagnostics for all contracts, plus a missing contract for every table
/// and extern the program declares.
pub fn check_contracts(program: &Program, contracts: &Contracts) -> Vec<ContractDiag> {
    let mut out = Vec::new();
    for t in &program.tables {
        if contracts.table(&t.name).is_none() {
            out.push(ContractDiag::new(
                Severity::Error,
                &t.name,
                "table has no contract",
            ));
        }
    }
    for e in &program.externs {
        if contracts.extern_contract(&e.name).is_none() {
            out.push(ContractDiag::new(
                Severity::Error,
                &e.name,
                "extern has no contract",
            ));
        }
    }
    for t in &contracts.tables {
        out.extend(check_table_contract(program, t));
    }
    for e in &contracts.externs {
        out.extend(check_extern_contract(program, e));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Clause {
    /// `γ₁ ⊔ γ₂` has a HIGH bit the output case wants LOW.
    Restrictive,
    /// `γ₂` escapes the output case's interval and `γ₁ ⊔ γ₂` is HIGH there.
    Inclusion,
}

/// Indices into the final state types and output cases, and the leaf at fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Witness {
    pub first: usize,
    pub second: usize,
    pub output: usize,
    pub lval: String,
    pub clause: Clause,
}

fn meets(a: &StateType, b: &StateType) -> Result<bool, StateError> {
    let (la, lb) = (a.leaves(), b.leaves());
    if la.len() != lb.len() {
        return Err(StateError::ShapeMismatch("policy".into()));
    }
    for ((pa, x), (pb, y)) in la.iter().zip(&lb) {
        if pa != pb || x.width() != y.width() {
            return Err(StateError::ShapeMismatch(pa.clone()));
        }
        if !x.meets(y) {
            return Ok(false);
        }
    }
    Ok(true)
}

fn leaf_pairs<'a>(
    a: &'a StateType,
    b: &'a StateType,
) -> Result<Vec<(String, &'a BvType, &'a BvType)>, StateError> {
    let (la, lb) = (a.leaves(), b.leaves());
    if la.len() != lb.len() {
        return Err(StateError::ShapeMismatch("policy".into()));
    }
    la.into_iter()
        .zip(lb)
        .map(|((p, x), (q, y))| {
            if p == q && x.width() == y.width() {
                Ok((p, x, y))
            } else {
                Err(StateError::ShapeMismatch(p))
            }
        })
        .collect()
}

/// Checks the final state types against every output case; `None` means
/// secure. Ordered pairs are scanned both ways, including the diagonal.
pub fn sufficient_condition(
    gammas: &[StateType],
    outputs: &[PolicyCase],
) -> Result<Option<Witness>, StateError> {
    for (o, out) in outputs.iter().enumerate() {
        let go = &out.gamma;
        let hits: Vec<bool> = gammas
            .iter()
            .map(|g| meets(g, go))
            .collect::<Result<_, _>>()?;
        for (i, g1) in gammas.iter().enumerate() {
            if !hits[i] {
                continue;
            }
            for (j, g2) in gammas.iter().enumerate() {
                let joined = g1.lub(g2)?;
                let pairs = leaf_pairs(&joined, go)?;
                if hits[j] {
                    for (path, t, want) in &pairs {
                        if t.high_mask() & !want.high_mask() != 0 {
                            return Ok(Some(Witness {
                                first: i,
                                second: j,
                                output: o,
                                lval: path.clone(),
                                clause: Clause::Restrictive,
                            }));
                        }
                    }
                }
                for ((path, t, want), (_, own, _)) in pairs.iter().zip(leaf_pairs(g2, go)?) {
                    let included =
                        type_leq(own, &want.raise(Label::High)).map_err(StateError::from)?;
                    if !included && t.lbl() == Label::High {
                        return Ok(Some(Witness {
                            first: i,
                            second: j,
                            output: o,
                            lval: path.clone(),
                            clause: Clause::Inclusion,
                        }));
                    }
                }
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CaseVerdict {
    pub input: String,
    pub gammas: Vec<StateType>,
    pub witness: Option<Witness>,
}

impl CaseVerdict {
    pub fn is_secure(&self) -> bool {
        self.witness.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Verdict {
    pub cases: Vec<CaseVerdict>,
}

impl Verdict {
    pub fn is_secure(&self) -> bool {
        self.cases.iter().all(CaseVerdict::is_secure)
    }

    /// First insecure case and its witness.
    pub fn first_witness(&self) -> Option<(&CaseVerdict, &Witness)> {
        self.cases
            .iter()
            .find_map(|c| c.witness.as_ref().map(|w| (c, w)))
    }
}

/// Types one input case and checks the result.
pub fn analyze_case(
    program: &Program,
    input: &PolicyCase,
    outputs: &[PolicyCase],
    contracts: &Contracts,
    options: TyperOptions,
) -> Result<CaseVerdict, TypeError> {
    let gammas = Typer::new(program, contracts, options).analyze_case(&input.gamma)?;
    let witness = sufficient_condition(&gammas, outputs)?;
    Ok(CaseVerdict {
        input: input.name.clone(),
        gammas,
        witness,
    })
}

pub fn analyze(
    program: &Program,
    inputs: &[PolicyCase],
    outputs: &[PolicyCase],
    contracts: &Contracts,
    options: TyperOptions,
) -> Result<Verdict, TypeError> {
    let cases = inputs
        .iter()
        .map(|i| analyze_case(program, i, outputs, contracts, options))
        .collect::<Result<_, _>>()?;
    Ok(Verdict { cases })
}

/// Human-readable account of a verdict, one block per input case.
pub fn render_verdict(v: &Verdict, outputs: &[PolicyCase]) -> String {
    let mut s = String::new();
    for c in &v.cases {
        match &c.witness {
            None => s.push_str(&format!(
                "case {}: SECURE ({} state types)\n",
                c.input,
                c.gammas.len()
            )),
            Some(w) => {
                let clause = match w.clause {
                    Clause::Restrictive => "HIGH where the output policy requires LOW",
                    Clause::Inclusion => "HIGH and outside the output policy interval",
                };
                s.push_str(&format!(
                    "case {}: INSECURE ({} state types)\n",
                    c.input,
                    c.gammas.len()
                ));
                s.push_str(&format!("  {}: {clause}\n", w.lval));
                s.push_str(&format!("  first:  {}\n", c.gammas[w.first]));
                s.push_str(&format!("  second: {}\n", c.gammas[w.second]));
                if let Some(o) = outputs.get(w.output) {
                    s.push_str(&format!("  output {}: {}\n", o.name, o.gamma));
                }
            }
        }
    }
    s.push_str(if v.is_secure() {
        "SECURE\n"
    } else {
        "INSECURE\n"
    });
    s
}
