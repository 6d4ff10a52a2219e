//! Path-sensitive security typing of statements: from one input state type
//! to the set of state types reachable at the end.

use std::collections::HashSet;

use thiserror::Error;

use crate::abstract_domain::{
    type_binop, type_cmp, type_leq, type_slice, type_unop, BvType, DomainError, Label, Ty,
};
use crate::lang_ast::{CmpOp, Expr, LValue, Param, Program, Stmt, Transition, Value};
use crate::policy::{Contracts, ExternTuple};
use crate::state_types::{join_set, StateError, StateType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TypeError {
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{0}` is neither a function, an action nor an extern")]
    UnknownFunction(String),
    #[error("unknown parser state `{0}`")]
    UnknownState(String),
    #[error("no contract for {kind} `{name}`")]
    MissingContract { kind: &'static str, name: String },
    #[error("`{f}` expects {expected} arguments, got {given}")]
    Arity {
        f: String,
        expected: usize,
        given: usize,
    },
    #[error("argument for out parameter `{0}` is not an lvalue")]
    NotAnLvalue(String),
    #[error("call to `{name}` violates the precondition of contract case {case} at `{lval}`")]
    ExternPrecondition {
        name: String,
        case: usize,
        lval: String,
    },
    #[error("more than {0} state types; raise the limit or simplify the policy")]
    TooManyGammas(usize),
}

/// Switches for the three soundness mechanisms (kept on outside of
/// mutation testing) and the path budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TyperOptions {
    pub join_on_high: bool,
    pub traverse_empty_on_high: bool,
    pub raise_to_pc: bool,
    pub max_gammas: usize,
}

impl Default for TyperOptions {
    fn default() -> TyperOptions {
        TyperOptions {
            join_on_high: true,
            traverse_empty_on_high: true,
            raise_to_pc: true,
            max_gammas: 4096,
        }
    }
}

/// Identity on LOW; otherwise every element label-joined with all others.
pub fn join_on_high(gammas: Vec<StateType>, l: Label) -> Result<Vec<StateType>, StateError> {
    match l {
        Label::Low => Ok(gammas),
        Label::High => join_set(&gammas),
    }
}

/// Ordered set of state types: first occurrence wins.
#[derive(Default)]
struct GammaSet {
    items: Vec<StateType>,
    seen: HashSet<StateType>,
}

impl GammaSet {
    fn push(&mut self, g: StateType) {
        if self.seen.insert(g.clone()) {
            self.items.push(g);
        }
    }

    fn extend(&mut self, gs: Vec<StateType>) {
        gs.into_iter().for_each(|g| self.push(g));
    }
}

pub struct Typer<'a> {
    pub program: &'a Program,
    pub contracts: &'a Contracts,
    pub options: TyperOptions,
}

impl<'a> Typer<'a> {
    pub fn new(program: &'a Program, contracts: &'a Contracts, options: TyperOptions) -> Typer<'a> {
        Typer {
            program,
            contracts,
            options,
        }
    }

    pub fn type_expr(&self, g: &StateType, e: &Expr) -> Result<Ty, TypeError> {
        Ok(match e {
            Expr::Const(v) => Ty::of_value(v),
            Expr::Var(n) => match g.lookup(n) {
                Some(t) => t.clone(),
                None => {
                    let c = self
                        .program
                        .constant(n)
                        .ok_or_else(|| TypeError::UnknownVariable(n.clone()))?;
                    Ty::of_value(&Value::Bits(c))
                }
            },
            Expr::Field(a, f) => self
                .type_expr(g, a)?
                .field(f)
                .cloned()
                .ok_or_else(|| TypeError::UnknownVariable(format!("{}.{f}", lval_text(a))))?,
            Expr::Slice(a, hi, lo) => Ty::Bv(type_slice(self.type_expr(g, a)?.as_bv()?, *hi, *lo)?),
            Expr::Unop(op, a) => Ty::Bv(type_unop(*op, self.type_expr(g, a)?.as_bv()?)?),
            Expr::Binop(op, a, b) => Ty::Bv(type_binop(
                *op,
                self.type_expr(g, a)?.as_bv()?,
                self.type_expr(g, b)?.as_bv()?,
            )?),
            Expr::Cmp(op, a, b) => Ty::Bv(type_cmp(
                *op,
                self.type_expr(g, a)?.as_bv()?,
                self.type_expr(g, b)?.as_bv()?,
            )?),
            Expr::Record(fs) => Ty::Rec(
                fs.iter()
                    .map(|(n, fe)| Ok((n.clone(), self.type_expr(g, fe)?)))
                    .collect::<Result<_, TypeError>>()?,
            ),
        })
    }

    fn label_of(&self, g: &StateType, e: &Expr) -> Result<Label, TypeError> {
        Ok(self.type_expr(g, e)?.lbl())
    }

    fn checked(&self, gs: GammaSet) -> Result<Vec<StateType>, TypeError> {
        if gs.items.len() > self.options.max_gammas {
            return Err(TypeError::TooManyGammas(self.options.max_gammas));
        }
        Ok(gs.items)
    }

    /// `T, pc, γ ⊢ s : Γ`.
    pub fn type_stmt(
        &self,
        pc: Label,
        g: &StateType,
        s: &Stmt,
    ) -> Result<Vec<StateType>, TypeError> {
        if g.is_empty() && (pc == Label::Low || !self.options.traverse_empty_on_high) {
            return Ok(Vec::new());
        }
        match s {
            Stmt::Skip => Ok(vec![g.clone()]),
            Stmt::Assign(lv, e) => {
                let mut t = self.type_expr(g, e)?;
                if self.options.raise_to_pc {
                    t = t.raise(pc);
                }
                Ok(vec![g.update(lv, &t)?])
            }
            Stmt::Seq(a, b) => {
                let mut out = GammaSet::default();
                for g1 in self.type_stmt(pc, g, a)? {
                    out.extend(self.type_stmt(pc, &g1, b)?);
                    if out.items.len() > self.options.max_gammas {
                        return Err(TypeError::TooManyGammas(self.options.max_gammas));
                    }
                }
                self.checked(out)
            }
            Stmt::If(c, t, e) => {
                let l = self.label_of(g, c)?;
                let inner = pc.lub(l);
                let mut out = GammaSet::default();
                out.extend(self.type_stmt(inner, &g.refine(c, self.program), t)?);
                out.extend(self.type_stmt(inner, &g.refine(&c.clone().not(), self.program), e)?);
                self.finish_branching(out, l)
            }
            Stmt::Transition(tr) => self.type_transition(pc, g, tr),
            Stmt::Call(f, args) => self.type_call(pc, g, f, args),
            Stmt::Apply(t) => self.type_apply(pc, g, t),
        }
    }

    fn finish_branching(&self, out: GammaSet, l: Label) -> Result<Vec<StateType>, TypeError> {
        let gs = self.checked(out)?;
        if self.options.join_on_high {
            Ok(join_on_high(gs, l)?)
        } else {
            Ok(gs)
        }
    }

    fn state_body(&self, name: &str) -> Result<Stmt, TypeError> {
        self.program
            .state_body(name)
            .ok_or_else(|| TypeError::UnknownState(name.into()))
    }

    fn type_transition(
        &self,
        pc: Label,
        g: &StateType,
        tr: &Transition,
    ) -> Result<Vec<StateType>, TypeError> {
        let Some(scrutinee) = &tr.scrutinee else {
            return self.type_stmt(pc, g, &self.state_body(&tr.default)?);
        };
        let l = self.label_of(g, scrutinee)?;
        let inner = pc.lub(l);
        let mut out = GammaSet::default();
        // arm i is taken when the scrutinee equals v_i and none of the earlier values
        let mut earlier = Expr::boolean(true);
        for (v, target) in &tr.arms {
            let eq = Expr::cmp(CmpOp::Eq, scrutinee.clone(), Expr::Const(v.clone()));
            let guard = eq.clone().and(earlier.clone());
            out.extend(self.type_stmt(
                inner,
                &g.refine(&guard, self.program),
                &self.state_body(target)?,
            )?);
            earlier = earlier.and(eq.not());
        }
        out.extend(self.type_stmt(
            inner,
            &g.refine(&earlier, self.program),
            &self.state_body(&tr.default)?,
        )?);
        self.finish_branching(out, l)
    }

    fn type_call(
        &self,
        pc: Label,
        g: &StateType,
        f: &str,
        args: &[Expr],
    ) -> Result<Vec<StateType>, TypeError> {
        if let Some(decl) = self.program.func(f) {
            check_arity(f, &decl.params, args)?;
            let arg_types = args
                .iter()
                .map(|a| self.type_expr(g, a))
                .collect::<Result<Vec<_>, _>>()?;
            return self.t_call(pc, f, &arg_types, g, args);
        }
        if self.program.extern_decl(f).is_some() {
            return self.type_extern(pc, g, f, args);
        }
        Err(TypeError::UnknownFunction(f.into()))
    }

    /// Copy-in of `arg_types`, the body under the callee's frame, then
    /// copy-out of out and inout parameters onto `args`.
    pub fn t_call(
        &self,
        pc: Label,
        f: &str,
        arg_types: &[Ty],
        g: &StateType,
        args: &[Expr],
    ) -> Result<Vec<StateType>, TypeError> {
        let decl = self
            .program
            .func(f)
            .ok_or_else(|| TypeError::UnknownFunction(f.into()))?;
        if decl.params.len() != arg_types.len() {
            return Err(TypeError::Arity {
                f: f.into(),
                expected: decl.params.len(),
                given: arg_types.len(),
            });
        }
        let frame = decl
            .params
            .iter()
            .zip(arg_types)
            .map(|(p, t)| (p.name.clone(), t.clone()))
            .collect();
        let inner = StateType::new(g.globals.clone(), frame);
        let mut out = GammaSet::default();
        for res in self.type_stmt(pc, &inner, &decl.body)? {
            out.push(copy_out(g, res, &decl.params, args)?);
        }
        self.checked(out)
    }

    fn type_apply(&self, pc: Label, g: &StateType, t: &str) -> Result<Vec<StateType>, TypeError> {
        let decl = self
            .program
            .table(t)
            .ok_or_else(|| TypeError::MissingContract {
                kind: "table",
                name: t.into(),
            })?;
        let contract = self
            .contracts
            .table(t)
            .ok_or_else(|| TypeError::MissingContract {
                kind: "table",
                name: t.into(),
            })?;
        let mut l = Label::Low;
        for k in &decl.keys {
            l = l.lub(self.label_of(g, k)?);
        }
        let inner = pc.lub(l);
        let mut out = GammaSet::default();
        for row in &contract.rows {
            let refined = g.refine(&row.cond, self.program);
            // actions take no copy-out: the caller keeps its locals
            for res in self.t_call(inner, &row.action, &row.arg_types, &refined, &[])? {
                out.push(StateType::new(res.globals, g.locals.clone()));
            }
        }
        self.finish_branching(out, l)
    }

    fn type_extern(
        &self,
        pc: Label,
        g: &StateType,
        f: &str,
        args: &[Expr],
    ) -> Result<Vec<StateType>, TypeError> {
        let decl = self
            .program
            .extern_decl(f)
            .ok_or_else(|| TypeError::UnknownFunction(f.into()))?;
        check_arity(f, &decl.params, args)?;
        let contract =
            self.contracts
                .extern_contract(f)
                .ok_or_else(|| TypeError::MissingContract {
                    kind: "extern",
                    name: f.into(),
                })?;
        let mut frame = Vec::with_capacity(args.len());
        for (p, a) in decl.params.iter().zip(args) {
            frame.push((p.name.clone(), self.type_expr(g, a)?));
        }
        let inner = StateType::new(g.globals.clone(), frame);
        for (i, tuple) in contract.tuples.iter().enumerate() {
            if let Some(lval) = precondition_violation(&inner, tuple)? {
                return Err(TypeError::ExternPrecondition {
                    name: f.into(),
                    case: i + 1,
                    lval,
                });
            }
        }
        let mut out = GammaSet::default();
        for tuple in &contract.tuples {
            let refined = inner.refine(&tuple.cond, self.program);
            if refined.is_empty() {
                continue;
            }
            let effect: Vec<(LValue, Ty)> = tuple
                .effect
                .iter()
                .map(|(lv, t)| (lv.clone(), t.raise(pc)))
                .collect();
            let res = refined.concat(&effect)?;
            out.push(copy_out(g, res, &decl.params, args)?);
        }
        self.checked(out)
    }

    /// Types the whole program (parser, then control) from an input case.
    /// Unsatisfiable final state types are dropped.
    pub fn analyze_case(&self, input: &StateType) -> Result<Vec<StateType>, TypeError> {
        let out = self.type_stmt(Label::Low, input, &self.program.entry())?;
        Ok(out.into_iter().filter(|g| !g.is_empty()).collect())
    }
}

fn lval_text(e: &Expr) -> String {
    e.as_lvalue()
        .map_or_else(|| "<expr>".to_string(), |lv| lv.to_string())
}

fn check_arity(f: &str, params: &[Param], args: &[Expr]) -> Result<(), TypeError> {
    if params.len() != args.len() {
        return Err(TypeError::Arity {
            f: f.into(),
            expected: params.len(),
            given: args.len(),
        });
    }
    Ok(())
}

/// Globals from the callee result, the caller's locals, and out-parameters
/// written back through their argument lvalues.
fn copy_out(
    caller: &StateType,
    callee: StateType,
    params: &[Param],
    args: &[Expr],
) -> Result<StateType, TypeError> {
    let mut out = StateType::new(callee.globals, caller.locals.clone());
    for (p, a) in params.iter().zip(args) {
        if !p.dir.is_out() {
            continue;
        }
        let lv = a
            .as_lvalue()
            .ok_or_else(|| TypeError::NotAnLvalue(p.name.clone()))?;
        let t = callee
            .locals
            .iter()
            .find(|(n, _)| *n == p.name)
            .map(|(_, t)| t.clone())
            .ok_or_else(|| TypeError::UnknownVariable(p.name.clone()))?;
        out.update_in_place(&lv, &t)?;
    }
    Ok(out)
}

/// First lvalue of the tuple's input state type that `g` does not fit in.
fn precondition_violation(g: &StateType, tuple: &ExternTuple) -> Result<Option<String>, TypeError> {
    for (lv, want) in &tuple.input {
        let have = g.get_precise(lv)?;
        let mut ok = true;
        let mut bad = None;
        have.zip_with(want, &mut |a: &BvType, b: &BvType| {
            match type_leq(a, b) {
                Ok(fits) => ok &= fits && a.high_mask() & !b.high_mask() == 0,
                Err(e) => bad = Some(e),
            }
            a.clone()
        })
        .map_err(|_| StateError::ShapeMismatch(lv.to_string()))?;
        if let Some(e) = bad {
            return Err(e.into());
        }
        if !ok {
            return Ok(Some(lv.to_string()));
        }
    }
    Ok(None)
}
