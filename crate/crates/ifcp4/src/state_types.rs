//! State types: a security type for every variable in scope.

use std::fmt;

use thiserror::Error;

use crate::abstract_domain::{BvType, DomainError, Interval, Label, Slice, Ty};
use crate::interp::ConcState;
use crate::lang_ast::{mask, BinOp, Bits, CmpOp, Expr, LValue, Place, Program, Shape, UnOp, Value};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateError {
    #[error("unknown lvalue `{0}`")]
    UnknownLvalue(String),
    #[error("shape mismatch at `{0}`")]
    ShapeMismatch(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
}

/// A type for each global and each local in scope.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct StateType {
    pub globals: Vec<(String, Ty)>,
    pub locals: Vec<(String, Ty)>,
}

/// Types for some lvalues only, applied to a state type in order.
pub type PartialGamma = Vec<(LValue, Ty)>;

/// Every value of the shape, with one label.
pub fn uniform_ty(shape: &Shape, label: Label) -> Ty {
    match shape {
        Shape::Bits(w) => Ty::Bv(BvType::full(*w, label)),
        Shape::Record { fields, .. } => Ty::Rec(
            fields
                .iter()
                .map(|(n, s)| (n.clone(), uniform_ty(s, label)))
                .collect(),
        ),
    }
}

fn emptied(t: &Ty) -> Ty {
    match t {
        Ty::Bv(b) => Ty::Bv(
            BvType::new(
                b.slices()
                    .iter()
                    .map(|s| Slice {
                        interval: Interval::Empty,
                        ..*s
                    })
                    .collect(),
            )
            .expect("same slicing"),
        ),
        Ty::Rec(fs) => Ty::Rec(fs.iter().map(|(n, t)| (n.clone(), emptied(t))).collect()),
    }
}

fn map_leaves(t: &Ty, f: &mut impl FnMut(&BvType) -> BvType) -> Ty {
    match t {
        Ty::Bv(b) => Ty::Bv(f(b)),
        Ty::Rec(fs) => Ty::Rec(
            fs.iter()
                .map(|(n, t)| (n.clone(), map_leaves(t, f)))
                .collect(),
        ),
    }
}

/// Visits leaf types alongside the matching leaves of two values.
fn zip_values(
    t: &Ty,
    a: &Value,
    b: &Value,
    path: &str,
    f: &mut impl FnMut(&BvType, Bits, Bits) -> bool,
) -> Result<bool, StateError> {
    match (t, a, b) {
        (Ty::Bv(ty), Value::Bits(x), Value::Bits(y)) => {
            if ty.width() != x.width() || ty.width() != y.width() {
                return Err(StateError::ShapeMismatch(path.into()));
            }
            Ok(f(ty, *x, *y))
        }
        (Ty::Rec(fs), Value::Record(xs), Value::Record(ys))
            if fs.len() == xs.len() && fs.len() == ys.len() =>
        {
            let mut ok = true;
            for (((n, ft), (_, fx)), (_, fy)) in fs.iter().zip(xs).zip(ys) {
                ok &= zip_values(ft, fx, fy, &format!("{path}.{n}"), f)?;
            }
            Ok(ok)
        }
        _ => Err(StateError::ShapeMismatch(path.into())),
    }
}

fn lookup<'a>(scope: &'a [(String, Ty)], name: &str) -> Option<&'a Ty> {
    scope.iter().find(|(n, _)| n == name).map(|(_, t)| t)
}

impl StateType {
    pub fn new(globals: Vec<(String, Ty)>, locals: Vec<(String, Ty)>) -> StateType {
        StateType { globals, locals }
    }

    /// All globals of the program with full intervals and the given label.
    pub fn uniform(program: &Program, label: Label) -> Result<StateType, String> {
        let shapes = program.global_shapes()?;
        Ok(StateType::new(
            shapes
                .iter()
                .map(|(n, s)| (n.clone(), uniform_ty(s, label)))
                .collect(),
            Vec::new(),
        ))
    }

    pub fn lookup(&self, name: &str) -> Option<&Ty> {
        lookup(&self.locals, name).or_else(|| lookup(&self.globals, name))
    }

    fn lookup_mut(&mut self, name: &str) -> Option<&mut Ty> {
        if let Some(i) = self.locals.iter().position(|(n, _)| n == name) {
            return Some(&mut self.locals[i].1);
        }
        self.globals
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
    }

    fn place_ty(&self, p: &Place) -> Result<&Ty, StateError> {
        let mut t = self
            .lookup(&p.root)
            .ok_or_else(|| StateError::UnknownLvalue(p.path()))?;
        for f in &p.fields {
            t = t
                .field(f)
                .ok_or_else(|| StateError::UnknownLvalue(p.path()))?;
        }
        Ok(t)
    }

    pub fn contains(&self, lv: &LValue) -> bool {
        self.get(lv).is_ok()
    }

    /// Type of an lvalue; bit ranges go through slice projection.
    pub fn get(&self, lv: &LValue) -> Result<Ty, StateError> {
        let p = lv.place();
        let t = self.place_ty(&p)?;
        match p.range {
            None => Ok(t.clone()),
            Some((hi, lo)) => Ok(Ty::Bv(t.as_bv()?.project(hi, lo)?)),
        }
    }

    /// Like `get`, but cuts the containing slices at the range first so the
    /// result is as precise as re-slicing allows.
    pub fn get_precise(&self, lv: &LValue) -> Result<Ty, StateError> {
        let p = lv.place();
        let t = self.place_ty(&p)?;
        match p.range {
            None => Ok(t.clone()),
            Some((hi, lo)) => Ok(Ty::Bv(t.as_bv()?.project_resliced(hi, lo)?)),
        }
    }

    /// `γ[lval ↦ τ]`.
    pub fn update(&self, lv: &LValue, t: &Ty) -> Result<StateType, StateError> {
        let mut out = self.clone();
        out.update_in_place(lv, t)?;
        Ok(out)
    }

    pub fn update_in_place(&mut self, lv: &LValue, t: &Ty) -> Result<(), StateError> {
        let p = lv.place();
        let mut slot = self
            .lookup_mut(&p.root)
            .ok_or_else(|| StateError::UnknownLvalue(p.path()))?;
        for f in &p.fields {
            slot = slot
                .field_mut(f)
                .ok_or_else(|| StateError::UnknownLvalue(p.path()))?;
        }
        match p.range {
            None => {
                slot.zip_with(t, &mut |_, b| b.clone())
                    .map_err(|_| StateError::ShapeMismatch(lv.to_string()))?;
                *slot = t.clone();
            }
            Some((hi, lo)) => {
                let cur = slot.as_bv()?;
                *slot = Ty::Bv(cur.replace(hi, lo, t.as_bv()?)?);
            }
        }
        Ok(())
    }

    /// `γ ++ γ'`: right-biased override, entry by entry.
    pub fn concat(&self, other: &[(LValue, Ty)]) -> Result<StateType, StateError> {
        let mut out = self.clone();
        for (lv, t) in other {
            out.update_in_place(lv, t)?;
        }
        Ok(out)
    }

    /// Any slice anywhere with an empty interval.
    pub fn is_empty(&self) -> bool {
        self.globals
            .iter()
            .chain(&self.locals)
            .any(|(_, t)| t.is_empty())
    }

    /// Same shape with every interval empty.
    pub fn emptied(&self) -> StateType {
        let e = |xs: &[(String, Ty)]| xs.iter().map(|(n, t)| (n.clone(), emptied(t))).collect();
        StateType::new(e(&self.globals), e(&self.locals))
    }

    fn map(&self, f: &mut impl FnMut(&str, &BvType) -> BvType) -> StateType {
        let mut go = |xs: &[(String, Ty)]| -> Vec<(String, Ty)> {
            xs.iter()
                .map(|(n, t)| (n.clone(), map_leaves(t, &mut |b| f(n, b))))
                .collect()
        };
        let globals = go(&self.globals);
        let locals = go(&self.locals);
        StateType::new(globals, locals)
    }

    /// Raises every label to at least `l`.
    pub fn raise(&self, l: Label) -> StateType {
        self.map(&mut |_, b| b.raise(l))
    }

    fn zip(
        &self,
        other: &StateType,
        f: &mut impl FnMut(&BvType, &BvType) -> BvType,
    ) -> Result<StateType, StateError> {
        fn side(
            a: &[(String, Ty)],
            b: &[(String, Ty)],
            f: &mut impl FnMut(&BvType, &BvType) -> BvType,
        ) -> Result<Vec<(String, Ty)>, StateError> {
            if a.len() != b.len() {
                return Err(StateError::ShapeMismatch("scope".into()));
            }
            a.iter()
                .zip(b)
                .map(|((na, ta), (nb, tb))| {
                    if na != nb {
                        return Err(StateError::ShapeMismatch(format!("{na} vs {nb}")));
                    }
                    Ok((
                        na.clone(),
                        ta.zip_with(tb, f)
                            .map_err(|_| StateError::ShapeMismatch(na.clone()))?,
                    ))
                })
                .collect()
        }
        Ok(StateType::new(
            side(&self.globals, &other.globals, f)?,
            side(&self.locals, &other.locals, f)?,
        ))
    }

    /// Keeps this state type's intervals; raises labels where `other` has
    /// HIGH bits.
    pub fn join(&self, other: &StateType) -> Result<StateType, StateError> {
        self.zip(other, &mut |a, b| a.join_labels(b))
    }

    /// Label lub with interval hull.
    pub fn lub(&self, other: &StateType) -> Result<StateType, StateError> {
        self.zip(other, &mut |a, b| a.lub(b))
    }

    /// Every HIGH bit of `self` is HIGH in `other`.
    pub fn restrictive_leq(&self, other: &StateType) -> Result<bool, StateError> {
        let mut ok = true;
        self.zip(other, &mut |a, b| {
            ok &= a.high_mask() & !b.high_mask() == 0;
            a.clone()
        })?;
        Ok(ok)
    }

    /// Every HIGH bit of `self` at `lv` is HIGH in `bound`.
    pub fn labels_within(&self, lv: &LValue, bound: &Ty) -> Result<bool, StateError> {
        let t = self.get(lv)?;
        let mut ok = true;
        t.zip_with(bound, &mut |a, b| {
            ok &= a.high_mask() & !b.high_mask() == 0;
            a.clone()
        })
        .map_err(|_| StateError::ShapeMismatch(lv.to_string()))?;
        Ok(ok)
    }

    /// `γ ⊢ m`. Variables of `m` outside the state type are ignored.
    pub fn types_state(&self, m: &ConcState) -> Result<bool, StateError> {
        for (n, t) in self
            .globals
            .iter()
            .map(|g| (g, &m.globals))
            .chain(self.locals.iter().map(|l| (l, &m.locals)))
        {
            let (name, ty) = n;
            let v = t
                .iter()
                .find(|(k, _)| k == name)
                .map(|(_, v)| v)
                .ok_or_else(|| StateError::UnknownLvalue(name.clone()))?;
            if !ty
                .value_has_type(v)
                .map_err(|_| StateError::ShapeMismatch(name.clone()))?
            {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// `m1 ≡_γ m2`: every LOW bit agrees.
    pub fn low_equiv(&self, m1: &ConcState, m2: &ConcState) -> Result<bool, StateError> {
        let mut ok = true;
        for (scope, s1, s2) in [
            (&self.globals, &m1.globals, &m2.globals),
            (&self.locals, &m1.locals, &m2.locals),
        ] {
            for (name, ty) in scope {
                let find = |s: &[(String, Value)]| {
                    s.iter()
                        .find(|(k, _)| k == name)
                        .map(|(_, v)| v.clone())
                        .ok_or_else(|| StateError::UnknownLvalue(name.clone()))
                };
                let (a, b) = (find(s1)?, find(s2)?);
                ok &= zip_values(ty, &a, &b, name, &mut |t, x, y| {
                    (x.value() ^ y.value()) & !t.high_mask() == 0
                })?;
            }
        }
        Ok(ok)
    }

    /// Leaf types with dotted paths, globals first.
    pub fn leaves(&self) -> Vec<(String, &BvType)> {
        let mut out = Vec::new();
        for (n, t) in self.globals.iter().chain(&self.locals) {
            t.leaves(n, &mut out);
        }
        out
    }

    pub fn without_locals(&self) -> StateType {
        StateType::new(self.globals.clone(), Vec::new())
    }

    /// `refine(γ, e)`: narrows intervals to states where `e` may hold.
    /// Unsupported shapes leave the state type unchanged.
    pub fn refine(&self, e: &Expr, program: &Program) -> StateType {
        Refiner { program }.refine(self, e)
    }

    pub fn render(&self) -> String {
        let body: Vec<String> = self
            .leaves()
            .iter()
            .map(|(p, t)| format!("{p} ↦ {}", t.render()))
            .collect();
        format!("{{{}}}", body.join(", "))
    }
}

impl fmt::Display for StateType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// `join` of every element against all the others.
pub fn join_set(gammas: &[StateType]) -> Result<Vec<StateType>, StateError> {
    let Some(first) = gammas.first() else {
        return Ok(Vec::new());
    };
    let mut all = first.clone();
    for g in &gammas[1..] {
        all = all.lub(g)?;
    }
    gammas.iter().map(|g| g.join(&all)).collect()
}

struct Refiner<'a> {
    program: &'a Program,
}

impl Refiner<'_> {
    fn constant(&self, g: &StateType, e: &Expr) -> Option<Bits> {
        match e {
            Expr::Const(Value::Bits(b)) if !b.is_unsized() => Some(*b),
            Expr::Var(n) if g.lookup(n).is_none() => self.program.constant(n),
            _ => None,
        }
    }

    fn lvalue(&self, g: &StateType, e: &Expr) -> Option<(LValue, u32)> {
        let lv = e.as_lvalue()?;
        match g.get(&lv).ok()? {
            Ty::Bv(b) => Some((lv, b.width())),
            Ty::Rec(_) => None,
        }
    }

    fn refine(&self, g: &StateType, e: &Expr) -> StateType {
        if let Some(c) = self.constant(g, e) {
            return if c.width() == 1 && !c.is_true() {
                g.emptied()
            } else {
                g.clone()
            };
        }
        match e {
            Expr::Binop(BinOp::And, a, b) if self.is_bool(g, a) => {
                let g1 = self.refine(g, a);
                self.refine(&g1, b)
            }
            Expr::Unop(UnOp::LogNot, a) => self.refine_not(g, a),
            Expr::Unop(UnOp::BitNot, a) if self.is_bool(g, a) => self.refine_not(g, a),
            Expr::Cmp(op, a, b) => self.refine_cmp(g, *op, a, b),
            _ => match self.lvalue(g, e) {
                Some((lv, 1)) => self.refine_lval(g, &lv, CmpOp::Eq, 1),
                _ => g.clone(),
            },
        }
    }

    fn refine_not(&self, g: &StateType, e: &Expr) -> StateType {
        if let Some(c) = self.constant(g, e) {
            return if c.is_true() { g.emptied() } else { g.clone() };
        }
        match e {
            Expr::Binop(BinOp::Or, a, b) if self.is_bool(g, a) => {
                let g1 = self.refine_not(g, a);
                self.refine_not(&g1, b)
            }
            Expr::Unop(UnOp::LogNot, a) => self.refine(g, a),
            Expr::Unop(UnOp::BitNot, a) if self.is_bool(g, a) => self.refine(g, a),
            Expr::Cmp(op, a, b) => self.refine_cmp(g, op.negate(), a, b),
            _ => match self.lvalue(g, e) {
                Some((lv, 1)) => self.refine_lval(g, &lv, CmpOp::Eq, 0),
                _ => g.clone(),
            },
        }
    }

    /// Whether `e` is one bit wide, so `&`, `|`, `~` act as connectives.
    fn is_bool(&self, g: &StateType, e: &Expr) -> bool {
        match e {
            Expr::Cmp(..) | Expr::Unop(UnOp::LogNot, _) => true,
            Expr::Unop(_, a) | Expr::Binop(_, a, _) => self.is_bool(g, a),
            _ => {
                self.constant(g, e).is_some_and(|c| c.width() == 1)
                    || self.lvalue(g, e).is_some_and(|(_, w)| w == 1)
            }
        }
    }

    fn singleton(&self, g: &StateType, e: &Expr) -> Option<u64> {
        if let Some(c) = self.constant(g, e) {
            return Some(c.value());
        }
        let (lv, _) = self.lvalue(g, e)?;
        match g.get(&lv).ok()? {
            Ty::Bv(b) => b.as_single()?.interval.as_singleton(),
            Ty::Rec(_) => None,
        }
    }

    fn refine_cmp(&self, g: &StateType, op: CmpOp, a: &Expr, b: &Expr) -> StateType {
        let mut out = g.clone();
        if let (Some((lv, _)), Some(c)) = (self.lvalue(g, a), self.singleton(g, b)) {
            out = self.refine_lval(&out, &lv, op, c);
        }
        if let (Some((lv, _)), Some(c)) = (self.lvalue(g, b), self.singleton(g, a)) {
            out = self.refine_lval(&out, &lv, op.flip(), c);
        }
        out
    }

    fn refine_lval(&self, g: &StateType, lv: &LValue, op: CmpOp, c: u64) -> StateType {
        let p = lv.place();
        let Ok(Ty::Bv(bv)) = g.place_ty(&p) else {
            return g.clone();
        };
        let (hi, lo) = p.range.unwrap_or((bv.width() - 1, 0));
        let region = match bv.project_resliced(hi, lo) {
            Ok(r) => r,
            Err(_) => return g.clone(),
        };
        if region.slices().len() > 1 && op != CmpOp::Eq {
            return g.clone();
        }
        let refined = bv.map_range(hi, lo, |slices| match slices {
            [s] => vec![Slice {
                interval: constrain(s.interval, op, c, s.width),
                ..*s
            }],
            _ => {
                // equality fixes every slice to its part of the constant
                let mut shift = hi - lo + 1;
                slices
                    .iter()
                    .map(|s| {
                        shift -= s.width;
                        let part = (c >> shift) & mask(s.width);
                        Slice {
                            interval: s.interval.intersect(&Interval::singleton(part)),
                            ..*s
                        }
                    })
                    .collect()
            }
        });
        let Ok(nb) = refined else { return g.clone() };
        let whole = p
            .fields
            .iter()
            .fold(LValue::Var(p.root.clone()), |l, f| l.field(f));
        g.update(&whole, &Ty::Bv(nb)).unwrap_or_else(|_| g.clone())
    }
}

/// Narrows `i` to the values `v` with `v op c`.
fn constrain(i: Interval, op: CmpOp, c: u64, width: u32) -> Interval {
    let max = mask(width);
    if c > max {
        return match op {
            CmpOp::Eq | CmpOp::Gt | CmpOp::Ge => Interval::Empty,
            _ => i,
        };
    }
    match op {
        CmpOp::Eq => i.intersect(&Interval::singleton(c)),
        CmpOp::Ne => match i.bounds() {
            Some((lo, hi)) if lo == c && hi == c => Interval::Empty,
            Some((lo, hi)) if lo == c => Interval::new(lo + 1, hi),
            Some((lo, hi)) if hi == c => Interval::new(lo, hi - 1),
            _ => i,
        },
        CmpOp::Lt if c == 0 => Interval::Empty,
        CmpOp::Lt => i.intersect(&Interval::new(0, c - 1)),
        CmpOp::Le => i.intersect(&Interval::new(0, c)),
        CmpOp::Gt if c == max => Interval::Empty,
        CmpOp::Gt => i.intersect(&Interval::new(c + 1, max)),
        CmpOp::Ge => i.intersect(&Interval::new(c, max)),
    }
}
