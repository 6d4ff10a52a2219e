//! Concrete big-step semantics.

use std::fmt;

use thiserror::Error;

use crate::lang_ast::{
    Bits, Direction, Expr, FuncDecl, FuncKind, LValue, Param, Place, Program, Shape, Stmt, Value,
    VALID_FIELD,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum InterpError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("`{path}` has no field `{field}`")]
    NoField { path: String, field: String },
    #[error("`{0}` is a record where a bitvector is expected")]
    NotBits(String),
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error("unknown parser state `{0}`")]
    UnknownState(String),
    #[error("`{f}` takes {expected} arguments, given {given}")]
    Arity {
        f: String,
        expected: usize,
        given: usize,
    },
    #[error("argument for `{0}` is not an lvalue")]
    NotAnLvalue(String),
    #[error("shape mismatch writing `{0}`")]
    ShapeMismatch(String),
    #[error("bad program: {0}")]
    Program(String),
}

/// A concrete state: globals plus the locals of the running function.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ConcState {
    pub globals: Vec<(String, Value)>,
    pub locals: Vec<(String, Value)>,
}

impl ConcState {
    pub fn new(globals: Vec<(String, Value)>, locals: Vec<(String, Value)>) -> ConcState {
        ConcState { globals, locals }
    }

    /// All globals of the program set to zero.
    pub fn zero(program: &Program) -> Result<ConcState, InterpError> {
        let shapes = program.global_shapes().map_err(InterpError::Program)?;
        Ok(ConcState::new(
            shapes
                .iter()
                .map(|(n, s)| (n.clone(), Value::zero(s)))
                .collect(),
            Vec::new(),
        ))
    }

    pub fn lookup(&self, name: &str) -> Option<&Value> {
        self.locals
            .iter()
            .chain(&self.globals)
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    fn lookup_mut(&mut self, name: &str) -> Option<&mut Value> {
        if let Some(i) = self.locals.iter().position(|(n, _)| n == name) {
            return Some(&mut self.locals[i].1);
        }
        self.globals
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }

    pub fn get(&self, lv: &LValue) -> Result<Value, InterpError> {
        get_place(self, &lv.place())
    }

    pub fn set(&mut self, lv: &LValue, v: Value) -> Result<(), InterpError> {
        set_place(self, &lv.place(), v)
    }

    /// Every leaf bitvector, globals first, with dotted paths.
    pub fn leaves(&self) -> Vec<(String, Bits)> {
        let mut out = Vec::new();
        for (n, v) in self.globals.iter().chain(&self.locals) {
            v.leaves(n, &mut out);
        }
        out
    }
}

impl fmt::Display for ConcState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (path, b) in self.leaves() {
            writeln!(f, "{path} = {}", b.value())?;
        }
        Ok(())
    }
}

fn get_place(m: &ConcState, p: &Place) -> Result<Value, InterpError> {
    let mut v = m
        .lookup(&p.root)
        .ok_or_else(|| InterpError::UnknownVariable(p.root.clone()))?;
    let mut path = p.root.clone();
    for f in &p.fields {
        v = v.field(f).ok_or_else(|| InterpError::NoField {
            path: path.clone(),
            field: f.clone(),
        })?;
        path = format!("{path}.{f}");
    }
    match p.range {
        None => Ok(v.clone()),
        Some((hi, lo)) => {
            let b = v.as_bits().ok_or(InterpError::NotBits(path))?;
            Ok(Value::Bits(b.slice(hi, lo)))
        }
    }
}

fn set_place(m: &mut ConcState, p: &Place, new: Value) -> Result<(), InterpError> {
    let mut v = m
        .lookup_mut(&p.root)
        .ok_or_else(|| InterpError::UnknownVariable(p.root.clone()))?;
    let mut path = p.root.clone();
    for f in &p.fields {
        v = v.field_mut(f).ok_or_else(|| InterpError::NoField {
            path: path.clone(),
            field: f.clone(),
        })?;
        path = format!("{path}.{f}");
    }
    match p.range {
        None => {
            if !same_shape(v, &new) {
                return Err(InterpError::ShapeMismatch(path));
            }
            *v = new;
        }
        Some((hi, lo)) => {
            let (Some(old), Some(part)) = (v.as_bits(), new.as_bits()) else {
                return Err(InterpError::NotBits(path));
            };
            if part.width() != hi - lo + 1 {
                return Err(InterpError::ShapeMismatch(path));
            }
            *v = Value::Bits(old.with_slice(hi, lo, part.value()));
        }
    }
    Ok(())
}

fn same_shape(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Bits(x), Value::Bits(y)) => x.width() == y.width(),
        (Value::Record(fa), Value::Record(fb)) => {
            fa.len() == fb.len()
                && fa
                    .iter()
                    .zip(fb)
                    .all(|((na, va), (nb, vb))| na == nb && same_shape(va, vb))
        }
        _ => false,
    }
}

/// One table entry: taken when `guard` holds in the applying state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableRow {
    pub guard: Expr,
    pub action: String,
    pub args: Vec<Value>,
}

/// Concrete contents of a table; first match wins, otherwise the table's
/// declared default action runs with no arguments.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ConcreteTable {
    pub rows: Vec<TableRow>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ExternOp {
    Set(LValue, Value),
    Copy(LValue, LValue),
    /// Marks the header valid; its fields come from the packet as given.
    Extract(LValue),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternCase {
    pub guard: Expr,
    pub ops: Vec<ExternOp>,
}

/// Executable stand-in for an extern: the first case whose guard holds runs.
/// With no matching case the extern leaves its state unchanged.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ExternImpl {
    pub cases: Vec<ExternCase>,
}

/// Run-time meaning of tables and externs.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DynamicEnv {
    pub tables: Vec<(String, ConcreteTable)>,
    pub externs: Vec<(String, ExternImpl)>,
}

impl DynamicEnv {
    pub fn table(&self, name: &str) -> Option<&ConcreteTable> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn extern_impl(&self, name: &str) -> Option<&ExternImpl> {
        self.externs.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }
}

/// Evaluates and executes against one program and dynamic environment.
pub struct Interpreter<'a> {
    pub program: &'a Program,
    pub env: &'a DynamicEnv,
}

impl<'a> Interpreter<'a> {
    pub fn new(program: &'a Program, env: &'a DynamicEnv) -> Interpreter<'a> {
        Interpreter { program, env }
    }

    pub fn eval(&self, m: &ConcState, e: &Expr) -> Result<Value, InterpError> {
        Ok(match e {
            Expr::Const(v) => v.clone(),
            Expr::Var(n) => match m.lookup(n) {
                Some(v) => v.clone(),
                None => Value::Bits(
                    self.program
                        .constant(n)
                        .ok_or_else(|| InterpError::UnknownVariable(n.clone()))?,
                ),
            },
            Expr::Unop(op, a) => {
                let a = self.eval_bits(m, a)?;
                let (w, v) = op.apply(a.width(), a.value());
                Value::bits(w, v)
            }
            Expr::Binop(op, a, b) => {
                let (a, b) = (self.eval_bits(m, a)?, self.eval_bits(m, b)?);
                Value::bits(a.width(), op.apply(a.width(), a.value(), b.value()))
            }
            Expr::Cmp(op, a, b) => {
                let (a, b) = (self.eval_bits(m, a)?, self.eval_bits(m, b)?);
                Value::Bits(Bits::boolean(op.holds(a.value(), b.value())))
            }
            Expr::Field(a, f) => {
                let v = self.eval(m, a)?;
                v.field(f).cloned().ok_or_else(|| InterpError::NoField {
                    path: format!("{a:?}"),
                    field: f.clone(),
                })?
            }
            Expr::Slice(a, hi, lo) => Value::Bits(self.eval_bits(m, a)?.slice(*hi, *lo)),
            Expr::Record(fs) => {
                let mut out = Vec::with_capacity(fs.len());
                for (n, fe) in fs {
                    out.push((n.clone(), self.eval(m, fe)?));
                }
                Value::Record(out)
            }
        })
    }

    fn eval_bits(&self, m: &ConcState, e: &Expr) -> Result<Bits, InterpError> {
        self.eval(m, e)?
            .as_bits()
            .ok_or_else(|| InterpError::NotBits(format!("{e:?}")))
    }

    pub fn holds(&self, m: &ConcState, e: &Expr) -> Result<bool, InterpError> {
        Ok(self.eval_bits(m, e)?.is_true())
    }

    pub fn exec(&self, m: ConcState, s: &Stmt) -> Result<ConcState, InterpError> {
        match s {
            Stmt::Skip => Ok(m),
            Stmt::Assign(lv, e) => {
                let v = self.eval(&m, e)?;
                let mut m = m;
                m.set(lv, v)?;
                Ok(m)
            }
            Stmt::Seq(a, b) => {
                let m = self.exec(m, a)?;
                self.exec(m, b)
            }
            Stmt::If(c, t, e) => {
                if self.holds(&m, c)? {
                    self.exec(m, t)
                } else {
                    self.exec(m, e)
                }
            }
            Stmt::Call(f, args) => self.call(m, f, args),
            Stmt::Apply(t) => self.apply(m, t),
            Stmt::Transition(t) => {
                let target = match &t.scrutinee {
                    None => &t.default,
                    Some(e) => {
                        let v = self.eval(&m, e)?;
                        t.arms
                            .iter()
                            .find(|(a, _)| *a == v)
                            .map_or(&t.default, |(_, st)| st)
                    }
                };
                let body = self
                    .program
                    .state_body(target)
                    .ok_or_else(|| InterpError::UnknownState(target.clone()))?;
                self.exec(m, &body)
            }
        }
    }

    /// Parser from `start` followed by the control block.
    pub fn run(&self, m: ConcState) -> Result<ConcState, InterpError> {
        self.exec(m, &self.program.entry())
    }

    /// Binds parameters to argument values in a fresh local frame.
    fn copy_in(
        &self,
        m: &ConcState,
        f: &str,
        params: &[Param],
        args: &[Expr],
    ) -> Result<Vec<(String, Value)>, InterpError> {
        if params.len() != args.len() {
            return Err(InterpError::Arity {
                f: f.into(),
                expected: params.len(),
                given: args.len(),
            });
        }
        params
            .iter()
            .zip(args)
            .map(|(p, a)| Ok((p.name.clone(), self.eval(m, a)?)))
            .collect()
    }

    /// Writes out-parameters back through their argument lvalues.
    fn copy_out(
        &self,
        mut caller: ConcState,
        callee: ConcState,
        params: &[Param],
        args: &[Expr],
    ) -> Result<ConcState, InterpError> {
        let ConcState { globals, locals } = callee;
        caller.globals = globals;
        for (p, a) in params.iter().zip(args) {
            if !p.dir.is_out() {
                continue;
            }
            let lv = a
                .as_lvalue()
                .ok_or_else(|| InterpError::NotAnLvalue(p.name.clone()))?;
            let v = locals
                .iter()
                .find(|(n, _)| *n == p.name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| InterpError::UnknownVariable(p.name.clone()))?;
            caller.set(&lv, v)?;
        }
        Ok(caller)
    }

    fn call(&self, m: ConcState, f: &str, args: &[Expr]) -> Result<ConcState, InterpError> {
        if let Some(decl) = self.program.func(f) {
            let locals = self.copy_in(&m, f, &decl.params, args)?;
            let inner = ConcState::new(m.globals.clone(), locals);
            let out = self.exec(inner, &decl.body)?;
            return self.copy_out(m, out, &decl.params, args);
        }
        let decl = self
            .program
            .extern_decl(f)
            .ok_or_else(|| InterpError::UnknownFunction(f.into()))?;
        let locals = self.copy_in(&m, f, &decl.params, args)?;
        let mut inner = ConcState::new(m.globals.clone(), locals);
        if let Some(imp) = self.env.extern_impl(f) {
            for case in &imp.cases {
                if self.holds(&inner, &case.guard)? {
                    for op in &case.ops {
                        match op {
                            ExternOp::Set(lv, v) => inner.set(lv, v.clone())?,
                            ExternOp::Copy(dst, src) => {
                                let v = inner.get(src)?;
                                inner.set(dst, v)?;
                            }
                            ExternOp::Extract(h) => {
                                inner.set(&h.clone().field(VALID_FIELD), Value::bits(1, 1))?
                            }
                        }
                    }
                    break;
                }
            }
        }
        self.copy_out(m, inner, &decl.params, args)
    }

    fn apply(&self, m: ConcState, t: &str) -> Result<ConcState, InterpError> {
        let decl = self
            .program
            .table(t)
            .ok_or_else(|| InterpError::UnknownTable(t.into()))?;
        let mut chosen: Option<(&str, Vec<Value>)> = None;
        if let Some(tbl) = self.env.table(t) {
            for row in &tbl.rows {
                if self.holds(&m, &row.guard)? {
                    chosen = Some((&row.action, row.args.clone()));
                    break;
                }
            }
        }
        let (action, args) = chosen.unwrap_or((&decl.default_action, Vec::new()));
        let a = self.action(action)?;
        if a.params.len() != args.len() {
            return Err(InterpError::Arity {
                f: action.into(),
                expected: a.params.len(),
                given: args.len(),
            });
        }
        let locals = a
            .params
            .iter()
            .zip(args)
            .map(|(p, v)| (p.name.clone(), v))
            .collect();
        let out = self.exec(ConcState::new(m.globals.clone(), locals), &a.body)?;
        Ok(ConcState {
            globals: out.globals,
            locals: m.locals,
        })
    }

    fn action(&self, name: &str) -> Result<&FuncDecl, InterpError> {
        self.program
            .func(name)
            .filter(|f| {
                f.kind == FuncKind::Action || f.params.iter().all(|p| p.dir == Direction::None)
            })
            .ok_or_else(|| InterpError::UnknownFunction(name.into()))
    }
}

/// Shape of a concrete value.
pub fn value_shape(v: &Value) -> Shape {
    match v {
        Value::Bits(b) => Shape::Bits(b.width()),
        Value::Record(fs) => Shape::Record {
            header: false,
            fields: fs
                .iter()
                .map(|(n, v)| (n.clone(), value_shape(v)))
                .collect(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang_ast::{
        mask, BinOp, CmpOp, GlobalDecl, TableDecl, Transition, TypeDecl, TypeRef,
    };
    use proptest::prelude::*;

    fn ipv4_program() -> Program {
        let ipv4 = TypeDecl {
            name: "ipv4_t".into(),
            header: true,
            fields: vec![
                ("ttl".into(), TypeRef::Bit(8)),
                ("dstAddr".into(), TypeRef::Bit(32)),
            ],
        };
        let hdr = TypeDecl {
            name: "headers".into(),
            header: false,
            fields: vec![("ipv4".into(), TypeRef::Named("ipv4_t".into()))],
        };
        let decrease = FuncDecl {
            name: "decrease".into(),
            kind: FuncKind::Function,
            params: vec![Param {
                name: "x".into(),
                dir: Direction::InOut,
                ty: Some(TypeRef::Bit(8)),
            }],
            body: Stmt::assign(
                LValue::var("x"),
                Expr::binop(BinOp::Sub, Expr::var("x"), Expr::bits(8, 1)),
            ),
        };
        let fwd = FuncDecl {
            name: "ipv4_forward".into(),
            kind: FuncKind::Action,
            params: vec![
                Param {
                    name: "dst".into(),
                    dir: Direction::None,
                    ty: Some(TypeRef::Bit(48)),
                },
                Param {
                    name: "port".into(),
                    dir: Direction::None,
                    ty: Some(TypeRef::Bit(9)),
                },
            ],
            body: Stmt::block(vec![
                Stmt::assign(LValue::var("egress_spec"), Expr::var("port")),
                Stmt::assign(LValue::var("dstMac"), Expr::var("dst")),
                Stmt::call(
                    "decrease",
                    vec![Expr::var("hdr").field("ipv4").field("ttl")],
                ),
            ]),
        };
        let drop = FuncDecl {
            name: "drop".into(),
            kind: FuncKind::Action,
            params: vec![],
            body: Stmt::assign(LValue::var("egress_spec"), Expr::bits(9, 0)),
        };
        Program {
            types: vec![ipv4, hdr],
            globals: vec![
                GlobalDecl {
                    name: "hdr".into(),
                    ty: TypeRef::Named("headers".into()),
                },
                GlobalDecl {
                    name: "egress_spec".into(),
                    ty: TypeRef::Bit(9),
                },
                GlobalDecl {
                    name: "dstMac".into(),
                    ty: TypeRef::Bit(48),
                },
            ],
            funcs: vec![decrease, fwd, drop],
            tables: vec![TableDecl {
                name: "ipv4_lpm".into(),
                keys: vec![Expr::var("hdr").field("ipv4").field("dstAddr")],
                actions: vec!["ipv4_forward".into(), "drop".into()],
                default_action: "drop".into(),
            }],
            control: Stmt::Apply("ipv4_lpm".into()),
            ..Program::default()
        }
    }

    fn ttl() -> LValue {
        LValue::path("hdr.ipv4.ttl")
    }

    #[test]
    fn ttl_minus_one() {
        let p = ipv4_program();
        let env = DynamicEnv::default();
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&ttl(), Value::bits(8, 10)).unwrap();
        let e = Expr::binop(BinOp::Sub, ttl().to_expr(), Expr::bits(8, 1));
        assert_eq!(
            Interpreter::new(&p, &env).eval(&m, &e).unwrap(),
            Value::bits(8, 9)
        );
    }

    #[test]
    fn bit_extraction() {
        let p = Program::default();
        let env = DynamicEnv::default();
        let i = Interpreter::new(&p, &env);
        let m = ConcState::default();
        assert_eq!(
            i.eval(&m, &Expr::bits(3, 0b100).slice(2, 2)).unwrap(),
            Value::bits(1, 1)
        );
        assert_eq!(
            i.eval(&m, &Expr::bits(3, 0b100).slice(1, 0)).unwrap(),
            Value::bits(2, 0)
        );
    }

    #[test]
    fn modular_add_all_pairs() {
        let p = Program::default();
        let env = DynamicEnv::default();
        let i = Interpreter::new(&p, &env);
        let m = ConcState::default();
        for a in 0..8 {
            for b in 0..8 {
                let v = i
                    .eval(
                        &m,
                        &Expr::binop(BinOp::Add, Expr::bits(3, a), Expr::bits(3, b)),
                    )
                    .unwrap();
                assert_eq!(v, Value::bits(3, (a + b) % 8));
            }
        }
        let v = i
            .eval(
                &m,
                &Expr::binop(BinOp::Add, Expr::bits(3, 6), Expr::bits(3, 3)),
            )
            .unwrap();
        assert_eq!(v, Value::bits(3, 1));
    }

    #[test]
    fn call_copies_out() {
        let p = ipv4_program();
        let env = DynamicEnv::default();
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&ttl(), Value::bits(8, 10)).unwrap();
        let out = Interpreter::new(&p, &env)
            .exec(m, &Stmt::call("decrease", vec![ttl().to_expr()]))
            .unwrap();
        assert_eq!(out.get(&ttl()).unwrap(), Value::bits(8, 9));
    }

    #[test]
    fn table_row_runs_action_with_arguments() {
        let p = ipv4_program();
        let dst = LValue::path("hdr.ipv4.dstAddr");
        let env = DynamicEnv {
            tables: vec![(
                "ipv4_lpm".into(),
                ConcreteTable {
                    rows: vec![TableRow {
                        guard: Expr::cmp(
                            CmpOp::Eq,
                            dst.to_expr().slice(31, 8),
                            Expr::bits(24, 0xC0A802),
                        ),
                        action: "ipv4_forward".into(),
                        args: vec![Value::bits(48, 0x4A5B6C7D8E9F), Value::bits(9, 5)],
                    }],
                },
            )],
            externs: vec![],
        };
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&dst, Value::bits(32, 0xC0A80202)).unwrap();
        m.set(&ttl(), Value::bits(8, 64)).unwrap();
        let i = Interpreter::new(&p, &env);
        let out = i.run(m.clone()).unwrap();
        assert_eq!(
            out.get(&LValue::var("egress_spec")).unwrap(),
            Value::bits(9, 5)
        );
        assert_eq!(
            out.get(&LValue::var("dstMac")).unwrap(),
            Value::bits(48, 0x4A5B6C7D8E9F)
        );
        assert_eq!(out.get(&ttl()).unwrap(), Value::bits(8, 63));

        m.set(&dst, Value::bits(32, 0x0A000001)).unwrap();
        m.set(&LValue::var("egress_spec"), Value::bits(9, 7))
            .unwrap();
        let out = i.run(m).unwrap();
        assert_eq!(
            out.get(&LValue::var("egress_spec")).unwrap(),
            Value::bits(9, 0)
        );
    }

    #[test]
    fn skip_and_empty_entry_keep_state() {
        let p = ipv4_program();
        let env = DynamicEnv::default();
        let m = ConcState::zero(&p).unwrap();
        let i = Interpreter::new(&p, &env);
        assert_eq!(i.exec(m.clone(), &Stmt::Skip).unwrap(), m);
        let empty = Program {
            control: Stmt::Skip,
            ..p.clone()
        };
        assert_eq!(Interpreter::new(&empty, &env).run(m.clone()).unwrap(), m);
    }

    #[test]
    fn transitions_pick_first_matching_arm() {
        let mut p = ipv4_program();
        p.globals.push(GlobalDecl {
            name: "ty".into(),
            ty: TypeRef::Bit(16),
        });
        p.states = Some(vec![
            crate::lang_ast::StateDecl {
                name: "start".into(),
                body: Stmt::Transition(Transition {
                    scrutinee: Some(Expr::var("ty")),
                    arms: vec![(Value::bits(16, 0x800), "parse_ipv4".into())],
                    default: "accept".into(),
                }),
            },
            crate::lang_ast::StateDecl {
                name: "parse_ipv4".into(),
                body: Stmt::seq(
                    Stmt::assign(LValue::path("hdr.ipv4.$valid"), Expr::boolean(true)),
                    Stmt::goto("accept"),
                ),
            },
        ]);
        p.control = Stmt::Skip;
        let env = DynamicEnv::default();
        let i = Interpreter::new(&p, &env);
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&LValue::var("ty"), Value::bits(16, 0x800)).unwrap();
        assert_eq!(
            i.run(m.clone())
                .unwrap()
                .get(&LValue::path("hdr.ipv4.$valid"))
                .unwrap(),
            Value::bits(1, 1)
        );
        m.set(&LValue::var("ty"), Value::bits(16, 0x86dd)).unwrap();
        assert_eq!(
            i.run(m)
                .unwrap()
                .get(&LValue::path("hdr.ipv4.$valid"))
                .unwrap(),
            Value::bits(1, 0)
        );
    }

    #[test]
    fn extern_stand_in_runs_first_matching_case() {
        let mut p = ipv4_program();
        p.externs.push(crate::lang_ast::ExternDecl {
            name: "mark".into(),
            params: vec![Param {
                name: "e".into(),
                dir: Direction::InOut,
                ty: None,
            }],
        });
        let env = DynamicEnv {
            tables: vec![],
            externs: vec![(
                "mark".into(),
                ExternImpl {
                    cases: vec![ExternCase {
                        guard: Expr::boolean(true),
                        ops: vec![ExternOp::Set(LValue::var("e"), Value::bits(9, 0))],
                    }],
                },
            )],
        };
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&LValue::var("egress_spec"), Value::bits(9, 7))
            .unwrap();
        let out = Interpreter::new(&p, &env)
            .exec(m, &Stmt::call("mark", vec![Expr::var("egress_spec")]))
            .unwrap();
        assert_eq!(
            out.get(&LValue::var("egress_spec")).unwrap(),
            Value::bits(9, 0)
        );
    }

    #[test]
    fn slice_assignment_touches_only_its_bits() {
        let p = Program {
            globals: vec![GlobalDecl {
                name: "x".into(),
                ty: TypeRef::Bit(8),
            }],
            ..Program::default()
        };
        let env = DynamicEnv::default();
        let mut m = ConcState::zero(&p).unwrap();
        m.set(&LValue::var("x"), Value::bits(8, 0xAB)).unwrap();
        let s = Stmt::assign(LValue::var("x").slice(7, 4), Expr::bits(4, 0x5));
        let out = Interpreter::new(&p, &env).exec(m, &s).unwrap();
        assert_eq!(out.get(&LValue::var("x")).unwrap(), Value::bits(8, 0x5B));
    }

    // Random straight-line programs over two 4-bit globals and a helper
    // function with an in and an inout parameter.

    fn arb_expr(names: &'static [&'static str]) -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u64..16).prop_map(|v| Expr::bits(4, v)),
            prop::sample::select(names).prop_map(Expr::var),
        ];
        leaf.prop_recursive(3, 12, 2, |inner| {
            (
                prop::sample::select(BinOp::ALL.to_vec()),
                inner.clone(),
                inner,
            )
                .prop_map(|(op, a, b)| Expr::binop(op, a, b))
        })
    }

    fn arb_stmt(names: &'static [&'static str], calls: bool) -> impl Strategy<Value = Stmt> {
        let assign = (prop::sample::select(names), arb_expr(names))
            .prop_map(|(n, e)| Stmt::assign(LValue::var(n), e))
            .boxed();
        let call = (
            prop::sample::select(names),
            arb_expr(names),
            prop::bool::ANY,
        )
            .prop_map(move |(n, e, ok)| {
                if ok && calls {
                    Stmt::call("f", vec![e, Expr::var(n)])
                } else {
                    Stmt::Skip
                }
            })
            .boxed();
        let atom = prop_oneof![assign, call];
        atom.prop_recursive(2, 8, 3, move |inner| {
            prop_oneof![
                prop::collection::vec(inner.clone(), 1..4).prop_map(Stmt::block),
                (arb_expr(names), arb_expr(names), inner.clone(), inner)
                    .prop_map(|(a, b, t, e)| Stmt::if_(Expr::cmp(CmpOp::Lt, a, b), t, e)),
            ]
        })
    }

    fn random_program(f_body: Stmt, g_body: Stmt) -> Program {
        let p4 = |n: &str, dir| Param {
            name: n.into(),
            dir,
            ty: Some(TypeRef::Bit(4)),
        };
        Program {
            globals: vec![
                GlobalDecl {
                    name: "x".into(),
                    ty: TypeRef::Bit(4),
                },
                GlobalDecl {
                    name: "y".into(),
                    ty: TypeRef::Bit(4),
                },
            ],
            funcs: vec![
                FuncDecl {
                    name: "f".into(),
                    kind: FuncKind::Function,
                    params: vec![p4("a", Direction::In), p4("b", Direction::InOut)],
                    body: f_body,
                },
                FuncDecl {
                    name: "g".into(),
                    kind: FuncKind::Function,
                    params: vec![p4("c", Direction::InOut), p4("d", Direction::In)],
                    body: g_body,
                },
            ],
            control: Stmt::call("g", vec![Expr::var("x"), Expr::var("y")]),
            ..Program::default()
        }
    }

    proptest! {
        #[test]
        fn execution_is_deterministic_and_width_preserving(
            f_body in arb_stmt(&["a", "b", "x", "y"], false),
            g_body in arb_stmt(&["c", "d", "x", "y"], true),
            x in 0u64..16, y in 0u64..16,
        ) {
            let p = random_program(f_body, g_body);
            prop_assert!(crate::lang_ast::validate_program(&p).is_empty());
            let env = DynamicEnv::default();
            let i = Interpreter::new(&p, &env);
            let m = ConcState::new(vec![("x".into(), Value::bits(4, x)), ("y".into(), Value::bits(4, y))], vec![]);
            let a = i.run(m.clone()).unwrap();
            let b = i.run(m).unwrap();
            prop_assert_eq!(&a, &b);
            for (_, bits) in a.leaves() {
                prop_assert_eq!(bits.width(), 4);
                prop_assert!(bits.value() <= mask(4));
            }
        }

        /// A call inside `g` only changes `g`'s locals through the inout argument.
        #[test]
        fn calls_respect_the_frame(
            f_body in arb_stmt(&["a", "b", "x", "y"], false),
            arg in arb_expr(&["c", "d", "x", "y"]),
            target in prop::sample::select(vec!["c", "d"]),
            c in 0u64..16, d in 0u64..16, x in 0u64..16, y in 0u64..16,
        ) {
            let p = random_program(f_body, Stmt::Skip);
            let env = DynamicEnv::default();
            let i = Interpreter::new(&p, &env);
            let m = ConcState::new(
                vec![("x".into(), Value::bits(4, x)), ("y".into(), Value::bits(4, y))],
                vec![("c".into(), Value::bits(4, c)), ("d".into(), Value::bits(4, d))],
            );
            let out = i.exec(m.clone(), &Stmt::call("f", vec![arg, Expr::var(target)])).unwrap();
            for (n, v) in &m.locals {
                if n != target {
                    prop_assert_eq!(out.lookup(n), Some(v));
                }
            }
            prop_assert_eq!(out.locals.len(), 2);
        }
    }
}
