//! Syntax tree for mini-P4 programs: values, expressions, lvalues, statements
//! and the declarations that make up a program.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Implicit validity bit carried by every header record.
pub const VALID_FIELD: &str = "$valid";
/// Global set to 1 when the parser reaches `reject`.
pub const REJECTED_VAR: &str = "$rejected";
pub const ACCEPT: &str = "accept";
pub const REJECT: &str = "reject";
/// Parser entry state.
pub const START: &str = "start";
/// Widest bitvector the crate handles.
pub const MAX_WIDTH: u32 = 64;

/// All-ones mask of `width` bits.
pub fn mask(width: u32) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

/// A fixed-width unsigned bitvector.
///
/// Width 0 only appears transiently for literals whose width the frontend
/// has not inferred yet; validation rejects it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bits {
    width: u32,
    value: u64,
}

impl Bits {
    pub fn new(width: u32, value: u64) -> Option<Bits> {
        if width == 0 || width > MAX_WIDTH || value > mask(width) {
            return None;
        }
        Some(Bits { width, value })
    }

    /// Keeps the low `width` bits of `value`.
    pub fn truncating(width: u32, value: u64) -> Bits {
        assert!((1..=MAX_WIDTH).contains(&width), "bad width {width}");
        Bits {
            width,
            value: value & mask(width),
        }
    }

    pub(crate) fn unsized_literal(value: u64) -> Bits {
        Bits { width: 0, value }
    }

    pub fn is_unsized(&self) -> bool {
        self.width == 0
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn boolean(b: bool) -> Bits {
        Bits {
            width: 1,
            value: b as u64,
        }
    }

    pub fn is_true(&self) -> bool {
        self.value != 0
    }

    /// Inclusive bit range `[hi:lo]`, bit 0 least significant.
    pub fn slice(&self, hi: u32, lo: u32) -> Bits {
        Bits::truncating(hi - lo + 1, self.value >> lo)
    }

    /// Overwrites bits `[hi:lo]` with `part`.
    pub fn with_slice(&self, hi: u32, lo: u32, part: u64) -> Bits {
        let m = mask(hi - lo + 1) << lo;
        Bits {
            width: self.width,
            value: (self.value & !m) | ((part << lo) & m),
        }
    }
}

impl fmt::Display for Bits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}w{}", self.width, self.value)
    }
}

/// A concrete runtime datum.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Value {
    Bits(Bits),
    Record(Vec<(String, Value)>),
}

impl Value {
    pub fn bits(width: u32, value: u64) -> Value {
        Value::Bits(Bits::truncating(width, value))
    }

    pub fn as_bits(&self) -> Option<Bits> {
        match self {
            Value::Bits(b) => Some(*b),
            Value::Record(_) => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&Value> {
        match self {
            Value::Record(fs) => fs.iter().find(|(n, _)| n == name).map(|(_, v)| v),
            Value::Bits(_) => None,
        }
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Value> {
        match self {
            Value::Record(fs) => fs.iter_mut().find(|(n, _)| n == name).map(|(_, v)| v),
            Value::Bits(_) => None,
        }
    }

    /// The all-zero value of a shape.
    pub fn zero(shape: &Shape) -> Value {
        match shape {
            Shape::Bits(w) => Value::bits(*w, 0),
            Shape::Record { fields, .. } => Value::Record(
                fields
                    .iter()
                    .map(|(n, s)| (n.clone(), Value::zero(s)))
                    .collect(),
            ),
        }
    }

    /// Leaf bitvectors with dotted paths relative to this value.
    pub fn leaves(&self, prefix: &str, out: &mut Vec<(String, Bits)>) {
        match self {
            Value::Bits(b) => out.push((prefix.to_string(), *b)),
            Value::Record(fs) => {
                for (n, v) in fs {
                    v.leaves(&format!("{prefix}.{n}"), out);
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    /// Two's-complement negation.
    Neg,
    BitNot,
    /// 1 iff the operand is zero; result is one bit wide.
    LogNot,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmpOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl BinOp {
    pub fn apply(self, width: u32, a: u64, b: u64) -> u64 {
        let r = match self {
            BinOp::Add => a.wrapping_add(b),
            BinOp::Sub => a.wrapping_sub(b),
            BinOp::And => a & b,
            BinOp::Or => a | b,
            BinOp::Xor => a ^ b,
        };
        r & mask(width)
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::And => "&",
            BinOp::Or => "|",
            BinOp::Xor => "^",
        }
    }

    pub const ALL: [BinOp; 5] = [BinOp::Add, BinOp::Sub, BinOp::And, BinOp::Or, BinOp::Xor];
}

impl UnOp {
    /// Returns the result value and its width.
    pub fn apply(self, width: u32, a: u64) -> (u32, u64) {
        match self {
            UnOp::Neg => (width, a.wrapping_neg() & mask(width)),
            UnOp::BitNot => (width, !a & mask(width)),
            UnOp::LogNot => (1, (a == 0) as u64),
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            UnOp::Neg => "-",
            UnOp::BitNot => "~",
            UnOp::LogNot => "!",
        }
    }

    pub const ALL: [UnOp; 3] = [UnOp::Neg, UnOp::BitNot, UnOp::LogNot];
}

impl CmpOp {
    pub fn holds(self, a: u64, b: u64) -> bool {
        match self {
            CmpOp::Eq => a == b,
            CmpOp::Ne => a != b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
        }
    }

    /// The relation that holds exactly when `self` does not.
    pub fn negate(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Ne,
            CmpOp::Ne => CmpOp::Eq,
            CmpOp::Lt => CmpOp::Ge,
            CmpOp::Le => CmpOp::Gt,
            CmpOp::Gt => CmpOp::Le,
            CmpOp::Ge => CmpOp::Lt,
        }
    }

    /// The relation with operands swapped: `a op b` iff `b op.flip() a`.
    pub fn flip(self) -> CmpOp {
        match self {
            CmpOp::Eq => CmpOp::Eq,
            CmpOp::Ne => CmpOp::Ne,
            CmpOp::Lt => CmpOp::Gt,
            CmpOp::Le => CmpOp::Ge,
            CmpOp::Gt => CmpOp::Lt,
            CmpOp::Ge => CmpOp::Le,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
        }
    }

    pub const ALL: [CmpOp; 6] = [
        CmpOp::Eq,
        CmpOp::Ne,
        CmpOp::Lt,
        CmpOp::Le,
        CmpOp::Gt,
        CmpOp::Ge,
    ];
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Const(Value),
    Var(String),
    Unop(UnOp, Box<Expr>),
    Binop(BinOp, Box<Expr>, Box<Expr>),
    Cmp(CmpOp, Box<Expr>, Box<Expr>),
    Field(Box<Expr>, String),
    /// Inclusive `[hi:lo]`.
    Slice(Box<Expr>, u32, u32),
    Record(Vec<(String, Expr)>),
}

impl Expr {
    pub fn bits(width: u32, value: u64) -> Expr {
        Expr::Const(Value::bits(width, value))
    }

    pub fn boolean(b: bool) -> Expr {
        Expr::Const(Value::Bits(Bits::boolean(b)))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn field(self, name: &str) -> Expr {
        Expr::Field(Box::new(self), name.to_string())
    }

    pub fn slice(self, hi: u32, lo: u32) -> Expr {
        Expr::Slice(Box::new(self), hi, lo)
    }

    pub fn unop(op: UnOp, e: Expr) -> Expr {
        Expr::Unop(op, Box::new(e))
    }

    pub fn binop(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Binop(op, Box::new(a), Box::new(b))
    }

    pub fn cmp(op: CmpOp, a: Expr, b: Expr) -> Expr {
        Expr::Cmp(op, Box::new(a), Box::new(b))
    }

    /// Logical negation of a one-bit condition.
    #[allow(clippy::should_implement_trait)]
    pub fn not(self) -> Expr {
        Expr::Unop(UnOp::LogNot, Box::new(self))
    }

    /// Conjunction of one-bit conditions.
    pub fn and(self, other: Expr) -> Expr {
        Expr::binop(BinOp::And, self, other)
    }

    /// `isValid(h)`: sugar for `h.$valid == 1`.
    pub fn is_valid(header: Expr) -> Expr {
        Expr::cmp(CmpOp::Eq, header.field(VALID_FIELD), Expr::boolean(true))
    }

    /// The lvalue this expression denotes, if it is a plain access path.
    pub fn as_lvalue(&self) -> Option<LValue> {
        match self {
            Expr::Var(n) => Some(LValue::Var(n.clone())),
            Expr::Field(e, f) => Some(LValue::Field(Box::new(e.as_lvalue()?), f.clone())),
            Expr::Slice(e, hi, lo) => Some(LValue::Slice(Box::new(e.as_lvalue()?), *hi, *lo)),
            _ => None,
        }
    }

    fn collect_lvalues(&self, out: &mut BTreeSet<LValue>) {
        if let Some(lv) = self.as_lvalue() {
            out.insert(lv);
            return;
        }
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Unop(_, e) | Expr::Field(e, _) | Expr::Slice(e, _, _) => e.collect_lvalues(out),
            Expr::Binop(_, a, b) | Expr::Cmp(_, a, b) => {
                a.collect_lvalues(out);
                b.collect_lvalues(out);
            }
            Expr::Record(fs) => fs.iter().for_each(|(_, e)| e.collect_lvalues(out)),
        }
    }
}

/// An assignable location.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LValue {
    Var(String),
    Field(Box<LValue>, String),
    Slice(Box<LValue>, u32, u32),
}

impl LValue {
    pub fn var(name: &str) -> LValue {
        LValue::Var(name.to_string())
    }

    pub fn field(self, name: &str) -> LValue {
        LValue::Field(Box::new(self), name.to_string())
    }

    pub fn slice(self, hi: u32, lo: u32) -> LValue {
        LValue::Slice(Box::new(self), hi, lo)
    }

    /// Parses a dotted path such as `hdr.ipv4.ttl`.
    pub fn path(dotted: &str) -> LValue {
        let mut parts = dotted.split('.');
        let mut lv = LValue::var(parts.next().unwrap_or_default());
        for p in parts {
            lv = lv.field(p);
        }
        lv
    }

    pub fn root(&self) -> &str {
        match self {
            LValue::Var(n) => n,
            LValue::Field(l, _) | LValue::Slice(l, _, _) => l.root(),
        }
    }

    pub fn to_expr(&self) -> Expr {
        match self {
            LValue::Var(n) => Expr::Var(n.clone()),
            LValue::Field(l, f) => l.to_expr().field(f),
            LValue::Slice(l, hi, lo) => l.to_expr().slice(*hi, *lo),
        }
    }

    /// Splits into root name, field path and an optional absolute bit range.
    /// Nested slices are composed.
    pub fn place(&self) -> Place {
        match self {
            LValue::Var(n) => Place {
                root: n.clone(),
                fields: Vec::new(),
                range: None,
            },
            LValue::Field(l, f) => {
                let mut p = l.place();
                p.fields.push(f.clone());
                p
            }
            LValue::Slice(l, hi, lo) => {
                let mut p = l.place();
                p.range = Some(match p.range {
                    None => (*hi, *lo),
                    Some((_, base)) => (base + hi, base + lo),
                });
                p
            }
        }
    }
}

impl fmt::Display for LValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LValue::Var(n) => write!(f, "{n}"),
            LValue::Field(l, n) => write!(f, "{l}.{n}"),
            LValue::Slice(l, hi, lo) => write!(f, "{l}[{hi}:{lo}]"),
        }
    }
}

/// Normalized lvalue: a leaf or record reached by `fields`, optionally
/// narrowed to the bit range `(hi, lo)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Place {
    pub root: String,
    pub fields: Vec<String>,
    pub range: Option<(u32, u32)>,
}

impl Place {
    pub fn path(&self) -> String {
        let mut s = self.root.clone();
        for f in &self.fields {
            s.push('.');
            s.push_str(f);
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transition {
    /// `None` for an unconditional `transition st;`.
    pub scrutinee: Option<Expr>,
    pub arms: Vec<(Value, String)>,
    pub default: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub enum Stmt {
    #[default]
    Skip,
    Assign(LValue, Expr),
    Seq(Box<Stmt>, Box<Stmt>),
    If(Expr, Box<Stmt>, Box<Stmt>),
    Apply(String),
    Call(String, Vec<Expr>),
    Transition(Transition),
}

impl Stmt {
    /// Sequencing kept right-nested so printing and reparsing agree.
    pub fn seq(a: Stmt, b: Stmt) -> Stmt {
        match a {
            Stmt::Seq(x, y) => Stmt::Seq(x, Box::new(Stmt::seq(*y, b))),
            a => Stmt::Seq(Box::new(a), Box::new(b)),
        }
    }

    pub fn block(stmts: Vec<Stmt>) -> Stmt {
        let mut it = stmts.into_iter().rev();
        match it.next() {
            None => Stmt::Skip,
            Some(last) => it.fold(last, |acc, s| Stmt::seq(s, acc)),
        }
    }

    pub fn assign(lv: LValue, e: Expr) -> Stmt {
        Stmt::Assign(lv, e)
    }

    pub fn if_(c: Expr, t: Stmt, e: Stmt) -> Stmt {
        Stmt::If(c, Box::new(t), Box::new(e))
    }

    pub fn call(f: &str, args: Vec<Expr>) -> Stmt {
        Stmt::Call(f.to_string(), args)
    }

    pub fn goto(state: &str) -> Stmt {
        Stmt::Transition(Transition {
            scrutinee: None,
            arms: Vec::new(),
            default: state.to_string(),
        })
    }

    /// Flattens a right-nested sequence into its parts.
    pub fn items(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        let mut cur = self;
        loop {
            match cur {
                Stmt::Seq(a, b) => {
                    out.extend(a.items());
                    cur = b;
                }
                s => {
                    out.push(s);
                    return out;
                }
            }
        }
    }

    /// Re-associates every nested sequence to the right.
    pub fn normalized(&self) -> Stmt {
        match self {
            Stmt::Seq(a, b) => Stmt::seq(a.normalized(), b.normalized()),
            Stmt::If(c, t, e) => Stmt::if_(c.clone(), t.normalized(), e.normalized()),
            s => s.clone(),
        }
    }
}

/// Lvalues syntactically read or written by `s`.
pub fn lvalues_of(s: &Stmt) -> BTreeSet<LValue> {
    fn go(s: &Stmt, out: &mut BTreeSet<LValue>) {
        match s {
            Stmt::Skip | Stmt::Apply(_) => {}
            Stmt::Assign(lv, e) => {
                out.insert(lv.clone());
                e.collect_lvalues(out);
            }
            Stmt::Seq(a, b) => {
                go(a, out);
                go(b, out);
            }
            Stmt::If(c, t, e) => {
                c.collect_lvalues(out);
                go(t, out);
                go(e, out);
            }
            Stmt::Call(_, args) => args.iter().for_each(|a| a.collect_lvalues(out)),
            Stmt::Transition(t) => {
                if let Some(e) = &t.scrutinee {
                    e.collect_lvalues(out);
                }
            }
        }
    }
    let mut out = BTreeSet::new();
    go(s, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    In,
    Out,
    InOut,
    /// Action parameters.
    None,
}

impl Direction {
    pub fn is_out(self) -> bool {
        matches!(self, Direction::Out | Direction::InOut)
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Direction::In => "in",
            Direction::Out => "out",
            Direction::InOut => "inout",
            Direction::None => "",
        }
    }
}

/// Shape of a variable: a bitvector width or a record of shapes.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Shape {
    Bits(u32),
    Record {
        header: bool,
        fields: Vec<(String, Shape)>,
    },
}

impl Shape {
    pub fn width(&self) -> Option<u32> {
        match self {
            Shape::Bits(w) => Some(*w),
            Shape::Record { .. } => None,
        }
    }

    pub fn field(&self, name: &str) -> Option<&Shape> {
        match self {
            Shape::Record { fields, .. } => fields.iter().find(|(n, _)| n == name).map(|(_, s)| s),
            Shape::Bits(_) => None,
        }
    }

    /// Leaf paths and widths, in declaration order.
    pub fn leaves(&self, prefix: &str) -> Vec<(String, u32)> {
        let mut out = Vec::new();
        self.collect_leaves(prefix, &mut out);
        out
    }

    fn collect_leaves(&self, prefix: &str, out: &mut Vec<(String, u32)>) {
        match self {
            Shape::Bits(w) => out.push((prefix.to_string(), *w)),
            Shape::Record { fields, .. } => {
                for (n, s) in fields {
                    s.collect_leaves(&format!("{prefix}.{n}"), out);
                }
            }
        }
    }

    pub fn total_bits(&self) -> u32 {
        self.leaves("").iter().map(|(_, w)| w).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum TypeRef {
    Bit(u32),
    Named(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TypeDecl {
    pub name: String,
    pub header: bool,
    pub fields: Vec<(String, TypeRef)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GlobalDecl {
    pub name: String,
    pub ty: TypeRef,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConstDecl {
    pub name: String,
    pub value: Bits,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FuncKind {
    Function,
    Action,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Param {
    pub name: String,
    pub dir: Direction,
    /// Extern parameters may leave the type open; it is taken from the argument.
    pub ty: Option<TypeRef>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FuncDecl {
    pub name: String,
    pub kind: FuncKind,
    pub params: Vec<Param>,
    pub body: Stmt,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExternDecl {
    pub name: String,
    pub params: Vec<Param>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TableDecl {
    pub name: String,
    pub keys: Vec<Expr>,
    pub actions: Vec<String>,
    pub default_action: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateDecl {
    pub name: String,
    pub body: Stmt,
}

/// A whole program. Together with the attached contracts this is the static
/// environment the typer consults.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Program {
    pub types: Vec<TypeDecl>,
    pub globals: Vec<GlobalDecl>,
    pub consts: Vec<ConstDecl>,
    pub funcs: Vec<FuncDecl>,
    pub externs: Vec<ExternDecl>,
    pub tables: Vec<TableDecl>,
    /// Parser states; `None` when the program has no parser block.
    pub states: Option<Vec<StateDecl>>,
    pub control: Stmt,
}

impl Program {
    pub fn func(&self, name: &str) -> Option<&FuncDecl> {
        self.funcs.iter().find(|f| f.name == name)
    }

    pub fn extern_decl(&self, name: &str) -> Option<&ExternDecl> {
        self.externs.iter().find(|f| f.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&TableDecl> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<Bits> {
        self.consts.iter().find(|c| c.name == name).map(|c| c.value)
    }

    /// Body of a parser state, including the built-in terminal states.
    pub fn state_body(&self, name: &str) -> Option<Stmt> {
        match name {
            ACCEPT => Some(Stmt::Skip),
            REJECT => Some(Stmt::assign(LValue::var(REJECTED_VAR), Expr::boolean(true))),
            _ => self
                .states
                .as_ref()?
                .iter()
                .find(|s| s.name == name)
                .map(|s| s.body.clone()),
        }
    }

    /// Parser (from `start`) followed by the control block.
    pub fn entry(&self) -> Stmt {
        match &self.states {
            Some(_) => Stmt::seq(Stmt::goto(START), self.control.clone()),
            None => self.control.clone(),
        }
    }

    pub fn resolve(&self, ty: &TypeRef) -> Result<Shape, String> {
        self.resolve_depth(ty, 0)
    }

    fn resolve_depth(&self, ty: &TypeRef, depth: usize) -> Result<Shape, String> {
        match ty {
            TypeRef::Bit(w) if *w >= 1 && *w <= MAX_WIDTH => Ok(Shape::Bits(*w)),
            TypeRef::Bit(w) => Err(format!("unsupported width bit<{w}>")),
            TypeRef::Named(n) => {
                if depth > self.types.len() {
                    return Err(format!("type `{n}` contains itself"));
                }
                let decl = self
                    .types
                    .iter()
                    .find(|t| &t.name == n)
                    .ok_or_else(|| format!("unknown type `{n}`"))?;
                let mut fields = Vec::new();
                if decl.header {
                    fields.push((VALID_FIELD.to_string(), Shape::Bits(1)));
                }
                for (fname, fty) in &decl.fields {
                    fields.push((fname.clone(), self.resolve_depth(fty, depth + 1)?));
                }
                Ok(Shape::Record {
                    header: decl.header,
                    fields,
                })
            }
        }
    }

    /// Shapes of all globals in declaration order, plus `$rejected` when the
    /// program has a parser.
    pub fn global_shapes(&self) -> Result<Vec<(String, Shape)>, String> {
        let mut out = Vec::new();
        for g in &self.globals {
            out.push((g.name.clone(), self.resolve(&g.ty)?));
        }
        if self.states.is_some() {
            out.push((REJECTED_VAR.to_string(), Shape::Bits(1)));
        }
        Ok(out)
    }

    /// Shape reached by a place over the globals, or `None`.
    pub fn global_place_shape(&self, place: &Place) -> Option<Shape> {
        let globals = self.global_shapes().ok()?;
        let mut shape = globals.iter().find(|(n, _)| *n == place.root)?.1.clone();
        for f in &place.fields {
            shape = shape.field(f)?.clone();
        }
        match place.range {
            None => Some(shape),
            Some((hi, lo)) => {
                let w = shape.width()?;
                (hi >= lo && hi < w).then_some(Shape::Bits(hi - lo + 1))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DiagCategory {
    UndeclaredName,
    DuplicateName,
    Recursion,
    WidthMismatch,
    SliceOutOfBounds,
    NotAnLvalue,
    Arity,
    Malformed,
}

impl fmt::Display for DiagCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DiagCategory::UndeclaredName => "undeclared-name",
            DiagCategory::DuplicateName => "duplicate-name",
            DiagCategory::Recursion => "recursion",
            DiagCategory::WidthMismatch => "width-mismatch",
            DiagCategory::SliceOutOfBounds => "slice-out-of-bounds",
            DiagCategory::NotAnLvalue => "not-an-lvalue",
            DiagCategory::Arity => "arity",
            DiagCategory::Malformed => "malformed",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    /// Declaration the problem was found in, e.g. `function decrease`.
    pub location: String,
    pub category: DiagCategory,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: [{}] {}", self.location, self.category, self.message)
    }
}

/// Checks every well-formedness rule of a program; empty means valid.
pub fn validate_program(p: &Program) -> Vec<Diagnostic> {
    let mut v = Validator {
        p,
        diags: Vec::new(),
        location: "program".into(),
    };
    v.run();
    v.diags
}

struct Validator<'a> {
    p: &'a Program,
    diags: Vec<Diagnostic>,
    location: String,
}

type Scope = Vec<(String, Shape)>;

impl Validator<'_> {
    fn err(&mut self, category: DiagCategory, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            location: self.location.clone(),
            category,
            message: message.into(),
        });
    }

    fn run(&mut self) {
        self.check_names();
        let globals = match self.p.global_shapes() {
            Ok(g) => g,
            Err(e) => {
                self.err(DiagCategory::UndeclaredName, e);
                return;
            }
        };
        for t in &self.p.types {
            if let Err(e) = self.p.resolve(&TypeRef::Named(t.name.clone())) {
                self.location = format!("type {}", t.name);
                self.err(DiagCategory::Malformed, e);
            }
        }
        for f in &self.p.funcs {
            self.location = format!(
                "{} {}",
                if f.kind == FuncKind::Action {
                    "action"
                } else {
                    "function"
                },
                f.name
            );
            let mut scope: Scope = Vec::new();
            for prm in &f.params {
                if f.kind == FuncKind::Action && prm.dir != Direction::None {
                    self.err(
                        DiagCategory::Malformed,
                        format!("action parameter `{}` has a direction", prm.name),
                    );
                }
                if f.kind == FuncKind::Function && prm.dir == Direction::None {
                    self.err(
                        DiagCategory::Malformed,
                        format!("parameter `{}` needs a direction", prm.name),
                    );
                }
                match &prm.ty {
                    None => self.err(
                        DiagCategory::Malformed,
                        format!("parameter `{}` needs a type", prm.name),
                    ),
                    Some(t) => match self.p.resolve(t) {
                        Ok(s) => scope.push((prm.name.clone(), s)),
                        Err(e) => self.err(DiagCategory::UndeclaredName, e),
                    },
                }
            }
            self.check_stmt(&f.body, &globals, &scope);
        }
        for e in &self.p.externs {
            self.location = format!("extern {}", e.name);
            for prm in &e.params {
                if prm.dir == Direction::None {
                    self.err(
                        DiagCategory::Malformed,
                        format!("parameter `{}` needs a direction", prm.name),
                    );
                }
                if let Some(t) = &prm.ty {
                    if let Err(msg) = self.p.resolve(t) {
                        self.err(DiagCategory::UndeclaredName, msg);
                    }
                }
            }
        }
        for t in &self.p.tables {
            self.location = format!("table {}", t.name);
            for k in &t.keys {
                match self.expr_shape(k, &globals, &[]) {
                    Some(Shape::Bits(_)) | None => {}
                    Some(_) => {
                        self.err(DiagCategory::WidthMismatch, "table key must be a bitvector")
                    }
                }
            }
            for a in &t.actions {
                match self.p.func(a) {
                    Some(f) if f.kind == FuncKind::Action => {}
                    _ => self.err(
                        DiagCategory::UndeclaredName,
                        format!("unknown action `{a}`"),
                    ),
                }
            }
            if !t.actions.contains(&t.default_action) {
                self.err(
                    DiagCategory::UndeclaredName,
                    format!("default action `{}` not listed", t.default_action),
                );
            } else if self
                .p
                .func(&t.default_action)
                .is_some_and(|f| !f.params.is_empty())
            {
                self.err(
                    DiagCategory::Arity,
                    format!("default action `{}` takes parameters", t.default_action),
                );
            }
        }
        if let Some(states) = &self.p.states {
            self.location = "parser".into();
            if !states.iter().any(|s| s.name == START) {
                self.err(DiagCategory::UndeclaredName, "parser has no `start` state");
            }
            for s in states {
                self.location = format!("state {}", s.name);
                self.check_stmt(&s.body, &globals, &[]);
            }
        }
        self.location = "control".into();
        let control = self.p.control.clone();
        self.check_stmt(&control, &globals, &[]);
        self.check_recursion();
    }

    fn check_names(&mut self) {
        let p = self.p;
        let mut names: Vec<(&str, &'static str)> = Vec::new();
        names.extend(p.funcs.iter().map(|f| (f.name.as_str(), "function")));
        names.extend(p.externs.iter().map(|f| (f.name.as_str(), "extern")));
        names.extend(p.tables.iter().map(|f| (f.name.as_str(), "table")));
        let mut values: Vec<(&str, &'static str)> = Vec::new();
        values.extend(p.globals.iter().map(|g| (g.name.as_str(), "global")));
        values.extend(p.consts.iter().map(|c| (c.name.as_str(), "constant")));
        let types: Vec<(&str, &'static str)> =
            p.types.iter().map(|t| (t.name.as_str(), "type")).collect();
        let states: Vec<(&str, &'static str)> = p
            .states
            .iter()
            .flatten()
            .map(|s| (s.name.as_str(), "state"))
            .collect();
        for group in [names, values, types, states] {
            let mut seen: BTreeMap<&str, &str> = BTreeMap::new();
            for (n, kind) in group {
                if let Some(prev) = seen.insert(n, kind) {
                    self.err(
                        DiagCategory::DuplicateName,
                        format!("`{n}` declared as {prev} and {kind}"),
                    );
                }
            }
        }
        for s in p.states.iter().flatten() {
            if s.name == ACCEPT || s.name == REJECT {
                self.err(
                    DiagCategory::DuplicateName,
                    format!("state `{}` is reserved", s.name),
                );
            }
        }
        for c in &p.consts {
            if c.value.is_unsized() {
                self.err(
                    DiagCategory::WidthMismatch,
                    format!("constant `{}` has no width", c.name),
                );
            }
        }
        for f in p
            .funcs
            .iter()
            .map(|f| (&f.name, &f.params))
            .chain(p.externs.iter().map(|e| (&e.name, &e.params)))
        {
            let mut seen = BTreeSet::new();
            for prm in f.1 {
                if !seen.insert(&prm.name) {
                    self.err(
                        DiagCategory::DuplicateName,
                        format!("`{}` repeats parameter `{}`", f.0, prm.name),
                    );
                }
                if p.globals.iter().any(|g| g.name == prm.name)
                    || p.consts.iter().any(|c| c.name == prm.name)
                {
                    self.err(
                        DiagCategory::DuplicateName,
                        format!("parameter `{}` of `{}` shadows a global", prm.name, f.0),
                    );
                }
            }
        }
    }

    fn lookup<'s>(
        &self,
        name: &str,
        globals: &'s Scope,
        locals: &'s [(String, Shape)],
    ) -> Option<Shape> {
        locals
            .iter()
            .chain(globals.iter())
            .find(|(n, _)| n == name)
            .map(|(_, s)| s.clone())
            .or_else(|| self.p.constant(name).map(|b| Shape::Bits(b.width())))
    }

    fn expr_shape(
        &mut self,
        e: &Expr,
        globals: &Scope,
        locals: &[(String, Shape)],
    ) -> Option<Shape> {
        match e {
            Expr::Const(v) => self.value_shape(v),
            Expr::Var(n) => {
                let s = self.lookup(n, globals, locals);
                if s.is_none() {
                    self.err(
                        DiagCategory::UndeclaredName,
                        format!("unknown variable `{n}`"),
                    );
                }
                s
            }
            Expr::Unop(op, a) => {
                let w = self.bits_of(a, globals, locals)?;
                Some(Shape::Bits(if *op == UnOp::LogNot { 1 } else { w }))
            }
            Expr::Binop(op, a, b) => {
                let (wa, wb) = (
                    self.bits_of(a, globals, locals),
                    self.bits_of(b, globals, locals),
                );
                let (wa, wb) = (wa?, wb?);
                if wa != wb {
                    self.err(
                        DiagCategory::WidthMismatch,
                        format!("operands of `{}` have widths {wa} and {wb}", op.symbol()),
                    );
                    return None;
                }
                Some(Shape::Bits(wa))
            }
            Expr::Cmp(op, a, b) => {
                let (wa, wb) = (
                    self.bits_of(a, globals, locals),
                    self.bits_of(b, globals, locals),
                );
                let (wa, wb) = (wa?, wb?);
                if wa != wb {
                    self.err(
                        DiagCategory::WidthMismatch,
                        format!("operands of `{}` have widths {wa} and {wb}", op.symbol()),
                    );
                    return None;
                }
                Some(Shape::Bits(1))
            }
            Expr::Field(a, f) => {
                let s = self.expr_shape(a, globals, locals)?;
                let r = s.field(f).cloned();
                if r.is_none() {
                    self.err(DiagCategory::UndeclaredName, format!("no field `{f}`"));
                }
                r
            }
            Expr::Slice(a, hi, lo) => {
                let w = self.bits_of(a, globals, locals)?;
                if lo > hi || *hi >= w {
                    self.err(
                        DiagCategory::SliceOutOfBounds,
                        format!("slice [{hi}:{lo}] of a {w}-bit value"),
                    );
                    return None;
                }
                Some(Shape::Bits(hi - lo + 1))
            }
            Expr::Record(fs) => {
                let mut fields = Vec::new();
                let mut names = BTreeSet::new();
                for (n, fe) in fs {
                    if !names.insert(n) {
                        self.err(
                            DiagCategory::DuplicateName,
                            format!("record field `{n}` repeated"),
                        );
                    }
                    fields.push((n.clone(), self.expr_shape(fe, globals, locals)?));
                }
                Some(Shape::Record {
                    header: false,
                    fields,
                })
            }
        }
    }

    fn value_shape(&mut self, v: &Value) -> Option<Shape> {
        match v {
            Value::Bits(b) if b.is_unsized() => {
                self.err(
                    DiagCategory::WidthMismatch,
                    format!("cannot infer the width of literal {}", b.value()),
                );
                None
            }
            Value::Bits(b) => Some(Shape::Bits(b.width())),
            Value::Record(fs) => {
                let mut fields = Vec::new();
                for (n, fv) in fs {
                    fields.push((n.clone(), self.value_shape(fv)?));
                }
                Some(Shape::Record {
                    header: false,
                    fields,
                })
            }
        }
    }

    fn bits_of(&mut self, e: &Expr, globals: &Scope, locals: &[(String, Shape)]) -> Option<u32> {
        match self.expr_shape(e, globals, locals)? {
            Shape::Bits(w) => Some(w),
            Shape::Record { .. } => {
                self.err(
                    DiagCategory::WidthMismatch,
                    "record used where a bitvector is expected",
                );
                None
            }
        }
    }

    /// Shapes of lvalues must also name an assignable root (not a constant).
    fn lvalue_shape(
        &mut self,
        lv: &LValue,
        globals: &Scope,
        locals: &[(String, Shape)],
    ) -> Option<Shape> {
        if self.p.constant(lv.root()).is_some() {
            self.err(
                DiagCategory::NotAnLvalue,
                format!("cannot assign to constant `{}`", lv.root()),
            );
            return None;
        }
        self.expr_shape(&lv.to_expr(), globals, locals)
    }

    fn same_shape(a: &Shape, b: &Shape) -> bool {
        match (a, b) {
            (Shape::Bits(x), Shape::Bits(y)) => x == y,
            (Shape::Record { fields: fa, .. }, Shape::Record { fields: fb, .. }) => {
                fa.len() == fb.len()
                    && fa
                        .iter()
                        .zip(fb)
                        .all(|((na, sa), (nb, sb))| na == nb && Self::same_shape(sa, sb))
            }
            _ => false,
        }
    }

    fn check_stmt(&mut self, s: &Stmt, globals: &Scope, locals: &[(String, Shape)]) {
        match s {
            Stmt::Skip => {}
            Stmt::Assign(lv, e) => {
                let (ls, es) = (
                    self.lvalue_shape(lv, globals, locals),
                    self.expr_shape(e, globals, locals),
                );
                if let (Some(ls), Some(es)) = (ls, es) {
                    if !Self::same_shape(&ls, &es) {
                        self.err(
                            DiagCategory::WidthMismatch,
                            format!("assignment to `{lv}` changes its shape"),
                        );
                    }
                }
            }
            Stmt::Seq(a, b) => {
                self.check_stmt(a, globals, locals);
                self.check_stmt(b, globals, locals);
            }
            Stmt::If(c, t, e) => {
                if let Some(w) = self.bits_of(c, globals, locals) {
                    if w != 1 {
                        self.err(
                            DiagCategory::WidthMismatch,
                            format!("condition is {w} bits wide"),
                        );
                    }
                }
                self.check_stmt(t, globals, locals);
                self.check_stmt(e, globals, locals);
            }
            Stmt::Apply(t) => {
                if self.p.table(t).is_none() {
                    self.err(DiagCategory::UndeclaredName, format!("unknown table `{t}`"));
                }
            }
            Stmt::Call(f, args) => self.check_call(f, args, globals, locals),
            Stmt::Transition(t) => {
                let sw = match &t.scrutinee {
                    Some(e) => self.bits_of(e, globals, locals),
                    None => {
                        if !t.arms.is_empty() {
                            self.err(DiagCategory::Malformed, "select arms without a scrutinee");
                        }
                        None
                    }
                };
                let mut seen = BTreeSet::new();
                for (v, st) in &t.arms {
                    match (v.as_bits(), sw) {
                        (Some(b), Some(w)) if b.width() == w => {
                            if !seen.insert(b.value()) {
                                self.err(
                                    DiagCategory::Malformed,
                                    format!("select value {} repeated", b.value()),
                                );
                            }
                        }
                        (_, Some(w)) => self.err(
                            DiagCategory::WidthMismatch,
                            format!("select value is not {w} bits wide"),
                        ),
                        _ => {}
                    }
                    self.check_state_ref(st);
                }
                self.check_state_ref(&t.default);
            }
        }
    }

    fn check_state_ref(&mut self, st: &str) {
        if self.p.state_body(st).is_none() {
            self.err(
                DiagCategory::UndeclaredName,
                format!("unknown parser state `{st}`"),
            );
        }
    }

    fn check_call(&mut self, f: &str, args: &[Expr], globals: &Scope, locals: &[(String, Shape)]) {
        let params: Vec<Param> = match (self.p.func(f), self.p.extern_decl(f)) {
            (Some(d), _) => d.params.clone(),
            (None, Some(d)) => d.params.clone(),
            (None, None) => {
                self.err(
                    DiagCategory::UndeclaredName,
                    format!("unknown function `{f}`"),
                );
                return;
            }
        };
        if params.len() != args.len() {
            self.err(
                DiagCategory::Arity,
                format!(
                    "`{f}` takes {} arguments, given {}",
                    params.len(),
                    args.len()
                ),
            );
            return;
        }
        for (prm, a) in params.iter().zip(args) {
            let shape = if prm.dir.is_out() {
                match a.as_lvalue() {
                    Some(lv) => self.lvalue_shape(&lv, globals, locals),
                    None => {
                        self.err(
                            DiagCategory::NotAnLvalue,
                            format!("argument for `{}` of `{f}` must be an lvalue", prm.name),
                        );
                        None
                    }
                }
            } else {
                self.expr_shape(a, globals, locals)
            };
            if let (Some(s), Some(t)) = (shape, &prm.ty) {
                if let Ok(ps) = self.p.resolve(t) {
                    if !Self::same_shape(&s, &ps) {
                        self.err(
                            DiagCategory::WidthMismatch,
                            format!("argument for `{}` of `{f}` has the wrong shape", prm.name),
                        );
                    }
                }
            }
        }
    }

    /// Call graph over functions, actions and parser states must be acyclic.
    fn check_recursion(&mut self) {
        let mut edges: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let node_f = |n: &str| format!("f:{n}");
        let node_s = |n: &str| format!("s:{n}");
        fn callees(p: &Program, s: &Stmt, out: &mut BTreeSet<String>) {
            match s {
                Stmt::Seq(a, b) | Stmt::If(_, a, b) => {
                    callees(p, a, out);
                    callees(p, b, out);
                }
                Stmt::Call(f, _) if p.func(f).is_some() => {
                    out.insert(format!("f:{f}"));
                }
                Stmt::Apply(t) => {
                    if let Some(t) = p.table(t) {
                        out.extend(t.actions.iter().map(|a| format!("f:{a}")));
                    }
                }
                Stmt::Transition(t) => {
                    out.extend(t.arms.iter().map(|(_, s)| format!("s:{s}")));
                    out.insert(format!("s:{}", t.default));
                }
                _ => {}
            }
        }
        for f in &self.p.funcs {
            callees(self.p, &f.body, edges.entry(node_f(&f.name)).or_default());
        }
        for s in self.p.states.iter().flatten() {
            callees(self.p, &s.body, edges.entry(node_s(&s.name)).or_default());
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut mark: BTreeMap<String, u8> = BTreeMap::new();
        let mut cycles = BTreeSet::new();
        fn dfs(
            n: &str,
            edges: &BTreeMap<String, BTreeSet<String>>,
            mark: &mut BTreeMap<String, u8>,
            cycles: &mut BTreeSet<String>,
        ) {
            mark.insert(n.to_string(), 1);
            for m in edges.get(n).into_iter().flatten() {
                match mark.get(m.as_str()).copied().unwrap_or(0) {
                    0 => dfs(m, edges, mark, cycles),
                    1 => {
                        cycles.insert(m.clone());
                    }
                    _ => {}
                }
            }
            mark.insert(n.to_string(), 2);
        }
        for n in edges.keys() {
            if mark.get(n.as_str()).copied().unwrap_or(0) == 0 {
                dfs(n, &edges, &mut mark, &mut cycles);
            }
        }
        for c in cycles {
            let (kind, name) = c.split_at(2);
            self.location = if kind == "f:" {
                format!("function {name}")
            } else {
                format!("state {name}")
            };
            self.err(
                DiagCategory::Recursion,
                format!("`{name}` can reach itself"),
            );
        }
    }
}
