//! Recursive-descent parser for `.mp4` programs and the width elaboration
//! that follows it.

use super::lexer::{lex, Cursor, Tok};
use super::FrontendError;
use crate::lang_ast::{
    validate_program, BinOp, Bits, CmpOp, ConstDecl, DiagCategory, Diagnostic, Direction, Expr,
    ExternDecl, FuncDecl, FuncKind, GlobalDecl, LValue, Param, Program, Shape, StateDecl, Stmt,
    TableDecl, Transition, TypeDecl, TypeRef, UnOp, Value, VALID_FIELD,
};

/// Parses, infers literal widths and validates a whole program.
pub fn parse_program(text: &str) -> Result<Program, FrontendError> {
    let mut p = Parser {
        c: Cursor::new(lex(text)?),
    };
    if p.c.at_eof() {
        return Err(p.c.error("a declaration"));
    }
    let raw = p.program()?;
    let prog = Elaborator::run(raw).map_err(FrontendError::Invalid)?;
    let diags = validate_program(&prog);
    if diags.is_empty() {
        Ok(prog)
    } else {
        Err(FrontendError::Invalid(diags))
    }
}

/// Parses a standalone expression (used by policy and contract files) and
/// elaborates it against the globals of `prog` plus `extra` locals.
pub fn parse_expr(
    text: &str,
    prog: &Program,
    extra: &[(String, Shape)],
) -> Result<Expr, FrontendError> {
    let mut p = Parser {
        c: Cursor::new(lex(text)?),
    };
    let e = p.expr()?;
    if !p.c.at_eof() {
        return Err(p.c.error("end of expression"));
    }
    elaborate_expr(&e, prog, extra, None).map_err(|m| FrontendError::semantic(1, m))
}

/// Gives the unsized literals of a parsed expression their widths.
pub(super) fn elaborate_expr(
    e: &Expr,
    prog: &Program,
    extra: &[(String, Shape)],
    expected: Option<&Shape>,
) -> Result<Expr, String> {
    let mut el = Elaborator::new(prog);
    el.scope = extra.to_vec();
    el.expr(e, expected)
}

pub(super) struct Parser {
    pub(super) c: Cursor,
}

impl Parser {
    pub(super) fn new(c: Cursor) -> Parser {
        Parser { c }
    }

    fn program(&mut self) -> Result<Program, FrontendError> {
        let mut prog = Program::default();
        let mut seen_control = false;
        while !self.c.at_eof() {
            let Tok::Ident(word) = self.c.peek().clone() else {
                return Err(self.c.error("a declaration"));
            };
            match word.as_str() {
                "header" | "struct" => {
                    self.c.next();
                    let name = self.c.ident()?;
                    self.c.expect("{")?;
                    let mut fields = Vec::new();
                    while !self.c.eat("}") {
                        let ty = self.type_ref()?;
                        let f = self.c.ident()?;
                        self.c.expect(";")?;
                        fields.push((f, ty));
                    }
                    prog.types.push(TypeDecl {
                        name,
                        header: word == "header",
                        fields,
                    });
                }
                "const" => {
                    self.c.next();
                    let (line, _) = self.c.here();
                    let ty = self.type_ref()?;
                    let name = self.c.ident()?;
                    self.c.expect("=")?;
                    let e = self.expr()?;
                    self.c.expect(";")?;
                    let TypeRef::Bit(w) = ty else {
                        return Err(FrontendError::semantic(
                            line,
                            "constants must have a bit type",
                        ));
                    };
                    let value = match e {
                        Expr::Const(Value::Bits(b)) if b.is_unsized() || b.width() == w => {
                            Bits::new(w, b.value())
                        }
                        _ => None,
                    }
                    .ok_or_else(|| {
                        FrontendError::semantic(line, format!("bad value for constant `{name}`"))
                    })?;
                    prog.consts.push(ConstDecl { name, value });
                }
                "function" | "action" => {
                    self.c.next();
                    let name = self.c.ident()?;
                    let params = self.params()?;
                    let body = self.block()?;
                    let kind = if word == "action" {
                        FuncKind::Action
                    } else {
                        FuncKind::Function
                    };
                    prog.funcs.push(FuncDecl {
                        name,
                        kind,
                        params,
                        body,
                    });
                }
                "extern" => {
                    self.c.next();
                    let name = self.c.ident()?;
                    let params = self.params()?;
                    self.c.expect(";")?;
                    prog.externs.push(ExternDecl { name, params });
                }
                "table" => {
                    self.c.next();
                    prog.tables.push(self.table()?);
                }
                "parser" => {
                    self.c.next();
                    if prog.states.is_some() {
                        return Err(self.c.error("a single parser block"));
                    }
                    self.c.expect("{")?;
                    let mut states = Vec::new();
                    while !self.c.eat("}") {
                        self.c.expect_word("state")?;
                        let name = self.c.ident()?;
                        let body = self.block()?;
                        states.push(StateDecl { name, body });
                    }
                    prog.states = Some(states);
                }
                "control" => {
                    self.c.next();
                    if seen_control {
                        return Err(self.c.error("a single control block"));
                    }
                    seen_control = true;
                    prog.control = self.block()?;
                }
                _ => {
                    let ty = self.type_ref()?;
                    let name = self.c.ident()?;
                    self.c.expect(";")?;
                    prog.globals.push(GlobalDecl { name, ty });
                }
            }
        }
        Ok(prog)
    }

    pub(super) fn type_ref(&mut self) -> Result<TypeRef, FrontendError> {
        if self.c.eat_word("bit") {
            self.c.expect("<")?;
            let w = self.c.small()?;
            self.c.expect(">")?;
            return Ok(TypeRef::Bit(w));
        }
        if self.c.eat_word("bool") {
            return Ok(TypeRef::Bit(1));
        }
        match self.c.peek() {
            Tok::Ident(_) => Ok(TypeRef::Named(self.c.ident()?)),
            _ => Err(self.c.error("a type")),
        }
    }

    fn params(&mut self) -> Result<Vec<Param>, FrontendError> {
        self.c.expect("(")?;
        let mut out = Vec::new();
        if self.c.eat(")") {
            return Ok(out);
        }
        loop {
            let dir = if self.c.eat_word("in") {
                Direction::In
            } else if self.c.eat_word("out") {
                Direction::Out
            } else if self.c.eat_word("inout") {
                Direction::InOut
            } else {
                Direction::None
            };
            let typed = self.c.is_word("bit")
                || self.c.is_word("bool")
                || matches!(
                    (self.c.peek(), self.c.peek_at(1)),
                    (Tok::Ident(_), Tok::Ident(_))
                );
            let ty = if typed { Some(self.type_ref()?) } else { None };
            let name = self.c.ident()?;
            out.push(Param { name, dir, ty });
            if self.c.eat(")") {
                return Ok(out);
            }
            self.c.expect(",")?;
        }
    }

    fn table(&mut self) -> Result<TableDecl, FrontendError> {
        let name = self.c.ident()?;
        self.c.expect("{")?;
        self.c.expect_word("key")?;
        self.c.expect("=")?;
        self.c.expect("{")?;
        let mut keys = Vec::new();
        while !self.c.eat("}") {
            keys.push(self.expr()?);
            self.c.expect(";")?;
        }
        self.c.expect_word("actions")?;
        self.c.expect("=")?;
        self.c.expect("{")?;
        let mut actions = Vec::new();
        while !self.c.eat("}") {
            actions.push(self.c.ident()?);
            self.c.expect(";")?;
        }
        self.c.expect_word("default_action")?;
        self.c.expect("=")?;
        let default_action = self.c.ident()?;
        if self.c.eat("(") {
            self.c.expect(")")?;
        }
        self.c.expect(";")?;
        self.c.expect("}")?;
        Ok(TableDecl {
            name,
            keys,
            actions,
            default_action,
        })
    }

    fn block(&mut self) -> Result<Stmt, FrontendError> {
        self.c.expect("{")?;
        let mut items = Vec::new();
        while !self.c.eat("}") {
            items.push(self.stmt()?);
        }
        Ok(Stmt::block(items))
    }

    fn stmt(&mut self) -> Result<Stmt, FrontendError> {
        if self.c.is("{") {
            return self.block();
        }
        if self.c.eat_word("if") {
            self.c.expect("(")?;
            let cond = self.expr()?;
            self.c.expect(")")?;
            let then = self.block()?;
            let els = if self.c.eat_word("else") {
                if self.c.is_word("if") {
                    self.stmt()?
                } else {
                    self.block()?
                }
            } else {
                Stmt::Skip
            };
            return Ok(Stmt::if_(cond, then, els));
        }
        if self.c.eat_word("skip") {
            self.c.expect(";")?;
            return Ok(Stmt::Skip);
        }
        if self.c.eat_word("transition") {
            return self.transition();
        }
        let name = match self.c.peek() {
            Tok::Ident(n) => n.clone(),
            _ => return Err(self.c.error("a statement")),
        };
        let method = |c: &Cursor, m: &str| {
            c.peek_at(1) == &Tok::Punct(".") && c.peek_at(2) == &Tok::Ident(m.into())
        };
        if method(&self.c, "apply") && self.c.peek_at(3) == &Tok::Punct("(") {
            self.c.next();
            self.c.next();
            self.c.next();
            self.c.expect("(")?;
            self.c.expect(")")?;
            self.c.expect(";")?;
            return Ok(Stmt::Apply(name));
        }
        if self.c.peek_at(1) == &Tok::Punct("(") {
            self.c.next();
            let args = self.args()?;
            self.c.expect(";")?;
            return Ok(Stmt::Call(name, args));
        }
        let lv = self.lvalue()?;
        // `h.setValid()` and `h.setInvalid()` are sugar for writing the validity bit.
        if self.c.is(".") {
            if let Tok::Ident(m) = self.c.peek_at(1).clone() {
                if m == "setValid" || m == "setInvalid" {
                    self.c.next();
                    self.c.next();
                    self.c.expect("(")?;
                    self.c.expect(")")?;
                    self.c.expect(";")?;
                    return Ok(Stmt::assign(
                        lv.field(VALID_FIELD),
                        Expr::boolean(m == "setValid"),
                    ));
                }
            }
        }
        if !self.c.eat("=") && !self.c.eat(":=") {
            return Err(self.c.error("`=`"));
        }
        let e = self.expr()?;
        self.c.expect(";")?;
        Ok(Stmt::assign(lv, e))
    }

    fn transition(&mut self) -> Result<Stmt, FrontendError> {
        if !self.c.eat_word("select") {
            let st = self.c.ident()?;
            self.c.expect(";")?;
            return Ok(Stmt::goto(&st));
        }
        self.c.expect("(")?;
        let scrutinee = self.expr()?;
        self.c.expect(")")?;
        self.c.expect("{")?;
        let mut arms = Vec::new();
        let mut default = None;
        while !self.c.eat("}") {
            if self.c.eat_word("default") {
                self.c.expect(":")?;
                default = Some(self.c.ident()?);
                self.c.expect(";")?;
                continue;
            }
            let v = match self.primary()? {
                Expr::Const(v) => v,
                _ => return Err(self.c.error("a select value")),
            };
            self.c.expect(":")?;
            let st = self.c.ident()?;
            self.c.expect(";")?;
            arms.push((v, st));
        }
        let default = default.unwrap_or_else(|| crate::lang_ast::REJECT.to_string());
        Ok(Stmt::Transition(Transition {
            scrutinee: Some(scrutinee),
            arms,
            default,
        }))
    }

    fn args(&mut self) -> Result<Vec<Expr>, FrontendError> {
        self.c.expect("(")?;
        let mut out = Vec::new();
        if self.c.eat(")") {
            return Ok(out);
        }
        loop {
            out.push(self.expr()?);
            if self.c.eat(")") {
                return Ok(out);
            }
            self.c.expect(",")?;
        }
    }

    pub(super) fn lvalue(&mut self) -> Result<LValue, FrontendError> {
        let mut lv = LValue::Var(self.c.ident()?);
        loop {
            if self.c.is(".") && !matches!(self.c.peek_at(2), Tok::Punct("(")) {
                self.c.next();
                lv = lv.field(&self.c.ident()?);
            } else if self.c.is("[") && matches!(self.c.peek_at(1), Tok::Num { .. }) {
                self.c.next();
                let hi = self.c.small()?;
                self.c.expect(":")?;
                let lo = self.c.small()?;
                self.c.expect("]")?;
                lv = lv.slice(hi, lo);
            } else {
                return Ok(lv);
            }
        }
    }

    pub(super) fn expr(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.xor()?;
        while self.c.eat("|") || self.c.eat("||") {
            e = Expr::binop(BinOp::Or, e, self.xor()?);
        }
        Ok(e)
    }

    fn xor(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.and()?;
        while self.c.eat("^") {
            e = Expr::binop(BinOp::Xor, e, self.and()?);
        }
        Ok(e)
    }

    fn and(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.cmp()?;
        while self.c.eat("&") || self.c.eat("&&") {
            e = Expr::binop(BinOp::And, e, self.cmp()?);
        }
        Ok(e)
    }

    fn cmp(&mut self) -> Result<Expr, FrontendError> {
        let e = self.add()?;
        let op = match self.c.peek() {
            Tok::Punct("==") => CmpOp::Eq,
            Tok::Punct("!=") => CmpOp::Ne,
            Tok::Punct("<") => CmpOp::Lt,
            Tok::Punct("<=") => CmpOp::Le,
            Tok::Punct(">") => CmpOp::Gt,
            Tok::Punct(">=") => CmpOp::Ge,
            _ => return Ok(e),
        };
        self.c.next();
        Ok(Expr::cmp(op, e, self.add()?))
    }

    fn add(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.unary()?;
        loop {
            if self.c.eat("+") {
                e = Expr::binop(BinOp::Add, e, self.unary()?);
            } else if self.c.eat("-") {
                e = Expr::binop(BinOp::Sub, e, self.unary()?);
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, FrontendError> {
        let op = if self.c.eat("-") {
            UnOp::Neg
        } else if self.c.eat("~") {
            UnOp::BitNot
        } else if self.c.eat("!") {
            UnOp::LogNot
        } else {
            return self.postfix();
        };
        Ok(Expr::unop(op, self.unary()?))
    }

    fn postfix(&mut self) -> Result<Expr, FrontendError> {
        let mut e = self.primary()?;
        loop {
            if self.c.eat(".") {
                let f = self.c.ident()?;
                if f == "isValid" && self.c.eat("(") {
                    self.c.expect(")")?;
                    e = Expr::is_valid(e);
                } else {
                    e = e.field(&f);
                }
            } else if self.c.is("[") && matches!(self.c.peek_at(1), Tok::Num { .. }) {
                self.c.next();
                let hi = self.c.small()?;
                self.c.expect(":")?;
                let lo = self.c.small()?;
                self.c.expect("]")?;
                e = e.slice(hi, lo);
            } else {
                return Ok(e);
            }
        }
    }

    fn primary(&mut self) -> Result<Expr, FrontendError> {
        match self.c.peek().clone() {
            Tok::Num { width, value } => {
                self.c.next();
                if width.is_none() && self.c.is(".") && matches!(self.c.peek_at(1), Tok::Num { .. })
                {
                    return Ok(Expr::Const(Value::Bits(
                        Bits::new(32, self.dotted_quad(value)?).expect("32-bit"),
                    )));
                }
                literal(width, value).ok_or_else(|| self.c.error("a literal that fits its width"))
            }
            Tok::Ident(w) if w == "true" || w == "false" => {
                self.c.next();
                Ok(Expr::boolean(w == "true"))
            }
            Tok::Ident(n) => {
                self.c.next();
                Ok(Expr::Var(n))
            }
            Tok::Punct("(") => {
                self.c.next();
                let e = self.expr()?;
                self.c.expect(")")?;
                Ok(e)
            }
            Tok::Punct("{") => {
                self.c.next();
                let mut fs = Vec::new();
                if self.c.eat("}") {
                    return Ok(Expr::Record(fs));
                }
                loop {
                    let f = self.c.ident()?;
                    self.c.expect("=")?;
                    fs.push((f, self.expr()?));
                    if self.c.eat("}") {
                        return Ok(Expr::Record(fs));
                    }
                    self.c.expect(",")?;
                }
            }
            _ => Err(self.c.error("an expression")),
        }
    }

    /// Remaining three octets of `a.b.c.d`, first already consumed.
    fn dotted_quad(&mut self, first: u64) -> Result<u64, FrontendError> {
        let mut v = first;
        if first > 255 {
            return Err(self.c.error("an octet"));
        }
        for _ in 0..3 {
            self.c.expect(".")?;
            match self.c.number()? {
                (None, o) if o <= 255 => v = (v << 8) | o,
                _ => return Err(self.c.error("an octet")),
            }
        }
        Ok(v)
    }
}

fn literal(width: Option<u32>, value: u64) -> Option<Expr> {
    let b = match width {
        Some(w) => Bits::new(w, value)?,
        None => Bits::unsized_literal(value),
    };
    Some(Expr::Const(Value::Bits(b)))
}

/// Gives every unsized literal the width its context requires.
struct Elaborator<'a> {
    prog: &'a Program,
    globals: Vec<(String, Shape)>,
    scope: Vec<(String, Shape)>,
}

impl<'a> Elaborator<'a> {
    fn new(prog: &'a Program) -> Elaborator<'a> {
        Elaborator {
            prog,
            globals: prog.global_shapes().unwrap_or_default(),
            scope: Vec::new(),
        }
    }

    fn run(raw: Program) -> Result<Program, Vec<Diagnostic>> {
        let mut diags = Vec::new();
        let mut out = raw.clone();
        let mut el = Elaborator::new(&raw);
        let mut note = |loc: String, r: Result<Stmt, String>, slot: &mut Stmt| match r {
            Ok(s) => *slot = s,
            Err(m) => diags.push(Diagnostic {
                location: loc,
                category: DiagCategory::WidthMismatch,
                message: m,
            }),
        };
        for f in out.funcs.iter_mut() {
            el.scope = f
                .params
                .iter()
                .filter_map(|p| Some((p.name.clone(), raw.resolve(p.ty.as_ref()?).ok()?)))
                .collect();
            note(
                format!("function {}", f.name),
                el.stmt(&f.body),
                &mut f.body,
            );
        }
        el.scope.clear();
        for s in out.states.iter_mut().flatten() {
            note(format!("state {}", s.name), el.stmt(&s.body), &mut s.body);
        }
        note("control".into(), el.stmt(&raw.control), &mut out.control);
        for t in out.tables.iter_mut() {
            for k in t.keys.iter_mut() {
                match el.expr(k, None) {
                    Ok(e) => *k = e,
                    Err(m) => diags.push(Diagnostic {
                        location: format!("table {}", t.name),
                        category: DiagCategory::WidthMismatch,
                        message: m,
                    }),
                }
            }
        }
        if diags.is_empty() {
            Ok(out)
        } else {
            Err(diags)
        }
    }

    fn var_shape(&self, n: &str) -> Option<Shape> {
        self.scope
            .iter()
            .chain(&self.globals)
            .find(|(k, _)| k == n)
            .map(|(_, s)| s.clone())
            .or_else(|| self.prog.constant(n).map(|b| Shape::Bits(b.width())))
    }

    /// Shape of `e` without any help from context; `None` when it hinges on
    /// an unsized literal.
    fn natural(&self, e: &Expr) -> Option<Shape> {
        match e {
            Expr::Const(Value::Bits(b)) if b.is_unsized() => None,
            Expr::Const(Value::Bits(b)) => Some(Shape::Bits(b.width())),
            Expr::Const(Value::Record(_)) | Expr::Record(_) => None,
            Expr::Var(n) => self.var_shape(n),
            Expr::Field(a, f) => self.natural(a)?.field(f).cloned(),
            Expr::Slice(_, hi, lo) => Some(Shape::Bits(hi.checked_sub(*lo)? + 1)),
            Expr::Cmp(..) | Expr::Unop(UnOp::LogNot, _) => Some(Shape::Bits(1)),
            Expr::Unop(_, a) => self.natural(a),
            Expr::Binop(_, a, b) => self.natural(a).or_else(|| self.natural(b)),
        }
    }

    fn expr(&self, e: &Expr, expected: Option<&Shape>) -> Result<Expr, String> {
        Ok(match e {
            Expr::Const(Value::Bits(b)) if b.is_unsized() => match expected {
                Some(Shape::Bits(w)) => {
                    Expr::Const(Value::Bits(Bits::new(*w, b.value()).ok_or_else(|| {
                        format!("literal {} does not fit in {w} bits", b.value())
                    })?))
                }
                _ => return Err(format!("cannot infer the width of literal {}", b.value())),
            },
            Expr::Const(_) | Expr::Var(_) => e.clone(),
            Expr::Field(a, f) => self.expr(a, None)?.field(f),
            Expr::Slice(a, hi, lo) => self.expr(a, None)?.slice(*hi, *lo),
            Expr::Unop(UnOp::LogNot, a) => {
                let s = self.natural(a).unwrap_or(Shape::Bits(1));
                Expr::unop(UnOp::LogNot, self.expr(a, Some(&s))?)
            }
            Expr::Unop(op, a) => Expr::unop(*op, self.expr(a, expected)?),
            Expr::Binop(op, a, b) => {
                let target = self
                    .natural(a)
                    .or_else(|| self.natural(b))
                    .or_else(|| expected.cloned());
                Expr::binop(
                    *op,
                    self.expr(a, target.as_ref())?,
                    self.expr(b, target.as_ref())?,
                )
            }
            Expr::Cmp(op, a, b) => {
                let target = self.natural(a).or_else(|| self.natural(b));
                Expr::cmp(
                    *op,
                    self.expr(a, target.as_ref())?,
                    self.expr(b, target.as_ref())?,
                )
            }
            Expr::Record(fs) => Expr::Record(
                fs.iter()
                    .map(|(n, fe)| {
                        Ok((n.clone(), self.expr(fe, expected.and_then(|s| s.field(n)))?))
                    })
                    .collect::<Result<_, String>>()?,
            ),
        })
    }

    fn stmt(&self, s: &Stmt) -> Result<Stmt, String> {
        Ok(match s {
            Stmt::Skip | Stmt::Apply(_) => s.clone(),
            Stmt::Assign(lv, e) => {
                let target = self.natural(&lv.to_expr());
                Stmt::assign(lv.clone(), self.expr(e, target.as_ref())?)
            }
            Stmt::Seq(a, b) => Stmt::Seq(Box::new(self.stmt(a)?), Box::new(self.stmt(b)?)),
            Stmt::If(c, t, e) => Stmt::if_(
                self.expr(c, Some(&Shape::Bits(1)))?,
                self.stmt(t)?,
                self.stmt(e)?,
            ),
            Stmt::Call(f, args) => {
                let params: Vec<Param> = match (self.prog.func(f), self.prog.extern_decl(f)) {
                    (Some(d), _) => d.params.clone(),
                    (None, Some(d)) => d.params.clone(),
                    _ => Vec::new(),
                };
                let mut out = Vec::with_capacity(args.len());
                for (i, a) in args.iter().enumerate() {
                    let shape = params
                        .get(i)
                        .and_then(|p| self.prog.resolve(p.ty.as_ref()?).ok());
                    out.push(self.expr(a, shape.as_ref())?);
                }
                Stmt::Call(f.clone(), out)
            }
            Stmt::Transition(t) => {
                let scrutinee = t
                    .scrutinee
                    .as_ref()
                    .map(|e| self.expr(e, None))
                    .transpose()?;
                let shape = scrutinee.as_ref().and_then(|e| self.natural(e));
                let mut arms = Vec::with_capacity(t.arms.len());
                for (v, st) in &t.arms {
                    let Expr::Const(v) = self.expr(&Expr::Const(v.clone()), shape.as_ref())? else {
                        unreachable!()
                    };
                    arms.push((v, st.clone()));
                }
                Stmt::Transition(Transition {
                    scrutinee,
                    arms,
                    default: t.default.clone(),
                })
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DECREASE: &str = "
        header ipv4_t { bit<8> ttl; bit<2> ecn; }
        struct headers { ipv4_t ipv4; }
        headers hdr;
        function decrease(inout bit<8> x) { x := x - 1; }
        control { decrease(hdr.ipv4.ttl); }
    ";

    #[test]
    fn inout_function() {
        let p = parse_program(DECREASE).unwrap();
        let f = p.func("decrease").unwrap();
        assert_eq!(f.params[0].dir, Direction::InOut);
        assert_eq!(
            f.body,
            Stmt::assign(
                LValue::var("x"),
                Expr::binop(BinOp::Sub, Expr::var("x"), Expr::bits(8, 1))
            )
        );
    }

    #[test]
    fn empty_file_is_a_syntax_error() {
        assert!(matches!(
            parse_program(""),
            Err(FrontendError::Syntax { .. })
        ));
        assert!(matches!(
            parse_program("  // nothing\n"),
            Err(FrontendError::Syntax { .. })
        ));
    }

    #[test]
    fn select_transition() {
        let src = "
            header ethernet_t { bit<16> etherType; }
            header ipv4_t { bit<8> ttl; }
            struct headers { ethernet_t eth; ipv4_t ipv4; }
            headers hdr;
            parser {
                state start { transition select(hdr.eth.etherType) { 0x0800: parse_ipv4; default: accept; } }
                state parse_ipv4 { transition accept; }
            }
            control { }
        ";
        let p = parse_program(src).unwrap();
        let start = p.state_body("start").unwrap();
        let Stmt::Transition(t) = start else {
            panic!("not a transition")
        };
        assert_eq!(
            t.arms,
            vec![(Value::bits(16, 0x800), "parse_ipv4".to_string())]
        );
        assert_eq!(t.default, "accept");
    }

    #[test]
    fn widths_come_from_context() {
        let src = "
            bit<8> a; bit<19> q; bit<1> f;
            const bit<19> T = 10;
            control {
                if (q >= T & !(a == 3)) { a = 255; f = 1; }
                a = ~0;
            }
        ";
        let p = parse_program(src).unwrap();
        let items = p.control.items();
        let Stmt::If(c, t, _) = items[0] else {
            panic!()
        };
        assert_eq!(
            *c,
            Expr::binop(
                BinOp::And,
                Expr::cmp(CmpOp::Ge, Expr::var("q"), Expr::var("T")),
                Expr::unop(
                    UnOp::LogNot,
                    Expr::cmp(CmpOp::Eq, Expr::var("a"), Expr::bits(8, 3))
                )
            )
        );
        assert_eq!(
            t.items()[0],
            &Stmt::assign(LValue::var("a"), Expr::bits(8, 255))
        );
        assert_eq!(
            items[1],
            &Stmt::assign(LValue::var("a"), Expr::unop(UnOp::BitNot, Expr::bits(8, 0)))
        );
    }

    #[test]
    fn uninferable_literal_is_reported() {
        let err = parse_program("bit<8> a; control { if (1 == 2) { a = 1; } }").unwrap_err();
        assert!(err.to_string().contains("cannot infer"), "{err}");
        assert!(parse_program("bit<4> a; control { a = 16; }").is_err());
    }

    #[test]
    fn syntax_errors_carry_positions() {
        let err = parse_program("bit<8> a;\ncontrol { a = ; }").unwrap_err();
        assert!(
            matches!(
                err,
                FrontendError::Syntax {
                    line: 2,
                    col: 15,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn validity_sugar() {
        let src =
            "header h_t { bit<4> f; } h_t h; control { if (h.isValid()) { h.setInvalid(); } }";
        let p = parse_program(src).unwrap();
        let Stmt::If(c, t, _) = &p.control else {
            panic!()
        };
        assert_eq!(*c, Expr::is_valid(Expr::var("h")));
        assert_eq!(
            **t,
            Stmt::assign(LValue::var("h").field(VALID_FIELD), Expr::boolean(false))
        );
    }

    #[test]
    fn dotted_quads_are_32_bit() {
        let p = parse_program("bit<32> d; control { if (d == 192.168.2.2) { d = 0; } }").unwrap();
        let Stmt::If(Expr::Cmp(_, _, b), _, _) = &p.control else {
            panic!()
        };
        assert_eq!(**b, Expr::bits(32, 0xC0A80202));
    }

    #[test]
    fn validation_errors_surface() {
        let err = parse_program("bit<8> a; control { b = 1; }").unwrap_err();
        assert!(matches!(err, FrontendError::Invalid(_)));
    }

    #[test]
    fn untyped_extern_params() {
        let src =
            "header h_t { bit<4> f; } h_t h; extern extract(inout hdr); control { extract(h); }";
        let p = parse_program(src).unwrap();
        assert_eq!(p.externs[0].params[0].ty, None);
    }
}
