//! Canonical pretty-printer for programs. Parsing the output gives back the
//! same (sequence-normalized) program.

use std::fmt::Write;

use crate::lang_ast::{
    BinOp, CmpOp, Direction, Expr, FuncKind, Param, Program, Stmt, TypeRef, UnOp, Value,
    VALID_FIELD,
};

const INDENT: &str = "    ";

pub fn print_program(p: &Program) -> String {
    let mut sections: Vec<String> = Vec::new();
    for t in &p.types {
        let mut s = format!(
            "{} {} {{\n",
            if t.header { "header" } else { "struct" },
            t.name
        );
        for (f, ty) in &t.fields {
            let _ = writeln!(s, "{INDENT}{} {f};", type_ref(ty));
        }
        s.push('}');
        sections.push(s);
    }
    let mut decls = String::new();
    for c in &p.consts {
        let _ = writeln!(
            decls,
            "const bit<{}> {} = {};",
            c.value.width(),
            c.name,
            c.value.value()
        );
    }
    for g in &p.globals {
        let _ = writeln!(decls, "{} {};", type_ref(&g.ty), g.name);
    }
    for e in &p.externs {
        let _ = writeln!(decls, "extern {}({});", e.name, params(&e.params));
    }
    if !decls.is_empty() {
        decls.pop();
        sections.push(decls);
    }
    for f in &p.funcs {
        let kw = if f.kind == FuncKind::Action {
            "action"
        } else {
            "function"
        };
        sections.push(format!(
            "{kw} {}({}) {}",
            f.name,
            params(&f.params),
            block(p, &f.body, 0)
        ));
    }
    for t in &p.tables {
        let mut s = format!("table {} {{\n", t.name);
        let keys: String = t
            .keys
            .iter()
            .map(|k| format!(" {};", expr(k, 0, false)))
            .collect();
        let _ = writeln!(s, "{INDENT}key = {{{keys} }}");
        let acts: String = t.actions.iter().map(|a| format!(" {a};")).collect();
        let _ = writeln!(s, "{INDENT}actions = {{{acts} }}");
        let _ = writeln!(s, "{INDENT}default_action = {};", t.default_action);
        s.push('}');
        sections.push(s);
    }
    if let Some(states) = &p.states {
        let mut s = String::from("parser {\n");
        for st in states {
            let _ = writeln!(s, "{INDENT}state {} {}", st.name, block(p, &st.body, 1));
        }
        s.push('}');
        sections.push(s);
    }
    sections.push(format!("control {}", block(p, &p.control, 0)));
    let mut out = sections.join("\n\n");
    out.push('\n');
    out
}

fn type_ref(t: &TypeRef) -> String {
    match t {
        TypeRef::Bit(w) => format!("bit<{w}>"),
        TypeRef::Named(n) => n.clone(),
    }
}

fn params(ps: &[Param]) -> String {
    ps.iter()
        .map(|p| {
            let mut s = String::new();
            if p.dir != Direction::None {
                s.push_str(p.dir.keyword());
                s.push(' ');
            }
            if let Some(t) = &p.ty {
                s.push_str(&type_ref(t));
                s.push(' ');
            }
            s.push_str(&p.name);
            s
        })
        .collect::<Vec<_>>()
        .join(", ")
}

fn block(p: &Program, s: &Stmt, depth: usize) -> String {
    if *s == Stmt::Skip {
        return "{ }".into();
    }
    let mut out = String::from("{\n");
    for item in s.items() {
        stmt_into(p, item, depth + 1, &mut out);
    }
    out.push_str(&INDENT.repeat(depth));
    out.push('}');
    out
}

/// One statement, without a trailing newline for multi-line forms.
pub fn print_stmt(p: &Program, s: &Stmt) -> String {
    let mut out = String::new();
    for item in s.items() {
        stmt_into(p, item, 0, &mut out);
    }
    out
}

fn stmt_into(p: &Program, s: &Stmt, depth: usize, out: &mut String) {
    let pad = INDENT.repeat(depth);
    match s {
        Stmt::Skip => {
            let _ = writeln!(out, "{pad}skip;");
        }
        Stmt::Assign(lv, e) => {
            let _ = writeln!(out, "{pad}{lv} = {};", expr(e, 0, true));
        }
        Stmt::Seq(..) => {
            for item in s.items() {
                stmt_into(p, item, depth, out);
            }
        }
        Stmt::If(c, t, e) => {
            let _ = write!(out, "{pad}if ({}) {}", expr(c, 0, true), block(p, t, depth));
            let mut els = &**e;
            loop {
                match els {
                    Stmt::Skip => break,
                    Stmt::If(c2, t2, e2) => {
                        let _ = write!(
                            out,
                            " else if ({}) {}",
                            expr(c2, 0, true),
                            block(p, t2, depth)
                        );
                        els = e2;
                    }
                    other => {
                        let _ = write!(out, " else {}", block(p, other, depth));
                        break;
                    }
                }
            }
            out.push('\n');
        }
        Stmt::Apply(t) => {
            let _ = writeln!(out, "{pad}{t}.apply();");
        }
        Stmt::Call(f, args) => {
            let typed: Vec<bool> = match (p.func(f), p.extern_decl(f)) {
                (Some(d), _) => d.params.iter().map(|x| x.ty.is_some()).collect(),
                (None, Some(d)) => d.params.iter().map(|x| x.ty.is_some()).collect(),
                _ => Vec::new(),
            };
            let a: Vec<String> = args
                .iter()
                .enumerate()
                .map(|(i, a)| expr(a, 0, typed.get(i).copied().unwrap_or(false)))
                .collect();
            let _ = writeln!(out, "{pad}{f}({});", a.join(", "));
        }
        Stmt::Transition(t) => match &t.scrutinee {
            None => {
                let _ = writeln!(out, "{pad}transition {};", t.default);
            }
            Some(e) => {
                let _ = writeln!(out, "{pad}transition select({}) {{", expr(e, 0, false));
                for (v, st) in &t.arms {
                    let _ = writeln!(out, "{pad}{INDENT}{}: {st};", plain_value(v));
                }
                let _ = writeln!(out, "{pad}{INDENT}default: {};", t.default);
                let _ = writeln!(out, "{pad}}}");
            }
        },
    }
}

fn plain_value(v: &Value) -> String {
    match v {
        Value::Bits(b) => b.value().to_string(),
        Value::Record(fs) => {
            let inner: Vec<String> = fs
                .iter()
                .map(|(n, v)| format!("{n} = {}", sized_value(v)))
                .collect();
            format!("{{{}}}", inner.join(", "))
        }
    }
}

fn sized_value(v: &Value) -> String {
    match v {
        Value::Bits(b) if b.width() == 1 => (if b.is_true() { "true" } else { "false" }).into(),
        Value::Bits(b) => format!("{}w{}", b.width(), b.value()),
        Value::Record(_) => plain_value(v),
    }
}

fn bin_prec(op: BinOp) -> u8 {
    match op {
        BinOp::Or => 1,
        BinOp::Xor => 2,
        BinOp::And => 3,
        BinOp::Add | BinOp::Sub => 5,
    }
}

const CMP_PREC: u8 = 4;
const UNARY_PREC: u8 = 6;

/// Whether the parser can infer the width of `e` without context.
fn has_width(e: &Expr) -> bool {
    match e {
        Expr::Const(_) | Expr::Record(_) => false,
        Expr::Var(_)
        | Expr::Field(..)
        | Expr::Slice(..)
        | Expr::Cmp(..)
        | Expr::Unop(UnOp::LogNot, _) => true,
        Expr::Unop(_, a) => has_width(a),
        Expr::Binop(_, a, b) => has_width(a) || has_width(b),
    }
}

pub fn print_expr(_program: &Program, e: &Expr) -> String {
    expr(e, 0, false)
}

/// `min` is the weakest precedence allowed without parentheses; `known`
/// says whether context fixes the width of a bare literal.
fn expr(e: &Expr, min: u8, known: bool) -> String {
    let (s, prec) = match e {
        Expr::Const(v) => (
            if known {
                plain_value(v)
            } else {
                sized_value(v)
            },
            9,
        ),
        Expr::Var(n) => (n.clone(), 9),
        Expr::Cmp(CmpOp::Eq, a, b)
            if matches!(&**a, Expr::Field(_, f) if f == VALID_FIELD)
                && matches!(&**b, Expr::Const(Value::Bits(x)) if x.width() == 1 && x.is_true()) =>
        {
            let Expr::Field(h, _) = &**a else {
                unreachable!()
            };
            (format!("{}.isValid()", expr(h, 7, false)), 7)
        }
        Expr::Field(a, f) => (format!("{}.{f}", expr(a, 7, false)), 7),
        Expr::Slice(a, hi, lo) => (format!("{}[{hi}:{lo}]", expr(a, 7, false)), 7),
        Expr::Unop(op, a) => {
            let inner_known = if *op == UnOp::LogNot {
                has_width(a)
            } else {
                known
            };
            (
                format!("{}{}", op.symbol(), expr(a, UNARY_PREC, inner_known)),
                UNARY_PREC,
            )
        }
        Expr::Binop(op, a, b) => {
            let k = bin_prec(*op);
            // the parser widens both operands to whichever side has a width
            let (ka, kb) = if has_width(a) || has_width(b) {
                (has_width(b), has_width(a))
            } else {
                (known, known)
            };
            (
                format!("{} {} {}", expr(a, k, ka), op.symbol(), expr(b, k + 1, kb)),
                k,
            )
        }
        Expr::Cmp(op, a, b) => {
            let (ka, kb) = (has_width(b), has_width(a));
            (
                format!(
                    "{} {} {}",
                    expr(a, CMP_PREC + 1, ka),
                    op.symbol(),
                    expr(b, CMP_PREC + 1, kb)
                ),
                CMP_PREC,
            )
        }
        Expr::Record(fs) => {
            let inner: Vec<String> = fs
                .iter()
                .map(|(n, fe)| format!("{n} = {}", expr(fe, 0, false)))
                .collect();
            (format!("{{{}}}", inner.join(", ")), 9)
        }
    };
    if prec < min {
        format!("({s})")
    } else {
        s
    }
}
