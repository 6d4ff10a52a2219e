//! Policy (`.pol`), contract (`.ctr`) and concrete state files.
//!
//! Types are written the way they print: `[lo,hi]^L_w` slices joined by `·`.
//! The label defaults to LOW and a lone slice may omit its width. A dotted
//! quad such as `192.168.*.*^L` stands for one 8-bit slice per octet, with
//! adjacent `*` octets merged.

use super::lexer::{lex, Cursor, Tok};
use super::program::{elaborate_expr, Parser};
use super::FrontendError;
use crate::abstract_domain::{BvType, Interval, Label, Slice, Ty};
use crate::interp::{ConcState, ExternOp};
use crate::lang_ast::{mask, Expr, LValue, Param, Program, Shape, Value};
use crate::policy::{
    ContractRow, Contracts, ExternContract, ExternTuple, PolicyCase, TableContract,
};
use crate::state_types::{uniform_ty, StateType};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CaseKind {
    Input,
    Output,
    /// `[case ...]`: used as whichever side the file is given for.
    Either,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct PolicyFile {
    pub cases: Vec<(CaseKind, PolicyCase)>,
}

impl PolicyFile {
    pub fn inputs(&self) -> Vec<PolicyCase> {
        self.of(CaseKind::Input)
    }

    pub fn outputs(&self) -> Vec<PolicyCase> {
        self.of(CaseKind::Output)
    }

    fn of(&self, kind: CaseKind) -> Vec<PolicyCase> {
        self.cases
            .iter()
            .filter(|(k, _)| *k == kind || *k == CaseKind::Either)
            .map(|(_, c)| c.clone())
            .collect()
    }
}

enum Bound {
    Value(u64),
    Star,
}

struct RawSlice {
    interval: Option<(Bound, Option<Bound>)>,
    label: Label,
    width: Option<u32>,
    line: usize,
}

struct FileParser {
    p: Parser,
}

fn sem(line: usize, m: impl Into<String>) -> FrontendError {
    FrontendError::semantic(line, m)
}

impl FileParser {
    fn new(text: &str) -> Result<FileParser, FrontendError> {
        Ok(FileParser {
            p: Parser::new(Cursor::new(lex(text)?)),
        })
    }

    fn c(&mut self) -> &mut Cursor {
        &mut self.p.c
    }

    fn line(&self) -> usize {
        self.p.c.here().0
    }

    fn label(&mut self) -> Label {
        if self.c().eat("^H") || self.c().eat("ᴴ") {
            Label::High
        } else {
            let _ = self.c().eat("^L") || self.c().eat("ᴸ");
            Label::Low
        }
    }

    /// `_w`, lexed either as `_` and a number or as the identifier `_w`.
    fn width_suffix(&mut self) -> Result<Option<u32>, FrontendError> {
        if self.c().eat("_") {
            return Ok(Some(self.c().small()?));
        }
        if let Tok::Ident(s) = self.c().peek().clone() {
            if let Some(w) = s.strip_prefix('_').and_then(|d| d.parse::<u32>().ok()) {
                self.c().next();
                return Ok(Some(w));
            }
        }
        Ok(None)
    }

    fn bound(&mut self) -> Result<Bound, FrontendError> {
        if self.c().eat("*") {
            return Ok(Bound::Star);
        }
        Ok(Bound::Value(self.c().number()?.1))
    }

    fn raw_slices(&mut self) -> Result<Vec<RawSlice>, FrontendError> {
        if matches!(self.c().peek(), Tok::Num { .. } | Tok::Punct("*"))
            && matches!(self.p.c.peek_at(1), Tok::Punct("."))
        {
            return self.quad();
        }
        let mut out = Vec::new();
        loop {
            let line = self.line();
            self.c().expect("[")?;
            let interval = if self.c().eat("]") {
                None
            } else {
                let lo = self.bound()?;
                let hi = if self.c().eat(",") {
                    Some(self.bound()?)
                } else {
                    None
                };
                self.c().expect("]")?;
                Some((lo, hi))
            };
            let label = self.label();
            let width = self.width_suffix()?;
            out.push(RawSlice {
                interval,
                label,
                width,
                line,
            });
            if !self.c().eat("·") {
                return Ok(out);
            }
        }
    }

    fn quad(&mut self) -> Result<Vec<RawSlice>, FrontendError> {
        let line = self.line();
        let mut octets = Vec::new();
        for i in 0..4 {
            if i > 0 {
                self.c().expect(".")?;
            }
            octets.push(match self.bound()? {
                Bound::Value(v) if v > 255 => {
                    return Err(sem(line, format!("octet {v} exceeds 255")))
                }
                b => b,
            });
        }
        let label = self.label();
        let mut out: Vec<RawSlice> = Vec::new();
        for o in octets {
            match (o, out.last_mut()) {
                (
                    Bound::Star,
                    Some(RawSlice {
                        interval: Some((Bound::Star, None)),
                        width: Some(w),
                        ..
                    }),
                ) => *w += 8,
                (o, _) => out.push(RawSlice {
                    interval: Some((o, None)),
                    label,
                    width: Some(8),
                    line,
                }),
            }
        }
        Ok(out)
    }

    /// A type for a location of the given shape (`None`: not known, so every
    /// slice needs an explicit width).
    fn ty(&mut self, shape: Option<&Shape>, what: &str) -> Result<Ty, FrontendError> {
        let line = self.line();
        let raw = self.raw_slices()?;
        match shape {
            Some(Shape::Record { .. }) => {
                let [RawSlice {
                    interval: Some((Bound::Star, None)),
                    label,
                    width: None,
                    ..
                }] = raw.as_slice()
                else {
                    return Err(sem(
                        line,
                        format!("`{what}` is a record; only `[*]` with a label applies to it"),
                    ));
                };
                Ok(uniform_ty(shape.expect("record"), *label))
            }
            _ => {
                let total = shape.and_then(Shape::width);
                let n = raw.len();
                let mut slices = Vec::with_capacity(n);
                for r in raw {
                    let width = match (r.width, total) {
                        (Some(w), _) => w,
                        (None, Some(t)) if n == 1 => t,
                        _ => {
                            return Err(sem(
                                r.line,
                                format!("slice of `{what}` needs an explicit width `_w`"),
                            ))
                        }
                    };
                    if width == 0 || width > 64 {
                        return Err(sem(r.line, format!("bad slice width {width}")));
                    }
                    let value = |b: &Bound| match b {
                        Bound::Star => Ok(mask(width)),
                        Bound::Value(v) if *v <= mask(width) => Ok(*v),
                        Bound::Value(v) => Err(sem(
                            r.line,
                            format!("bound {v} does not fit in {width} bits"),
                        )),
                    };
                    let interval = match &r.interval {
                        None => Interval::Empty,
                        Some((Bound::Star, None)) => Interval::full(width),
                        Some((lo, None)) => Interval::singleton(value(lo)?),
                        Some((lo, Some(hi))) => {
                            let lo = match lo {
                                Bound::Star => {
                                    return Err(sem(r.line, "lower bound cannot be `*`"))
                                }
                                b => value(b)?,
                            };
                            let hi = value(hi)?;
                            if lo > hi {
                                return Err(sem(
                                    r.line,
                                    format!("interval [{lo},{hi}] is reversed"),
                                ));
                            }
                            Interval::new(lo, hi)
                        }
                    };
                    slices.push(Slice::new(interval, r.label, width));
                }
                let t = BvType::new(slices).map_err(|e| sem(line, e.to_string()))?;
                if let Some(w) = total {
                    if t.width() != w {
                        return Err(sem(
                            line,
                            format!("slices of `{what}` cover {} bits, expected {w}", t.width()),
                        ));
                    }
                }
                Ok(Ty::Bv(t))
            }
        }
    }

    /// `[word name?]`.
    fn section(&mut self) -> Result<(String, Option<String>), FrontendError> {
        self.c().expect("[")?;
        let word = self.c().ident()?;
        let name = match self.c().peek() {
            Tok::Ident(_) => Some(self.c().ident()?),
            _ => None,
        };
        self.c().expect("]")?;
        Ok((word, name))
    }

    fn at_section(&self) -> bool {
        self.p.c.is("[") && matches!(self.p.c.peek_at(1), Tok::Ident(_))
    }

    fn skip_semis(&mut self) {
        while self.c().eat(";") {}
    }
}

fn place_shape(program: &Program, lv: &LValue, line: usize) -> Result<Shape, FrontendError> {
    program
        .global_place_shape(&lv.place())
        .ok_or_else(|| sem(line, format!("`{lv}` is not a global location")))
}

pub fn parse_policy(text: &str, program: &Program) -> Result<PolicyFile, FrontendError> {
    let base = StateType::uniform(program, Label::Low).map_err(|m| sem(1, m))?;
    let mut f = FileParser::new(text)?;
    let mut out = PolicyFile::default();
    while !f.c().at_eof() {
        let line = f.line();
        if !f.at_section() {
            return Err(f.p.c.error("a section such as `[input name]`"));
        }
        let (word, name) = f.section()?;
        let kind = match word.as_str() {
            "input" => CaseKind::Input,
            "output" => CaseKind::Output,
            "case" => CaseKind::Either,
            _ => return Err(sem(line, format!("unknown section `{word}`"))),
        };
        let name = name.unwrap_or_else(|| format!("{word}{}", out.cases.len() + 1));
        let mut gamma = base.clone();
        f.skip_semis();
        while !f.c().at_eof() && !f.at_section() {
            let line = f.line();
            let lv = f.p.lvalue()?;
            f.c().expect(":")?;
            let shape = place_shape(program, &lv, line)?;
            let t = f.ty(Some(&shape), &lv.to_string())?;
            gamma
                .update_in_place(&lv, &t)
                .map_err(|e| sem(line, e.to_string()))?;
            f.skip_semis();
        }
        if gamma.is_empty() {
            return Err(sem(line, format!("policy case `{name}` is empty")));
        }
        out.cases.push((kind, PolicyCase { name, gamma }));
    }
    if out.cases.is_empty() {
        return Err(sem(1, "no policy cases"));
    }
    Ok(out)
}

fn param_shapes(program: &Program, params: &[Param]) -> Vec<(String, Shape)> {
    params
        .iter()
        .filter_map(|p| Some((p.name.clone(), program.resolve(p.ty.as_ref()?).ok()?)))
        .collect()
}

/// Shape of a contract location: a parameter (when typed) or a global.
fn local_shape(
    program: &Program,
    params: &[Param],
    lv: &LValue,
    line: usize,
) -> Result<Option<Shape>, FrontendError> {
    let place = lv.place();
    let Some(p) = params.iter().find(|p| p.name == place.root) else {
        return place_shape(program, lv, line).map(Some);
    };
    let Some(ty) = &p.ty else { return Ok(None) };
    let mut shape = program.resolve(ty).map_err(|m| sem(line, m))?;
    for fld in &place.fields {
        shape = shape
            .field(fld)
            .cloned()
            .ok_or_else(|| sem(line, format!("`{lv}` has no field `{fld}`")))?;
    }
    Ok(Some(match place.range {
        None => shape,
        Some((hi, lo)) => match shape.width() {
            Some(w) if hi >= lo && hi < w => Shape::Bits(hi - lo + 1),
            _ => return Err(sem(line, format!("`{lv}` is out of range"))),
        },
    }))
}

fn constant_value(e: &Expr, line: usize) -> Result<Value, FrontendError> {
    match e {
        Expr::Const(v) => Ok(v.clone()),
        Expr::Record(fs) => Ok(Value::Record(
            fs.iter()
                .map(|(n, fe)| Ok((n.clone(), constant_value(fe, line)?)))
                .collect::<Result<_, FrontendError>>()?,
        )),
        _ => Err(sem(line, "expected a constant")),
    }
}

pub fn parse_contracts(text: &str, program: &Program) -> Result<Contracts, FrontendError> {
    let mut f = FileParser::new(text)?;
    let mut out = Contracts::default();
    while !f.c().at_eof() {
        let line = f.line();
        if !f.at_section() {
            return Err(f.p.c.error("a section such as `[table name]`"));
        }
        let (word, name) = f.section()?;
        let name = name.ok_or_else(|| sem(line, format!("`[{word}]` needs a name")))?;
        match word.as_str() {
            "table" => {
                if out.table(&name).is_some() {
                    return Err(sem(line, format!("second contract for table `{name}`")));
                }
                let c = table_section(&mut f, program, &name, line)?;
                out.tables.push(c);
            }
            "extern" => {
                if out.extern_contract(&name).is_some() {
                    return Err(sem(line, format!("second contract for extern `{name}`")));
                }
                let c = extern_section(&mut f, program, &name, line)?;
                out.externs.push(c);
            }
            _ => return Err(sem(line, format!("unknown section `{word}`"))),
        }
    }
    Ok(out)
}

fn table_section(
    f: &mut FileParser,
    program: &Program,
    name: &str,
    line: usize,
) -> Result<TableContract, FrontendError> {
    let decl = program
        .table(name)
        .ok_or_else(|| sem(line, format!("unknown table `{name}`")))?;
    let mut rows = Vec::new();
    f.skip_semis();
    while !f.c().at_eof() && !f.at_section() {
        let line = f.line();
        f.c().expect_word("row")?;
        let cond = f.p.expr()?;
        let cond =
            elaborate_expr(&cond, program, &[], Some(&Shape::Bits(1))).map_err(|m| sem(line, m))?;
        f.c().expect("->")?;
        let action = f.c().ident()?;
        let params = program
            .func(&action)
            .map(|a| a.params.clone())
            .unwrap_or_default();
        f.c().expect("(")?;
        let mut arg_types = Vec::new();
        if !f.c().eat(")") {
            loop {
                let i = arg_types.len();
                let shape = params
                    .get(i)
                    .and_then(|p| program.resolve(p.ty.as_ref()?).ok());
                let what = params
                    .get(i)
                    .map_or_else(|| format!("argument {}", i + 1), |p| p.name.clone());
                arg_types.push(f.ty(shape.as_ref(), &what)?);
                if f.c().eat(")") {
                    break;
                }
                f.c().expect(",")?;
            }
        }
        rows.push(ContractRow {
            cond,
            action,
            arg_types,
        });
        f.skip_semis();
    }
    Ok(TableContract {
        table: name.into(),
        keys: decl.keys.clone(),
        rows,
    })
}

fn extern_section(
    f: &mut FileParser,
    program: &Program,
    name: &str,
    line: usize,
) -> Result<ExternContract, FrontendError> {
    let decl = program
        .extern_decl(name)
        .ok_or_else(|| sem(line, format!("unknown extern `{name}`")))?;
    let scope = param_shapes(program, &decl.params);
    let mut tuples = Vec::new();
    f.skip_semis();
    while !f.c().at_eof() && !f.at_section() {
        f.c().expect_word("case")?;
        let mut t = ExternTuple {
            input: Vec::new(),
            cond: Expr::boolean(true),
            effect: Vec::new(),
            ops: None,
        };
        f.skip_semis();
        loop {
            let line = f.line();
            let side = if f.c().eat_word("in") {
                Some(true)
            } else if f.c().eat_word("out") {
                Some(false)
            } else {
                None
            };
            if let Some(is_in) = side {
                let lv = f.p.lvalue()?;
                f.c().expect(":")?;
                let shape = local_shape(program, &decl.params, &lv, line)?;
                let ty = f.ty(shape.as_ref(), &lv.to_string())?;
                if is_in {
                    t.input.push((lv, ty));
                } else {
                    t.effect.push((lv, ty));
                }
            } else if f.c().eat_word("when") {
                let e = f.p.expr()?;
                t.cond = elaborate_expr(&e, program, &scope, Some(&Shape::Bits(1)))
                    .map_err(|m| sem(line, m))?;
            } else if f.c().eat_word("impl") {
                let op = impl_op(f, program, &decl.params, &t, line)?;
                t.ops.get_or_insert_with(Vec::new).push(op);
            } else {
                break;
            }
            f.skip_semis();
        }
        tuples.push(t);
    }
    Ok(ExternContract {
        name: name.into(),
        tuples,
    })
}

fn impl_op(
    f: &mut FileParser,
    program: &Program,
    params: &[Param],
    t: &ExternTuple,
    line: usize,
) -> Result<ExternOp, FrontendError> {
    if f.c().eat_word("extract") {
        return Ok(ExternOp::Extract(f.p.lvalue()?));
    }
    if f.c().eat_word("copy") {
        let dst = f.p.lvalue()?;
        f.c().expect("=")?;
        return Ok(ExternOp::Copy(dst, f.p.lvalue()?));
    }
    f.c().expect_word("set")?;
    let lv = f.p.lvalue()?;
    f.c().expect("=")?;
    let e = f.p.expr()?;
    let shape = match local_shape(program, params, &lv, line)? {
        Some(s) => Some(s),
        None => t
            .effect
            .iter()
            .find(|(x, _)| *x == lv)
            .and_then(|(_, ty)| ty.as_bv().ok().map(|b| Shape::Bits(b.width()))),
    };
    let e = elaborate_expr(&e, program, &[], shape.as_ref()).map_err(|m| sem(line, m))?;
    Ok(ExternOp::Set(lv, constant_value(&e, line)?))
}

/// `lval = value` lines over the globals; everything else is zero.
pub fn parse_state(text: &str, program: &Program) -> Result<ConcState, FrontendError> {
    let mut m = ConcState::zero(program).map_err(|e| sem(1, e.to_string()))?;
    let mut f = FileParser::new(text)?;
    f.skip_semis();
    while !f.c().at_eof() {
        let line = f.line();
        let lv = f.p.lvalue()?;
        f.c().expect("=")?;
        let shape = place_shape(program, &lv, line)?;
        let e = f.p.expr()?;
        let e = elaborate_expr(&e, program, &[], Some(&shape)).map_err(|m| sem(line, m))?;
        let v = constant_value(&e, line)?;
        m.set(&lv, v).map_err(|e| sem(line, e.to_string()))?;
        f.skip_semis();
    }
    Ok(m)
}
