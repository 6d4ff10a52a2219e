//! Security types over sliced bitvectors.
//!
//! A bitvector type is a list of slices, most significant first. Each slice
//! carries an unsigned interval, a label and a width. Record types nest them.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::lang_ast::{mask, BinOp, CmpOp, UnOp, Value, MAX_WIDTH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Low,
    High,
}

impl Label {
    pub fn lub(self, other: Label) -> Label {
        self.max(other)
    }

    pub fn glb(self, other: Label) -> Label {
        self.min(other)
    }

    pub fn leq(self, other: Label) -> bool {
        self <= other
    }

    pub fn symbol(self) -> char {
        match self {
            Label::Low => 'L',
            Label::High => 'H',
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

/// A contiguous range of unsigned values, or nothing.
///
/// "Full" is not a separate case: it is the range `[0, 2^w - 1]` for the
/// width of the slice the interval belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Interval {
    Empty,
    Range(u64, u64),
}

impl Interval {
    pub fn new(lo: u64, hi: u64) -> Interval {
        if lo > hi {
            Interval::Empty
        } else {
            Interval::Range(lo, hi)
        }
    }

    pub fn singleton(v: u64) -> Interval {
        Interval::Range(v, v)
    }

    pub fn full(width: u32) -> Interval {
        Interval::Range(0, mask(width))
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Interval::Empty)
    }

    pub fn bounds(&self) -> Option<(u64, u64)> {
        match self {
            Interval::Empty => None,
            Interval::Range(lo, hi) => Some((*lo, *hi)),
        }
    }

    pub fn contains(&self, v: u64) -> bool {
        self.bounds().is_some_and(|(lo, hi)| lo <= v && v <= hi)
    }

    pub fn is_full(&self, width: u32) -> bool {
        *self == Interval::full(width)
    }

    pub fn as_singleton(&self) -> Option<u64> {
        match self {
            Interval::Range(lo, hi) if lo == hi => Some(*lo),
            _ => None,
        }
    }

    pub fn intersect(&self, other: &Interval) -> Interval {
        match (self.bounds(), other.bounds()) {
            (Some((a, b)), Some((c, d))) => Interval::new(a.max(c), b.min(d)),
            _ => Interval::Empty,
        }
    }

    /// Smallest interval containing both.
    pub fn hull(&self, other: &Interval) -> Interval {
        match (self.bounds(), other.bounds()) {
            (Some((a, b)), Some((c, d))) => Interval::Range(a.min(c), b.max(d)),
            (Some(_), None) => *self,
            (None, _) => *other,
        }
    }

    pub fn subset_of(&self, other: &Interval) -> bool {
        match (self.bounds(), other.bounds()) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some((a, b)), Some((c, d))) => c <= a && b <= d,
        }
    }

    pub fn count(&self) -> u128 {
        self.bounds().map_or(0, |(lo, hi)| (hi - lo) as u128 + 1)
    }

    /// `[]`, `[*]`, `[v]` or `[lo,hi]`.
    pub fn render(&self, width: u32) -> String {
        match self.bounds() {
            None => "[]".into(),
            Some(_) if self.is_full(width) => "[*]".into(),
            Some((lo, hi)) if lo == hi => format!("[{lo}]"),
            Some((lo, hi)) => format!("[{lo},{hi}]"),
        }
    }

    /// Exact min and max of `(v >> shift) mod 2^bits` over the interval.
    fn project(&self, shift: u32, bits: u32) -> Interval {
        let Some((lo, hi)) = self.bounds() else {
            return Interval::Empty;
        };
        let (a, b) = (shr(lo, shift), shr(hi, shift));
        if shr(a, bits) != shr(b, bits) {
            Interval::full(bits)
        } else {
            Interval::Range(a & mask(bits), b & mask(bits))
        }
    }
}

fn shr(v: u64, by: u32) -> u64 {
    if by >= 64 {
        0
    } else {
        v >> by
    }
}

fn shl(v: u64, by: u32) -> u64 {
    if by >= 64 {
        0
    } else {
        v << by
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("arithmetic on marshaled value: `{op}` needs single-slice operands")]
    MarshaledArithmetic { op: &'static str },
    #[error("width mismatch: {left} vs {right}")]
    WidthMismatch { left: u32, right: u32 },
    #[error("slice [{hi}:{lo}] out of range for width {width}")]
    SliceOutOfRange { hi: u32, lo: u32, width: u32 },
    #[error("malformed type: {0}")]
    Malformed(String),
    #[error("record type used where a bitvector type is expected")]
    NotABitvector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Slice {
    pub interval: Interval,
    pub label: Label,
    pub width: u32,
}

impl Slice {
    pub fn new(interval: Interval, label: Label, width: u32) -> Slice {
        Slice {
            interval,
            label,
            width,
        }
    }

    pub fn render(&self) -> String {
        format!(
            "{}^{}_{}",
            self.interval.render(self.width),
            self.label,
            self.width
        )
    }
}

/// Type of one bitvector: slices ordered most significant first.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BvType {
    slices: Vec<Slice>,
}

impl BvType {
    pub fn new(slices: Vec<Slice>) -> Result<BvType, DomainError> {
        if slices.is_empty() {
            return Err(DomainError::Malformed("no slices".into()));
        }
        let total: u32 = slices.iter().map(|s| s.width).sum();
        if total > MAX_WIDTH {
            return Err(DomainError::Malformed(format!(
                "total width {total} exceeds {MAX_WIDTH}"
            )));
        }
        for s in &slices {
            if s.width == 0 {
                return Err(DomainError::Malformed("zero-width slice".into()));
            }
            if let Some((_, hi)) = s.interval.bounds() {
                if hi > mask(s.width) {
                    return Err(DomainError::Malformed(format!(
                        "bound {hi} does not fit in {} bits",
                        s.width
                    )));
                }
            }
        }
        Ok(BvType { slices })
    }

    pub fn single(interval: Interval, label: Label, width: u32) -> BvType {
        BvType::new(vec![Slice::new(interval, label, width)]).expect("valid single slice")
    }

    pub fn full(width: u32, label: Label) -> BvType {
        BvType::single(Interval::full(width), label, width)
    }

    pub fn constant(width: u32, value: u64, label: Label) -> BvType {
        BvType::single(Interval::singleton(value), label, width)
    }

    pub fn slices(&self) -> &[Slice] {
        &self.slices
    }

    pub fn width(&self) -> u32 {
        self.slices.iter().map(|s| s.width).sum()
    }

    /// `(hi, lo)` bit positions of each slice, in slice order.
    pub fn spans(&self) -> Vec<(u32, u32)> {
        let mut top = self.width();
        self.slices
            .iter()
            .map(|s| {
                let span = (top - 1, top - s.width);
                top -= s.width;
                span
            })
            .collect()
    }

    /// Least upper bound of all slice labels.
    pub fn lbl(&self) -> Label {
        self.slices.iter().fold(Label::Low, |l, s| l.lub(s.label))
    }

    pub fn raise(&self, l: Label) -> BvType {
        BvType {
            slices: self
                .slices
                .iter()
                .map(|s| Slice {
                    label: s.label.lub(l),
                    ..*s
                })
                .collect(),
        }
    }

    /// Bit `i` set iff bit `i` is labelled HIGH.
    pub fn high_mask(&self) -> u64 {
        self.spans()
            .iter()
            .zip(&self.slices)
            .filter(|(_, s)| s.label == Label::High)
            .fold(0, |m, ((_, lo), s)| m | shl(mask(s.width), *lo))
    }

    pub fn is_empty(&self) -> bool {
        self.slices.iter().any(|s| s.interval.is_empty())
    }

    pub fn as_single(&self) -> Option<&Slice> {
        match self.slices.as_slice() {
            [s] => Some(s),
            _ => None,
        }
    }

    pub fn value_has_type(&self, v: u64) -> bool {
        self.spans()
            .iter()
            .zip(&self.slices)
            .all(|((_, lo), s)| s.interval.contains(shr(v, *lo) & mask(s.width)))
    }

    /// Positions where a new slice starts (the `lo` of each slice but the last).
    pub fn cuts(&self) -> BTreeSet<u32> {
        self.spans()
            .iter()
            .map(|(_, lo)| *lo)
            .filter(|lo| *lo > 0)
            .collect()
    }

    /// Re-expresses the type with a slice boundary at every position in
    /// `cuts`. Each piece keeps its slice's label and gets the exact hull of
    /// the bits it covers.
    pub fn resliced(&self, cuts: &BTreeSet<u32>) -> BvType {
        let mut out = Vec::new();
        for ((hi, lo), s) in self.spans().into_iter().zip(&self.slices) {
            let mut top = hi + 1;
            let inner: Vec<u32> = cuts
                .iter()
                .rev()
                .copied()
                .filter(|c| *c > lo && *c <= hi)
                .collect();
            for c in inner.into_iter().chain(std::iter::once(lo)) {
                let bits = top - c;
                out.push(Slice::new(s.interval.project(c - lo, bits), s.label, bits));
                top = c;
            }
        }
        BvType { slices: out }
    }

    fn check_range(&self, hi: u32, lo: u32) -> Result<(), DomainError> {
        if lo > hi || hi >= self.width() {
            return Err(DomainError::SliceOutOfRange {
                hi,
                lo,
                width: self.width(),
            });
        }
        Ok(())
    }

    /// Index range of slices exactly covering `[hi:lo]`, if aligned.
    fn aligned(&self, hi: u32, lo: u32) -> Option<(usize, usize)> {
        let spans = self.spans();
        let start = spans.iter().position(|(h, _)| *h == hi)?;
        let end = spans.iter().position(|(_, l)| *l == lo)?;
        (start <= end).then_some((start, end + 1))
    }

    /// Type of the sub-bitvector `[hi:lo]`. Aligned ranges return their
    /// slices; otherwise a single full slice with the lub of the labels of
    /// every overlapped slice.
    pub fn project(&self, hi: u32, lo: u32) -> Result<BvType, DomainError> {
        self.check_range(hi, lo)?;
        if let Some((i, j)) = self.aligned(hi, lo) {
            return Ok(BvType {
                slices: self.slices[i..j].to_vec(),
            });
        }
        let label = self
            .spans()
            .iter()
            .zip(&self.slices)
            .filter(|((h, l), _)| *l <= hi && *h >= lo)
            .fold(Label::Low, |acc, (_, s)| acc.lub(s.label));
        Ok(BvType::full(hi - lo + 1, label))
    }

    /// Same as `project` after cutting at `hi + 1` and `lo` first, so the
    /// result is always the exact hull of each overlapped piece.
    pub fn project_resliced(&self, hi: u32, lo: u32) -> Result<BvType, DomainError> {
        self.check_range(hi, lo)?;
        let r = self.resliced(&[lo, hi + 1].into_iter().collect());
        r.project(hi, lo)
    }

    /// Overwrites bits `[hi:lo]` with `part`, re-slicing the surrounding
    /// slices where they are cut.
    pub fn replace(&self, hi: u32, lo: u32, part: &BvType) -> Result<BvType, DomainError> {
        self.check_range(hi, lo)?;
        if part.width() != hi - lo + 1 {
            return Err(DomainError::WidthMismatch {
                left: hi - lo + 1,
                right: part.width(),
            });
        }
        let r = self.resliced(&[lo, hi + 1].into_iter().collect());
        let (i, j) = r.aligned(hi, lo).expect("resliced range is aligned");
        let mut slices = r.slices[..i].to_vec();
        slices.extend_from_slice(&part.slices);
        slices.extend_from_slice(&r.slices[j..]);
        Ok(BvType { slices })
    }

    /// Applies `f` to the intervals of the slices covering `[hi:lo]` after
    /// re-slicing there.
    pub fn map_range(
        &self,
        hi: u32,
        lo: u32,
        f: impl FnOnce(&[Slice]) -> Vec<Slice>,
    ) -> Result<BvType, DomainError> {
        self.check_range(hi, lo)?;
        let r = self.resliced(&[lo, hi + 1].into_iter().collect());
        let (i, j) = r.aligned(hi, lo).expect("resliced range is aligned");
        let mut slices = r.slices[..i].to_vec();
        slices.extend(f(&r.slices[i..j]));
        slices.extend_from_slice(&r.slices[j..]);
        BvType::new(slices)
    }

    /// Keeps this type's slicing and intervals; each slice label is raised
    /// by every HIGH bit of `other` it overlaps.
    pub fn join_labels(&self, other: &BvType) -> BvType {
        let high = other.high_mask();
        let slices = self
            .spans()
            .iter()
            .zip(&self.slices)
            .map(|((_, lo), s)| {
                let hit = high & shl(mask(s.width), *lo) != 0;
                Slice {
                    label: if hit { Label::High } else { s.label },
                    ..*s
                }
            })
            .collect();
        BvType { slices }
    }

    /// Both types cut at the union of their boundaries.
    pub fn common(&self, other: &BvType) -> (BvType, BvType) {
        let cuts: BTreeSet<u32> = self.cuts().union(&other.cuts()).copied().collect();
        (self.resliced(&cuts), other.resliced(&cuts))
    }

    /// Bitwise label lub and interval hull over the common slicing.
    pub fn lub(&self, other: &BvType) -> BvType {
        let (a, b) = self.common(other);
        let slices = a
            .slices
            .iter()
            .zip(&b.slices)
            .map(|(x, y)| Slice::new(x.interval.hull(&y.interval), x.label.lub(y.label), x.width))
            .collect();
        BvType { slices }
    }

    /// Whether some value could be typed by both (after common slicing).
    pub fn meets(&self, other: &BvType) -> bool {
        let (a, b) = self.common(other);
        a.slices
            .iter()
            .zip(&b.slices)
            .all(|(x, y)| !x.interval.intersect(&y.interval).is_empty())
    }

    /// Min and max of the values typed by this type restricted to `[hi:lo]`.
    fn projected_hull(&self, hi: u32, lo: u32) -> Interval {
        let mut min = 0u64;
        let mut max = 0u64;
        for ((sh, sl), s) in self.spans().into_iter().zip(&self.slices) {
            if sl > hi || sh < lo {
                continue;
            }
            let (top, bot) = (sh.min(hi), sl.max(lo));
            let bits = top - bot + 1;
            let Some((a, b)) = s.interval.project(bot - sl, bits).bounds() else {
                return Interval::Empty;
            };
            min |= shl(a, bot - lo);
            max |= shl(b, bot - lo);
        }
        Interval::Range(min, max)
    }

    pub fn render(&self) -> String {
        self.slices
            .iter()
            .map(Slice::render)
            .collect::<Vec<_>>()
            .join(" · ")
    }
}

impl fmt::Display for BvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// `τ ≤ τ'`: every value of `τ` is a value of `τ'`, and `lbl(τ) ⊑ lbl(τ')`.
pub fn type_leq(t: &BvType, u: &BvType) -> Result<bool, DomainError> {
    if t.width() != u.width() {
        return Err(DomainError::WidthMismatch {
            left: t.width(),
            right: u.width(),
        });
    }
    if !t.lbl().leq(u.lbl()) {
        return Ok(false);
    }
    if t.is_empty() {
        return Ok(true);
    }
    // t's value set is a product over its slices, so it lies inside u's
    // product iff each of u's slices contains the projection's min and max.
    Ok(u.spans()
        .iter()
        .zip(&u.slices)
        .all(|((hi, lo), s)| t.projected_hull(*hi, *lo).subset_of(&s.interval)))
}

/// Security type of a value: a bitvector type or a record of types.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Ty {
    Bv(BvType),
    Rec(Vec<(String, Ty)>),
}

impl Ty {
    pub fn as_bv(&self) -> Result<&BvType, DomainError> {
        match self {
            Ty::Bv(b) => Ok(b),
            Ty::Rec(_) => Err(DomainError::NotABitvector),
        }
    }

    pub fn field(&self, name: &str) -> Option<&Ty> {
        match self {
            Ty::Rec(fs) => fs.iter().find(|(n, _)| n == name).map(|(_, t)| t),
            Ty::Bv(_) => None,
        }
    }

    pub fn field_mut(&mut self, name: &str) -> Option<&mut Ty> {
        match self {
            Ty::Rec(fs) => fs.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t),
            Ty::Bv(_) => None,
        }
    }

    pub fn lbl(&self) -> Label {
        match self {
            Ty::Bv(b) => b.lbl(),
            Ty::Rec(fs) => fs.iter().fold(Label::Low, |l, (_, t)| l.lub(t.lbl())),
        }
    }

    pub fn raise(&self, l: Label) -> Ty {
        match self {
            Ty::Bv(b) => Ty::Bv(b.raise(l)),
            Ty::Rec(fs) => Ty::Rec(fs.iter().map(|(n, t)| (n.clone(), t.raise(l))).collect()),
        }
    }

    pub fn is_empty(&self) -> bool {
        match self {
            Ty::Bv(b) => b.is_empty(),
            Ty::Rec(fs) => fs.iter().any(|(_, t)| t.is_empty()),
        }
    }

    /// Leaf types with dotted paths.
    pub fn leaves<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a BvType)>) {
        match self {
            Ty::Bv(b) => out.push((prefix.to_string(), b)),
            Ty::Rec(fs) => {
                for (n, t) in fs {
                    t.leaves(&format!("{prefix}.{n}"), out);
                }
            }
        }
    }

    /// Applies `f` leafwise to two types of equal shape.
    pub fn zip_with(
        &self,
        other: &Ty,
        f: &mut impl FnMut(&BvType, &BvType) -> BvType,
    ) -> Result<Ty, DomainError> {
        match (self, other) {
            (Ty::Bv(a), Ty::Bv(b)) => {
                if a.width() != b.width() {
                    return Err(DomainError::WidthMismatch {
                        left: a.width(),
                        right: b.width(),
                    });
                }
                Ok(Ty::Bv(f(a, b)))
            }
            (Ty::Rec(fa), Ty::Rec(fb)) if fa.len() == fb.len() => {
                let mut out = Vec::with_capacity(fa.len());
                for ((na, ta), (nb, tb)) in fa.iter().zip(fb) {
                    if na != nb {
                        return Err(DomainError::Malformed(format!("field `{na}` vs `{nb}`")));
                    }
                    out.push((na.clone(), ta.zip_with(tb, f)?));
                }
                Ok(Ty::Rec(out))
            }
            _ => Err(DomainError::Malformed(
                "record and bitvector types mixed".into(),
            )),
        }
    }

    /// Labels ignored.
    pub fn value_has_type(&self, v: &Value) -> Result<bool, DomainError> {
        match (self, v) {
            (Ty::Bv(t), Value::Bits(b)) => {
                if t.width() != b.width() {
                    return Err(DomainError::WidthMismatch {
                        left: t.width(),
                        right: b.width(),
                    });
                }
                Ok(t.value_has_type(b.value()))
            }
            (Ty::Rec(fs), Value::Record(vs)) if fs.len() == vs.len() => {
                for ((n, t), (m, fv)) in fs.iter().zip(vs) {
                    if n != m {
                        return Err(DomainError::Malformed(format!("field `{n}` vs `{m}`")));
                    }
                    if !t.value_has_type(fv)? {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            _ => Err(DomainError::Malformed(
                "value shape differs from type".into(),
            )),
        }
    }

    /// The exact type of a constant: singleton slices, LOW.
    pub fn of_value(v: &Value) -> Ty {
        match v {
            Value::Bits(b) => Ty::Bv(BvType::constant(b.width(), b.value(), Label::Low)),
            Value::Record(fs) => Ty::Rec(
                fs.iter()
                    .map(|(n, v)| (n.clone(), Ty::of_value(v)))
                    .collect(),
            ),
        }
    }
}

pub fn interval_binop(op: BinOp, a: Interval, b: Interval, width: u32) -> Interval {
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.bounds(), b.bounds()) else {
        return Interval::Empty;
    };
    match op {
        BinOp::Add => {
            let hi = ahi as u128 + bhi as u128;
            if hi > mask(width) as u128 {
                Interval::full(width)
            } else {
                Interval::Range(alo + blo, hi as u64)
            }
        }
        BinOp::Sub => {
            if alo >= bhi {
                Interval::Range(alo - bhi, ahi - blo)
            } else {
                Interval::full(width)
            }
        }
        BinOp::And | BinOp::Or | BinOp::Xor => match (a.as_singleton(), b.as_singleton()) {
            (Some(x), Some(y)) => Interval::singleton(op.apply(width, x, y)),
            _ => Interval::full(width),
        },
    }
}

/// Result interval of a comparison (one bit wide).
pub fn interval_cmp(op: CmpOp, a: Interval, b: Interval) -> Interval {
    let (Some((alo, ahi)), Some((blo, bhi))) = (a.bounds(), b.bounds()) else {
        return Interval::Empty;
    };
    let always = match op {
        CmpOp::Eq => alo == ahi && blo == bhi && alo == blo,
        CmpOp::Ne => ahi < blo || bhi < alo,
        CmpOp::Lt => ahi < blo,
        CmpOp::Le => ahi <= blo,
        CmpOp::Gt => alo > bhi,
        CmpOp::Ge => alo >= bhi,
    };
    let never = match op {
        CmpOp::Eq => ahi < blo || bhi < alo,
        CmpOp::Ne => alo == ahi && blo == bhi && alo == blo,
        CmpOp::Lt => alo >= bhi,
        CmpOp::Le => alo > bhi,
        CmpOp::Gt => ahi <= blo,
        CmpOp::Ge => ahi < blo,
    };
    match (always, never) {
        (true, _) => Interval::singleton(1),
        (_, true) => Interval::singleton(0),
        _ => Interval::Range(0, 1),
    }
}

/// Result interval and width of a unary operation.
pub fn interval_unop(op: UnOp, a: Interval, width: u32) -> (Interval, u32) {
    let Some((lo, hi)) = a.bounds() else {
        return (Interval::Empty, if op == UnOp::LogNot { 1 } else { width });
    };
    match op {
        UnOp::Neg | UnOp::BitNot => match a.as_singleton() {
            Some(v) => (Interval::singleton(op.apply(width, v).1), width),
            None => (Interval::full(width), width),
        },
        UnOp::LogNot => {
            let r = if lo == 0 && hi == 0 {
                Interval::singleton(1)
            } else if lo > 0 {
                Interval::singleton(0)
            } else {
                Interval::Range(0, 1)
            };
            (r, 1)
        }
    }
}

fn single_operand<'a>(t: &'a BvType, op: &'static str) -> Result<&'a Slice, DomainError> {
    t.as_single().ok_or(DomainError::MarshaledArithmetic { op })
}

fn same_width(a: &Slice, b: &Slice) -> Result<(), DomainError> {
    if a.width != b.width {
        return Err(DomainError::WidthMismatch {
            left: a.width,
            right: b.width,
        });
    }
    Ok(())
}

pub fn type_binop(op: BinOp, a: &BvType, b: &BvType) -> Result<BvType, DomainError> {
    let (x, y) = (
        single_operand(a, op.symbol())?,
        single_operand(b, op.symbol())?,
    );
    same_width(x, y)?;
    Ok(BvType::single(
        interval_binop(op, x.interval, y.interval, x.width),
        x.label.lub(y.label),
        x.width,
    ))
}

pub fn type_cmp(op: CmpOp, a: &BvType, b: &BvType) -> Result<BvType, DomainError> {
    let (x, y) = (
        single_operand(a, op.symbol())?,
        single_operand(b, op.symbol())?,
    );
    same_width(x, y)?;
    Ok(BvType::single(
        interval_cmp(op, x.interval, y.interval),
        x.label.lub(y.label),
        1,
    ))
}

pub fn type_unop(op: UnOp, a: &BvType) -> Result<BvType, DomainError> {
    let x = single_operand(a, op.symbol())?;
    let (i, w) = interval_unop(op, x.interval, x.width);
    Ok(BvType::single(i, x.label, w))
}

/// Type of `e[hi:lo]` given the type of `e`.
pub fn type_slice(t: &BvType, hi: u32, lo: u32) -> Result<BvType, DomainError> {
    t.project(hi, lo)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{arb_bv, arb_interval, arb_label};
    use proptest::prelude::*;
    use Label::{High as H, Low as L};

    fn sl(lo: u64, hi: u64, l: Label, w: u32) -> Slice {
        Slice::new(Interval::new(lo, hi), l, w)
    }

    fn full(l: Label, w: u32) -> Slice {
        Slice::new(Interval::full(w), l, w)
    }

    fn bv(s: Vec<Slice>) -> BvType {
        BvType::new(s).unwrap()
    }

    /// Every value of width `w` typed by `t`.
    fn members(t: &BvType) -> Vec<u64> {
        (0..=mask(t.width()))
            .filter(|v| t.value_has_type(*v))
            .collect()
    }

    #[test]
    fn lbl_examples() {
        assert_eq!(bv(vec![full(H, 2), sl(0, 1, L, 3)]).lbl(), H);
        assert_eq!(bv(vec![full(L, 2), sl(0, 1, L, 3)]).lbl(), L);
        assert_eq!(BvType::constant(19, 5, H).lbl(), H);
    }

    #[test]
    fn raise_examples() {
        let t = BvType::single(Interval::new(0, 9), L, 8);
        assert_eq!(t.raise(H), BvType::single(Interval::new(0, 9), H, 8));
        assert_eq!(t.raise(L), t);
        assert_eq!(
            BvType::constant(9, 0, L).raise(H),
            BvType::constant(9, 0, H)
        );
    }

    #[test]
    fn value_has_type_examples() {
        assert!(BvType::constant(3, 4, L).value_has_type(0b100));
        assert!(bv(vec![sl(2, 2, L, 2), full(L, 1)]).value_has_type(0b100));
        assert!(BvType::single(Interval::new(100, 300), L, 9).value_has_type(257));
        assert!(!bv(vec![Slice::new(Interval::Empty, L, 2), full(L, 1)]).value_has_type(0));
    }

    #[test]
    fn interval_binop_examples() {
        assert_eq!(
            interval_binop(BinOp::Sub, Interval::new(1, 10), Interval::singleton(1), 8),
            Interval::new(0, 9)
        );
        assert_eq!(
            interval_binop(BinOp::Add, Interval::new(6, 7), Interval::singleton(3), 3),
            Interval::full(3)
        );
        assert_eq!(
            interval_cmp(CmpOp::Lt, Interval::new(0, 4), Interval::singleton(10)),
            Interval::singleton(1)
        );
    }

    #[test]
    fn wraparound_image_is_not_contiguous_in_general() {
        // brute force: [6,7] + [3] at width 3 is {1, 2}; the stated rule widens.
        let image: BTreeSet<u64> = (6..=7).map(|a| BinOp::Add.apply(3, a, 3)).collect();
        assert_eq!(image, BTreeSet::from([1, 2]));
    }

    #[test]
    fn type_binop_examples() {
        let r = type_binop(
            BinOp::Sub,
            &BvType::single(Interval::new(1, 10), L, 8),
            &BvType::constant(8, 1, L),
        );
        assert_eq!(r.unwrap(), BvType::single(Interval::new(0, 9), L, 8));
        let r = type_cmp(
            CmpOp::Ge,
            &BvType::full(19, H),
            &BvType::constant(19, 10, L),
        )
        .unwrap();
        assert_eq!(r, BvType::single(Interval::new(0, 1), H, 1));
        let err = type_binop(BinOp::Add, &BvType::full(4, L), &BvType::full(3, L));
        assert_eq!(err, Err(DomainError::WidthMismatch { left: 4, right: 3 }));
        let split = bv(vec![full(L, 1), full(L, 3)]);
        assert!(matches!(
            type_binop(BinOp::Add, &split, &BvType::full(4, L)),
            Err(DomainError::MarshaledArithmetic { .. })
        ));
    }

    #[test]
    fn type_slice_examples() {
        let t = bv(vec![sl(0, 0, H, 1), full(L, 3)]);
        assert_eq!(type_slice(&t, 3, 3).unwrap(), BvType::constant(1, 0, H));
        let u = BvType::single(Interval::new(2, 8), L, 4);
        assert_eq!(type_slice(&u, 2, 0).unwrap(), BvType::full(3, L));
        assert_eq!(type_slice(&t, 3, 1).unwrap(), BvType::full(3, H));
        assert!(type_slice(&t, 4, 0).is_err());
    }

    #[test]
    fn type_slice_three_one_is_sound_by_enumeration() {
        let t = bv(vec![sl(0, 0, H, 1), full(L, 3)]);
        let r = type_slice(&t, 3, 1).unwrap();
        for v in members(&t) {
            assert!(r.value_has_type((v >> 1) & 0b111));
        }
    }

    #[test]
    fn type_leq_examples() {
        let a = BvType::single(Interval::new(2, 8), L, 4);
        assert!(type_leq(&a, &BvType::full(4, L)).unwrap());
        assert!(!type_leq(&a.raise(H), &a).unwrap());
        let split = bv(vec![sl(0, 0, L, 1), full(L, 3)]);
        assert!(type_leq(&split, &BvType::single(Interval::new(0, 8), L, 4)).unwrap());
        assert_eq!(members(&split).into_iter().max(), Some(7));
    }

    #[test]
    fn reslice_splits_exactly_like_the_update_example() {
        let t = BvType::single(Interval::new(2, 8), L, 4);
        let r = t.resliced(&BTreeSet::from([3]));
        assert_eq!(r, bv(vec![sl(0, 1, L, 1), full(L, 3)]));
        let same_prefix = BvType::single(Interval::new(9, 11), L, 4).resliced(&BTreeSet::from([2]));
        assert_eq!(same_prefix, bv(vec![sl(2, 2, L, 2), sl(1, 3, L, 2)]));
    }

    #[test]
    fn join_labels_keeps_left_intervals() {
        let a = BvType::single(Interval::new(2, 8), L, 4);
        let b = bv(vec![full(H, 1), full(L, 3)]);
        assert_eq!(a.join_labels(&b), BvType::single(Interval::new(2, 8), H, 4));
    }

    #[test]
    fn lub_is_bitwise() {
        let a = BvType::full(4, L);
        let b = bv(vec![full(H, 1), full(L, 3)]);
        let r = a.lub(&b);
        assert_eq!(r.high_mask(), 0b1000);
        assert_eq!(r, bv(vec![full(H, 1), full(L, 3)]));
    }

    #[test]
    fn rendering() {
        let t = bv(vec![sl(0, 0, H, 1), full(L, 3)]);
        assert_eq!(t.render(), "[0]^H_1 · [*]^L_3");
        assert_eq!(
            BvType::single(Interval::new(2, 8), L, 4).render(),
            "[2,8]^L_4"
        );
        assert_eq!(BvType::single(Interval::Empty, H, 19).render(), "[]^H_19");
    }

    #[test]
    fn width_64_edges() {
        let t = BvType::full(64, L);
        assert!(t.value_has_type(u64::MAX));
        assert_eq!(
            interval_binop(BinOp::Add, Interval::full(64), Interval::singleton(1), 64),
            Interval::full(64)
        );
        assert_eq!(t.resliced(&BTreeSet::from([32])).slices().len(), 2);
        assert_eq!(t.high_mask(), 0);
        assert_eq!(t.raise(H).high_mask(), u64::MAX);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]

        #[test]
        fn lub_laws(a in arb_label(), b in arb_label(), c in arb_label()) {
            prop_assert_eq!(a.lub(a), a);
            prop_assert_eq!(a.lub(b), b.lub(a));
            prop_assert_eq!(a.lub(b).lub(c), a.lub(b.lub(c)));
            prop_assert!(a.leq(a.lub(b)));
        }

        #[test]
        fn slice_is_sound(t in (1u32..=6).prop_flat_map(arb_bv), seed in any::<u64>()) {
            let w = t.width();
            let hi = (seed % w as u64) as u32;
            let lo = ((seed >> 8) % (hi as u64 + 1)) as u32;
            let r = type_slice(&t, hi, lo).unwrap();
            let rr = t.project_resliced(hi, lo).unwrap();
            for v in members(&t) {
                let part = (v >> lo) & mask(hi - lo + 1);
                prop_assert!(r.value_has_type(part));
                prop_assert!(rr.value_has_type(part));
            }
        }

        #[test]
        fn reslice_overapproximates(t in (1u32..=6).prop_flat_map(arb_bv), cut in 1u32..6) {
            let r = t.resliced(&BTreeSet::from([cut]));
            prop_assert_eq!(r.width(), t.width());
            prop_assert_eq!(r.high_mask(), t.high_mask());
            for v in members(&t) {
                prop_assert!(r.value_has_type(v));
            }
        }

        #[test]
        fn raise_keeps_membership(t in (1u32..=6).prop_flat_map(arb_bv), l in arb_label()) {
            let r = t.raise(l);
            for v in 0..=mask(t.width()) {
                prop_assert_eq!(t.value_has_type(v), r.value_has_type(v));
            }
            prop_assert_eq!(r.lbl(), t.lbl().lub(l));
        }

        #[test]
        fn leq_matches_enumeration((t, u) in (1u32..=5).prop_flat_map(|w| (arb_bv(w), arb_bv(w)))) {
            let by_values = members(&t).into_iter().all(|v| u.value_has_type(v));
            let expected = by_values && t.lbl().leq(u.lbl());
            prop_assert_eq!(type_leq(&t, &u).unwrap(), expected);
        }

        #[test]
        fn leq_is_a_preorder((a, b, c) in (1u32..=5).prop_flat_map(|w| (arb_bv(w), arb_bv(w), arb_bv(w)))) {
            prop_assert!(type_leq(&a, &a).unwrap());
            if type_leq(&a, &b).unwrap() && type_leq(&b, &c).unwrap() {
                prop_assert!(type_leq(&a, &c).unwrap());
            }
        }

        #[test]
        fn label_of_binop_is_exact_lub(
            (a, b) in (1u32..=4).prop_flat_map(|w| (arb_interval(w), arb_interval(w)).prop_map(move |p| (w, p)))
                .prop_flat_map(|(w, (i, j))| (arb_label(), arb_label()).prop_map(move |(l1, l2)| {
                    (BvType::single(i, l1, w), BvType::single(j, l2, w))
                })),
        ) {
            for op in BinOp::ALL {
                prop_assert_eq!(type_binop(op, &a, &b).unwrap().lbl(), a.lbl().lub(b.lbl()));
            }
            for op in CmpOp::ALL {
                prop_assert_eq!(type_cmp(op, &a, &b).unwrap().lbl(), a.lbl().lub(b.lbl()));
            }
        }
    }

    /// Every interval pair at widths up to 4 against every operand pair.
    #[test]
    fn transfer_is_sound_exhaustively() {
        for w in 1..=4u32 {
            let m = mask(w);
            let intervals: Vec<Interval> = (0..=m)
                .flat_map(|lo| (lo..=m).map(move |hi| Interval::new(lo, hi)))
                .collect();
            for a in &intervals {
                for op in UnOp::ALL {
                    let (r, rw) = interval_unop(op, *a, w);
                    for x in a.bounds().map(|(l, h)| l..=h).into_iter().flatten() {
                        let (vw, v) = op.apply(w, x);
                        assert_eq!(vw, rw);
                        assert!(r.contains(v), "{op:?} {a:?} w{w}");
                    }
                }
                for b in &intervals {
                    for op in BinOp::ALL {
                        let r = interval_binop(op, *a, *b, w);
                        for x in a.bounds().map(|(l, h)| l..=h).into_iter().flatten() {
                            for y in b.bounds().map(|(l, h)| l..=h).into_iter().flatten() {
                                assert!(r.contains(op.apply(w, x, y)), "{op:?} {a:?} {b:?} w{w}");
                            }
                        }
                    }
                    for op in CmpOp::ALL {
                        let r = interval_cmp(op, *a, *b);
                        for x in a.bounds().map(|(l, h)| l..=h).into_iter().flatten() {
                            for y in b.bounds().map(|(l, h)| l..=h).into_iter().flatten() {
                                assert!(r.contains(op.holds(x, y) as u64));
                            }
                        }
                    }
                }
            }
        }
    }
}
