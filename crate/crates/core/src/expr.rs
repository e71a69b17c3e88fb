//! Scalar values, arithmetic expressions and comparison predicates.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{GusError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalarType {
    #[serde(alias = "int64")]
    Int,
    #[serde(alias = "float64", alias = "double")]
    Float,
    #[serde(alias = "string")]
    Str,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

impl Value {
    pub fn scalar_type(&self) -> ScalarType {
        match self {
            Value::Int(_) => ScalarType::Int,
            Value::Float(_) => ScalarType::Float,
            Value::Str(_) => ScalarType::Str,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match *self {
            Value::Int(i) => Some(i as f64),
            Value::Float(x) => Some(x),
            Value::Str(_) => None,
        }
    }

    /// Ordering between comparable values. Ints and floats compare
    /// numerically; strings only compare with strings.
    pub fn compare(&self, other: &Value) -> Result<Ordering> {
        match (self, other) {
            (Value::Int(a), Value::Int(b)) => Ok(a.cmp(b)),
            (Value::Str(a), Value::Str(b)) => Ok(a.cmp(b)),
            (Value::Str(_), _) | (_, Value::Str(_)) => Err(GusError::Type(format!(
                "cannot compare {self} with {other}"
            ))),
            _ => {
                let (a, b) = (self.as_f64().unwrap(), other.as_f64().unwrap());
                a.partial_cmp(&b)
                    .ok_or_else(|| GusError::Type(format!("cannot order {a} and {b}")))
            }
        }
    }

    /// Hash key for equality joins; numerically equal ints and floats must
    /// collide.
    pub(crate) fn join_key(&self) -> JoinKey {
        match self {
            Value::Int(i) => JoinKey::Num((*i as f64).to_bits()),
            Value::Float(x) if *x == 0.0 => JoinKey::Num(0f64.to_bits()),
            Value::Float(x) => JoinKey::Num(x.to_bits()),
            Value::Str(s) => JoinKey::Str(s.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum JoinKey {
    Num(u64),
    Str(String),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(i) => write!(f, "{i}"),
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => write!(f, "{s:?}"),
        }
    }
}

/// Column lookup used while evaluating expressions and predicates.
pub trait ColumnResolver {
    fn column_index(&self, name: &str) -> Option<usize>;
    fn column_type(&self, index: usize) -> ScalarType;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryOp {
    fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Sub => '-',
            BinaryOp::Mul => '*',
            BinaryOp::Div => '/',
        }
    }
}

/// Arithmetic over numeric columns and literals.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Int(i64),
    Float(f64),
    Column(String),
    Neg(Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr> {
        let mut parser = ExprParser {
            src: text.as_bytes(),
            pos: 0,
        };
        let expr = parser.expr()?;
        parser.skip_ws();
        if parser.pos != parser.src.len() {
            return Err(parser.error("unexpected trailing input"));
        }
        Ok(expr)
    }

    pub fn columns(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_columns(&mut out);
        out
    }

    fn collect_columns<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Expr::Column(c) => out.push(c),
            Expr::Neg(e) => e.collect_columns(out),
            Expr::Binary(_, l, r) => {
                l.collect_columns(out);
                r.collect_columns(out);
            }
            Expr::Int(_) | Expr::Float(_) => {}
        }
    }

    /// Resolves column names to positions and checks they are numeric.
    pub fn bind(&self, columns: &dyn ColumnResolver) -> Result<BoundExpr> {
        Ok(match self {
            Expr::Int(i) => BoundExpr::Const(*i as f64),
            Expr::Float(x) => BoundExpr::Const(*x),
            Expr::Column(name) => {
                let idx = columns
                    .column_index(name)
                    .ok_or_else(|| GusError::UnknownColumn(name.clone()))?;
                if columns.column_type(idx) == ScalarType::Str {
                    return Err(GusError::Type(format!(
                        "column `{name}` is a string and cannot appear in arithmetic"
                    )));
                }
                BoundExpr::Column(idx)
            }
            Expr::Neg(e) => BoundExpr::Neg(Box::new(e.bind(columns)?)),
            Expr::Binary(op, l, r) => {
                BoundExpr::Binary(*op, Box::new(l.bind(columns)?), Box::new(r.bind(columns)?))
            }
        })
    }

    /// Integer evaluation, used for id expressions at ingestion.
    pub fn eval_int(&self, lookup: &dyn Fn(&str) -> Option<Value>) -> Result<i64> {
        let overflow = || GusError::Type(format!("integer overflow evaluating `{self}`"));
        Ok(match self {
            Expr::Int(i) => *i,
            Expr::Float(_) => {
                return Err(GusError::Type(format!(
                    "id expression `{self}` must be integer-valued"
                )))
            }
            Expr::Column(name) => match lookup(name) {
                Some(Value::Int(i)) => i,
                Some(other) => {
                    return Err(GusError::Type(format!(
                        "id column `{name}` holds non-integer value {other}"
                    )))
                }
                None => return Err(GusError::UnknownColumn(name.clone())),
            },
            Expr::Neg(e) => e.eval_int(lookup)?.checked_neg().ok_or_else(overflow)?,
            Expr::Binary(op, l, r) => {
                let (l, r) = (l.eval_int(lookup)?, r.eval_int(lookup)?);
                match op {
                    BinaryOp::Add => l.checked_add(r),
                    BinaryOp::Sub => l.checked_sub(r),
                    BinaryOp::Mul => l.checked_mul(r),
                    BinaryOp::Div => l.checked_div(r),
                }
                .ok_or_else(overflow)?
            }
        })
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Int(i) => write!(f, "{i}"),
            Expr::Float(x) => write!(f, "{x:?}"),
            Expr::Column(c) => f.write_str(c),
            Expr::Neg(e) => write!(f, "-({e})"),
            Expr::Binary(op, l, r) => write!(f, "({l}{}{r})", op.symbol()),
        }
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Expr::parse(&text).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BoundExpr {
    Const(f64),
    Column(usize),
    Neg(Box<BoundExpr>),
    Binary(BinaryOp, Box<BoundExpr>, Box<BoundExpr>),
}

impl BoundExpr {
    pub fn eval(&self, row: &[Value]) -> f64 {
        match self {
            BoundExpr::Const(x) => *x,
            BoundExpr::Column(i) => row[*i].as_f64().expect("bound column is numeric"),
            BoundExpr::Neg(e) => -e.eval(row),
            BoundExpr::Binary(op, l, r) => {
                let (l, r) = (l.eval(row), r.eval(row));
                match op {
                    BinaryOp::Add => l + r,
                    BinaryOp::Sub => l - r,
                    BinaryOp::Mul => l * r,
                    BinaryOp::Div => l / r,
                }
            }
        }
    }
}

struct ExprParser<'a> {
    src: &'a [u8],
    pos: usize,
}

// expr   := term (('+'|'-') term)*
// term   := unary (('*'|'/') unary)*
// unary  := '-' unary | atom
// atom   := number | ident | '(' expr ')'
impl ExprParser<'_> {
    fn error(&self, message: &str) -> GusError {
        GusError::Expr {
            offset: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let op = if c == b'+' { BinaryOp::Add } else { BinaryOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.term()?));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let op = if c == b'*' { BinaryOp::Mul } else { BinaryOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(self.unary()?));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.atom()
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                if self.peek() != Some(b')') {
                    return Err(self.error("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => {
                let start = self.pos;
                while self
                    .src
                    .get(self.pos)
                    .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
                Ok(Expr::Column(name.to_string()))
            }
            Some(_) => Err(self.error("expected a number, column or `(`")),
            None => Err(self.error("unexpected end of expression")),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let mut is_float = false;
        while let Some(&c) = self.src.get(self.pos) {
            match c {
                b'0'..=b'9' => {}
                b'.' | b'e' | b'E' => is_float = true,
                b'+' | b'-' if matches!(self.src[self.pos - 1], b'e' | b'E') => {}
                _ => break,
            }
            self.pos += 1;
        }
        let text = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        let bad = || GusError::Expr {
            offset: start,
            message: format!("invalid number `{text}`"),
        };
        if is_float {
            text.parse().map(Expr::Float).map_err(|_| bad())
        } else {
            text.parse().map(Expr::Int).map_err(|_| bad())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CompareOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=", alias = "<>")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl CompareOp {
    pub fn holds(self, ord: Ordering) -> bool {
        match self {
            CompareOp::Eq => ord == Ordering::Equal,
            CompareOp::Ne => ord != Ordering::Equal,
            CompareOp::Lt => ord == Ordering::Less,
            CompareOp::Le => ord != Ordering::Greater,
            CompareOp::Gt => ord == Ordering::Greater,
            CompareOp::Ge => ord != Ordering::Less,
        }
    }
}

/// One conjunct of a selection predicate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Atom {
    /// `column op constant`
    Const {
        column: String,
        op: CompareOp,
        value: Value,
    },
    /// `column = other column`
    Columns { column: String, equals: String },
}

/// Conjunction of atoms; the empty conjunction is always true.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Predicate(pub Vec<Atom>);

impl Predicate {
    pub fn always_true() -> Self {
        Predicate(Vec::new())
    }

    pub fn cmp(column: impl Into<String>, op: CompareOp, value: Value) -> Self {
        Predicate(vec![Atom::Const {
            column: column.into(),
            op,
            value,
        }])
    }

    pub fn and(mut self, other: Predicate) -> Self {
        self.0.extend(other.0);
        self
    }

    pub fn bind(&self, columns: &dyn ColumnResolver) -> Result<BoundPredicate> {
        let resolve = |name: &str| {
            columns
                .column_index(name)
                .ok_or_else(|| GusError::UnknownColumn(name.to_string()))
        };
        let atoms = self
            .0
            .iter()
            .map(|atom| match atom {
                Atom::Const { column, op, value } => {
                    let idx = resolve(column)?;
                    check_comparable(column, columns.column_type(idx), value.scalar_type())?;
                    Ok(BoundAtom::Const(idx, *op, value.clone()))
                }
                Atom::Columns { column, equals } => {
                    let (l, r) = (resolve(column)?, resolve(equals)?);
                    check_comparable(column, columns.column_type(l), columns.column_type(r))?;
                    Ok(BoundAtom::Columns(l, r))
                }
            })
            .collect::<Result<_>>()?;
        Ok(BoundPredicate(atoms))
    }
}

pub(crate) fn check_comparable(column: &str, left: ScalarType, right: ScalarType) -> Result<()> {
    let string = |t| t == ScalarType::Str;
    if string(left) != string(right) {
        return Err(GusError::Type(format!(
            "`{column}` of type {left:?} compared with {right:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub enum BoundAtom {
    Const(usize, CompareOp, Value),
    Columns(usize, usize),
}

#[derive(Clone, Debug)]
pub struct BoundPredicate(Vec<BoundAtom>);

impl BoundPredicate {
    pub fn eval(&self, row: &[Value]) -> bool {
        self.0.iter().all(|atom| match atom {
            BoundAtom::Const(i, op, v) => row[*i].compare(v).is_ok_and(|o| op.holds(o)),
            BoundAtom::Columns(l, r) => row[*l]
                .compare(&row[*r])
                .is_ok_and(|o| o == Ordering::Equal),
        })
    }
}

/// One conjunct of a join condition: `left.column op right.column`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JoinAtom {
    pub left: String,
    #[serde(default = "default_eq")]
    pub op: CompareOp,
    pub right: String,
}

fn default_eq() -> CompareOp {
    CompareOp::Eq
}

/// Conjunctive θ-condition; empty means cross product.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JoinCondition(pub Vec<JoinAtom>);

impl JoinCondition {
    pub fn equi(left: impl Into<String>, right: impl Into<String>) -> Self {
        JoinCondition(vec![JoinAtom {
            left: left.into(),
            op: CompareOp::Eq,
            right: right.into(),
        }])
    }

    pub fn and(mut self, left: impl Into<String>, op: CompareOp, right: impl Into<String>) -> Self {
        self.0.push(JoinAtom {
            left: left.into(),
            op,
            right: right.into(),
        });
        self
    }
}
