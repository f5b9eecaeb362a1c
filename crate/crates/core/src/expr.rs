//! Integer latency expressions.
//!
//! Hardware objects carry their latency either as a plain integer or as a
//! small formula over named parameters, e.g. `ceil_div(K,8)*ceil_div(C,8)`.
//! Parameters come from instruction immediates, and memory latencies also see
//! the reserved names [`NUM_WORDS`] and [`START_ADDRESS`].
//!
//! All arithmetic is checked `i64`. Intermediate values may be negative, the
//! final result may not.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Reserved variable bound to the word count of a memory transaction.
pub const NUM_WORDS: &str = "num_words";
/// Reserved variable bound to the first word address of a memory transaction.
pub const START_ADDRESS: &str = "start_address";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Lit(i64),
    Var(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Rem,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    CeilDiv,
    Min,
    Max,
    If,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        match name {
            "ceil_div" => Some(Func::CeilDiv),
            "min" => Some(Func::Min),
            "max" => Some(Func::Max),
            "if" => Some(Func::If),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::CeilDiv => "ceil_div",
            Func::Min => "min",
            Func::Max => "max",
            Func::If => "if",
        }
    }

    fn arity(self) -> usize {
        match self {
            Func::If => 3,
            _ => 2,
        }
    }
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => 1,
            BinOp::Add | BinOp::Sub => 2,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown function `{name}` at offset {offset}")]
    UnknownFunction { offset: usize, name: String },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::UnknownFunction { offset, .. } => {
                *offset
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("modulo by zero")]
    ModuloByZero,
    #[error("arithmetic overflow")]
    Overflow,
    #[error("negative latency {0}")]
    Negative(i64),
}

/// Variable lookup used during evaluation.
pub trait Bindings {
    fn get(&self, name: &str) -> Option<i64>;
}

impl Bindings for BTreeMap<String, i64> {
    fn get(&self, name: &str) -> Option<i64> {
        BTreeMap::get(self, name).copied()
    }
}

impl Bindings for std::collections::HashMap<String, i64> {
    fn get(&self, name: &str) -> Option<i64> {
        std::collections::HashMap::get(self, name).copied()
    }
}

impl Bindings for [(&str, i64)] {
    fn get(&self, name: &str) -> Option<i64> {
        self.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

impl<const N: usize> Bindings for [(&str, i64); N] {
    fn get(&self, name: &str) -> Option<i64> {
        Bindings::get(self.as_slice(), name)
    }
}

/// Immediates of an instruction layered over transaction attributes.
pub struct Layered<'a, A: Bindings + ?Sized, B: Bindings + ?Sized>(pub &'a A, pub &'a B);

impl<A: Bindings + ?Sized, B: Bindings + ?Sized> Bindings for Layered<'_, A, B> {
    fn get(&self, name: &str) -> Option<i64> {
        self.0.get(name).or_else(|| self.1.get(name))
    }
}

/// A parsed latency expression together with its source text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LatencyExpr {
    root: Expr,
    source: String,
}

impl LatencyExpr {
    pub fn parse(text: &str) -> Result<LatencyExpr, ParseError> {
        let root = Parser::new(text).parse_all()?;
        Ok(LatencyExpr { root, source: text.to_string() })
    }

    pub fn constant(value: u64) -> LatencyExpr {
        let v = i64::try_from(value).unwrap_or(i64::MAX);
        LatencyExpr { root: Expr::Lit(v), source: v.to_string() }
    }

    pub fn root(&self) -> &Expr {
        &self.root
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// The value if the expression has no free variables and evaluates cleanly.
    pub fn as_constant(&self) -> Option<u64> {
        if self.free_variables().is_empty() {
            self.eval(&[] as &[(&str, i64)]).ok()
        } else {
            None
        }
    }

    pub fn free_variables(&self) -> Vec<String> {
        let mut out = Vec::new();
        collect_vars(&self.root, &mut out);
        out.sort();
        out.dedup();
        out
    }

    pub fn eval<B: Bindings + ?Sized>(&self, b: &B) -> Result<u64, EvalError> {
        let v = eval_expr(&self.root, b)?;
        u64::try_from(v).map_err(|_| EvalError::Negative(v))
    }
}

impl fmt::Display for LatencyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl std::str::FromStr for LatencyExpr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LatencyExpr::parse(s)
    }
}

impl Serialize for LatencyExpr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.root {
            Expr::Lit(v) if v >= 0 => s.serialize_i64(v),
            _ => s.serialize_str(&self.source),
        }
    }
}

impl<'de> Deserialize<'de> for LatencyExpr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(v) => Ok(LatencyExpr::constant(v)),
            Raw::Text(t) => LatencyExpr::parse(&t).map_err(serde::de::Error::custom),
        }
    }
}

fn collect_vars(e: &Expr, out: &mut Vec<String>) {
    match e {
        Expr::Lit(_) => {}
        Expr::Var(v) => out.push(v.clone()),
        Expr::Bin(_, a, b) => {
            collect_vars(a, out);
            collect_vars(b, out);
        }
        Expr::Call(_, args) => args.iter().for_each(|a| collect_vars(a, out)),
    }
}

fn floor_div(a: i64, b: i64) -> Result<i64, EvalError> {
    if b == 0 {
        return Err(EvalError::DivisionByZero);
    }
    let q = a.checked_div(b).ok_or(EvalError::Overflow)?;
    if (a % b != 0) && ((a < 0) != (b < 0)) {
        q.checked_sub(1).ok_or(EvalError::Overflow)
    } else {
        Ok(q)
    }
}

fn eval_expr<B: Bindings + ?Sized>(e: &Expr, b: &B) -> Result<i64, EvalError> {
    Ok(match e {
        Expr::Lit(v) => *v,
        Expr::Var(name) => b.get(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
        Expr::Bin(op, l, r) => {
            let x = eval_expr(l, b)?;
            let y = eval_expr(r, b)?;
            match op {
                BinOp::Add => x.checked_add(y).ok_or(EvalError::Overflow)?,
                BinOp::Sub => x.checked_sub(y).ok_or(EvalError::Overflow)?,
                BinOp::Mul => x.checked_mul(y).ok_or(EvalError::Overflow)?,
                BinOp::Div => floor_div(x, y)?,
                BinOp::Rem => {
                    if y == 0 {
                        return Err(EvalError::ModuloByZero);
                    }
                    let q = floor_div(x, y)?;
                    x.checked_sub(q.checked_mul(y).ok_or(EvalError::Overflow)?)
                        .ok_or(EvalError::Overflow)?
                }
                BinOp::Eq => (x == y) as i64,
                BinOp::Ne => (x != y) as i64,
                BinOp::Lt => (x < y) as i64,
                BinOp::Le => (x <= y) as i64,
                BinOp::Gt => (x > y) as i64,
                BinOp::Ge => (x >= y) as i64,
            }
        }
        Expr::Call(Func::If, args) => {
            if eval_expr(&args[0], b)? != 0 {
                eval_expr(&args[1], b)?
            } else {
                eval_expr(&args[2], b)?
            }
        }
        Expr::Call(func, args) => {
            let x = eval_expr(&args[0], b)?;
            let y = eval_expr(&args[1], b)?;
            match func {
                Func::Min => x.min(y),
                Func::Max => x.max(y),
                Func::CeilDiv => {
                    let num = x
                        .checked_add(y)
                        .and_then(|s| s.checked_sub(1))
                        .ok_or(EvalError::Overflow)?;
                    floor_div(num, y)?
                }
                Func::If => unreachable!(),
            }
        }
    })
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Bin(op, l, r) => {
                write_operand(f, l, op.precedence(), false)?;
                write!(f, "{}", op.symbol())?;
                write_operand(f, r, op.precedence(), true)
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

fn write_operand(f: &mut fmt::Formatter<'_>, e: &Expr, parent: u8, right: bool) -> fmt::Result {
    // Operators are left-associative, so a right operand of equal precedence
    // needs parentheses too.
    let needs = match e {
        Expr::Bin(op, _, _) => op.precedence() < parent || (right && op.precedence() == parent),
        Expr::Lit(v) => *v < 0,
        _ => false,
    };
    if needs {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser { src, bytes: src.as_bytes(), pos: 0 }
    }

    fn err<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { offset, message: message.into() })
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        if self.pos == self.bytes.len() {
            return self.err(0, "empty expression");
        }
        let e = self.parse_binary(1)?;
        self.skip_ws();
        if self.pos != self.bytes.len() {
            return self.err(self.pos, "unexpected trailing input");
        }
        Ok(e)
    }

    fn peek_op(&mut self) -> Option<(BinOp, usize)> {
        self.skip_ws();
        let rest = &self.bytes[self.pos..];
        let two = |a: u8, b: u8| rest.len() >= 2 && rest[0] == a && rest[1] == b;
        if two(b'=', b'=') {
            return Some((BinOp::Eq, 2));
        }
        if two(b'!', b'=') {
            return Some((BinOp::Ne, 2));
        }
        if two(b'<', b'=') {
            return Some((BinOp::Le, 2));
        }
        if two(b'>', b'=') {
            return Some((BinOp::Ge, 2));
        }
        match rest.first()? {
            b'+' => Some((BinOp::Add, 1)),
            b'-' => Some((BinOp::Sub, 1)),
            b'*' => Some((BinOp::Mul, 1)),
            b'/' => Some((BinOp::Div, 1)),
            b'%' => Some((BinOp::Rem, 1)),
            b'<' => Some((BinOp::Lt, 1)),
            b'>' => Some((BinOp::Gt, 1)),
            _ => None,
        }
    }

    fn parse_binary(&mut self, min_prec: u8) -> Result<Expr, ParseError> {
        let mut lhs = self.parse_primary()?;
        while let Some((op, len)) = self.peek_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.pos += len;
            let rhs = self.parse_binary(op.precedence() + 1)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn parse_primary(&mut self) -> Result<Expr, ParseError> {
        self.skip_ws();
        let start = self.pos;
        let Some(&c) = self.bytes.get(self.pos) else {
            return self.err(self.pos, "expected operand");
        };
        if c == b'(' {
            self.pos += 1;
            let e = self.parse_binary(1)?;
            self.skip_ws();
            if self.bytes.get(self.pos) != Some(&b')') {
                return self.err(self.pos, "expected `)`");
            }
            self.pos += 1;
            return Ok(e);
        }
        if c.is_ascii_digit() {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            return match self.src[start..self.pos].parse::<i64>() {
                Ok(v) => Ok(Expr::Lit(v)),
                Err(_) => self.err(start, "integer literal out of range"),
            };
        }
        if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < self.bytes.len()
                && (self.bytes[self.pos].is_ascii_alphanumeric() || self.bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            let name = &self.src[start..self.pos];
            self.skip_ws();
            if self.bytes.get(self.pos) == Some(&b'(') {
                let Some(func) = Func::from_name(name) else {
                    return Err(ParseError::UnknownFunction { offset: start, name: name.into() });
                };
                self.pos += 1;
                let mut args = Vec::new();
                loop {
                    args.push(self.parse_binary(1)?);
                    self.skip_ws();
                    match self.bytes.get(self.pos) {
                        Some(b',') => self.pos += 1,
                        Some(b')') => {
                            self.pos += 1;
                            break;
                        }
                        _ => return self.err(self.pos, "expected `,` or `)`"),
                    }
                }
                if args.len() != func.arity() {
                    return self.err(
                        start,
                        format!("`{}` takes {} arguments, got {}", name, func.arity(), args.len()),
                    );
                }
                return Ok(Expr::Call(func, args));
            }
            return Ok(Expr::Var(name.to_string()));
        }
        self.err(start, format!("unexpected character `{}`", c as char))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(text: &str, b: &[(&str, i64)]) -> Result<u64, EvalError> {
        LatencyExpr::parse(text).unwrap().eval(b)
    }

    #[test]
    fn literal() {
        assert_eq!(LatencyExpr::parse("5").unwrap().root(), &Expr::Lit(5));
        assert_eq!(ev("42", &[]), Ok(42));
    }

    #[test]
    fn product_shape() {
        let e = LatencyExpr::parse("ceil_div(K,8)*ceil_div(C,8)*ceil_div(C_w,1)").unwrap();
        let Expr::Bin(BinOp::Mul, l, r) = e.root() else { panic!("not a product") };
        assert!(matches!(**l, Expr::Bin(BinOp::Mul, _, _)));
        assert!(matches!(**r, Expr::Call(Func::CeilDiv, _)));
        assert_eq!(e.free_variables(), vec!["C", "C_w", "K"]);
    }

    #[test]
    fn trailing_operator_offset() {
        let err = LatencyExpr::parse("1+").unwrap_err();
        assert_eq!(err.offset(), 2);
    }

    #[test]
    fn unknown_function() {
        let err = LatencyExpr::parse("foo(1,2)").unwrap_err();
        assert!(matches!(err, ParseError::UnknownFunction { offset: 0, .. }));
    }

    #[test]
    fn evaluates_division() {
        assert_eq!(ev("C*K/64", &[("C", 8), ("K", 16)]), Ok(2));
        assert_eq!(ev("7/2", &[]), Ok(3));
        assert_eq!(ev("(0-7)/2+10", &[]), Ok(6));
        assert_eq!(ev("(0-7)%2", &[]), Ok(1));
    }

    #[test]
    fn ceil_div_plateau() {
        assert_eq!(ev("ceil_div(12,p)", &[("p", 7)]), Ok(2));
        assert_eq!(ev("ceil_div(12,p)", &[("p", 11)]), Ok(2));
        assert_eq!(ev("ceil_div(12,p)", &[("p", 6)]), Ok(2));
        assert_eq!(ev("ceil_div(12,p)", &[("p", 12)]), Ok(1));
    }

    #[test]
    fn errors() {
        assert_eq!(ev("x+1", &[]), Err(EvalError::Unbound("x".into())));
        assert_eq!(ev("1/0", &[]), Err(EvalError::DivisionByZero));
        assert_eq!(ev("1%0", &[]), Err(EvalError::ModuloByZero));
        assert_eq!(ev("1-2", &[]), Err(EvalError::Negative(-1)));
        assert_eq!(ev("9223372036854775807+1", &[]), Err(EvalError::Overflow));
    }

    #[test]
    fn functions_and_comparisons() {
        assert_eq!(ev("if(a>=4, 10, 20)", &[("a", 4)]), Ok(10));
        assert_eq!(ev("if(a>=4, 10, 20)", &[("a", 3)]), Ok(20));
        assert_eq!(ev("max(1,min(5,3))", &[]), Ok(3));
        assert_eq!(ev("1+2*3==7", &[]), Ok(1));
        assert_eq!(ev("10-4-3", &[]), Ok(3));
        assert_eq!(ev("2*3%4", &[]), Ok(2));
    }

    #[test]
    fn wrong_arity() {
        assert!(LatencyExpr::parse("min(1)").is_err());
        assert!(LatencyExpr::parse("if(1,2)").is_err());
    }

    #[test]
    fn print_keeps_associativity() {
        let e = LatencyExpr::parse("10-(4-3)").unwrap();
        assert_eq!(e.to_string(), "10-(4-3)");
        assert_eq!(e.eval(&[] as &[(&str, i64)]), Ok(9));
    }

    #[test]
    fn json_forms() {
        let a: LatencyExpr = serde_json::from_str("7").unwrap();
        assert_eq!(a.as_constant(), Some(7));
        let b: LatencyExpr = serde_json::from_str("\"num_words+2\"").unwrap();
        assert_eq!(b.eval(&[(NUM_WORDS, 3)]), Ok(5));
        assert_eq!(serde_json::to_string(&a).unwrap(), "7");
        assert_eq!(serde_json::to_string(&b).unwrap(), "\"num_words+2\"");
        assert!(serde_json::from_str::<LatencyExpr>("\"1+\"").is_err());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0i64..50).prop_map(Expr::Lit),
            prop::sample::select(vec!["a", "b", "c"]).prop_map(|s| Expr::Var(s.to_string())),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                (
                    prop::sample::select(vec![
                        BinOp::Add,
                        BinOp::Sub,
                        BinOp::Mul,
                        BinOp::Div,
                        BinOp::Rem,
                        BinOp::Lt,
                        BinOp::Ge,
                        BinOp::Eq
                    ]),
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (prop::sample::select(vec![Func::Min, Func::Max, Func::CeilDiv]), inner.clone(), inner.clone())
                    .prop_map(|(f, a, b)| Expr::Call(f, vec![a, b])),
                (inner.clone(), inner.clone(), inner)
                    .prop_map(|(c, a, b)| Expr::Call(Func::If, vec![c, a, b])),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(), a in 0i64..20, b in 1i64..20, c in 0i64..20) {
            let text = e.to_string();
            let parsed = LatencyExpr::parse(&text).unwrap();
            prop_assert_eq!(parsed.root(), &e);
            let reprinted = LatencyExpr::parse(&parsed.to_string()).unwrap();
            let env = [("a", a), ("b", b), ("c", c)];
            prop_assert_eq!(reprinted.eval(&env), parsed.eval(&env));
        }

        #[test]
        fn ceil_div_matches_rational_ceiling(a in 0i64..1_000_000, b in 1i64..10_000) {
            let got = ev("ceil_div(a,b)", &[("a", a), ("b", b)]).unwrap() as i64;
            let q = a / b;
            let want = if q * b == a { q } else { q + 1 };
            prop_assert_eq!(got, want);
        }

        #[test]
        fn evaluation_is_pure(e in arb_expr(), a in 0i64..20, b in 1i64..20) {
            let l = LatencyExpr { source: e.to_string(), root: e };
            let env = [("a", a), ("b", b), ("c", 3)];
            prop_assert_eq!(l.eval(&env), l.eval(&env));
        }
    }
}
