//! Macroscopic weight functions psi/omega.
//!
//! Weights come from a named catalog or from a user polynomial/trig string.
//! Expressions are parsed once into an AST that supports exact evaluation and
//! symbolic differentiation, so scale-separated reconstructions get analytic
//! gradients instead of finite differences.
//!
//! Grammar: `expr := term (('+'|'-') term)*`, `term := unary (('*'|'/') unary)*`,
//! `unary := '-' unary | power`, `power := atom ('^' integer)?`,
//! `atom := number | 'pi' | 'x1' | 'x2' | 'x3' | 'sin' '(' expr ')' |
//! 'cos' '(' expr ')' | '(' expr ')'`.

use crate::error::{Error, Result};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq)]
enum Ast {
    Num(f64),
    Var(usize),
    Add(Box<Ast>, Box<Ast>),
    Sub(Box<Ast>, Box<Ast>),
    Mul(Box<Ast>, Box<Ast>),
    Div(Box<Ast>, Box<Ast>),
    Pow(Box<Ast>, i32),
    Neg(Box<Ast>),
    Sin(Box<Ast>),
    Cos(Box<Ast>),
}

impl Ast {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Ast::Num(v) => *v,
            Ast::Var(i) => x[*i],
            Ast::Add(a, b) => a.eval(x) + b.eval(x),
            Ast::Sub(a, b) => a.eval(x) - b.eval(x),
            Ast::Mul(a, b) => a.eval(x) * b.eval(x),
            Ast::Div(a, b) => a.eval(x) / b.eval(x),
            Ast::Pow(a, n) => a.eval(x).powi(*n),
            Ast::Neg(a) => -a.eval(x),
            Ast::Sin(a) => a.eval(x).sin(),
            Ast::Cos(a) => a.eval(x).cos(),
        }
    }

    fn diff(&self, v: usize) -> Ast {
        use Ast::*;
        match self {
            Num(_) => Num(0.0),
            Var(i) => Num(if *i == v { 1.0 } else { 0.0 }),
            Add(a, b) => Add(Box::new(a.diff(v)), Box::new(b.diff(v))),
            Sub(a, b) => Sub(Box::new(a.diff(v)), Box::new(b.diff(v))),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.diff(v)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.diff(v)))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.diff(v)), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.diff(v)))),
                )),
                Box::new(Pow(b.clone(), 2)),
            ),
            Pow(a, n) => Mul(
                Box::new(Mul(Box::new(Num(*n as f64)), Box::new(Pow(a.clone(), n - 1)))),
                Box::new(a.diff(v)),
            ),
            Neg(a) => Neg(Box::new(a.diff(v))),
            Sin(a) => Mul(Box::new(Cos(a.clone())), Box::new(a.diff(v))),
            Cos(a) => Neg(Box::new(Mul(Box::new(Sin(a.clone())), Box::new(a.diff(v))))),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Ast::Num(_) => None,
            Ast::Var(i) => Some(*i),
            Ast::Add(a, b) | Ast::Sub(a, b) | Ast::Mul(a, b) | Ast::Div(a, b) => {
                match (a.max_var(), b.max_var()) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                }
            }
            Ast::Pow(a, _) | Ast::Neg(a) | Ast::Sin(a) | Ast::Cos(a) => a.max_var(),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src: src.as_bytes(),
            pos: 0,
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

    fn bump(&mut self) -> Option<u8> {
        let c = self.peek();
        if c.is_some() {
            self.pos += 1;
        }
        c
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        match self.bump() {
            Some(got) if got == c => Ok(()),
            got => Err(Error::Weight(format!(
                "expected '{}' at byte {}, got {:?}",
                c as char,
                self.pos,
                got.map(|g| g as char)
            ))),
        }
    }

    fn expr(&mut self) -> Result<Ast> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.bump();
                    lhs = Ast::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.bump();
                    lhs = Ast::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Ast> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.bump();
                    lhs = Ast::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(b'/') => {
                    self.bump();
                    lhs = Ast::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Ast> {
        if self.peek() == Some(b'-') {
            self.bump();
            return Ok(Ast::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Ast> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.bump();
            let neg = if self.peek() == Some(b'-') {
                self.bump();
                true
            } else {
                false
            };
            let n = self.integer()?;
            let n = if neg { -n } else { n };
            return Ok(Ast::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn integer(&mut self) -> Result<i32> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Weight(format!("expected integer at byte {start}")));
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map_err(|e| Error::Weight(format!("bad exponent: {e}")))
    }

    fn atom(&mut self) -> Result<Ast> {
        match self.peek() {
            Some(b'(') => {
                self.bump();
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            other => Err(Error::Weight(format!(
                "unexpected token {:?} at byte {}",
                other.map(|c| c as char),
                self.pos
            ))),
        }
    }

    fn number(&mut self) -> Result<Ast> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_digit()
                || self.src[self.pos] == b'.'
                || self.src[self.pos] == b'e'
                || self.src[self.pos] == b'E'
                || ((self.src[self.pos] == b'+' || self.src[self.pos] == b'-')
                    && self.pos > start
                    && matches!(self.src[self.pos - 1], b'e' | b'E')))
        {
            self.pos += 1;
        }
        std::str::from_utf8(&self.src[start..self.pos])
            .unwrap()
            .parse()
            .map(Ast::Num)
            .map_err(|e| Error::Weight(format!("bad number: {e}")))
    }

    fn ident(&mut self) -> Result<Ast> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap();
        match name {
            "pi" => Ok(Ast::Num(std::f64::consts::PI)),
            "x1" => Ok(Ast::Var(0)),
            "x2" => Ok(Ast::Var(1)),
            "x3" => Ok(Ast::Var(2)),
            "sin" | "cos" => {
                self.expect(b'(')?;
                let inner = self.expr()?;
                self.expect(b')')?;
                Ok(match name {
                    "sin" => Ast::Sin(Box::new(inner)),
                    _ => Ast::Cos(Box::new(inner)),
                })
            }
            other => Err(Error::Weight(format!("unknown identifier '{other}'"))),
        }
    }
}

/// A scalar weight function of the macro coordinate with analytic gradient.
#[derive(Debug, Clone)]
pub struct Weight {
    expr: Ast,
    grad: Vec<Ast>,
    source: String,
}

impl Weight {
    pub fn parse(src: &str) -> Result<Self> {
        let mut p = Parser::new(src);
        let expr = p.expr()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(Error::Weight(format!(
                "trailing input at byte {} in '{}'",
                p.pos, src
            )));
        }
        let dims = expr.max_var().map_or(0, |v| v + 1);
        let grad = (0..dims.max(2)).map(|v| expr.diff(v)).collect();
        Ok(Weight {
            expr,
            grad,
            source: src.to_string(),
        })
    }

    /// Number of coordinates the expression references (0 for constants).
    pub fn dims(&self) -> usize {
        self.expr.max_var().map_or(0, |v| v + 1)
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.expr.eval(&x)
    }

    pub fn grad(&self, x: [f64; 2]) -> [f64; 2] {
        [self.grad[0].eval(&x), self.grad[1].eval(&x)]
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Weight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.source)
    }
}

/// Named catalog of weight expressions. Unknown names fall through to the
/// expression parser, so any polynomial/trig string is accepted as a tag.
pub fn catalog() -> BTreeMap<&'static str, &'static str> {
    BTreeMap::from([
        ("constant", "1"),
        ("sine4pi", "5 + sin(4*pi*x1) + sin(4*pi*x2)"),
        ("quartic_well", "(x1 - 0.5)^2 * (x2 - 0.5)^2"),
        ("x3", "x3"),
        ("one_plus_x3", "1 + x3"),
    ])
}

/// Resolve a catalog tag or expression string into a shared weight.
pub fn resolve(tag: &str) -> Result<Arc<Weight>> {
    let src = catalog().get(tag).copied().unwrap_or(tag);
    let w = Weight::parse(src)?;
    if w.dims() > DIM_LIMIT {
        return Err(Error::Weight(format!(
            "weight '{tag}' references x{} but this build is {DIM_LIMIT}-dimensional",
            w.dims()
        )));
    }
    Ok(Arc::new(w))
}

const DIM_LIMIT: usize = 2;
