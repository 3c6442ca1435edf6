//! Arithmetic expressions for the linear multiplier `θ(t)`.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | power
//! power   := primary ('^' unary)?          // right associative
//! primary := number | 't' | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp | log
//! ```

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_SOURCE_BYTES: usize = 64 * 1024;
const DIVISION_GUARD: f64 = 1e-12;
const SUP_INFLATION: f64 = 1.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        match name {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "log" => Some(Func::Log),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Num(f64),
    Var,
    Neg(Box<Node>),
    Bin(BinOp, Box<Node>, Box<Node>),
    Call(Func, Box<Node>),
}

impl Node {
    fn eval(&self, t: f64) -> Result<f64> {
        Ok(match self {
            Node::Num(v) => *v,
            Node::Var => t,
            Node::Neg(a) => -a.eval(t)?,
            Node::Bin(op, a, b) => {
                let (x, y) = (a.eval(t)?, b.eval(t)?);
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y.abs() < DIVISION_GUARD {
                            return Err(Error::domain(format!(
                                "division by {y:e} at t = {t}"
                            )));
                        }
                        x / y
                    }
                    BinOp::Pow => x.powf(y),
                }
            }
            Node::Call(f, a) => {
                let x = a.eval(t)?;
                match f {
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(Error::domain(format!("log of {x} at t = {t}")));
                        }
                        x.ln()
                    }
                }
            }
        })
    }
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Num(v) => write!(f, "{v}"),
            Node::Var => write!(f, "t"),
            Node::Neg(a) => write!(f, "(-{a})"),
            Node::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Parsed `θ(t)` with its source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct TrendExpr {
    source: String,
    root: Node,
}

impl TryFrom<String> for TrendExpr {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        TrendExpr::parse(&s)
    }
}

impl From<TrendExpr> for String {
    fn from(e: TrendExpr) -> String {
        e.source
    }
}

impl fmt::Display for TrendExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.root)
    }
}

impl TrendExpr {
    pub fn parse(text: &str) -> Result<Self> {
        if text.len() > MAX_SOURCE_BYTES {
            return Err(Error::Syntax {
                offset: MAX_SOURCE_BYTES,
                message: "expression longer than 64 KiB".into(),
            });
        }
        let mut p = Parser { src: text.as_bytes(), pos: 0 };
        p.skip_ws();
        if p.pos == text.len() {
            return Err(Error::Syntax {
                offset: 0,
                message: "empty expression".into(),
            });
        }
        let root = p.expr()?;
        p.skip_ws();
        if p.pos != text.len() {
            return Err(p.syntax("expected operator or end of input"));
        }
        Ok(TrendExpr {
            source: text.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = self.root.eval(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::domain(format!("`{}` is not finite at t = {t}", self.source)))
        }
    }

    /// Evaluates on `samples + 1` equispaced points of `[0, horizon]` so that
    /// guard violations surface at load time rather than mid-simulation.
    pub fn validate_on(&self, horizon: f64, samples: usize) -> Result<()> {
        let m = samples.max(1);
        for i in 0..=m {
            self.eval(horizon * i as f64 / m as f64)?;
        }
        Ok(())
    }

    /// Heuristic uniform bound: `1.05 · max |θ|` over `m + 1` equispaced points
    /// of `[0, horizon]` (at least 1000 intervals).
    pub fn sup_bound(&self, horizon: f64, m: usize) -> Result<f64> {
        let m = m.max(1000);
        let mut sup: f64 = 0.0;
        for i in 0..=m {
            sup = sup.max(self.eval(horizon * i as f64 / m as f64)?.abs());
        }
        Ok(SUP_INFLATION * sup)
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn syntax(&self, message: &str) -> Error {
        Error::Syntax {
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

    fn expr(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.unary()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Node::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Node> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.unary()?)))
            }
            Some(b'+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.primary()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Node::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Node> {
        const EXPECTED: &str = "expected number, `t`, function call or `(`";
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expr()?;
                self.close_paren()?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len()
                    && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                let name = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
                if name == "t" {
                    return Ok(Node::Var);
                }
                let Some(func) = Func::lookup(name) else {
                    return Err(Error::UnknownIdentifier {
                        offset: start,
                        name: name.to_string(),
                    });
                };
                if self.peek() != Some(b'(') {
                    return Err(self.syntax(&format!("expected `(` after `{name}`")));
                }
                self.pos += 1;
                let arg = self.expr()?;
                self.close_paren()?;
                Ok(Node::Call(func, Box::new(arg)))
            }
            None => Err(self.syntax(&format!("unexpected end of input; {EXPECTED}"))),
            Some(_) => Err(self.syntax(EXPECTED)),
        }
    }

    fn close_paren(&mut self) -> Result<()> {
        if self.peek() == Some(b')') {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.syntax("expected `)`"))
        }
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        let digits = |p: &mut usize| {
            while *p < s.len() && s[*p].is_ascii_digit() {
                *p += 1;
            }
        };
        digits(&mut self.pos);
        if self.pos < s.len() && s[self.pos] == b'.' {
            self.pos += 1;
            digits(&mut self.pos);
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < s.len() && (s[p] == b'+' || s[p] == b'-') {
                p += 1;
            }
            if p < s.len() && s[p].is_ascii_digit() {
                digits(&mut p);
                self.pos = p;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Node::Num(v)),
            _ => Err(Error::Syntax {
                offset: start,
                message: format!("invalid number `{text}`"),
            }),
        }
    }
}

/// Declared smoothness class of `θ`: uniform bound `L`, order `k`, Hölder exponent `γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendClassSpec {
    pub bound: f64,
    pub k: u32,
    pub gamma: f64,
}

impl TrendClassSpec {
    pub fn new(bound: f64, k: u32, gamma: f64) -> Result<Self> {
        if !(bound > 0.0 && bound.is_finite()) {
            return Err(Error::domain(format!("L must be positive, got {bound}")));
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::domain(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        Ok(TrendClassSpec { bound, k, gamma })
    }

    /// `ρ = k + γ`.
    pub fn rho(&self) -> f64 {
        self.k as f64 + self.gamma
    }

    pub fn check_alternate(&self, hk: f64) -> Result<()> {
        if self.rho() > hk {
            Ok(())
        } else {
            Err(Error::domain(format!("rho = {} must exceed HK = {hk}", self.rho())))
        }
    }
}

/// Central finite difference of order `order` (1..=4) at `t` with step `h`,
/// Richardson-extrapolated once from steps `h` and `h/2`.
///
/// The stencil (half-width `h` for orders 1–2, `2h` for 3–4) must lie in `domain`.
pub fn derivative_num(
    f: impl Fn(f64) -> f64,
    t: f64,
    order: u32,
    h: f64,
    domain: (f64, f64),
) -> Result<f64> {
    if !(1..=4).contains(&order) {
        return Err(Error::domain(format!("derivative order {order} not in 1..=4")));
    }
    if !(h > 0.0) {
        return Err(Error::domain(format!("step must be positive, got {h}")));
    }
    let reach = if order <= 2 { h } else { 2.0 * h };
    if t - reach < domain.0 || t + reach > domain.1 {
        return Err(Error::domain(format!(
            "stencil [{}, {}] leaves the domain [{}, {}]",
            t - reach,
            t + reach,
            domain.0,
            domain.1
        )));
    }
    let central = |h: f64| -> f64 {
        match order {
            1 => (f(t + h) - f(t - h)) / (2.0 * h),
            2 => (f(t + h) - 2.0 * f(t) + f(t - h)) / (h * h),
            3 => (f(t + 2.0 * h) - 2.0 * f(t + h) + 2.0 * f(t - h) - f(t - 2.0 * h)) / (2.0 * h.powi(3)),
            _ => {
                (f(t + 2.0 * h) - 4.0 * f(t + h) + 6.0 * f(t) - 4.0 * f(t - h) + f(t - 2.0 * h))
                    / h.powi(4)
            }
        }
    };
    Ok((4.0 * central(0.5 * h) - central(h)) / 3.0)
}
