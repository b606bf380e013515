//! Small arithmetic expression language used for configured functions.
//!
//! Expressions are built over the identifiers `t`, `tau` (or `τ`) and the
//! spatial coordinates `x`, `y`, `z` (aliases `x1`, `x2`, `x3`), with the
//! operators `+ - * / ^`, the functions `sin cos exp sqrt ln` and the
//! constants `pi` and `e`. Every expression can be differentiated
//! symbolically, which keeps corner values and second derivatives free of
//! finite-difference noise.

use std::f64::consts::{E, PI};
use std::fmt;
use std::ops;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    T,
    Tau,
    X(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

/// Variable bindings for evaluation. Missing spatial coordinates evaluate to NaN.
#[derive(Debug, Clone, Copy, Default)]
pub struct Env<'a> {
    pub t: f64,
    pub tau: f64,
    pub x: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset} in `{source_text}`")]
pub struct ParseError {
    pub message: String,
    pub offset: usize,
    pub source_text: String,
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn t() -> Expr {
        Expr::Var(Var::T)
    }

    pub fn tau() -> Expr {
        Expr::Var(Var::Tau)
    }

    pub fn x() -> Expr {
        Expr::Var(Var::X(0))
    }

    pub fn parse(src: &str) -> Result<Expr, ParseError> {
        Parser::new(src)?.parse_all()
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn call(f: Func, arg: Expr) -> Expr {
        match arg {
            Expr::Num(v) => Expr::Num(f.apply(v)),
            a => Expr::Call(f, Box::new(a)),
        }
    }

    pub fn sin(arg: Expr) -> Expr {
        Expr::call(Func::Sin, arg)
    }

    pub fn cos(arg: Expr) -> Expr {
        Expr::call(Func::Cos, arg)
    }

    pub fn exp(arg: Expr) -> Expr {
        Expr::call(Func::Exp, arg)
    }

    pub fn pow(base: Expr, exponent: Expr) -> Expr {
        match (base, exponent) {
            (Expr::Num(a), Expr::Num(b)) => Expr::Num(a.powf(b)),
            (_, Expr::Num(b)) if b == 0.0 => Expr::Num(1.0),
            (a, Expr::Num(b)) if b == 1.0 => a,
            (a, b) => Expr::Pow(Box::new(a), Box::new(b)),
        }
    }

    pub fn eval(&self, env: &Env) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::T) => env.t,
            Expr::Var(Var::Tau) => env.tau,
            Expr::Var(Var::X(i)) => env.x.get(*i as usize).copied().unwrap_or(f64::NAN),
            Expr::Neg(a) => -a.eval(env),
            Expr::Add(a, b) => a.eval(env) + b.eval(env),
            Expr::Sub(a, b) => a.eval(env) - b.eval(env),
            Expr::Mul(a, b) => a.eval(env) * b.eval(env),
            Expr::Div(a, b) => a.eval(env) / b.eval(env),
            Expr::Pow(a, b) => {
                let base = a.eval(env);
                match b.as_ref() {
                    Expr::Num(n) if n.fract() == 0.0 && n.abs() < 64.0 => base.powi(*n as i32),
                    e => base.powf(e.eval(env)),
                }
            }
            Expr::Call(f, a) => f.apply(a.eval(env)),
        }
    }

    pub fn eval_t(&self, t: f64) -> f64 {
        self.eval(&Env { t, ..Env::default() })
    }

    pub fn eval_x(&self, x: &[f64]) -> f64 {
        self.eval(&Env { x, ..Env::default() })
    }

    pub fn eval_xt(&self, x: &[f64], t: f64) -> f64 {
        self.eval(&Env { t, tau: 0.0, x })
    }

    pub fn eval_t_tau(&self, t: f64, tau: f64) -> f64 {
        self.eval(&Env { t, tau, x: &[] })
    }

    pub fn depends_on(&self, v: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(v),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.depends_on(v) || b.depends_on(v),
        }
    }

    /// Highest spatial coordinate index referenced, plus one.
    pub fn space_dim(&self) -> usize {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(Var::X(i)) => *i as usize + 1,
            Expr::Var(_) => 0,
            Expr::Neg(a) | Expr::Call(_, a) => a.space_dim(),
            Expr::Add(a, b)
            | Expr::Sub(a, b)
            | Expr::Mul(a, b)
            | Expr::Div(a, b)
            | Expr::Pow(a, b) => a.space_dim().max(b.space_dim()),
        }
    }

    pub fn depends_on_space(&self) -> bool {
        self.space_dim() > 0
    }

    pub fn substitute(&self, v: Var, value: f64) -> Expr {
        self.replace(v, &Expr::Num(value))
    }

    pub fn replace(&self, v: Var, with: &Expr) -> Expr {
        match self {
            Expr::Var(w) if *w == v => with.clone(),
            Expr::Num(_) | Expr::Var(_) => self.clone(),
            Expr::Neg(a) => -a.replace(v, with),
            Expr::Add(a, b) => a.replace(v, with) + b.replace(v, with),
            Expr::Sub(a, b) => a.replace(v, with) - b.replace(v, with),
            Expr::Mul(a, b) => a.replace(v, with) * b.replace(v, with),
            Expr::Div(a, b) => a.replace(v, with) / b.replace(v, with),
            Expr::Pow(a, b) => Expr::pow(a.replace(v, with), b.replace(v, with)),
            Expr::Call(f, a) => Expr::call(*f, a.replace(v, with)),
        }
    }

    pub fn diff(&self, v: Var) -> Expr {
        if !self.depends_on(v) {
            return Expr::Num(0.0);
        }
        match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(w) => Expr::Num(if *w == v { 1.0 } else { 0.0 }),
            Expr::Neg(a) => -a.diff(v),
            Expr::Add(a, b) => a.diff(v) + b.diff(v),
            Expr::Sub(a, b) => a.diff(v) - b.diff(v),
            Expr::Mul(a, b) => a.diff(v) * (**b).clone() + (**a).clone() * b.diff(v),
            Expr::Div(a, b) => {
                let num = a.diff(v) * (**b).clone() - (**a).clone() * b.diff(v);
                num / Expr::pow((**b).clone(), Expr::Num(2.0))
            }
            Expr::Pow(a, b) => {
                let (a, b) = (a.as_ref(), b.as_ref());
                if !b.depends_on(v) {
                    b.clone() * Expr::pow(a.clone(), b.clone() - Expr::Num(1.0)) * a.diff(v)
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a)
                    let inner = b.diff(v) * Expr::call(Func::Ln, a.clone())
                        + b.clone() * a.diff(v) / a.clone();
                    self.clone() * inner
                }
            }
            Expr::Call(f, a) => {
                let inner = a.diff(v);
                let a = (**a).clone();
                let outer = match f {
                    Func::Sin => Expr::cos(a),
                    Func::Cos => -Expr::sin(a),
                    Func::Exp => Expr::exp(a),
                    Func::Sqrt => Expr::Num(0.5) / Expr::call(Func::Sqrt, a),
                    Func::Ln => Expr::Num(1.0) / a,
                };
                outer * inner
            }
        }
    }

    pub fn diff_n(&self, v: Var, order: usize) -> Expr {
        (0..order).fold(self.clone(), |e, _| e.diff(v))
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(_) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if *v < 0.0 => 3,
            _ => 5,
        }
    }
}

impl ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Num(a), Expr::Num(b)) => Expr::Num(a + b),
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => b,
            (a, b) => Expr::Add(Box::new(a), Box::new(b)),
        }
    }
}

impl ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Num(a), Expr::Num(b)) => Expr::Num(a - b),
            (a, b) if b.is_zero() => a,
            (a, b) if a.is_zero() => -b,
            (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
        }
    }
}

impl ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Num(a), Expr::Num(b)) => Expr::Num(a * b),
            (a, b) if a.is_zero() || b.is_zero() => Expr::Num(0.0),
            (Expr::Num(a), b) if a == 1.0 => b,
            (a, Expr::Num(b)) if b == 1.0 => a,
            (Expr::Num(a), b) if a == -1.0 => -b,
            (a, Expr::Num(b)) if b == -1.0 => -a,
            (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
        }
    }
}

impl ops::Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        match (self, rhs) {
            (Expr::Num(a), Expr::Num(b)) => Expr::Num(a / b),
            (a, b) if a.is_zero() && !b.is_zero() => Expr::Num(0.0),
            (a, Expr::Num(b)) if b == 1.0 => a,
            (a, b) => Expr::Div(Box::new(a), Box::new(b)),
        }
    }
}

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        match self {
            Expr::Num(a) => Expr::Num(-a),
            Expr::Neg(a) => *a,
            a => Expr::Neg(Box::new(a)),
        }
    }
}

impl From<f64> for Expr {
    fn from(v: f64) -> Self {
        Expr::Num(v)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Var::T => f.write_str("t"),
            Var::Tau => f.write_str("tau"),
            Var::X(0) => f.write_str("x"),
            Var::X(1) => f.write_str("y"),
            Var::X(2) => f.write_str("z"),
            Var::X(i) => write!(f, "x{}", i + 1),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let wrap = |f: &mut fmt::Formatter<'_>, e: &Expr, min: u8| -> fmt::Result {
            if e.precedence() < min {
                write!(f, "({e})")
            } else {
                write!(f, "{e}")
            }
        };
        match self {
            Expr::Num(v) if *v < 0.0 => write!(f, "-{:?}", -v),
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => {
                f.write_str("-")?;
                wrap(f, a, 4)
            }
            Expr::Add(a, b) => {
                wrap(f, a, 1)?;
                f.write_str(" + ")?;
                wrap(f, b, 2)
            }
            Expr::Sub(a, b) => {
                wrap(f, a, 1)?;
                f.write_str(" - ")?;
                wrap(f, b, 2)
            }
            Expr::Mul(a, b) => {
                wrap(f, a, 2)?;
                f.write_str("*")?;
                wrap(f, b, 3)
            }
            Expr::Div(a, b) => {
                wrap(f, a, 2)?;
                f.write_str("/")?;
                wrap(f, b, 4)
            }
            Expr::Pow(a, b) => {
                wrap(f, a, 5)?;
                f.write_str("^")?;
                wrap(f, b, 4)
            }
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

impl std::str::FromStr for Expr {
    type Err = ParseError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

struct Parser<'a> {
    src: &'a str,
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let tokens = tokenize(src)?;
        Ok(Parser { src, tokens, pos: 0 })
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        let offset = self
            .tokens
            .get(self.pos)
            .map(|(o, _)| *o)
            .unwrap_or(self.src.len());
        ParseError {
            message: message.into(),
            offset,
            source_text: self.src.to_string(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn parse_all(mut self) -> Result<Expr, ParseError> {
        if self.tokens.is_empty() {
            return Err(self.error("empty expression"));
        }
        let e = self.expr()?;
        if self.pos < self.tokens.len() {
            return Err(self.error("unexpected trailing input"));
        }
        Ok(e)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Token::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Token::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => {
                        self.pos -= 1;
                        Err(self.error("expected `)`"))
                    }
                }
            }
            Some(Token::Ident(name)) => {
                if let Some(func) = function_named(&name) {
                    if self.next() != Some(Token::LParen) {
                        self.pos -= 1;
                        return Err(self.error(format!("expected `(` after `{name}`")));
                    }
                    let arg = self.expr()?;
                    if self.next() != Some(Token::RParen) {
                        self.pos -= 1;
                        return Err(self.error("expected `)`"));
                    }
                    return Ok(Expr::Call(func, Box::new(arg)));
                }
                match name.as_str() {
                    "t" => Ok(Expr::Var(Var::T)),
                    "tau" | "τ" => Ok(Expr::Var(Var::Tau)),
                    "x" | "x1" => Ok(Expr::Var(Var::X(0))),
                    "y" | "x2" => Ok(Expr::Var(Var::X(1))),
                    "z" | "x3" => Ok(Expr::Var(Var::X(2))),
                    "pi" | "π" => Ok(Expr::Num(PI)),
                    "e" => Ok(Expr::Num(E)),
                    _ => {
                        self.pos -= 1;
                        Err(self.error(format!("unknown identifier `{name}`")))
                    }
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected a number, identifier or `(`"))
            }
        }
    }
}

fn function_named(name: &str) -> Option<Func> {
    Some(match name {
        "sin" => Func::Sin,
        "cos" => Func::Cos,
        "exp" => Func::Exp,
        "sqrt" => Func::Sqrt,
        "ln" | "log" => Func::Ln,
        _ => return None,
    })
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ParseError> {
    let err = |offset: usize, message: &str| ParseError {
        message: message.to_string(),
        offset,
        source_text: src.to_string(),
    };
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (off, c) = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '0'..='9' | '.' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_ascii_digit() || chars[i].1 == '.') {
                    i += 1;
                }
                // exponent only when followed by a digit (optionally signed)
                if i < chars.len() && matches!(chars[i].1, 'e' | 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].1.is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].1.is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let end = chars.get(i).map(|(o, _)| *o).unwrap_or(src.len());
                let text = &src[chars[start].0..end];
                let v: f64 = text.parse().map_err(|_| err(off, "malformed number"))?;
                out.push((off, Token::Num(v)));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].1.is_alphanumeric() || chars[i].1 == '_') {
                    i += 1;
                }
                let end = chars.get(i).map(|(o, _)| *o).unwrap_or(src.len());
                out.push((off, Token::Ident(src[chars[start].0..end].to_string())));
            }
            '+' | '-' | '*' | '/' | '^' => {
                out.push((off, Token::Op(c)));
                i += 1;
            }
            '−' => {
                out.push((off, Token::Op('-')));
                i += 1;
            }
            '·' | '×' => {
                out.push((off, Token::Op('*')));
                i += 1;
            }
            '(' => {
                out.push((off, Token::LParen));
                i += 1;
            }
            ')' => {
                out.push((off, Token::RParen));
                i += 1;
            }
            _ => return Err(err(off, &format!("unexpected character `{c}`"))),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn p(s: &str) -> Expr {
        Expr::parse(s).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(p("1 + 2*3").eval_t(0.0), 7.0);
        assert_eq!(p("2^3^2").eval_t(0.0), 512.0);
        assert_eq!(p("-2^2").eval_t(0.0), -4.0);
        assert_eq!(p("8/2/2").eval_t(0.0), 2.0);
        assert_eq!(p("1 - 2 - 3").eval_t(0.0), -4.0);
    }

    #[test]
    fn identifiers_and_constants() {
        let e = p("sin(pi*x/2) + t*tau + y");
        let v = e.eval(&Env {
            t: 2.0,
            tau: 3.0,
            x: &[1.0, 0.5],
        });
        assert_relative_eq!(v, 1.0 + 6.0 + 0.5);
        assert_relative_eq!(p("e").eval_t(0.0), E);
        assert_relative_eq!(p("1.5e-3*2").eval_t(0.0), 3e-3);
        assert_relative_eq!(p("2*e").eval_t(0.0), 2.0 * E);
        assert_eq!(p("x2").space_dim(), 2);
    }

    #[test]
    fn parse_errors_point_at_offender() {
        let e = Expr::parse("1 + foo(2)").unwrap_err();
        assert_eq!(e.offset, 4);
        assert!(Expr::parse("").is_err());
        assert!(Expr::parse("(1 + 2").is_err());
        assert!(Expr::parse("sin 2").is_err());
        assert!(Expr::parse("1 $ 2").is_err());
    }

    #[test]
    fn symbolic_derivatives() {
        let e = p("exp(-t)*(1 + t/2)");
        let d = e.diff(Var::T);
        // d/dt = e^{-t}(1/2 - 1 - t/2)
        for t in [0.0, 0.7, 2.3] {
            assert_relative_eq!(d.eval_t(t), (-t).exp() * (-0.5 - t / 2.0), epsilon = 1e-14);
        }
        let s = p("sqrt(t)*ln(t) + t^t");
        let ds = s.diff(Var::T);
        let t: f64 = 1.7;
        let expected = 0.5 / t.sqrt() * t.ln() + t.sqrt() / t + t.powf(t) * (t.ln() + 1.0);
        assert_relative_eq!(ds.eval_t(t), expected, epsilon = 1e-13);
        assert!(p("sin(x)").diff(Var::T).is_zero());
    }

    #[test]
    fn constant_folding_keeps_trees_small() {
        assert_eq!(p("3*t").diff(Var::T), Expr::Num(3.0));
        assert_eq!(p("t^2").diff_n(Var::T, 3), Expr::Num(0.0));
    }

    #[test]
    fn display_round_trips() {
        for s in ["-(t - 1)^2/3", "sin(2*tau)*exp(-t) - -1.5", "x*(3.141592653589793 - x)", "2^-t"] {
            let e = p(s);
            let back = p(&e.to_string());
            for (t, tau, x) in [(0.3, 1.1, 0.2), (2.0, -0.4, 1.3)] {
                let env = Env { t, tau, x: &[x] };
                assert_relative_eq!(e.eval(&env), back.eval(&env), epsilon = 1e-14);
            }
        }
    }

    proptest! {
        #[test]
        fn derivative_matches_central_difference(a in -2.0..2.0f64, b in -2.0..2.0f64, t in 0.1..3.0f64) {
            let e = Expr::parse(&format!("({a})*sin({b}*t)*exp(t/3) + t^3/({b}*{b} + 1)")).unwrap();
            let d = e.diff(Var::T).eval_t(t);
            let h = 1e-5;
            let fd = (e.eval_t(t + h) - e.eval_t(t - h)) / (2.0 * h);
            prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()));
        }
    }
}
