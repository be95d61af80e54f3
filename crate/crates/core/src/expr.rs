//! Expression trees for Plebanski functions and their text format.
//!
//! Grammar (whitespace-insensitive, `#` starts a comment):
//!
//! ```text
//! sum    := term (("+" | "-") term)*
//! term   := unary (("*" | "/") unary)*
//! unary  := ("-" | "+") unary | power
//! power  := atom ("^" unary)?
//! atom   := number | "i" | "pi" | var | func "(" sum ")" | "(" sum ")"
//! var    := "z" digits | "t" digits
//! func   := "exp" | "log"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so
//! `-t1^2` is `-(t1^2)`. Divisions of constants are folded, which is how
//! rational literals such as `1/6` enter.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    /// Base coordinate `z_{k+1}`.
    Z(usize),
    /// Fiber coordinate `theta_{k+1}`.
    Theta(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(Complex64),
    Var(Var),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
}

impl Expr {
    pub fn zero() -> Self {
        Expr::Const(Complex64::new(0.0, 0.0))
    }

    pub fn constant(c: Complex64) -> Self {
        Expr::Const(c)
    }

    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    fn neg(a: Expr) -> Self {
        match a {
            Expr::Const(c) => Expr::Const(-c),
            a => Expr::Neg(Box::new(a)),
        }
    }

    fn binary(op: char, a: Expr, b: Expr) -> Self {
        if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
            let folded = match op {
                '+' => Some(x + y),
                '-' => Some(x - y),
                '*' => Some(x * y),
                '/' if y.norm() != 0.0 => Some(x / y),
                '^' if y.im == 0.0 && y.re.fract() == 0.0 && y.re.abs() <= 64.0 && (y.re >= 0.0 || x.norm() != 0.0) => {
                    Some(x.powi(y.re as i32))
                }
                '^' if x.norm() != 0.0 => Some(x.powc(*y)),
                _ => None,
            };
            if let Some(c) = folded {
                return Expr::Const(c);
            }
        }
        let (a, b) = (Box::new(a), Box::new(b));
        match op {
            '+' => Expr::Add(a, b),
            '-' => Expr::Sub(a, b),
            '*' => Expr::Mul(a, b),
            '/' => Expr::Div(a, b),
            '^' => Expr::Pow(a, b),
            _ => unreachable!("unknown operator {op}"),
        }
    }

    /// Visit every variable occurring in the tree.
    pub fn for_each_var(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) => a.for_each_var(f),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
        }
    }

    pub fn depends_on_theta(&self) -> bool {
        let mut found = false;
        self.for_each_var(&mut |v| found |= matches!(v, Var::Theta(_)));
        found
    }

    /// Largest variable index (zero-based) of either kind, if any.
    pub fn max_index(&self) -> Option<usize> {
        let mut m: Option<usize> = None;
        self.for_each_var(&mut |v| {
            let k = match v {
                Var::Z(k) | Var::Theta(k) => k,
            };
            m = Some(m.map_or(k, |x| x.max(k)));
        });
        m
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Const(c) if c.norm() == 0.0)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.im == 0.0 => write!(f, "{}", c.re),
            Expr::Const(c) => write!(f, "({}+{}*i)", c.re, c.im),
            Expr::Var(Var::Z(k)) => write!(f, "z{}", k + 1),
            Expr::Var(Var::Theta(k)) => write!(f, "t{}", k + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a}^{b})"),
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn lex(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let mut last = (1, 1);
    for (li, raw) in src.lines().enumerate() {
        let line = li + 1;
        let text = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        };
        let chars: Vec<char> = text.chars().collect();
        let mut k = 0;
        while k < chars.len() {
            let c = chars[k];
            let column = k + 1;
            if c.is_whitespace() {
                k += 1;
                continue;
            }
            let tok = if c.is_ascii_digit() || c == '.' {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_digit() || chars[k] == '.') {
                    k += 1;
                }
                // exponent part, e.g. 1.5e-3
                if k < chars.len() && (chars[k] == 'e' || chars[k] == 'E') {
                    let mut j = k + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        while j < chars.len() && chars[j].is_ascii_digit() {
                            j += 1;
                        }
                        k = j;
                    }
                }
                let s: String = chars[start..k].iter().collect();
                let v: f64 = s
                    .parse()
                    .map_err(|_| parse_error(line, column, format!("malformed number '{s}'")))?;
                out.push(Token {
                    tok: Tok::Num(v),
                    line,
                    column,
                });
                continue;
            } else if c.is_ascii_alphabetic() || c == '_' {
                let start = k;
                while k < chars.len() && (chars[k].is_ascii_alphanumeric() || chars[k] == '_') {
                    k += 1;
                }
                out.push(Token {
                    tok: Tok::Ident(chars[start..k].iter().collect()),
                    line,
                    column,
                });
                continue;
            } else {
                match c {
                    '+' | '-' | '*' | '/' | '^' => Tok::Op(c),
                    '(' => Tok::LParen,
                    ')' => Tok::RParen,
                    _ => return Err(parse_error(line, column, format!("unexpected character '{c}'"))),
                }
            };
            out.push(Token { tok, line, column });
            k += 1;
        }
        last = (line, chars.len() + 1);
    }
    out.push(Token {
        tok: Tok::End,
        line: last.0,
        column: last.1,
    });
    Ok(out)
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut acc = self.term()?;
        while let Tok::Op(op @ ('+' | '-')) = self.peek().tok {
            self.next();
            let rhs = self.term()?;
            acc = Expr::binary(op, acc, rhs);
        }
        Ok(acc)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut acc = self.unary()?;
        while let Tok::Op(op @ ('*' | '/')) = self.peek().tok {
            self.next();
            let rhs = self.unary()?;
            acc = Expr::binary(op, acc, rhs);
        }
        Ok(acc)
    }

    fn unary(&mut self) -> Result<Expr> {
        match self.peek().tok {
            Tok::Op('-') => {
                self.next();
                Ok(Expr::neg(self.unary()?))
            }
            Tok::Op('+') => {
                self.next();
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Tok::Op('^') = self.peek().tok {
            self.next();
            let exp = self.unary()?;
            return Ok(Expr::binary('^', base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let t = self.next();
        match t.tok {
            Tok::Num(v) => Ok(Expr::Const(Complex64::new(v, 0.0))),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => self.ident(&name, t.line, t.column),
            Tok::Op(c) => Err(parse_error(t.line, t.column, format!("unexpected operator '{c}'"))),
            Tok::RParen => Err(parse_error(t.line, t.column, "unexpected ')'")),
            Tok::End => Err(parse_error(t.line, t.column, "unexpected end of input")),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        let t = self.next();
        match t.tok {
            Tok::RParen => Ok(()),
            _ => Err(parse_error(t.line, t.column, "expected ')'")),
        }
    }

    fn ident(&mut self, name: &str, line: usize, column: usize) -> Result<Expr> {
        match name {
            "i" => return Ok(Expr::Const(Complex64::new(0.0, 1.0))),
            "pi" => return Ok(Expr::Const(Complex64::new(std::f64::consts::PI, 0.0))),
            "exp" | "log" => {
                let t = self.next();
                if t.tok != Tok::LParen {
                    return Err(parse_error(t.line, t.column, format!("expected '(' after {name}")));
                }
                let arg = self.sum()?;
                self.expect_rparen()?;
                return Ok(if let Expr::Const(c) = arg {
                    Expr::Const(if name == "exp" { c.exp() } else { c.ln() })
                } else if name == "exp" {
                    Expr::Exp(Box::new(arg))
                } else {
                    Expr::Log(Box::new(arg))
                });
            }
            _ => {}
        }
        let (head, digits) = name.split_at(1);
        let index = digits.parse::<usize>().ok().filter(|&k| k >= 1);
        match (head, index) {
            ("z", Some(k)) => Ok(Expr::Var(Var::Z(k - 1))),
            ("t", Some(k)) => Ok(Expr::Var(Var::Theta(k - 1))),
            _ => Err(parse_error(line, column, format!("unknown identifier '{name}'"))),
        }
    }
}

/// Parse an expression; comment text after `#` is ignored.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = lex(src)?;
    let mut p = Parser { toks, pos: 0 };
    if p.peek().tok == Tok::End {
        let t = p.peek();
        return Err(parse_error(t.line, t.column, "empty expression"));
    }
    let e = p.sum()?;
    let t = p.peek();
    if t.tok != Tok::End {
        return Err(parse_error(t.line, t.column, "unexpected trailing input"));
    }
    Ok(e)
}

/// Arithmetic backend for [`evaluate`].
pub(crate) trait Domain {
    type T: Clone;
    fn constant(&self, c: Complex64) -> Self::T;
    fn var(&self, v: Var) -> Self::T;
    fn value(&self, t: &Self::T) -> Complex64;
    fn add(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn sub(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn mul(&self, a: &Self::T, b: &Self::T) -> Self::T;
    fn neg(&self, a: &Self::T) -> Self::T;
    /// Highest derivative order the backend carries.
    fn order(&self) -> usize;
    /// Apply a univariate function given its derivatives at `value(a)`.
    fn apply(&self, a: &Self::T, derivs: &[Complex64]) -> Self::T;
}

/// Evaluate `e`, refusing points where a denominator, logarithm argument
/// or non-integer power base has modulus at most `guard`.
pub(crate) fn evaluate<D: Domain>(e: &Expr, dom: &D, guard: f64) -> Result<D::T> {
    let order = dom.order();
    Ok(match e {
        Expr::Const(c) => dom.constant(*c),
        Expr::Var(v) => dom.var(*v),
        Expr::Neg(a) => dom.neg(&evaluate(a, dom, guard)?),
        Expr::Add(a, b) => dom.add(&evaluate(a, dom, guard)?, &evaluate(b, dom, guard)?),
        Expr::Sub(a, b) => dom.sub(&evaluate(a, dom, guard)?, &evaluate(b, dom, guard)?),
        Expr::Mul(a, b) => dom.mul(&evaluate(a, dom, guard)?, &evaluate(b, dom, guard)?),
        Expr::Div(a, b) => {
            let num = evaluate(a, dom, guard)?;
            let den = evaluate(b, dom, guard)?;
            let v = dom.value(&den);
            check_pole(v, guard, "denominator")?;
            let inv = dom.apply(&den, &power_derivs(v, Complex64::new(-1.0, 0.0), order));
            dom.mul(&num, &inv)
        }
        Expr::Exp(a) => {
            let x = evaluate(a, dom, guard)?;
            let ex = dom.value(&x).exp();
            dom.apply(&x, &vec![ex; order + 1])
        }
        Expr::Log(a) => {
            let x = evaluate(a, dom, guard)?;
            let v = dom.value(&x);
            check_pole(v, guard, "logarithm argument")?;
            let mut d = power_derivs(v, Complex64::new(-1.0, 0.0), order.saturating_sub(1));
            d.insert(0, v.ln());
            d.truncate(order + 1);
            dom.apply(&x, &d)
        }
        Expr::Pow(a, b) => {
            let base = evaluate(a, dom, guard)?;
            match b.as_ref() {
                Expr::Const(c) if c.im == 0.0 && c.re.fract() == 0.0 && c.re.abs() <= 64.0 => {
                    let k = c.re as i64;
                    if k >= 0 {
                        int_power(dom, &base, k as u64)
                    } else {
                        let v = dom.value(&base);
                        check_pole(v, guard, "negative power base")?;
                        dom.apply(&base, &power_derivs(v, *c, order))
                    }
                }
                Expr::Const(c) => {
                    let v = dom.value(&base);
                    check_pole(v, guard, "fractional power base")?;
                    dom.apply(&base, &power_derivs(v, *c, order))
                }
                exponent => {
                    // a^b = exp(b log a)
                    let v = dom.value(&base);
                    check_pole(v, guard, "power base")?;
                    let mut d = power_derivs(v, Complex64::new(-1.0, 0.0), order.saturating_sub(1));
                    d.insert(0, v.ln());
                    d.truncate(order + 1);
                    let log_a = dom.apply(&base, &d);
                    let prod = dom.mul(&evaluate(exponent, dom, guard)?, &log_a);
                    let ex = dom.value(&prod).exp();
                    dom.apply(&prod, &vec![ex; order + 1])
                }
            }
        }
    })
}

fn check_pole(v: Complex64, guard: f64, what: &str) -> Result<()> {
    if !(v.norm() > guard) {
        return Err(Error::PoleHit(format!("{what} has modulus {:e}", v.norm())));
    }
    Ok(())
}

fn int_power<D: Domain>(dom: &D, base: &D::T, mut k: u64) -> D::T {
    let mut result = dom.constant(Complex64::new(1.0, 0.0));
    let mut sq = base.clone();
    let mut first = true;
    while k > 0 {
        if k & 1 == 1 {
            result = if first { sq.clone() } else { dom.mul(&result, &sq) };
            first = false;
        }
        k >>= 1;
        if k > 0 {
            sq = dom.mul(&sq, &sq);
        }
    }
    result
}

/// Derivatives `d^k/dx^k x^c` at `x = v` for `k = 0..=order`.
fn power_derivs(v: Complex64, c: Complex64, order: usize) -> Vec<Complex64> {
    let integral = c.im == 0.0 && c.re.fract() == 0.0;
    (0..=order)
        .map(|k| {
            let mut coeff = Complex64::new(1.0, 0.0);
            for m in 0..k {
                coeff *= c - m as f64;
            }
            let e = c - k as f64;
            let p = if integral { v.powi(e.re as i32) } else { (e * v.ln()).exp() };
            coeff * p
        })
        .collect()
}

/// Plain complex evaluation at given coordinates.
pub(crate) struct PointDomain<'a> {
    pub z: &'a [Complex64],
    pub theta: &'a [Complex64],
}

impl Domain for PointDomain<'_> {
    type T = Complex64;
    fn constant(&self, c: Complex64) -> Complex64 {
        c
    }
    fn var(&self, v: Var) -> Complex64 {
        match v {
            Var::Z(k) => self.z[k],
            Var::Theta(k) => self.theta[k],
        }
    }
    fn value(&self, t: &Complex64) -> Complex64 {
        *t
    }
    fn add(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a + b
    }
    fn sub(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a - b
    }
    fn mul(&self, a: &Complex64, b: &Complex64) -> Complex64 {
        a * b
    }
    fn neg(&self, a: &Complex64) -> Complex64 {
        -a
    }
    fn order(&self) -> usize {
        0
    }
    fn apply(&self, _a: &Complex64, derivs: &[Complex64]) -> Complex64 {
        derivs[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str, z: &[f64], t: &[f64]) -> Result<Complex64> {
        let e = parse(src)?;
        let z: Vec<Complex64> = z.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let t: Vec<Complex64> = t.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        evaluate(&e, &PointDomain { z: &z, theta: &t }, 1e-12)
    }

    #[test]
    fn precedence() {
        assert_eq!(eval("-t1^2", &[], &[3.0]).unwrap().re, -9.0);
        assert_eq!(eval("2^3^2", &[], &[]).unwrap().re, 512.0);
        assert_eq!(eval("1 - 2 - 3", &[], &[]).unwrap().re, -4.0);
        assert_eq!(eval("12/2/3", &[], &[]).unwrap().re, 2.0);
        assert_eq!(eval("t1^-1", &[], &[4.0]).unwrap().re, 0.25);
    }

    #[test]
    fn rational_literal_folds() {
        assert_eq!(parse("1/6").unwrap(), Expr::Const(Complex64::new(1.0 / 6.0, 0.0)));
        assert_eq!(parse("-(2)").unwrap(), Expr::Const(Complex64::new(-2.0, 0.0)));
    }

    #[test]
    fn constants_and_functions() {
        let v = eval("exp(i*pi)", &[], &[]).unwrap();
        assert!((v + 1.0).norm() < 1e-15);
        let v = eval("log(z1) + 1.5e-1", &[std::f64::consts::E], &[]).unwrap();
        assert!((v.re - 1.15).abs() < 1e-15);
    }

    #[test]
    fn comments_are_ignored() {
        let src = "# header\n  z1 * t1 # trailing\n# more\n";
        assert_eq!(eval(src, &[2.0], &[5.0]).unwrap().re, 10.0);
    }

    #[test]
    fn errors_carry_position() {
        match parse("z1 +\n  t1 * $") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (2, 8)),
            other => panic!("unexpected {other:?}"),
        }
        match parse("z1 + (t1") {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column), (1, 9)),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("q3"), Err(Error::Parse { column: 1, .. })));
        assert!(matches!(parse("z0"), Err(Error::Parse { .. })));
        assert!(matches!(parse("# nothing"), Err(Error::Parse { .. })));
    }

    #[test]
    fn pole_detection() {
        assert!(matches!(eval("1/z1", &[0.0], &[]), Err(Error::PoleHit(_))));
        assert!(matches!(eval("log(t1)", &[], &[0.0]), Err(Error::PoleHit(_))));
        assert!(matches!(eval("z1^-2", &[0.0], &[]), Err(Error::PoleHit(_))));
        assert!(eval("z1^2", &[0.0], &[]).is_ok());
    }

    #[test]
    fn structure_queries() {
        let e = parse("z3 * exp(z1)").unwrap();
        assert!(!e.depends_on_theta());
        assert_eq!(e.max_index(), Some(2));
        assert!(parse("t2").unwrap().depends_on_theta());
    }
}
