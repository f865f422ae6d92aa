//! Small expression language for scalar coefficient fields.
//!
//! Grammar (whitespace ignored):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers: `x1`, `x2` (with `x` an alias of `x1`), constants `pi` and `e`,
//! functions `tanh`, `sin`, `cos`, `exp`, `sqrt`, `ln`. Exponents of `^` that are
//! integer literals are expanded exactly; other exponents require a positive base.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Func(Func, Box<Expr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Tanh,
    Sin,
    Cos,
    Exp,
    Sqrt,
    Ln,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Tanh => "tanh",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Ln => "ln",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Tanh => v.tanh(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Exp => v.exp(),
            Func::Sqrt => v.sqrt(),
            Func::Ln => v.ln(),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, src };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "unexpected trailing input at offset {} in {src:?}",
                p.tokens[p.pos].1
            )));
        }
        Ok(e.simplify())
    }

    /// Evaluate at `x = (x1, x2)`.
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, b) => {
                let base = a.eval(x);
                match integer_exponent(b) {
                    Some(k) => base.powi(k),
                    None => base.powf(b.eval(x)),
                }
            }
            Expr::Func(f, a) => f.apply(a.eval(x)),
        }
    }

    /// Evaluate a function of a single variable `x1`.
    pub fn eval1(&self, x: f64) -> f64 {
        self.eval([x, 0.0])
    }

    pub fn uses_var(&self, i: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(j) => *j == i,
            Expr::Neg(a) | Expr::Func(_, a) => a.uses_var(i),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses_var(i) || b.uses_var(i)
            }
        }
    }

    /// Symbolic partial derivative with respect to variable `i` (0 for x1, 1 for x2).
    pub fn diff(&self, i: usize) -> Expr {
        use Expr::*;
        let d = match self {
            Num(_) => Num(0.0),
            Var(j) => Num(if *j == i { 1.0 } else { 0.0 }),
            Neg(a) => Neg(Box::new(a.diff(i))),
            Add(a, b) => Add(Box::new(a.diff(i)), Box::new(b.diff(i))),
            Sub(a, b) => Sub(Box::new(a.diff(i)), Box::new(b.diff(i))),
            Mul(a, b) => Add(
                Box::new(Mul(Box::new(a.diff(i)), b.clone())),
                Box::new(Mul(a.clone(), Box::new(b.diff(i)))),
            ),
            Div(a, b) => Div(
                Box::new(Sub(
                    Box::new(Mul(Box::new(a.diff(i)), b.clone())),
                    Box::new(Mul(a.clone(), Box::new(b.diff(i)))),
                )),
                Box::new(Pow(b.clone(), Box::new(Num(2.0)))),
            ),
            Pow(a, b) => {
                if !b.uses_var(i) {
                    // d(a^c) = c a^(c-1) a'
                    Mul(
                        Box::new(Mul(
                            b.clone(),
                            Box::new(Pow(a.clone(), Box::new(Sub(b.clone(), Box::new(Num(1.0)))))),
                        )),
                        Box::new(a.diff(i)),
                    )
                } else {
                    // d(a^b) = a^b (b' ln a + b a'/a), valid for a > 0
                    let ln_a = Func(self::Func::Ln, a.clone());
                    Mul(
                        Box::new(self.clone()),
                        Box::new(Add(
                            Box::new(Mul(Box::new(b.diff(i)), Box::new(ln_a))),
                            Box::new(Div(Box::new(Mul(b.clone(), Box::new(a.diff(i)))), a.clone())),
                        )),
                    )
                }
            }
            Func(f, a) => {
                let inner = a.diff(i);
                let outer = match f {
                    self::Func::Tanh => Sub(
                        Box::new(Num(1.0)),
                        Box::new(Pow(Box::new(self.clone()), Box::new(Num(2.0)))),
                    ),
                    self::Func::Sin => Func(self::Func::Cos, a.clone()),
                    self::Func::Cos => Neg(Box::new(Func(self::Func::Sin, a.clone()))),
                    self::Func::Exp => self.clone(),
                    self::Func::Sqrt => Div(Box::new(Num(0.5)), Box::new(self.clone())),
                    self::Func::Ln => Div(Box::new(Num(1.0)), a.clone()),
                };
                Mul(Box::new(outer), Box::new(inner))
            }
        };
        d.simplify()
    }

    /// Constant folding and removal of trivial identities.
    pub fn simplify(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | Var(_) => self.clone(),
            Neg(a) => match a.simplify() {
                Num(v) => Num(-v),
                Neg(b) => *b,
                s => Neg(Box::new(s)),
            },
            Add(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x + y),
                (Num(z), s) | (s, Num(z)) if z == 0.0 => s,
                (s, t) => Add(Box::new(s), Box::new(t)),
            },
            Sub(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x - y),
                (s, Num(z)) if z == 0.0 => s,
                (Num(z), s) if z == 0.0 => Neg(Box::new(s)).simplify(),
                (s, t) => Sub(Box::new(s), Box::new(t)),
            },
            Mul(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x * y),
                (Num(z), _) | (_, Num(z)) if z == 0.0 => Num(0.0),
                (Num(o), s) | (s, Num(o)) if o == 1.0 => s,
                (s, t) => Mul(Box::new(s), Box::new(t)),
            },
            Div(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(x / y),
                (Num(z), _) if z == 0.0 => Num(0.0),
                (s, Num(o)) if o == 1.0 => s,
                (s, t) => Div(Box::new(s), Box::new(t)),
            },
            Pow(a, b) => match (a.simplify(), b.simplify()) {
                (Num(x), Num(y)) => Num(if y.fract() == 0.0 && y.abs() < 64.0 {
                    x.powi(y as i32)
                } else {
                    x.powf(y)
                }),
                (_, Num(z)) if z == 0.0 => Num(1.0),
                (s, Num(o)) if o == 1.0 => s,
                (s, t) => Pow(Box::new(s), Box::new(t)),
            },
            Func(f, a) => match a.simplify() {
                Num(v) => Num(f.apply(v)),
                s => Func(*f, Box::new(s)),
            },
        }
    }
}

fn integer_exponent(b: &Expr) -> Option<i32> {
    match b {
        Expr::Num(v) if v.fract() == 0.0 && v.abs() < 64.0 => Some(*v as i32),
        _ => None,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a}^{b})"),
            Expr::Func(g, a) => write!(f, "{}({a})", g.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut k = 0;
    while k < chars.len() {
        let (off, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_ascii_digit() || chars[k].1 == '.') {
                k += 1;
            }
            if k < chars.len() && (chars[k].1 == 'e' || chars[k].1 == 'E') {
                let save = k;
                k += 1;
                if k < chars.len() && (chars[k].1 == '+' || chars[k].1 == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].1.is_ascii_digit() {
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                } else {
                    k = save;
                }
            }
            let text: String = chars[start..k].iter().map(|p| p.1).collect();
            let v: f64 = text
                .parse()
                .map_err(|_| Error::Parse(format!("bad number {text:?} at offset {off}")))?;
            out.push((Tok::Num(v), off));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_ascii_alphanumeric() || chars[k].1 == '_') {
                k += 1;
            }
            let text: String = chars[start..k].iter().map(|p| p.1).collect();
            out.push((Tok::Ident(text), off));
        } else if "+-*/^()".contains(c) {
            out.push((Tok::Op(c), off));
            k += 1;
        } else {
            return Err(Error::Parse(format!("unexpected character {c:?} at offset {off}")));
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
    src: &'a str,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.0)
    }

    fn err(&self, what: &str) -> Error {
        let off = self.tokens.get(self.pos).map(|t| t.1).unwrap_or(self.src.len());
        Error::Parse(format!("{what} at offset {off} in {:?}", self.src))
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Op(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat('+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat('-') {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat('*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat('/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let exp = self.unary()?;
            Ok(Expr::Pow(Box::new(base), Box::new(exp)))
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self.peek().cloned().ok_or_else(|| self.err("unexpected end of input"))?;
        match tok {
            Tok::Num(v) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Op('(') => {
                self.pos += 1;
                let e = self.expr()?;
                if !self.eat(')') {
                    return Err(self.err("expected ')'"));
                }
                Ok(e)
            }
            Tok::Ident(name) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "tanh" => Some(Func::Tanh),
                    "sin" => Some(Func::Sin),
                    "cos" => Some(Func::Cos),
                    "exp" => Some(Func::Exp),
                    "sqrt" => Some(Func::Sqrt),
                    "ln" => Some(Func::Ln),
                    _ => None,
                };
                if let Some(f) = func {
                    if !self.eat('(') {
                        return Err(self.err(&format!("expected '(' after {name}")));
                    }
                    let arg = self.expr()?;
                    if !self.eat(')') {
                        return Err(self.err("expected ')'"));
                    }
                    return Ok(Expr::Func(f, Box::new(arg)));
                }
                match name.as_str() {
                    "x" | "x1" => Ok(Expr::Var(0)),
                    "x2" => Ok(Expr::Var(1)),
                    "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                    "e" => Ok(Expr::Num(std::f64::consts::E)),
                    _ => {
                        self.pos -= 1;
                        Err(self.err(&format!("unknown identifier {name:?}")))
                    }
                }
            }
            Tok::Op(c) => Err(self.err(&format!("unexpected {c:?}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_precedence() {
        let e = Expr::parse("1 + 2*x1^2 - x2/4").unwrap();
        assert!((e.eval([3.0, 8.0]) - (1.0 + 18.0 - 2.0)).abs() < 1e-14);
        let e = Expr::parse("-x^2").unwrap();
        assert_eq!(e.eval([3.0, 0.0]), -9.0);
        let e = Expr::parse("2^-1").unwrap();
        assert_eq!(e.eval([0.0, 0.0]), 0.5);
    }

    #[test]
    fn functions_and_constants() {
        let e = Expr::parse("tanh(x2) + sin(pi*x1) + cos(0) + exp(1) - e + sqrt(4)").unwrap();
        let v = e.eval([0.5, 0.3]);
        assert!((v - (0.3f64.tanh() + 1.0 + 1.0 + 2.0)).abs() < 1e-14);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let srcs = ["x1^3*x2 - 2*x2^2", "tanh(2*x2 - x1)", "exp(-x1^2)*cos(x2)", "1/(1 + x1^2)", "sqrt(1 + x2^2)", "x1^x2"];
        for s in srcs {
            let e = Expr::parse(s).unwrap();
            let p = [0.7, 1.3];
            for i in 0..2 {
                let d = e.diff(i);
                let h = 1e-6;
                let mut a = p;
                let mut b = p;
                a[i] += h;
                b[i] -= h;
                let fd = (e.eval(a) - e.eval(b)) / (2.0 * h);
                assert!((d.eval(p) - fd).abs() < 1e-6, "{s} d{i}: {} vs {fd}", d.eval(p));
            }
        }
    }

    #[test]
    fn rejects_malformed() {
        assert!(Expr::parse("1 + ").is_err());
        assert!(Expr::parse("foo(x)").is_err());
        assert!(Expr::parse("(x1").is_err());
        assert!(Expr::parse("x1 $ 2").is_err());
        assert!(Expr::parse("x1 x2").is_err());
    }
}
