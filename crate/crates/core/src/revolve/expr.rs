//! Small expression language for closed-form profiles and implicit functions.
//!
//! Grammar (usual precedence, `^` right-associative):
//!
//! ```text
//! expr  := term (('+' | '-') term)*
//! term  := unary (('*' | '/') unary)*
//! unary := '-' unary | power
//! power := atom ('^' unary)?
//! atom  := number | 'x' | 'y' | 'z' | 'pi' | func '(' expr ')' | '(' expr ')'
//! func  := sin | cos | tan | exp | ln | sqrt
//! ```

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("unexpected character '{ch}' at {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of expression")]
    UnexpectedEnd,
    #[error("unexpected token '{token}' at {pos}")]
    UnexpectedToken { token: String, pos: usize },
    #[error("unknown identifier '{0}'")]
    UnknownIdent(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Ln,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "ln" | "log" => Func::Ln,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// 0 = x, 1 = y, 2 = z
    Var(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

use Expr::*;

fn c(v: f64) -> Expr {
    Const(v)
}

fn b(e: Expr) -> Box<Expr> {
    Box::new(e)
}

// Constructors with constant folding; keeps derivative trees small.
fn add(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Const(a), Const(b_)) => c(a + b_),
        (Const(a), _) if *a == 0.0 => r,
        (_, Const(b_)) if *b_ == 0.0 => l,
        _ => Add(b(l), b(r)),
    }
}

fn sub(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Const(a), Const(b_)) => c(a - b_),
        (_, Const(b_)) if *b_ == 0.0 => l,
        (Const(a), _) if *a == 0.0 => neg(r),
        _ => Sub(b(l), b(r)),
    }
}

fn mul(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Const(a), Const(b_)) => c(a * b_),
        (Const(a), _) | (_, Const(a)) if *a == 0.0 => c(0.0),
        (Const(a), _) if *a == 1.0 => r,
        (_, Const(b_)) if *b_ == 1.0 => l,
        _ => Mul(b(l), b(r)),
    }
}

fn div(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Const(a), Const(b_)) => c(a / b_),
        (Const(a), _) if *a == 0.0 => c(0.0),
        (_, Const(b_)) if *b_ == 1.0 => l,
        _ => Div(b(l), b(r)),
    }
}

fn neg(e: Expr) -> Expr {
    match e {
        Const(a) => c(-a),
        Neg(inner) => *inner,
        other => Neg(b(other)),
    }
}

fn pow(l: Expr, r: Expr) -> Expr {
    match (&l, &r) {
        (Const(a), Const(b_)) => c(a.powf(*b_)),
        (_, Const(b_)) if *b_ == 1.0 => l,
        (_, Const(b_)) if *b_ == 0.0 => c(1.0),
        _ => Pow(b(l), b(r)),
    }
}

fn call(f: Func, e: Expr) -> Expr {
    match e {
        Const(a) => c(f.apply(a)),
        other => Call(f, b(other)),
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let tokens = lex(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some((tok, pos)) => Err(ExprError::UnexpectedToken { token: tok.to_string(), pos }),
        }
    }

    pub fn eval(&self, vars: &[f64; 3]) -> f64 {
        match self {
            Const(v) => *v,
            Var(i) => vars[*i],
            Neg(e) => -e.eval(vars),
            Add(l, r) => l.eval(vars) + r.eval(vars),
            Sub(l, r) => l.eval(vars) - r.eval(vars),
            Mul(l, r) => l.eval(vars) * r.eval(vars),
            Div(l, r) => l.eval(vars) / r.eval(vars),
            Pow(l, r) => {
                let base = l.eval(vars);
                match **r {
                    Const(k) if k == k.trunc() && k.abs() < 64.0 => base.powi(k as i32),
                    _ => base.powf(r.eval(vars)),
                }
            }
            Call(f, e) => f.apply(e.eval(vars)),
        }
    }

    pub fn eval_x(&self, x: f64) -> f64 {
        self.eval(&[x, 0.0, 0.0])
    }

    /// Symbolic partial derivative with respect to variable `var`.
    pub fn derivative(&self, var: usize) -> Expr {
        match self {
            Const(_) => c(0.0),
            Var(i) => c(if *i == var { 1.0 } else { 0.0 }),
            Neg(e) => neg(e.derivative(var)),
            Add(l, r) => add(l.derivative(var), r.derivative(var)),
            Sub(l, r) => sub(l.derivative(var), r.derivative(var)),
            Mul(l, r) => add(
                mul(l.derivative(var), (**r).clone()),
                mul((**l).clone(), r.derivative(var)),
            ),
            Div(l, r) => div(
                sub(
                    mul(l.derivative(var), (**r).clone()),
                    mul((**l).clone(), r.derivative(var)),
                ),
                pow((**r).clone(), c(2.0)),
            ),
            Pow(l, r) => {
                if let Const(k) = **r {
                    mul(mul(c(k), pow((**l).clone(), c(k - 1.0))), l.derivative(var))
                } else {
                    // d(u^v) = u^v (v' ln u + v u'/u)
                    mul(
                        self.clone(),
                        add(
                            mul(r.derivative(var), call(Func::Ln, (**l).clone())),
                            div(mul((**r).clone(), l.derivative(var)), (**l).clone()),
                        ),
                    )
                }
            }
            Call(f, e) => {
                let inner = (**e).clone();
                let outer = match f {
                    Func::Sin => call(Func::Cos, inner),
                    Func::Cos => neg(call(Func::Sin, inner)),
                    Func::Tan => div(c(1.0), pow(call(Func::Cos, inner), c(2.0))),
                    Func::Exp => call(Func::Exp, inner),
                    Func::Ln => div(c(1.0), inner),
                    Func::Sqrt => div(c(0.5), call(Func::Sqrt, inner)),
                };
                mul(outer, e.derivative(var))
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Const(v) => write!(f, "{v}"),
            Var(i) => write!(f, "{}", ["x", "y", "z"][*i]),
            Neg(e) => write!(f, "(-{e})"),
            Add(l, r) => write!(f, "({l} + {r})"),
            Sub(l, r) => write!(f, "({l} - {r})"),
            Mul(l, r) => write!(f, "({l} * {r})"),
            Div(l, r) => write!(f, "({l} / {r})"),
            Pow(l, r) => write!(f, "({l} ^ {r})"),
            Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => write!(f, "{s}"),
            Tok::Op(ch) => write!(f, "{ch}"),
        }
    }
}

fn lex(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let ch = chars[i];
        if ch.is_whitespace() {
            i += 1;
        } else if ch.is_ascii_digit() || ch == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text: String = chars[start..i].iter().collect();
            let v = text.parse().map_err(|_| ExprError::UnexpectedToken { token: text.clone(), pos: start })?;
            out.push((Tok::Num(v), start));
        } else if ch.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((Tok::Ident(chars[start..i].iter().collect()), start));
        } else if "+-*/^()".contains(ch) {
            out.push((Tok::Op(ch), i));
            i += 1;
        } else {
            return Err(ExprError::UnexpectedChar { ch, pos: i });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<(&Tok, usize)> {
        self.tokens.get(self.pos).map(|(t, p)| (t, *p))
    }

    fn next(&mut self) -> Result<(Tok, usize), ExprError> {
        let t = self.tokens.get(self.pos).cloned().ok_or(ExprError::UnexpectedEnd)?;
        self.pos += 1;
        Ok(t)
    }

    fn eat(&mut self, op: char) -> bool {
        if let Some((Tok::Op(c), _)) = self.peek() {
            if *c == op {
                self.pos += 1;
                return true;
            }
        }
        false
    }

    fn expect(&mut self, op: char) -> Result<(), ExprError> {
        let (t, pos) = self.next()?;
        if t == Tok::Op(op) {
            Ok(())
        } else {
            Err(ExprError::UnexpectedToken { token: t.to_string(), pos })
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.term()?;
        loop {
            if self.eat('+') {
                e = Add(b(e), b(self.term()?));
            } else if self.eat('-') {
                e = Sub(b(e), b(self.term()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.unary()?;
        loop {
            if self.eat('*') {
                e = Mul(b(e), b(self.unary()?));
            } else if self.eat('/') {
                e = Div(b(e), b(self.unary()?));
            } else {
                return Ok(e);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        if self.eat('-') {
            return Ok(Neg(b(self.unary()?)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat('^') {
            return Ok(Pow(b(base), b(self.unary()?)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let (t, pos) = self.next()?;
        match t {
            Tok::Num(v) => Ok(Const(v)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => match name.as_str() {
                "x" => Ok(Var(0)),
                "y" => Ok(Var(1)),
                "z" => Ok(Var(2)),
                "pi" => Ok(Const(std::f64::consts::PI)),
                _ => {
                    let f = Func::from_name(&name).ok_or(ExprError::UnknownIdent(name))?;
                    self.expect('(')?;
                    let e = self.expr()?;
                    self.expect(')')?;
                    Ok(Call(f, b(e)))
                }
            },
            other => Err(ExprError::UnexpectedToken { token: other.to_string(), pos }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn parses_profile() {
        let e = Expr::parse("(2+cos(pi*x))/4").unwrap();
        for x in [-1.0, -0.3, 0.0, 0.7] {
            assert!((e.eval_x(x) - (2.0 + (PI * x).cos()) / 4.0).abs() < 1e-15);
        }
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = Expr::parse("-2^2 + 3*4 - 6/3").unwrap();
        assert_eq!(e.eval_x(0.0), -4.0 + 12.0 - 2.0);
        let e = Expr::parse("2^3^2").unwrap();
        assert_eq!(e.eval_x(0.0), 512.0);
        let e = Expr::parse("1.5e-1*x").unwrap();
        assert!((e.eval_x(2.0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(Expr::parse("foo(x)"), Err(ExprError::UnknownIdent(_))));
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd)));
        assert!(matches!(Expr::parse("1 # 2"), Err(ExprError::UnexpectedChar { .. })));
        assert!(matches!(Expr::parse("(1 2"), Err(ExprError::UnexpectedToken { .. })));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let sources = [
            "(2+cos(pi*x))/4",
            "0.3 + 0.1*sin(pi*x)^2",
            "exp(0.2*cos(pi*x)) / (1 + x^2)",
            "sqrt(1 + 0.5*sin(pi*x))*x^3",
            "(1+x^2)^(0.5*x)",
        ];
        for src in sources {
            let e = Expr::parse(src).unwrap();
            let d1 = e.derivative(0);
            let d2 = d1.derivative(0);
            for x in [-0.8, -0.1, 0.35, 0.9] {
                let h = 1e-5;
                let fd1 = (e.eval_x(x + h) - e.eval_x(x - h)) / (2.0 * h);
                let fd2 = (d1.eval_x(x + h) - d1.eval_x(x - h)) / (2.0 * h);
                assert!((d1.eval_x(x) - fd1).abs() < 1e-7, "{src} d1 at {x}");
                assert!((d2.eval_x(x) - fd2).abs() < 1e-6, "{src} d2 at {x}");
            }
        }
    }

    #[test]
    fn three_variables() {
        let e = Expr::parse("cos(pi*x) + cos(pi*y) + cos(pi*z)").unwrap();
        assert!((e.eval(&[0.5, 0.5, 0.5])).abs() < 1e-15);
        let dz = e.derivative(2);
        assert!((dz.eval(&[0.0, 0.0, 0.5]) + PI).abs() < 1e-14);
    }
}
