//! Expression language for user-defined objectives.
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := NUMBER | VAR | '(' expr ')' | '-' factor | FUNC '(' expr (',' expr)* ')'
//! FUNC   := abs | max | min | sin | cos | exp | log | sqrt
//! VAR    := 'x' DIGITS            (1-based)
//! ```

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;

use super::function::{estimate_lipschitz, GradStatus, LipschitzConstant, LipschitzFunction};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Abs,
    Max,
    Min,
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "abs" => Func::Abs,
            "max" => Func::Max,
            "min" => Func::Min,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Abs => "abs",
            Func::Max => "max",
            Func::Min => "min",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    fn is_variadic(self) -> bool {
        matches!(self, Func::Max | Func::Min)
    }

    /// Kernels with kinks have no symbolic derivative.
    fn is_smooth(self) -> bool {
        !matches!(self, Func::Abs | Func::Max | Func::Min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Expr::Num(c) => *c,
            Expr::Var(i) => x[*i],
            Expr::Neg(a) => -a.eval(x),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                }
            }
            Expr::Call(f, args) => match f {
                Func::Max => args.iter().map(|a| a.eval(x)).fold(f64::NEG_INFINITY, f64::max),
                Func::Min => args.iter().map(|a| a.eval(x)).fold(f64::INFINITY, f64::min),
                _ => {
                    let a = args[0].eval(x);
                    match f {
                        Func::Abs => a.abs(),
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Log => a.ln(),
                        Func::Sqrt => a.sqrt(),
                        Func::Max | Func::Min => unreachable!(),
                    }
                }
            },
        }
    }

    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(a) => a.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }

    pub fn is_smooth(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::Var(_) => true,
            Expr::Neg(a) => a.is_smooth(),
            Expr::Bin(_, a, b) => a.is_smooth() && b.is_smooth(),
            Expr::Call(f, args) => f.is_smooth() && args.iter().all(Expr::is_smooth),
        }
    }

    /// Symbolic partial derivative; None if a nonsmooth kernel is involved.
    pub fn derivative(&self, var: usize) -> Option<Expr> {
        Some(match self {
            Expr::Num(_) => Expr::Num(0.0),
            Expr::Var(i) => Expr::Num(if *i == var { 1.0 } else { 0.0 }),
            Expr::Neg(a) => neg(a.derivative(var)?),
            Expr::Bin(op, a, b) => {
                let (da, db) = (a.derivative(var)?, b.derivative(var)?);
                let (a, b) = ((**a).clone(), (**b).clone());
                match op {
                    BinOp::Add => add(da, db),
                    BinOp::Sub => sub(da, db),
                    BinOp::Mul => add(mul(da, b), mul(a, db)),
                    BinOp::Div => div(sub(mul(da, b.clone()), mul(a, db)), mul(b.clone(), b)),
                }
            }
            Expr::Call(f, args) => {
                if !f.is_smooth() {
                    return None;
                }
                let a = args[0].clone();
                let da = a.derivative(var)?;
                let outer = match f {
                    Func::Sin => Expr::Call(Func::Cos, vec![a]),
                    Func::Cos => neg(Expr::Call(Func::Sin, vec![a])),
                    Func::Exp => Expr::Call(Func::Exp, vec![a]),
                    Func::Log => div(Expr::Num(1.0), a),
                    Func::Sqrt => div(Expr::Num(1.0), mul(Expr::Num(2.0), Expr::Call(Func::Sqrt, vec![a]))),
                    Func::Abs | Func::Max | Func::Min => unreachable!(),
                };
                mul(outer, da)
            }
        })
    }
}

fn is_num(e: &Expr, c: f64) -> bool {
    matches!(e, Expr::Num(v) if *v == c)
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(c) => Expr::Num(-c),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&a, 0.0) => b,
        _ if is_num(&b, 0.0) => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x + y),
        _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&b, 0.0) => a,
        _ if is_num(&a, 0.0) => neg(b),
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x - y),
        _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&a, 0.0) || is_num(&b, 0.0) => Expr::Num(0.0),
        _ if is_num(&a, 1.0) => b,
        _ if is_num(&b, 1.0) => a,
        (Expr::Num(x), Expr::Num(y)) => Expr::Num(x * y),
        _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (&a, &b) {
        _ if is_num(&a, 0.0) => Expr::Num(0.0),
        _ if is_num(&b, 1.0) => a,
        _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
    }
}

/// Fully parenthesized; parsing the output reproduces the tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(c) if *c < 0.0 => write!(f, "(-{:?})", -c),
            Expr::Num(c) => write!(f, "{c:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            position: self.pos,
            message: message.into(),
        })
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

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected '{}'", c as char))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(c @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let rhs = self.term()?;
            let op = if c == b'+' { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.factor()?;
        while let Some(c @ (b'*' | b'/')) = self.peek() {
            self.pos += 1;
            let rhs = self.factor()?;
            let op = if c == b'*' { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr> {
        match self.peek() {
            None => self.err("unexpected end of input"),
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.factor()?)))
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(c) => self.err(format!("unexpected character '{}'", c as char)),
        }
    }

    fn number(&mut self) -> Result<Expr> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let mark = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            let digits = self.pos;
            while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if self.pos == digits {
                self.pos = mark;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).unwrap_or("");
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Num(v)),
            _ => {
                self.pos = start;
                self.err(format!("malformed number `{text}`"))
            }
        }
    }

    fn identifier(&mut self) -> Result<Expr> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if let Some(func) = Func::from_name(name) {
            self.expect(b'(')?;
            let mut args = vec![self.expr()?];
            while self.peek() == Some(b',') {
                self.pos += 1;
                args.push(self.expr()?);
            }
            self.expect(b')')?;
            if !func.is_variadic() && args.len() != 1 {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("{} takes exactly one argument", func.name()),
                });
            }
            if func.is_variadic() && args.len() < 2 {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("{} takes at least two arguments", func.name()),
                });
            }
            return Ok(Expr::Call(func, args));
        }
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit()) {
                if let Ok(k) = digits.parse::<usize>() {
                    if k >= 1 {
                        return Ok(Expr::Var(k - 1));
                    }
                }
            }
        }
        Err(Error::UnknownIdentifier(name.to_string()))
    }
}

/// Parses an expression over variables x1..x{dim}.
pub fn parse_expr(source: &str, dim: usize) -> Result<Expr> {
    let mut p = Parser {
        src: source.as_bytes(),
        pos: 0,
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return p.err("trailing input");
    }
    if let Some(k) = e.max_var() {
        if k >= dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: k + 1,
            });
        }
    }
    Ok(e)
}

/// Parsed expression compiled into a [`LipschitzFunction`].
#[derive(Debug, Clone)]
pub struct ParsedFunction {
    pub expr: Expr,
    pub function: LipschitzFunction,
}

/// Parses `source` into a Lipschitz function of dimension `dim`.
///
/// The gradient handle is synthesized symbolically when every kernel is
/// smooth and left absent otherwise. Without a supplied constant, L is
/// estimated by sampling the unit ball around the origin and flagged as
/// non-certified.
pub fn parse_function(source: &str, dim: usize, lipschitz: Option<f64>) -> Result<ParsedFunction> {
    parse_function_near(source, dim, lipschitz, &DVector::zeros(dim))
}

/// As [`parse_function`], estimating L around `center` when needed.
pub fn parse_function_near(
    source: &str,
    dim: usize,
    lipschitz: Option<f64>,
    center: &DVector<f64>,
) -> Result<ParsedFunction> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if center.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: center.len(),
        });
    }
    let expr = parse_expr(source, dim)?;
    let shared = Arc::new(expr.clone());
    let e = shared.clone();
    let placeholder = LipschitzConstant {
        value: lipschitz.unwrap_or(f64::NAN),
        certified: lipschitz.is_some(),
    };
    let mut f = LipschitzFunction::new(dim, source.trim(), placeholder, move |x| e.eval(x));
    if expr.is_smooth() {
        let partials: Option<Vec<Expr>> = (0..dim).map(|j| expr.derivative(j)).collect();
        if let Some(partials) = partials {
            let partials = Arc::new(partials);
            f = f.with_grad(move |x, out| {
                for (o, d) in out.iter_mut().zip(partials.iter()) {
                    *o = d.eval(x);
                }
                GradStatus::Defined
            });
        }
    }
    if lipschitz.is_none() {
        let est = estimate_lipschitz(&f, center, 1.0, 0x11_95_c4);
        f = f.with_lipschitz(est);
    } else if let Some(l) = lipschitz {
        if !(l > 0.0 && l.is_finite()) {
            return Err(Error::InvalidArgument(format!("Lipschitz constant must be positive, got {l}")));
        }
    }
    Ok(ParsedFunction { expr, function: f })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn abs_has_no_gradient() {
        let p = parse_function("abs(x1)", 1, Some(1.0)).unwrap();
        assert_eq!(p.function.eval(&[0.5]), 0.5);
        assert!(!p.function.has_grad());
    }

    #[test]
    fn polynomial_gradient() {
        let p = parse_function("x1*x1 + x2*x2", 2, Some(4.0)).unwrap();
        assert_eq!(p.function.eval(&[1.0, 1.0]), 2.0);
        let g = p.function.grad_at(&DVector::from_vec(vec![1.0, 1.0])).unwrap();
        assert_eq!(g.as_slice(), &[2.0, 2.0]);
    }

    #[test]
    fn max_evaluates() {
        let p = parse_function("max(x1, x2)", 2, Some(1.0)).unwrap();
        assert_eq!(p.function.eval(&[3.0, 5.0]), 5.0);
    }

    #[test]
    fn errors() {
        assert!(matches!(parse_expr("x1 + * 2", 1), Err(Error::Syntax { position: 5, .. })));
        assert!(matches!(parse_expr("foo(x1)", 1), Err(Error::UnknownIdentifier(n)) if n == "foo"));
        assert!(matches!(parse_expr("x0", 1), Err(Error::UnknownIdentifier(_))));
        assert_eq!(
            parse_expr("x3", 2),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        );
        assert!(matches!(parse_expr("sin(x1, x1)", 1), Err(Error::Syntax { .. })));
        assert!(matches!(parse_expr("(x1", 1), Err(Error::Syntax { .. })));
    }

    #[test]
    fn precedence_and_unary_minus() {
        let e = parse_expr("-x1 * 2 + 3 / 4 - -1", 1).unwrap();
        assert_eq!(e.eval(&[5.0]), -10.0 + 0.75 + 1.0);
        let e = parse_expr("2e-1 * 1.5E+1", 1).unwrap();
        assert!((e.eval(&[0.0]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn smooth_kernels_differentiate() {
        let p = parse_function("sin(x1) * exp(x2) + log(x1) + sqrt(x2)", 2, Some(10.0)).unwrap();
        let x = DVector::from_vec(vec![0.7, 1.3]);
        let g = p.function.grad_at(&x).unwrap();
        let h = 1e-6;
        for j in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let fd = (p.function.eval_at(&xp) - p.function.eval_at(&xm)) / (2.0 * h);
            assert!((fd - g[j]).abs() < 1e-7 * (1.0 + g[j].abs()));
        }
    }

    #[test]
    fn estimated_constant_is_flagged() {
        let p = parse_function("max(x1, x2)", 2, None).unwrap();
        let l = p.function.lipschitz();
        assert!(!l.certified);
        assert!(l.value >= 1.0 && l.value <= 1.5 * 2f64.sqrt());
    }

    fn arb_expr(dim: usize) -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0.0f64..100.0).prop_map(Expr::Num),
            (0..dim).prop_map(Expr::Var),
        ];
        leaf.prop_recursive(4, 32, 3, |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone(), 0..4usize).prop_map(|(a, b, k)| {
                    let op = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div][k];
                    Expr::Bin(op, Box::new(a), Box::new(b))
                }),
                (inner.clone(), 0..6usize).prop_map(|(a, k)| {
                    let f = [Func::Abs, Func::Sin, Func::Cos, Func::Exp, Func::Log, Func::Sqrt][k];
                    Expr::Call(f, vec![a])
                }),
                prop::collection::vec(inner, 2..4).prop_map(|args| Expr::Call(Func::Max, args)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_parse_round_trip(e in arb_expr(3), pts in prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), 1..20)) {
            let printed = e.to_string();
            let back = parse_expr(&printed, 3).unwrap();
            prop_assert_eq!(&back, &e);
            for p in pts {
                let (a, b) = (e.eval(&p), back.eval(&p));
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
