//! Coefficient expressions `V(x)`.
//!
//! A deliberately small grammar: numeric literals, `pi`, the coordinates `x1`
//! and `x2`, the operators `+ - * / ^`, and the functions `exp`, `log`,
//! `sqrt`, `sin`, `cos` and `abs2(x)` (the squared Euclidean norm).
//!
//! Precedence, loosest to tightest: `+ -`, `* /`, unary `-`, `^`.
//! `^` is right associative, so `-x1^2` is `-(x1^2)` and `2^3^2` is `2^9`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("empty expression")]
    Empty,
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error in `{subexpr}`: {message}")]
    Domain { subexpr: String, message: String },
    #[error("V is not positive ({value:e}) at ({x}, {y})")]
    NonPositive { x: f64, y: f64, value: f64 },
    #[error("non-finite evaluation point")]
    NonFinitePoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Func {
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Pi,
    X1,
    X2,
    /// `abs2(x) = x1^2 + x2^2`
    Abs2,
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesized form; parsing it back yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Pi => f.write_str("pi"),
            Expr::X1 => f.write_str("x1"),
            Expr::X2 => f.write_str("x2"),
            Expr::Abs2 => f.write_str("abs2(x)"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Bin(op, a, b) => {
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {sym} {b})")
            }
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

impl Expr {
    pub fn eval(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        let val = match self {
            Expr::Num(v) => *v,
            Expr::Pi => std::f64::consts::PI,
            Expr::X1 => p[0],
            Expr::X2 => p[1],
            Expr::Abs2 => p[0] * p[0] + p[1] * p[1],
            Expr::Neg(e) => -e.eval(p)?,
            Expr::Bin(op, a, b) => {
                let (a_val, b_val) = (a.eval(p)?, b.eval(p)?);
                match op {
                    BinOp::Add => a_val + b_val,
                    BinOp::Sub => a_val - b_val,
                    BinOp::Mul => a_val * b_val,
                    BinOp::Div => {
                        if b_val == 0.0 {
                            return Err(self.domain("division by zero"));
                        }
                        a_val / b_val
                    }
                    BinOp::Pow => a_val.powf(b_val),
                }
            }
            Expr::Call(func, e) => {
                let x = e.eval(p)?;
                match func {
                    Func::Exp => x.exp(),
                    Func::Log => {
                        if x <= 0.0 {
                            return Err(self.domain(&format!("log of nonpositive value {x:e}")));
                        }
                        x.ln()
                    }
                    Func::Sqrt => {
                        if x < 0.0 {
                            return Err(self.domain(&format!("sqrt of negative value {x:e}")));
                        }
                        x.sqrt()
                    }
                    Func::Sin => x.sin(),
                    Func::Cos => x.cos(),
                }
            }
        };
        if val.is_finite() {
            Ok(val)
        } else {
            Err(self.domain("non-finite result"))
        }
    }

    fn domain(&self, message: &str) -> EvalError {
        EvalError::Domain {
            subexpr: self.to_string(),
            message: message.to_string(),
        }
    }
}

/// A parsed coefficient function.
#[derive(Debug, Clone, PartialEq)]
pub struct VExpr {
    ast: Expr,
    source: String,
}

impl VExpr {
    pub fn parse(src: &str) -> Result<VExpr, ParseError> {
        let ast = Parser::new(src).parse()?;
        Ok(VExpr {
            ast,
            source: src.to_string(),
        })
    }

    pub fn constant(c: f64) -> VExpr {
        VExpr {
            ast: Expr::Num(c),
            source: format!("{c:?}"),
        }
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        if !(p[0].is_finite() && p[1].is_finite()) {
            return Err(EvalError::NonFinitePoint);
        }
        self.ast.eval(p)
    }

    /// `log V(p)`, failing when V is not strictly positive.
    pub fn log_eval(&self, p: [f64; 2]) -> Result<f64, EvalError> {
        let value = self.eval(p)?;
        if value <= 0.0 {
            return Err(EvalError::NonPositive {
                x: p[0],
                y: p[1],
                value,
            });
        }
        Ok(value.ln())
    }

    /// Central-difference gradient of `log V` with step `h`.
    pub fn grad_log(&self, p: [f64; 2], h: f64) -> Result<[f64; 2], EvalError> {
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = p;
            let mut minus = p;
            plus[i] += h;
            minus[i] -= h;
            *gi = (self.log_eval(plus)? - self.log_eval(minus)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// Central-difference gradient of `V` itself.
    pub fn grad(&self, p: [f64; 2], h: f64) -> Result<[f64; 2], EvalError> {
        let mut g = [0.0; 2];
        for (i, gi) in g.iter_mut().enumerate() {
            let mut plus = p;
            let mut minus = p;
            plus[i] += h;
            minus[i] -= h;
            *gi = (self.eval(plus)? - self.eval(minus)?) / (2.0 * h);
        }
        Ok(g)
    }

    /// True when the expression does not depend on the angle, checked by
    /// sampling rotations of a few radii.
    pub fn is_radial(&self) -> bool {
        for &r in &[0.1, 0.37, 0.5, 0.81, 0.95] {
            let Ok(reference) = self.eval([r, 0.0]) else {
                return false;
            };
            for k in 1..8 {
                let theta = k as f64 * std::f64::consts::FRAC_PI_4;
                let Ok(val) = self.eval([r * theta.cos(), r * theta.sin()]) else {
                    return false;
                };
                if (val - reference).abs() > 1e-12 * reference.abs().max(1.0) {
                    return false;
                }
            }
        }
        true
    }

    /// Rejects V unless it exceeds `1e-12` at every sample point.
    pub fn check_positive<I>(&self, points: I) -> Result<(), EvalError>
    where
        I: IntoIterator<Item = [f64; 2]>,
    {
        for p in points {
            let value = self.eval(p)?;
            if value <= 1e-12 {
                return Err(EvalError::NonPositive {
                    x: p[0],
                    y: p[1],
                    value,
                });
            }
        }
        Ok(())
    }
}

impl fmt::Display for VExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
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

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
        }
    }

    fn parse(mut self) -> Result<Expr, ParseError> {
        if self.src.trim().is_empty() {
            return Err(ParseError::Empty);
        }
        self.advance()?;
        let e = self.expr()?;
        if self.tok != Tok::End {
            return Err(self.syntax("unexpected trailing input"));
        }
        Ok(e)
    }

    fn syntax(&self, message: &str) -> ParseError {
        ParseError::Syntax {
            offset: self.tok_start,
            message: message.to_string(),
        }
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos];
        self.tok = match c {
            b'0'..=b'9' | b'.' => {
                let start = self.pos;
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                    self.pos += 1;
                }
                if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                    let mut look = self.pos + 1;
                    if look < bytes.len() && (bytes[look] == b'+' || bytes[look] == b'-') {
                        look += 1;
                    }
                    if look < bytes.len() && bytes[look].is_ascii_digit() {
                        self.pos = look;
                        while self.pos < bytes.len() && bytes[self.pos].is_ascii_digit() {
                            self.pos += 1;
                        }
                    }
                }
                let text = &self.src[start..self.pos];
                let value: f64 = text.parse().map_err(|_| ParseError::Syntax {
                    offset: start,
                    message: format!("malformed number `{text}`"),
                })?;
                Tok::Num(value)
            }
            b'a'..=b'z' | b'A'..=b'Z' | b'_' => {
                let start = self.pos;
                while self.pos < bytes.len() && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_') {
                    self.pos += 1;
                }
                Tok::Ident(self.src[start..self.pos].to_string())
            }
            b'+' | b'-' | b'*' | b'/' | b'^' => {
                self.pos += 1;
                Tok::Op(c as char)
            }
            b'(' => {
                self.pos += 1;
                Tok::LParen
            }
            b')' => {
                self.pos += 1;
                Tok::RParen
            }
            _ => {
                return Err(ParseError::Syntax {
                    offset: self.pos,
                    message: format!("unexpected character `{}`", self.src[self.pos..].chars().next().unwrap_or('?')),
                })
            }
        };
        Ok(())
    }

    fn expect(&mut self, want: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok != want {
            return Err(self.syntax(&format!("expected {what}")));
        }
        self.advance()
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.tok == Tok::Op('-') {
            self.advance()?;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Op('^') {
            self.advance()?;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(Expr::Num(v))
            }
            Tok::LParen => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let offset = self.tok_start;
                self.advance()?;
                match name.as_str() {
                    "x1" => Ok(Expr::X1),
                    "x2" => Ok(Expr::X2),
                    "pi" => Ok(Expr::Pi),
                    "abs2" => {
                        self.expect(Tok::LParen, "`(` after abs2")?;
                        match &self.tok {
                            Tok::Ident(arg) if arg == "x" => self.advance()?,
                            _ => return Err(self.syntax("abs2 takes the point `x` as its argument")),
                        }
                        self.expect(Tok::RParen, "`)`")?;
                        Ok(Expr::Abs2)
                    }
                    _ => match Func::from_name(&name) {
                        Some(func) => {
                            self.expect(Tok::LParen, "`(` after function name")?;
                            let arg = self.expr()?;
                            self.expect(Tok::RParen, "`)`")?;
                            Ok(Expr::Call(func, Box::new(arg)))
                        }
                        None => Err(ParseError::UnknownIdentifier { offset, name }),
                    },
                }
            }
            Tok::End => Err(self.syntax("unexpected end of input")),
            Tok::Op(c) => Err(self.syntax(&format!("unexpected operator `{c}`"))),
            Tok::RParen => Err(self.syntax("unexpected `)`")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(src: &str) -> VExpr {
        VExpr::parse(src).unwrap()
    }

    #[test]
    fn parses_constant() {
        assert_eq!(v("1").ast(), &Expr::Num(1.0));
    }

    #[test]
    fn parses_structure() {
        let expected = Expr::Call(
            Func::Exp,
            Box::new(Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Num(2.0)),
                Box::new(Expr::Bin(BinOp::Sub, Box::new(Expr::Num(1.0)), Box::new(Expr::Abs2))),
            )),
        );
        assert_eq!(v("exp(2*(1 - abs2(x)))").ast(), &expected);
    }

    #[test]
    fn precedence() {
        assert_eq!(v("-x1^2").eval([3.0, 0.0]).unwrap(), -9.0);
        assert_eq!(v("2^3^2").eval([0.0, 0.0]).unwrap(), 512.0);
        assert_eq!(v("1 - 2 - 3").eval([0.0, 0.0]).unwrap(), -4.0);
        assert_eq!(v("8 / 2 / 2").eval([0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(v("2 * -3").eval([0.0, 0.0]).unwrap(), -6.0);
        assert_eq!(v("x1^-1").eval([4.0, 0.0]).unwrap(), 0.25);
        assert_eq!(v("1.5e-1 + 2E1").eval([0.0, 0.0]).unwrap(), 20.15);
    }

    #[test]
    fn syntax_error_offset() {
        assert_eq!(
            VExpr::parse("1 + + 2").unwrap_err(),
            ParseError::Syntax {
                offset: 4,
                message: "unexpected operator `+`".into()
            }
        );
        assert!(matches!(VExpr::parse("exp(1"), Err(ParseError::Syntax { offset: 5, .. })));
        assert!(matches!(VExpr::parse(""), Err(ParseError::Empty)));
        assert!(matches!(VExpr::parse("1 $ 2"), Err(ParseError::Syntax { offset: 2, .. })));
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(
            VExpr::parse("2 * y").unwrap_err(),
            ParseError::UnknownIdentifier {
                offset: 4,
                name: "y".into()
            }
        );
        assert!(matches!(VExpr::parse("tan(x1)"), Err(ParseError::UnknownIdentifier { .. })));
    }

    #[test]
    fn evaluates() {
        assert_eq!(v("1").eval([0.3, 0.4]).unwrap(), 1.0);
        assert!((v("exp(1 - abs2(x))").eval([0.0, 0.0]).unwrap() - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(v("exp(1 - abs2(x))").eval([1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn domain_errors_name_subexpression() {
        match v("1 + log(x1)").eval([-1.0, 0.0]) {
            Err(EvalError::Domain { subexpr, .. }) => assert_eq!(subexpr, "log(x1)"),
            other => panic!("{other:?}"),
        }
        match v("1 / (x1 - x2)").eval([0.5, 0.5]) {
            Err(EvalError::Domain { subexpr, message }) => {
                assert_eq!(subexpr, "(1.0 / (x1 - x2))");
                assert!(message.contains("division by zero"));
            }
            other => panic!("{other:?}"),
        }
        assert!(v("sqrt(x1)").eval([-0.1, 0.0]).is_err());
        assert!(v("1").eval([f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn grad_log_examples() {
        assert_eq!(v("1").grad_log([0.2, -0.7], 1e-5).unwrap(), [0.0, 0.0]);
        let e = v("exp(2*(1-abs2(x)))");
        let g = e.grad_log([0.5, 0.0], 1e-5).unwrap();
        assert!((g[0] + 2.0).abs() < 1e-8, "{g:?}");
        assert!(g[1].abs() < 1e-8);
        let g0 = e.grad_log([0.0, 0.0], 1e-5).unwrap();
        assert!(g0[0].abs() < 1e-10 && g0[1].abs() < 1e-10);
        assert!(matches!(v("x1").grad_log([0.0, 0.0], 1e-3), Err(EvalError::NonPositive { .. })));
    }

    #[test]
    fn grad_log_is_second_order() {
        // log V = sin(x1) + x2 cos(x1) + x1 x2^2 / 3 has gradient
        // (cos x1 - x2 sin x1 + x2^2/3, cos x1 + 2 x1 x2 / 3).
        let e = v("exp(sin(x1) + x2*cos(x1) + x1*x2^2/3)");
        let points: [[f64; 2]; 4] = [[0.1, 0.2], [-0.4, 0.3], [0.6, -0.5], [0.0, 0.8]];
        for p in points {
            let exact = [
                p[0].cos() - p[1] * p[0].sin() + p[1] * p[1] / 3.0,
                p[0].cos() + 2.0 * p[0] * p[1] / 3.0,
            ];
            let err = |h: f64| {
                let g = e.grad_log(p, h).unwrap();
                (g[0] - exact[0]).abs().max((g[1] - exact[1]).abs())
            };
            let (coarse, fine) = (err(2e-2), err(1e-2));
            assert!(coarse / fine >= 3.5, "ratio {} at {p:?}", coarse / fine);
        }
    }

    #[test]
    fn positivity_check() {
        let samples = [[0.0, 0.0], [0.9, 0.0], [0.0, -0.9]];
        assert!(v("exp(abs2(x))").check_positive(samples).is_ok());
        assert!(v("1 - abs2(x)").check_positive([[1.0, 0.0]]).is_err());
    }

    #[test]
    fn radial_detection() {
        assert!(v("exp(2*(1-abs2(x)))").is_radial());
        assert!(v("1").is_radial());
        assert!(!v("exp(x1)").is_radial());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..1000).prop_map(|n| Expr::Num(n as f64 / 8.0)),
            Just(Expr::X1),
            Just(Expr::X2),
            Just(Expr::Abs2),
            Just(Expr::Pi),
        ];
        leaf.prop_recursive(4, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div),
                        Just(BinOp::Pow)
                    ],
                    inner.clone(),
                    inner.clone()
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
                (
                    prop_oneof![
                        Just(Func::Exp),
                        Just(Func::Log),
                        Just(Func::Sqrt),
                        Just(Func::Sin),
                        Just(Func::Cos)
                    ],
                    inner
                )
                    .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
            ]
        })
    }

    proptest! {
        #[test]
        fn round_trip(e in arb_expr()) {
            let printed = e.to_string();
            let reparsed = VExpr::parse(&printed).unwrap();
            prop_assert_eq!(reparsed.ast(), &e);
        }

        #[test]
        fn truncated_inputs_never_panic(e in arb_expr(), cut in 0usize..200) {
            let printed = e.to_string();
            let cut = cut.min(printed.len());
            let _ = VExpr::parse(&printed[..cut]);
        }
    }

    #[test]
    fn truncations_of_valid_expression_are_rejected() {
        let src = "exp(2*(1 - abs2(x))) + sqrt(x1^2 + 1)";
        for cut in 1..src.len() {
            let prefix = &src[..cut];
            if prefix.trim_end() == "exp(2*(1 - abs2(x))) + sqrt(x1^2 + 1)" || prefix.trim_end() == "exp(2*(1 - abs2(x)))" {
                continue;
            }
            assert!(VExpr::parse(prefix).is_err(), "accepted `{prefix}`");
        }
    }
}
