// SPDX-License-Identifier: Apache-2.0

//! A small arithmetic expression language in one variable `x`.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := ('-' | '+') unary | power
//! power  := atom ('^' unary)?          right associative
//! atom   := number | 'x' | 'pi' | 'e'
//!         | ('exp' | 'ln' | 'sin' | 'cos') '(' expr ')'
//!         | '(' expr ')'
//! ```
//!
//! `-x^2` parses as `-(x^2)`. Nesting depth is capped so that adversarial
//! input cannot exhaust the stack.

use std::fmt;

use thiserror::Error;

const MAX_DEPTH: usize = 128;
const MAX_LEN: usize = 16 * 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("unexpected character {ch:?} at offset {pos}")]
    UnexpectedChar { ch: char, pos: usize },
    #[error("unexpected end of input")]
    UnexpectedEnd,
    #[error("unexpected token `{found}` at offset {pos}, expected {expected}")]
    UnexpectedToken {
        found: String,
        pos: usize,
        expected: &'static str,
    },
    #[error("unknown identifier `{0}`")]
    UnknownIdent(String),
    #[error("malformed number `{0}`")]
    BadNumber(String),
    #[error("expression nested deeper than {MAX_DEPTH}")]
    TooDeep,
    #[error("expression longer than {MAX_LEN} bytes")]
    TooLong,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Ln => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        if src.len() > MAX_LEN {
            return Err(ExprError::TooLong);
        }
        let tokens = lex(src)?;
        let mut p = Parser {
            tokens: &tokens,
            pos: 0,
            depth: 0,
        };
        let e = p.expr()?;
        match p.peek() {
            None => Ok(e),
            Some(t) => Err(ExprError::UnexpectedToken {
                found: t.tok.to_string(),
                pos: t.pos,
                expected: "end of input",
            }),
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => x,
            Expr::Neg(e) => -e.eval(x),
            Expr::Call(f, e) => f.apply(e.eval(x)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.eval(x), b.eval(x));
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => pow(a, b),
                }
            }
        }
    }

    /// Whether the expression mentions `x` at all.
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Const(_) => true,
            Expr::Var => false,
            Expr::Neg(e) | Expr::Call(_, e) => e.is_constant(),
            Expr::Bin(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

// Integer exponents go through powi so that (-2)^3 is -8 rather than NaN.
fn pow(a: f64, b: f64) -> f64 {
    if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
        a.powi(b as i32)
    } else {
        a.powf(b)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Const(c) if c.is_sign_negative() => write!(f, "(-{:?})", -c),
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var => f.write_str("x"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => {
                let s = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::Div => "/",
                    BinOp::Pow => "^",
                };
                write!(f, "({a} {s} {b})")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Plus => f.write_str("+"),
            Tok::Minus => f.write_str("-"),
            Tok::Star => f.write_str("*"),
            Tok::Slash => f.write_str("/"),
            Tok::Caret => f.write_str("^"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

struct Spanned {
    tok: Tok,
    pos: usize,
}

fn lex(src: &str) -> Result<Vec<Spanned>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let pos = i;
        let single = match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if let Some(tok) = single {
            out.push(Spanned { tok, pos });
            i += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            // exponent part, e.g. 1e-5 or 2.5E+3
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| ExprError::BadNumber(text.to_string()))?;
            out.push(Spanned {
                tok: Tok::Num(v),
                pos,
            });
        } else if c.is_ascii_alphabetic() || c == b'_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push(Spanned {
                tok: Tok::Ident(src[start..i].to_string()),
                pos,
            });
        } else {
            let ch = src[i..].chars().next().unwrap_or('\u{fffd}');
            return Err(ExprError::UnexpectedChar { ch, pos });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: &'a [Spanned],
    pos: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Spanned> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<&'a Spanned> {
        let t = self.tokens.get(self.pos);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn enter(&mut self) -> Result<(), ExprError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            Err(ExprError::TooDeep)
        } else {
            Ok(())
        }
    }

    fn expect(&mut self, want: Tok, expected: &'static str) -> Result<(), ExprError> {
        match self.next() {
            Some(t) if t.tok == want => Ok(()),
            Some(t) => Err(ExprError::UnexpectedToken {
                found: t.tok.to_string(),
                pos: t.pos,
                expected,
            }),
            None => Err(ExprError::UnexpectedEnd),
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        self.enter()?;
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        self.depth -= 1;
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.unary()?;
        while let Some(t) = self.peek() {
            let op = match t.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        self.enter()?;
        let out = match self.peek().map(|t| &t.tok) {
            Some(Tok::Minus) => {
                self.pos += 1;
                Expr::Neg(Box::new(self.unary()?))
            }
            Some(Tok::Plus) => {
                self.pos += 1;
                self.unary()?
            }
            _ => self.power()?,
        };
        self.depth -= 1;
        Ok(out)
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if matches!(self.peek().map(|t| &t.tok), Some(Tok::Caret)) {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let t = self.next().ok_or(ExprError::UnexpectedEnd)?;
        match &t.tok {
            Tok::Num(v) => Ok(Expr::Const(*v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let func = match name.as_str() {
                    "x" => return Ok(Expr::Var),
                    "pi" => return Ok(Expr::Const(std::f64::consts::PI)),
                    "e" => return Ok(Expr::Const(std::f64::consts::E)),
                    "exp" => Func::Exp,
                    "ln" => Func::Ln,
                    "sin" => Func::Sin,
                    "cos" => Func::Cos,
                    _ => return Err(ExprError::UnknownIdent(name.clone())),
                };
                self.expect(Tok::LParen, "`(` after function name")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            other => Err(ExprError::UnexpectedToken {
                found: other.to_string(),
                pos: t.pos,
                expected: "a number, `x`, a function or `(`",
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(s: &str, x: f64) -> f64 {
        Expr::parse(s).unwrap().eval(x)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0), 7.0);
        assert_eq!(ev("2 ^ 3 ^ 2", 0.0), 512.0);
        assert_eq!(ev("-x^2", 3.0), -9.0);
        assert_eq!(ev("8 / 4 / 2", 0.0), 1.0);
        assert_eq!(ev("10 - 3 - 2", 0.0), 5.0);
        assert_eq!(ev("2^-1", 0.0), 0.5);
        assert_eq!(ev("(-2)^3", 0.0), -8.0);
    }

    #[test]
    fn functions_and_constants() {
        assert!((ev("exp(ln(x))", 2.5) - 2.5).abs() < 1e-15);
        assert!((ev("sin(pi/2) + cos(0)", 0.0) - 2.0).abs() < 1e-15);
        assert!((ev("e", 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("3/(1+x)", 2.0), 1.0);
        assert_eq!(ev("1e-3 * 2E+3", 0.0), 2.0);
    }

    #[test]
    fn error_positions() {
        assert!(matches!(
            Expr::parse("1 + $"),
            Err(ExprError::UnexpectedChar { ch: '$', pos: 4 })
        ));
        assert_eq!(Expr::parse("1 +"), Err(ExprError::UnexpectedEnd));
        assert!(matches!(
            Expr::parse("foo(x)"),
            Err(ExprError::UnknownIdent(_))
        ));
        assert!(matches!(
            Expr::parse("1 2"),
            Err(ExprError::UnexpectedToken { pos: 2, .. })
        ));
        assert!(matches!(Expr::parse("1..2"), Err(ExprError::BadNumber(_))));
        assert!(matches!(
            Expr::parse("exp x"),
            Err(ExprError::UnexpectedToken { .. })
        ));
    }

    #[test]
    fn depth_limit() {
        let deep = "(".repeat(1_000) + "x" + &")".repeat(1_000);
        assert_eq!(Expr::parse(&deep), Err(ExprError::TooDeep));
        let minus = "-".repeat(1_000) + "x";
        assert_eq!(Expr::parse(&minus), Err(ExprError::TooDeep));
    }

    #[test]
    fn constant_detection() {
        assert!(Expr::parse("2*pi + exp(1)").unwrap().is_constant());
        assert!(!Expr::parse("2 + 0*x").unwrap().is_constant());
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![(-5.0f64..5.0).prop_map(Expr::Const), Just(Expr::Var),];
        leaf.prop_recursive(5, 32, 2, |inner| {
            prop_oneof![
                inner.clone().prop_map(|e| Expr::Neg(Box::new(e))),
                (
                    prop_oneof![Just(Func::Exp), Just(Func::Sin), Just(Func::Cos)],
                    inner.clone()
                )
                    .prop_map(|(f, e)| Expr::Call(f, Box::new(e))),
                (
                    prop_oneof![
                        Just(BinOp::Add),
                        Just(BinOp::Sub),
                        Just(BinOp::Mul),
                        Just(BinOp::Div)
                    ],
                    inner.clone(),
                    inner
                )
                    .prop_map(|(op, a, b)| Expr::Bin(op, Box::new(a), Box::new(b))),
            ]
        })
    }

    proptest! {
        // Display output is fully parenthesized, so it must parse back to a
        // tree that evaluates identically.
        #[test]
        fn display_reparses(e in arb_expr(), x in -3.0f64..3.0) {
            let printed = e.to_string();
            let back = Expr::parse(&printed).unwrap();
            let (a, b) = (e.eval(x), back.eval(x));
            prop_assert!(a == b || (a.is_nan() && b.is_nan()), "{printed}: {a} vs {b}");
        }

        #[test]
        fn never_panics(s in "\\PC{0,64}") {
            let _ = Expr::parse(&s);
        }
    }
}
