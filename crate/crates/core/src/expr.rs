//! Arithmetic expression language used by open-answer solution programs.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     = product (("+" | "-") product)*
//! product = unary (("*" | "/") unary)*
//! unary   = ("-" | "+") unary | power
//! power   = atom ("^" unary)?
//! atom    = number | name | name "(" sum ")" | "(" sum ")"
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so
//! `-2^2 = -4` and `2^3^2 = 512`. The Unicode signs `×`, `÷` and `−` are
//! accepted as aliases.

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("result is not finite")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sqrt,
    Exp,
    Log,
    Sin,
    Cos,
    Abs,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sqrt" => Func::Sqrt,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sqrt => "sqrt",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> Result<f64, ExprError> {
        match self {
            Func::Sqrt if x < 0.0 => Err(ExprError::Domain(format!("sqrt({x})"))),
            Func::Log if x <= 0.0 => Err(ExprError::Domain(format!("log({x})"))),
            Func::Sqrt => Ok(x.sqrt()),
            Func::Log => Ok(x.ln()),
            Func::Exp => Ok(x.exp()),
            Func::Sin => Ok(x.sin()),
            Func::Cos => Ok(x.cos()),
            Func::Abs => Ok(x.abs()),
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

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Call(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
}

impl fmt::Display for Expr {
    /// Fully parenthesised form; parsing it yields the same tree.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => write!(f, "{x:?}"),
            Expr::Var(name) => f.write_str(name),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Call(func, e) => write!(f, "{}({e})", func.name()),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr, ExprError> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0, len: src.len() };
        let e = p.sum()?;
        match p.peek() {
            None => Ok(e),
            Some((offset, t)) => Err(ExprError::Parse { offset, message: format!("unexpected {t}") }),
        }
    }

    /// Free variable names, sorted.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Neg(e) | Expr::Call(_, e) => e.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn eval(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        let v = self.eval_inner(bindings)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::NonFinite)
        }
    }

    fn eval_inner(&self, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
        match self {
            Expr::Num(x) => Ok(*x),
            Expr::Var(name) => bindings.get(name).copied().ok_or_else(|| ExprError::Unbound(name.clone())),
            Expr::Neg(e) => Ok(-e.eval_inner(bindings)?),
            Expr::Call(func, e) => func.apply(e.eval_inner(bindings)?),
            Expr::Bin(op, a, b) => {
                let (x, y) = (a.eval_inner(bindings)?, b.eval_inner(bindings)?);
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div if y == 0.0 => Err(ExprError::Domain(format!("{x} / 0"))),
                    BinOp::Div => Ok(x / y),
                    BinOp::Pow if x < 0.0 && y.fract() != 0.0 => Err(ExprError::Domain(format!("{x} ^ {y}"))),
                    BinOp::Pow if x == 0.0 && y < 0.0 => Err(ExprError::Domain(format!("{x} ^ {y}"))),
                    BinOp::Pow => Ok(x.powf(y)),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(BinOp),
    LParen,
    RParen,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Num(x) => write!(f, "number {x}"),
            Token::Ident(s) => write!(f, "name `{s}`"),
            Token::Op(op) => write!(f, "`{}`", op.symbol()),
            Token::LParen => f.write_str("`(`"),
            Token::RParen => f.write_str("`)`"),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, ExprError> {
    let mut out = Vec::new();
    let mut chars = src.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        let single = match c {
            '+' => Some(Token::Op(BinOp::Add)),
            '-' | '\u{2212}' => Some(Token::Op(BinOp::Sub)),
            '*' | '\u{d7}' => Some(Token::Op(BinOp::Mul)),
            '/' | '\u{f7}' => Some(Token::Op(BinOp::Div)),
            '^' => Some(Token::Op(BinOp::Pow)),
            '(' => Some(Token::LParen),
            ')' => Some(Token::RParen),
            _ => None,
        };
        if let Some(t) = single {
            out.push((i, t));
            chars.next();
        } else if c.is_whitespace() {
            chars.next();
        } else if c.is_ascii_digit() || c == '.' {
            let mut end = i;
            let mut prev = ' ';
            while let Some(&(j, d)) = chars.peek() {
                let exponent_sign = (d == '+' || d == '-') && (prev == 'e' || prev == 'E');
                if d.is_ascii_digit() || d == '.' || d == 'e' || d == 'E' || exponent_sign {
                    end = j + d.len_utf8();
                    prev = d;
                    chars.next();
                } else {
                    break;
                }
            }
            let text = &src[i..end];
            let x: f64 =
                text.parse().map_err(|_| ExprError::Parse { offset: i, message: format!("bad number `{text}`") })?;
            out.push((i, Token::Num(x)));
        } else if c.is_alphabetic() || c == '_' {
            let mut end = i;
            while let Some(&(j, d)) = chars.peek() {
                if d.is_alphanumeric() || d == '_' {
                    end = j + d.len_utf8();
                    chars.next();
                } else {
                    break;
                }
            }
            out.push((i, Token::Ident(src[i..end].to_string())));
        } else {
            return Err(ExprError::Parse { offset: i, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<(usize, &Token)> {
        self.tokens.get(self.pos).map(|(o, t)| (*o, t))
    }

    fn next(&mut self) -> Option<(usize, Token)> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn eat_op(&mut self, ops: &[BinOp]) -> Option<BinOp> {
        match self.peek() {
            Some((_, Token::Op(op))) if ops.contains(op) => {
                let op = *op;
                self.pos += 1;
                Some(op)
            }
            _ => None,
        }
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ExprError> {
        let offset = self.peek().map_or(self.len, |(o, _)| o);
        Err(ExprError::Parse { offset, message: message.into() })
    }

    fn sum(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.product()?;
        while let Some(op) = self.eat_op(&[BinOp::Add, BinOp::Sub]) {
            e = Expr::Bin(op, Box::new(e), Box::new(self.product()?));
        }
        Ok(e)
    }

    fn product(&mut self) -> Result<Expr, ExprError> {
        let mut e = self.unary()?;
        while let Some(op) = self.eat_op(&[BinOp::Mul, BinOp::Div]) {
            e = Expr::Bin(op, Box::new(e), Box::new(self.unary()?));
        }
        Ok(e)
    }

    fn unary(&mut self) -> Result<Expr, ExprError> {
        match self.eat_op(&[BinOp::Add, BinOp::Sub]) {
            Some(BinOp::Sub) => Ok(Expr::Neg(Box::new(self.unary()?))),
            Some(_) => self.unary(),
            None => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.eat_op(&[BinOp::Pow]).is_some() {
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        let Some((offset, token)) = self.next() else {
            self.pos -= 1;
            return self.error("unexpected end of expression");
        };
        match token {
            Token::Num(x) => Ok(Expr::Num(x)),
            Token::LParen => {
                let e = self.sum()?;
                self.close()?;
                Ok(e)
            }
            Token::Ident(name) => {
                if !matches!(self.peek(), Some((_, Token::LParen))) {
                    return Ok(Expr::Var(name));
                }
                let Some(func) = Func::from_name(&name) else {
                    return Err(ExprError::Parse { offset, message: format!("unknown function `{name}`") });
                };
                self.pos += 1;
                let arg = self.sum()?;
                self.close()?;
                Ok(Expr::Call(func, Box::new(arg)))
            }
            t => Err(ExprError::Parse { offset, message: format!("unexpected {t}") }),
        }
    }

    fn close(&mut self) -> Result<(), ExprError> {
        match self.peek() {
            Some((_, Token::RParen)) => {
                self.pos += 1;
                Ok(())
            }
            _ => self.error("expected `)`"),
        }
    }
}

/// Parses and evaluates in one step.
pub fn evaluate(src: &str, bindings: &HashMap<String, f64>) -> Result<f64, ExprError> {
    Expr::parse(src)?.eval(bindings)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eval(src: &str) -> Result<f64, ExprError> {
        evaluate(src, &HashMap::new())
    }

    fn with(pairs: &[(&str, f64)]) -> HashMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(evaluate("a*b + 1", &with(&[("a", 2.0), ("b", 3.0)])), Ok(7.0));
        assert_eq!(eval("exp(0)"), Ok(1.0));
        assert_eq!(eval("2^10 / 4"), Ok(256.0));
        assert_eq!(eval("2^3^2"), Ok(512.0));
        assert_eq!(eval("-2^2"), Ok(-4.0));
        assert_eq!(eval("2^-1"), Ok(0.5));
        assert_eq!(eval("10 - 4 - 3"), Ok(3.0));
        assert_eq!(eval("24 / 4 / 3"), Ok(2.0));
        assert_eq!(eval("(1 + 2) * 3"), Ok(9.0));
        assert_eq!(eval("6 \u{f7} 4 \u{d7} 2 \u{2212} 1"), Ok(2.0));
    }

    #[test]
    fn functions_and_literals() {
        assert_eq!(eval("sqrt(16) + abs(-3)"), Ok(7.0));
        assert_eq!(eval("log(exp(2.5))"), Ok(2.5));
        assert_eq!(eval("sin(0) + cos(0)"), Ok(1.0));
        assert_eq!(eval("1.5e3 + 2E-1"), Ok(1500.2));
        assert_eq!(eval(".5 * 4"), Ok(2.0));
    }

    #[test]
    fn evaluation_errors() {
        assert_eq!(eval("x + 1"), Err(ExprError::Unbound("x".into())));
        assert!(matches!(eval("sqrt(-1)"), Err(ExprError::Domain(_))));
        assert!(matches!(eval("log(0)"), Err(ExprError::Domain(_))));
        assert!(matches!(eval("1 / 0"), Err(ExprError::Domain(_))));
        assert!(matches!(eval("(-8)^0.5"), Err(ExprError::Domain(_))));
        assert_eq!(eval("exp(1000)"), Err(ExprError::NonFinite));
    }

    #[test]
    fn parse_errors_carry_offsets() {
        assert!(matches!(Expr::parse("1 +"), Err(ExprError::Parse { offset: 3, .. })));
        assert!(matches!(Expr::parse("(1 + 2"), Err(ExprError::Parse { offset: 6, .. })));
        assert!(matches!(Expr::parse("foo(1)"), Err(ExprError::Parse { offset: 0, .. })));
        assert!(matches!(Expr::parse("1 $ 2"), Err(ExprError::Parse { offset: 2, .. })));
        assert!(matches!(Expr::parse("2 3"), Err(ExprError::Parse { offset: 2, .. })));
        assert!(matches!(Expr::parse(""), Err(ExprError::Parse { offset: 0, .. })));
    }

    #[test]
    fn free_variables() {
        let e = Expr::parse("r^2 * pi_val + sqrt(h) - r").unwrap();
        let vars: Vec<String> = e.variables().into_iter().collect();
        assert_eq!(vars, vec!["h", "pi_val", "r"]);
    }

    #[test]
    fn display_round_trips() {
        for src in ["-2^2", "2^3^2", "a - (b - c) * -d", "sqrt(x / 3) ^ 2 + 1e-7"] {
            let e = Expr::parse(src).unwrap();
            assert_eq!(Expr::parse(&e.to_string()).unwrap(), e, "{src}");
        }
    }
}
