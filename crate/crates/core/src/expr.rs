//! Small arithmetic expression language for analytic material coefficients.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?
//! atom   := number | 'pi' | 'y1' | 'y2' | 'x3'
//!         | ('sin' | 'cos') '(' expr ')' | '(' expr ')'
//! ```
//!
//! Coefficients must be 1-periodic in `y1` and `y2`; that is checked by the
//! material loader, not here.

use crate::{Error, Result};

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
    Sin(Box<Expr>),
    Cos(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Var {
    Y1,
    Y2,
    X3,
}

/// Point at which an expression is evaluated.
#[derive(Debug, Clone, Copy, Default)]
pub struct Point {
    pub x3: f64,
    pub y1: f64,
    pub y2: f64,
}

impl Expr {
    pub fn parse(src: &str) -> Result<Expr> {
        let tokens = tokenize(src)?;
        let mut p = Parser { tokens, pos: 0 };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Expression(format!(
                "unexpected trailing input in `{src}`"
            )));
        }
        Ok(e)
    }

    pub fn eval(&self, at: Point) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::Var(Var::Y1) => at.y1,
            Expr::Var(Var::Y2) => at.y2,
            Expr::Var(Var::X3) => at.x3,
            Expr::Neg(a) => -a.eval(at),
            Expr::Add(a, b) => a.eval(at) + b.eval(at),
            Expr::Sub(a, b) => a.eval(at) - b.eval(at),
            Expr::Mul(a, b) => a.eval(at) * b.eval(at),
            Expr::Div(a, b) => a.eval(at) / b.eval(at),
            Expr::Pow(a, b) => a.eval(at).powf(b.eval(at)),
            Expr::Sin(a) => a.eval(at).sin(),
            Expr::Cos(a) => a.eval(at).cos(),
        }
    }

    pub fn uses(&self, var: Var) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => *v == var,
            Expr::Neg(a) | Expr::Sin(a) | Expr::Cos(a) => a.uses(var),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.uses(var) || b.uses(var)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
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
            let v = text
                .parse::<f64>()
                .map_err(|_| Error::Expression(format!("bad number `{text}`")))?;
            out.push(Token::Num(v));
        } else if c.is_ascii_alphabetic() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                i += 1;
            }
            out.push(Token::Ident(chars[start..i].iter().collect()));
        } else if "+-*/^()".contains(c) {
            out.push(Token::Op(c));
            i += 1;
        } else {
            return Err(Error::Expression(format!("unexpected character `{c}`")));
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

impl Parser {
    fn peek_op(&self) -> Option<char> {
        match self.tokens.get(self.pos) {
            Some(Token::Op(c)) => Some(*c),
            _ => None,
        }
    }

    fn expect(&mut self, op: char) -> Result<()> {
        if self.peek_op() == Some(op) {
            self.pos += 1;
            Ok(())
        } else {
            Err(Error::Expression(format!("expected `{op}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek_op() {
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

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op @ ('*' | '/')) = self.peek_op() {
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

    fn unary(&mut self) -> Result<Expr> {
        if self.peek_op() == Some('-') {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek_op() == Some('^') {
            self.pos += 1;
            let exp = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let tok = self
            .tokens
            .get(self.pos)
            .cloned()
            .ok_or_else(|| Error::Expression("unexpected end of input".into()))?;
        self.pos += 1;
        match tok {
            Token::Num(v) => Ok(Expr::Num(v)),
            Token::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Token::Ident(name) => match name.as_str() {
                "pi" => Ok(Expr::Num(std::f64::consts::PI)),
                "y1" => Ok(Expr::Var(Var::Y1)),
                "y2" => Ok(Expr::Var(Var::Y2)),
                "x3" => Ok(Expr::Var(Var::X3)),
                "sin" | "cos" => {
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(')')?;
                    Ok(if name == "sin" {
                        Expr::Sin(Box::new(arg))
                    } else {
                        Expr::Cos(Box::new(arg))
                    })
                }
                other => Err(Error::Expression(format!("unknown identifier `{other}`"))),
            },
            Token::Op(c) => Err(Error::Expression(format!("unexpected `{c}`"))),
        }
    }
}
