//! Closed-form scalar expressions over surface coordinates.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' exponent)?
//! exponent:= '-' exponent | power            (right associative)
//! primary := number | ident | ident '(' expr ')' | '(' expr ')'
//! ```
//!
//! Identifiers: variables `x`, `y` (torus) and `theta`, `phi` (sphere), the constant
//! `pi`, and the functions `sin cos exp log abs`.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use core::fmt;

use thiserror::Error;

use crate::math;
use crate::mesh::{Field, MeshGeometry, MeshKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Var {
    X,
    Y,
    Theta,
    Phi,
}

impl Var {
    fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Theta => "theta",
            Var::Phi => "phi",
        }
    }

    fn mesh_kind(self) -> MeshKind {
        match self {
            Var::X | Var::Y => MeshKind::Torus,
            Var::Theta | Var::Phi => MeshKind::Sphere,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Abs,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Abs => "abs",
        }
    }

    fn lookup(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => " + ",
            BinOp::Sub => " - ",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

/// Parsed expression tree.
#[derive(Clone, Debug, PartialEq)]
pub enum FieldExpr {
    Num(f64),
    Pi,
    Var(Var),
    Neg(Box<FieldExpr>),
    Call(Func, Box<FieldExpr>),
    Binary(BinOp, Box<FieldExpr>, Box<FieldExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("unknown identifier `{name}` at offset {offset}")]
    UnknownIdentifier { offset: usize, name: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("variable `{var}` is not defined on a {mesh} mesh")]
    VariableMismatch { var: &'static str, mesh: MeshKind },
    #[error("negative base {base} raised to non-integer power {exponent}")]
    NegativeBase { base: f64, exponent: f64 },
    #[error("expression is not finite ({value}) at node {node} (coords {coords:?})")]
    NonFinite {
        node: usize,
        coords: (f64, f64),
        value: f64,
    },
    #[error("expression evaluates to a non-finite value ({value})")]
    NotFinite { value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("field is not strictly positive: minimum {min} at node {node}")]
pub struct NotPositive {
    pub min: f64,
    pub node: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    tok_end: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut p = Parser {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            tok_end: 0,
        };
        p.advance()?;
        Ok(p)
    }

    fn syntax<T>(&self, offset: usize, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax {
            offset,
            message: message.into(),
        })
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        let Some(&c) = bytes.get(self.pos) else {
            self.tok = Tok::End;
            self.tok_end = self.pos;
            return Ok(());
        };
        let single = match c {
            b'+' => Some(Tok::Plus),
            b'-' => Some(Tok::Minus),
            b'*' => Some(Tok::Star),
            b'/' => Some(Tok::Slash),
            b'^' => Some(Tok::Caret),
            b'(' => Some(Tok::LParen),
            b')' => Some(Tok::RParen),
            _ => None,
        };
        if single.is_some() {
            self.pos += 1;
        } else if c.is_ascii_digit() || c == b'.' {
            self.lex_number()?;
            self.tok_end = self.pos;
            return Ok(());
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while self.pos < bytes.len()
                && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
            {
                self.pos += 1;
            }
            self.tok = Tok::Ident;
            self.tok_end = self.pos;
            return Ok(());
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap_or('?');
            return self.syntax(self.pos, alloc::format!("unexpected character '{ch}'"));
        }
        self.tok = single.unwrap_or(Tok::End);
        self.tok_end = self.pos;
        Ok(())
    }

    fn lex_number(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let digits = |p: &mut usize| {
            let s = *p;
            while *p < bytes.len() && bytes[*p].is_ascii_digit() {
                *p += 1;
            }
            *p - s
        };
        let mut n = digits(&mut self.pos);
        if self.pos < bytes.len() && bytes[self.pos] == b'.' {
            self.pos += 1;
            n += digits(&mut self.pos);
        }
        if n == 0 {
            return self.syntax(start, "expected digits");
        }
        if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
            let mut p = self.pos + 1;
            if p < bytes.len() && (bytes[p] == b'+' || bytes[p] == b'-') {
                p += 1;
            }
            if digits(&mut p) == 0 {
                return self.syntax(p, "expected exponent digits");
            }
            self.pos = p;
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => {
                self.tok = Tok::Num(v);
                Ok(())
            }
            _ => self.syntax(start, alloc::format!("invalid number '{text}'")),
        }
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<(), ParseError> {
        if self.tok == tok {
            self.advance()
        } else {
            self.syntax(self.tok_start, alloc::format!("expected '{what}'"))
        }
    }

    fn expr(&mut self) -> Result<FieldExpr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.tok {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.term()?;
            lhs = FieldExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<FieldExpr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.tok {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.advance()?;
            let rhs = self.unary()?;
            lhs = FieldExpr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<FieldExpr, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(FieldExpr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<FieldExpr, ParseError> {
        let base = self.primary()?;
        if self.tok == Tok::Caret {
            self.advance()?;
            let exponent = self.exponent()?;
            return Ok(FieldExpr::Binary(
                BinOp::Pow,
                Box::new(base),
                Box::new(exponent),
            ));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<FieldExpr, ParseError> {
        if self.tok == Tok::Minus {
            self.advance()?;
            return Ok(FieldExpr::Neg(Box::new(self.exponent()?)));
        }
        self.power()
    }

    fn primary(&mut self) -> Result<FieldExpr, ParseError> {
        match self.tok {
            Tok::Num(v) => {
                self.advance()?;
                Ok(FieldExpr::Num(v))
            }
            Tok::LParen => {
                self.advance()?;
                let inner = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(inner)
            }
            Tok::Ident => {
                let start = self.tok_start;
                let name = &self.src[start..self.tok_end];
                let leaf = match name {
                    "x" => Some(FieldExpr::Var(Var::X)),
                    "y" => Some(FieldExpr::Var(Var::Y)),
                    "theta" => Some(FieldExpr::Var(Var::Theta)),
                    "phi" => Some(FieldExpr::Var(Var::Phi)),
                    "pi" => Some(FieldExpr::Pi),
                    _ => None,
                };
                if let Some(leaf) = leaf {
                    self.advance()?;
                    return Ok(leaf);
                }
                let Some(func) = Func::lookup(name) else {
                    return Err(ParseError::UnknownIdentifier {
                        offset: start,
                        name: name.to_string(),
                    });
                };
                self.advance()?;
                self.expect(Tok::LParen, "(")?;
                let arg = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(FieldExpr::Call(func, Box::new(arg)))
            }
            Tok::End => self.syntax(self.tok_start, "unexpected end of input"),
            _ => self.syntax(self.tok_start, "expected a number, identifier or '('"),
        }
    }
}

/// Parses `text` into an expression tree.
pub fn parse_expr(text: &str) -> Result<FieldExpr, ParseError> {
    let mut p = Parser::new(text)?;
    let e = p.expr()?;
    if p.tok != Tok::End {
        return p.syntax(p.tok_start, "unexpected trailing input");
    }
    Ok(e)
}

impl core::str::FromStr for FieldExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_expr(s)
    }
}

/// Values bound to the coordinate variables during evaluation.
#[derive(Clone, Copy, Debug)]
pub struct Coords {
    pub kind: MeshKind,
    pub first: f64,
    pub second: f64,
}

impl FieldExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse_expr(text)
    }

    /// True if the tree references no coordinate variable.
    pub fn is_constant(&self) -> bool {
        self.first_var().is_none()
    }

    fn first_var(&self) -> Option<Var> {
        match self {
            FieldExpr::Num(_) | FieldExpr::Pi => None,
            FieldExpr::Var(v) => Some(*v),
            FieldExpr::Neg(e) | FieldExpr::Call(_, e) => e.first_var(),
            FieldExpr::Binary(_, a, b) => a.first_var().or_else(|| b.first_var()),
        }
    }

    fn vars_match(&self, kind: MeshKind) -> Result<(), EvalError> {
        match self {
            FieldExpr::Num(_) | FieldExpr::Pi => Ok(()),
            FieldExpr::Var(v) if v.mesh_kind() == kind => Ok(()),
            FieldExpr::Var(v) => Err(EvalError::VariableMismatch {
                var: v.name(),
                mesh: kind,
            }),
            FieldExpr::Neg(e) | FieldExpr::Call(_, e) => e.vars_match(kind),
            FieldExpr::Binary(_, a, b) => {
                a.vars_match(kind)?;
                b.vars_match(kind)
            }
        }
    }

    /// Evaluates a variable-free expression.
    pub fn eval_constant(&self) -> Result<f64, EvalError> {
        if let Some(v) = self.first_var() {
            return Err(EvalError::VariableMismatch {
                var: v.name(),
                mesh: v.mesh_kind(),
            });
        }
        let value = self.eval(&Coords {
            kind: MeshKind::Torus,
            first: 0.0,
            second: 0.0,
        })?;
        if !value.is_finite() {
            return Err(EvalError::NotFinite { value });
        }
        Ok(value)
    }

    /// Raw pointwise evaluation; may return non-finite values (`log 0`).
    pub fn eval(&self, at: &Coords) -> Result<f64, EvalError> {
        Ok(match self {
            FieldExpr::Num(v) => *v,
            FieldExpr::Pi => core::f64::consts::PI,
            FieldExpr::Var(v) => {
                if v.mesh_kind() != at.kind {
                    return Err(EvalError::VariableMismatch {
                        var: v.name(),
                        mesh: at.kind,
                    });
                }
                match v {
                    Var::X | Var::Theta => at.first,
                    Var::Y | Var::Phi => at.second,
                }
            }
            FieldExpr::Neg(e) => -e.eval(at)?,
            FieldExpr::Call(f, e) => {
                let a = e.eval(at)?;
                match f {
                    Func::Sin => math::sin(a),
                    Func::Cos => math::cos(a),
                    Func::Exp => math::exp(a),
                    Func::Log => math::ln(a),
                    Func::Abs => math::abs(a),
                }
            }
            FieldExpr::Binary(op, a, b) => {
                let (a, b) = (a.eval(at)?, b.eval(at)?);
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => a / b,
                    BinOp::Pow => {
                        if a < 0.0 && math::floor(b) != b {
                            return Err(EvalError::NegativeBase {
                                base: a,
                                exponent: b,
                            });
                        }
                        math::pow(a, b)
                    }
                }
            }
        })
    }

    /// Samples the expression at every node of `mesh`.
    pub fn materialize(&self, mesh: &MeshGeometry) -> Result<Field, EvalError> {
        let kind = mesh.kind();
        self.vars_match(kind)?;
        let mut values = alloc::vec::Vec::with_capacity(mesh.node_count());
        for node in 0..mesh.node_count() {
            let (first, second) = mesh.node_coords(node);
            let value = self.eval(&Coords {
                kind,
                first,
                second,
            })?;
            if !value.is_finite() {
                return Err(EvalError::NonFinite {
                    node,
                    coords: (first, second),
                    value,
                });
            }
            values.push(value);
        }
        Ok(Field::new(mesh, values).expect("values checked finite"))
    }

    fn precedence(&self) -> u8 {
        match self {
            FieldExpr::Binary(op, ..) => op.precedence(),
            FieldExpr::Neg(_) => 3,
            _ => 5,
        }
    }

    fn write_child(&self, f: &mut fmt::Formatter<'_>, min_prec: u8) -> fmt::Result {
        if self.precedence() < min_prec {
            write!(f, "({self})")
        } else {
            write!(f, "{self}")
        }
    }
}

/// Minimal-parenthesis rendering that parses back to the same tree.
impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldExpr::Num(v) => write!(f, "{v}"),
            FieldExpr::Pi => f.write_str("pi"),
            FieldExpr::Var(v) => f.write_str(v.name()),
            FieldExpr::Neg(e) => {
                f.write_str("-")?;
                e.write_child(f, 3)
            }
            FieldExpr::Call(func, e) => write!(f, "{}({e})", func.name()),
            FieldExpr::Binary(op, a, b) => {
                let p = op.precedence();
                let (left_min, right_min) = match op {
                    BinOp::Pow => (5, 3),
                    _ => (p, p + 1),
                };
                a.write_child(f, left_min)?;
                f.write_str(op.symbol())?;
                b.write_child(f, right_min)
            }
        }
    }
}

/// Ok iff every value is strictly positive.
pub fn validate_positive(field: &Field) -> Result<f64, NotPositive> {
    let (node, min) = field
        .values()
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, v)| if v < acc.1 { (i, v) } else { acc });
    if min > 0.0 {
        Ok(min)
    } else {
        Err(NotPositive { min, node })
    }
}
