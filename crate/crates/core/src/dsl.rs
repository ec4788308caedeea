//! A small expression language for game coefficients.
//!
//! Grammar (whitespace-insensitive, positions are 1-based characters):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := power (('*' | '/') power)*
//! power   := unary ('^' power)?
//! unary   := '-' unary | primary
//! primary := number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Unary minus binds tighter than `^`, so `-2^2` is `(-2)^2`. Functions:
//! `abs tanh exp sin cos` (one argument) and `min max pow` (two arguments).
//! There are no conditionals; payoff tables live in the game file instead.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Number(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    /// 1-based character position of the first character.
    pub pos: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("illegal character '{ch}' at position {pos}")]
    IllegalChar { ch: char, pos: usize },
    #[error("malformed number '{text}' at position {pos}")]
    BadNumber { text: String, pos: usize },
    #[error("empty expression")]
    Empty,
    #[error("unexpected token {found} at position {pos}")]
    UnexpectedToken { found: String, pos: usize },
    #[error("unexpected end of input at position {pos}")]
    UnexpectedEnd { pos: usize },
    #[error("unclosed '(' at position {pos}")]
    UnclosedParen { pos: usize },
    #[error("unknown function '{name}' at position {pos}")]
    UnknownFunction { name: String, pos: usize },
    #[error("function '{name}' at position {pos} takes {expected} argument(s), got {found}")]
    Arity {
        name: String,
        expected: usize,
        found: usize,
        pos: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unbound variable '{0}'")]
    Unbound(String),
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

pub fn tokenize(text: &str) -> Result<Vec<Token>, DslError> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let pos = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let simple = match c {
            '+' => Some(TokenKind::Plus),
            '-' => Some(TokenKind::Minus),
            '*' => Some(TokenKind::Star),
            '/' => Some(TokenKind::Slash),
            '^' => Some(TokenKind::Caret),
            '(' => Some(TokenKind::LParen),
            ')' => Some(TokenKind::RParen),
            ',' => Some(TokenKind::Comma),
            _ => None,
        };
        if let Some(kind) = simple {
            tokens.push(Token { kind, pos });
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            // optional exponent, only if followed by a digit (after an optional sign)
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                    i = j;
                }
            }
            let lexeme: String = chars[start..i].iter().collect();
            let value = lexeme.parse::<f64>().map_err(|_| DslError::BadNumber {
                text: lexeme.clone(),
                pos,
            })?;
            tokens.push(Token {
                kind: TokenKind::Number(value),
                pos,
            });
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            tokens.push(Token {
                kind: TokenKind::Ident(chars[start..i].iter().collect()),
                pos,
            });
        } else {
            return Err(DslError::IllegalChar { ch: c, pos });
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Abs,
    Tanh,
    Exp,
    Sin,
    Cos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl UnaryOp {
    fn function_name(self) -> &'static str {
        match self {
            UnaryOp::Neg => "-",
            UnaryOp::Abs => "abs",
            UnaryOp::Tanh => "tanh",
            UnaryOp::Exp => "exp",
            UnaryOp::Sin => "sin",
            UnaryOp::Cos => "cos",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            UnaryOp::Neg => -v,
            UnaryOp::Abs => v.abs(),
            UnaryOp::Tanh => v.tanh(),
            UnaryOp::Exp => v.exp(),
            UnaryOp::Sin => v.sin(),
            UnaryOp::Cos => v.cos(),
        }
    }
}

impl BinaryOp {
    fn apply(self, l: f64, r: f64) -> Result<f64, EvalError> {
        Ok(match self {
            BinaryOp::Add => l + r,
            BinaryOp::Sub => l - r,
            BinaryOp::Mul => l * r,
            BinaryOp::Div => {
                if r == 0.0 {
                    return Err(EvalError::DivisionByZero);
                }
                l / r
            }
            BinaryOp::Min => l.min(r),
            BinaryOp::Max => l.max(r),
            BinaryOp::Pow => l.powf(r),
        })
    }
}

fn lookup_function(name: &str) -> Option<(usize, Result<UnaryOp, BinaryOp>)> {
    Some(match name {
        "abs" => (1, Ok(UnaryOp::Abs)),
        "tanh" => (1, Ok(UnaryOp::Tanh)),
        "exp" => (1, Ok(UnaryOp::Exp)),
        "sin" => (1, Ok(UnaryOp::Sin)),
        "cos" => (1, Ok(UnaryOp::Cos)),
        "min" => (2, Err(BinaryOp::Min)),
        "max" => (2, Err(BinaryOp::Max)),
        "pow" => (2, Err(BinaryOp::Pow)),
        _ => return None,
    })
}

fn describe(kind: &TokenKind) -> String {
    match kind {
        TokenKind::Number(v) => format!("number {v}"),
        TokenKind::Ident(s) => format!("identifier '{s}'"),
        TokenKind::Plus => "'+'".into(),
        TokenKind::Minus => "'-'".into(),
        TokenKind::Star => "'*'".into(),
        TokenKind::Slash => "'/'".into(),
        TokenKind::Caret => "'^'".into(),
        TokenKind::LParen => "'('".into(),
        TokenKind::RParen => "')'".into(),
        TokenKind::Comma => "','".into(),
    }
}

struct Parser<'a> {
    tokens: &'a [Token],
    cursor: usize,
    open_parens: Vec<usize>,
    end_pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a Token> {
        self.tokens.get(self.cursor)
    }

    fn next(&mut self) -> Option<&'a Token> {
        let t = self.tokens.get(self.cursor);
        self.cursor += 1;
        t
    }

    fn end_error(&self) -> DslError {
        match self.open_parens.last() {
            Some(&pos) => DslError::UnclosedParen { pos },
            None => DslError::UnexpectedEnd { pos: self.end_pos },
        }
    }

    fn expect_rparen(&mut self) -> Result<(), DslError> {
        match self.next() {
            Some(Token {
                kind: TokenKind::RParen,
                ..
            }) => {
                self.open_parens.pop();
                Ok(())
            }
            Some(t) => Err(DslError::UnexpectedToken {
                found: describe(&t.kind),
                pos: t.pos,
            }),
            None => Err(self.end_error()),
        }
    }

    fn expr(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.term()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokenKind::Plus => BinaryOp::Add,
                TokenKind::Minus => BinaryOp::Sub,
                _ => break,
            };
            self.cursor += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, DslError> {
        let mut lhs = self.power()?;
        while let Some(t) = self.peek() {
            let op = match t.kind {
                TokenKind::Star => BinaryOp::Mul,
                TokenKind::Slash => BinaryOp::Div,
                _ => break,
            };
            self.cursor += 1;
            let rhs = self.power()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn power(&mut self) -> Result<Expr, DslError> {
        let base = self.unary()?;
        if let Some(Token {
            kind: TokenKind::Caret, ..
        }) = self.peek()
        {
            self.cursor += 1;
            let exponent = self.power()?;
            return Ok(Expr::Binary(BinaryOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn unary(&mut self) -> Result<Expr, DslError> {
        if let Some(Token {
            kind: TokenKind::Minus, ..
        }) = self.peek()
        {
            self.cursor += 1;
            let inner = self.unary()?;
            return Ok(Expr::Unary(UnaryOp::Neg, Box::new(inner)));
        }
        self.primary()
    }

    fn primary(&mut self) -> Result<Expr, DslError> {
        let tok = match self.next() {
            Some(t) => t,
            None => return Err(self.end_error()),
        };
        match &tok.kind {
            TokenKind::Number(v) => Ok(Expr::Num(*v)),
            TokenKind::LParen => {
                self.open_parens.push(tok.pos);
                let inner = self.expr()?;
                self.expect_rparen()?;
                Ok(inner)
            }
            TokenKind::Ident(name) => {
                let is_call = matches!(
                    self.peek(),
                    Some(Token {
                        kind: TokenKind::LParen,
                        ..
                    })
                );
                if !is_call {
                    return Ok(Expr::Var(name.clone()));
                }
                let (arity, op) = lookup_function(name).ok_or_else(|| DslError::UnknownFunction {
                    name: name.clone(),
                    pos: tok.pos,
                })?;
                let open = self.next().map(|t| t.pos).unwrap_or(tok.pos);
                self.open_parens.push(open);
                let mut args = vec![self.expr()?];
                while let Some(Token {
                    kind: TokenKind::Comma, ..
                }) = self.peek()
                {
                    self.cursor += 1;
                    args.push(self.expr()?);
                }
                self.expect_rparen()?;
                if args.len() != arity {
                    return Err(DslError::Arity {
                        name: name.clone(),
                        expected: arity,
                        found: args.len(),
                        pos: tok.pos,
                    });
                }
                let mut it = args.into_iter();
                let first = Box::new(it.next().expect("arity checked"));
                Ok(match op {
                    Ok(u) => Expr::Unary(u, first),
                    Err(b) => Expr::Binary(b, first, Box::new(it.next().expect("arity checked"))),
                })
            }
            other => Err(DslError::UnexpectedToken {
                found: describe(other),
                pos: tok.pos,
            }),
        }
    }
}

pub fn parse(tokens: &[Token]) -> Result<Expr, DslError> {
    if tokens.is_empty() {
        return Err(DslError::Empty);
    }
    let last = tokens.last().expect("nonempty");
    let end_pos = last.pos + token_width(&last.kind);
    let mut parser = Parser {
        tokens,
        cursor: 0,
        open_parens: Vec::new(),
        end_pos,
    };
    let expr = parser.expr()?;
    if let Some(t) = parser.peek() {
        return Err(DslError::UnexpectedToken {
            found: describe(&t.kind),
            pos: t.pos,
        });
    }
    Ok(expr)
}

fn token_width(kind: &TokenKind) -> usize {
    match kind {
        TokenKind::Ident(s) => s.chars().count(),
        TokenKind::Number(v) => format!("{v}").len(),
        _ => 1,
    }
}

/// Tokenizes and parses in one step.
pub fn parse_str(text: &str) -> Result<Expr, DslError> {
    parse(&tokenize(text)?)
}

/// Variable bindings for [`Expr::eval`].
pub trait Env {
    fn lookup(&self, name: &str) -> Option<f64>;
}

impl Env for HashMap<String, f64> {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.get(name).copied()
    }
}

impl Env for [(&str, f64)] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.iter().find(|(k, _)| *k == name).map(|(_, v)| *v)
    }
}

impl<const K: usize> Env for [(&str, f64); K] {
    fn lookup(&self, name: &str) -> Option<f64> {
        self.as_slice().lookup(name)
    }
}

impl Expr {
    pub fn eval<E: Env + ?Sized>(&self, env: &E) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var(name) => env.lookup(name).ok_or_else(|| EvalError::Unbound(name.clone()))?,
            Expr::Unary(op, e) => op.apply(e.eval(env)?),
            Expr::Binary(op, l, r) => op.apply(l.eval(env)?, r.eval(env)?)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Every variable name referenced, in first-occurrence order.
    pub fn variables(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Num(_) => {}
                Expr::Var(n) => {
                    if !out.contains(n) {
                        out.push(n.clone())
                    }
                }
                Expr::Unary(_, a) => walk(a, out),
                Expr::Binary(_, a, b) => {
                    walk(a, out);
                    walk(b, out)
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    /// Resolves variable names to slots of `layout`.
    pub fn compile(&self, layout: &[String]) -> Result<CompiledExpr, EvalError> {
        fn lower(e: &Expr, layout: &[String]) -> Result<Node, EvalError> {
            Ok(match e {
                Expr::Num(v) => Node::Const(*v),
                Expr::Var(n) => Node::Slot(
                    layout
                        .iter()
                        .position(|s| s == n)
                        .ok_or_else(|| EvalError::Unbound(n.clone()))?,
                ),
                Expr::Unary(op, a) => Node::Unary(*op, Box::new(lower(a, layout)?)),
                Expr::Binary(op, a, b) => Node::Binary(*op, Box::new(lower(a, layout)?), Box::new(lower(b, layout)?)),
            })
        }
        Ok(CompiledExpr {
            root: lower(self, layout)?,
            source: self.clone(),
        })
    }
}

impl fmt::Display for Expr {
    /// Fully parenthesized; reparses to a structurally equal tree for
    /// nonnegative literals.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(n) => write!(f, "{n}"),
            Expr::Unary(UnaryOp::Neg, a) => write!(f, "(-{a})"),
            Expr::Unary(op, a) => write!(f, "{}({a})", op.function_name()),
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Add => write!(f, "({a} + {b})"),
                BinaryOp::Sub => write!(f, "({a} - {b})"),
                BinaryOp::Mul => write!(f, "({a} * {b})"),
                BinaryOp::Div => write!(f, "({a} / {b})"),
                BinaryOp::Pow => write!(f, "({a} ^ {b})"),
                BinaryOp::Min => write!(f, "min({a}, {b})"),
                BinaryOp::Max => write!(f, "max({a}, {b})"),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Const(f64),
    Slot(usize),
    Unary(UnaryOp, Box<Node>),
    Binary(BinaryOp, Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        Ok(match self {
            Node::Const(v) => *v,
            Node::Slot(i) => slots[*i],
            Node::Unary(op, a) => op.apply(a.eval(slots)?),
            Node::Binary(op, a, b) => op.apply(a.eval(slots)?, b.eval(slots)?)?,
        })
    }

    fn uses_slot(&self, pred: &dyn Fn(usize) -> bool) -> bool {
        match self {
            Node::Const(_) => false,
            Node::Slot(i) => pred(*i),
            Node::Unary(_, a) => a.uses_slot(pred),
            Node::Binary(_, a, b) => a.uses_slot(pred) || b.uses_slot(pred),
        }
    }
}

/// An expression with variables resolved to positional slots.
#[derive(Debug, Clone, PartialEq)]
pub struct CompiledExpr {
    root: Node,
    source: Expr,
}

impl CompiledExpr {
    pub fn eval(&self, slots: &[f64]) -> Result<f64, EvalError> {
        let v = self.root.eval(slots)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    pub fn source(&self) -> &Expr {
        &self.source
    }

    pub fn depends_on_any(&self, slots: std::ops::Range<usize>) -> bool {
        self.root.uses_slot(&|i| slots.contains(&i))
    }
}
