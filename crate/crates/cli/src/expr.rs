//! Polynomial expressions in `x` and `z` for initial densities.
//!
//! Grammar:
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary ('*' unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' integer)?
//! primary := number | 'x' | 'z' | '(' expr ')'
//! ```

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    X,
    Z,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Pow(Box<Node>, u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExprError {
    pub column: usize,
    pub message: String,
}

impl fmt::Display for ExprError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "column {}: {}", self.column, self.message)
    }
}

impl std::error::Error for ExprError {}

/// A parsed polynomial.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    source: String,
    root: Node,
}

impl Polynomial {
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            chars: source.chars().collect(),
            pos: 0,
        };
        let root = p.expr()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.error(format!("unexpected `{}`", p.chars[p.pos])));
        }
        Ok(Self {
            source: source.to_string(),
            root,
        })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn uses_z(&self) -> bool {
        fn walk(n: &Node) -> bool {
            match n {
                Node::Z => true,
                Node::Num(_) | Node::X => false,
                Node::Neg(a) | Node::Pow(a, _) => walk(a),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) => walk(a) || walk(b),
            }
        }
        walk(&self.root)
    }

    pub fn eval(&self, x: f64, z: f64) -> f64 {
        fn go(n: &Node, x: f64, z: f64) -> f64 {
            match n {
                Node::Num(v) => *v,
                Node::X => x,
                Node::Z => z,
                Node::Neg(a) => -go(a, x, z),
                Node::Add(a, b) => go(a, x, z) + go(b, x, z),
                Node::Sub(a, b) => go(a, x, z) - go(b, x, z),
                Node::Mul(a, b) => go(a, x, z) * go(b, x, z),
                Node::Pow(a, k) => go(a, x, z).powi(*k as i32),
            }
        }
        go(&self.root, x, z)
    }
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
}

impl Parser {
    fn error(&self, message: String) -> ExprError {
        ExprError {
            column: self.pos + 1,
            message,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Node, ExprError> {
        let mut left = self.term()?;
        while let Some(op @ ('+' | '-')) = self.peek() {
            self.pos += 1;
            let right = self.term()?;
            left = if op == '+' {
                Node::Add(Box::new(left), Box::new(right))
            } else {
                Node::Sub(Box::new(left), Box::new(right))
            };
        }
        Ok(left)
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut left = self.unary()?;
        while self.peek() == Some('*') {
            self.pos += 1;
            let right = self.unary()?;
            left = Node::Mul(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if self.peek() == Some('-') {
            self.pos += 1;
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.primary()?;
        if self.peek() != Some('^') {
            return Ok(base);
        }
        self.pos += 1;
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.error("exponent must be a nonnegative integer".into()));
        }
        let digits: String = self.chars[start..self.pos].iter().collect();
        let k = digits
            .parse::<u32>()
            .map_err(|_| self.error(format!("exponent `{digits}` is too large")))?;
        Ok(Node::Pow(Box::new(base), k))
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some('x') => {
                self.pos += 1;
                Ok(Node::X)
            }
            Some('z') => {
                self.pos += 1;
                Ok(Node::Z)
            }
            Some('(') => {
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() != Some(')') {
                    return Err(self.error("expected `)`".into()));
                }
                self.pos += 1;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => {
                let start = self.pos;
                while self.pos < self.chars.len()
                    && (self.chars[self.pos].is_ascii_digit() || self.chars[self.pos] == '.')
                {
                    self.pos += 1;
                }
                // Optional exponent part such as 1e-3.
                if self.pos < self.chars.len() && matches!(self.chars[self.pos], 'e' | 'E') {
                    let save = self.pos;
                    self.pos += 1;
                    if self.pos < self.chars.len() && matches!(self.chars[self.pos], '+' | '-') {
                        self.pos += 1;
                    }
                    let digits = self.pos;
                    while self.pos < self.chars.len() && self.chars[self.pos].is_ascii_digit() {
                        self.pos += 1;
                    }
                    if digits == self.pos {
                        self.pos = save;
                    }
                }
                let text: String = self.chars[start..self.pos].iter().collect();
                text.parse::<f64>().map(Node::Num).map_err(|_| ExprError {
                    column: start + 1,
                    message: format!("bad number `{text}`"),
                })
            }
            Some(c) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of expression".into())),
        }
    }
}
