//! A small expression language for maps given as formulas.
//!
//! Grammar (usual precedence, `^` binds tightest and takes an integer exponent):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := primary ('^' int)?
//! primary := number | ident | func '(' expr ')' | '(' expr ')'
//! func    := sin | cos | exp
//! ```

use super::dual::{Dual, Scalar};
use super::{CalculusError, DifferentiableMap, DomainBox};
use crate::linear_core::{Matrix, Vector};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Var(usize),
    Lit(f64),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, i32),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
}

impl Expr {
    pub fn eval<S: Scalar>(&self, x: &[S]) -> S {
        match self {
            Expr::Var(i) => x[*i],
            Expr::Lit(v) => S::constant(*v),
            Expr::Neg(a) => -a.eval(x),
            Expr::Add(a, b) => a.eval(x) + b.eval(x),
            Expr::Sub(a, b) => a.eval(x) - b.eval(x),
            Expr::Mul(a, b) => a.eval(x) * b.eval(x),
            Expr::Div(a, b) => a.eval(x) / b.eval(x),
            Expr::Pow(a, n) => a.eval(x).powi(*n),
            Expr::Sin(a) => a.eval(x).sin(),
            Expr::Cos(a) => a.eval(x).cos(),
            Expr::Exp(a) => a.eval(x).exp(),
        }
    }

    /// Evaluation that reports zero denominators instead of producing infinities.
    pub fn eval_checked(&self, x: &[f64]) -> Result<f64, CalculusError> {
        let r = match self {
            Expr::Var(i) => x[*i],
            Expr::Lit(v) => *v,
            Expr::Neg(a) => -a.eval_checked(x)?,
            Expr::Add(a, b) => a.eval_checked(x)? + b.eval_checked(x)?,
            Expr::Sub(a, b) => a.eval_checked(x)? - b.eval_checked(x)?,
            Expr::Mul(a, b) => a.eval_checked(x)? * b.eval_checked(x)?,
            Expr::Div(a, b) => {
                let d = b.eval_checked(x)?;
                if d == 0.0 {
                    return Err(CalculusError::DivisionByZero);
                }
                a.eval_checked(x)? / d
            }
            Expr::Pow(a, n) => {
                let base = a.eval_checked(x)?;
                if base == 0.0 && *n < 0 {
                    return Err(CalculusError::DivisionByZero);
                }
                base.powi(*n)
            }
            Expr::Sin(a) => a.eval_checked(x)?.sin(),
            Expr::Cos(a) => a.eval_checked(x)?.cos(),
            Expr::Exp(a) => a.eval_checked(x)?.exp(),
        };
        if r.is_finite() {
            Ok(r)
        } else {
            Err(CalculusError::NonFinite)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Sym(char),
}

fn tokenize(src: &str) -> Result<Vec<(usize, Token)>, CalculusError> {
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
            let v = text.parse::<f64>().map_err(|_| CalculusError::Parse {
                position: start,
                message: format!("invalid number `{text}`"),
            })?;
            out.push((start, Token::Num(v)));
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push((start, Token::Ident(chars[start..i].iter().collect())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Token::Sym(c)));
            i += 1;
        } else {
            return Err(CalculusError::Parse {
                position: i,
                message: format!("unexpected character `{c}`"),
            });
        }
    }
    Ok(out)
}

struct Parser<'a> {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
    vars: &'a [String],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn error(&self, message: impl Into<String>) -> CalculusError {
        CalculusError::Parse {
            position: self.position(),
            message: message.into(),
        }
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Token::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), CalculusError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn expr(&mut self) -> Result<Expr, CalculusError> {
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

    fn term(&mut self) -> Result<Expr, CalculusError> {
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

    fn unary(&mut self) -> Result<Expr, CalculusError> {
        if self.eat('-') {
            Ok(Expr::Neg(Box::new(self.unary()?)))
        } else if self.eat('+') {
            self.unary()
        } else {
            self.power()
        }
    }

    fn exponent(&mut self) -> Result<i32, CalculusError> {
        let paren = self.eat('(');
        let neg = self.eat('-');
        let n = match self.peek() {
            Some(Token::Num(v)) if v.fract() == 0.0 && v.abs() <= 64.0 => *v as i32,
            _ => return Err(self.error("exponent must be an integer literal")),
        };
        self.pos += 1;
        if paren {
            self.expect(')')?;
        }
        Ok(if neg { -n } else { n })
    }

    fn power(&mut self) -> Result<Expr, CalculusError> {
        let base = self.primary()?;
        if self.eat('^') {
            let n = self.exponent()?;
            Ok(Expr::Pow(Box::new(base), n))
        } else {
            Ok(base)
        }
    }

    fn primary(&mut self) -> Result<Expr, CalculusError> {
        match self.peek().cloned() {
            Some(Token::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Lit(v))
            }
            Some(Token::Ident(name)) => {
                let at = self.position();
                self.pos += 1;
                let func = match name.as_str() {
                    "sin" => Some(Expr::Sin as fn(Box<Expr>) -> Expr),
                    "cos" => Some(Expr::Cos as fn(Box<Expr>) -> Expr),
                    "exp" => Some(Expr::Exp as fn(Box<Expr>) -> Expr),
                    _ => None,
                };
                if let Some(make) = func {
                    if self.peek() == Some(&Token::Sym('(')) {
                        self.pos += 1;
                        let arg = self.expr()?;
                        self.expect(')')?;
                        return Ok(make(Box::new(arg)));
                    }
                }
                match self.vars.iter().position(|v| *v == name) {
                    Some(i) => Ok(Expr::Var(i)),
                    None if self.peek() == Some(&Token::Sym('(')) => Err(CalculusError::Parse {
                        position: at,
                        message: format!("unknown function `{name}`"),
                    }),
                    None => Err(CalculusError::UndeclaredVariable(name)),
                }
            }
            Some(Token::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(_) => Err(self.error("unexpected token")),
            None => Err(self.error("unexpected end of input")),
        }
    }
}

/// Parses one scalar expression over the given variable names.
pub fn parse_expression(src: &str, vars: &[String]) -> Result<Expr, CalculusError> {
    let tokens = tokenize(src)?;
    let mut p = Parser {
        tokens,
        pos: 0,
        end: src.chars().count(),
        vars,
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.error("trailing input"));
    }
    Ok(e)
}

/// A map whose components are parsed expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ExprMap {
    pub vars: Vec<String>,
    pub sources: Vec<String>,
    exprs: Vec<Expr>,
    domain: Option<DomainBox>,
}

impl ExprMap {
    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        self.domain = Some(domain);
        self
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn try_eval(&self, x: &Vector) -> Result<Vector, CalculusError> {
        let xs = x.as_slice();
        let vals = self
            .exprs
            .iter()
            .map(|e| e.eval_checked(xs))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Vector::from_vec(vals))
    }
}

/// Parses one expression per output component over `vars`.
pub fn parse_expression_map<S: AsRef<str>>(
    outputs: &[S],
    vars: &[String],
) -> Result<ExprMap, CalculusError> {
    for (i, v) in vars.iter().enumerate() {
        if vars[..i].contains(v) || matches!(v.as_str(), "sin" | "cos" | "exp") {
            return Err(CalculusError::Parse {
                position: 0,
                message: format!("invalid or duplicate variable name `{v}`"),
            });
        }
    }
    let exprs = outputs
        .iter()
        .map(|s| parse_expression(s.as_ref(), vars))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ExprMap {
        vars: vars.to_vec(),
        sources: outputs.iter().map(|s| s.as_ref().to_string()).collect(),
        exprs,
        domain: None,
    })
}

impl DifferentiableMap for ExprMap {
    fn dim_in(&self) -> usize {
        self.vars.len()
    }

    fn dim_out(&self) -> usize {
        self.exprs.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        let xs = x.as_slice();
        Vector::from_iterator(self.exprs.len(), self.exprs.iter().map(|e| e.eval(xs)))
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.vars.len();
        let mut j = Matrix::zeros(self.exprs.len(), n);
        let mut duals: Vec<Dual> = x.iter().map(|&v| Dual::constant(v)).collect();
        for col in 0..n {
            duals[col].d = 1.0;
            for (row, e) in self.exprs.iter().enumerate() {
                j[(row, col)] = e.eval(&duals).d;
            }
            duals[col].d = 0.0;
        }
        j
    }

    fn domain(&self) -> Option<&DomainBox> {
        self.domain.as_ref()
    }
}
