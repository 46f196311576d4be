//! Scalar expressions over chart coordinates `x1..xn`, fiber coordinates
//! `v1..vn` and named symbols.
//!
//! Expressions are immutable DAGs behind [`Arc`]; cloning is cheap and
//! sub-expressions are shared freely between derivatives. Construction goes
//! through the folding constructors in this module, which evaluate constant
//! sub-trees and drop additive/multiplicative identities. No other
//! simplification is attempted.
//!
//! Repeated numeric evaluation of many related expressions should go through
//! a [`Tape`], which deduplicates common sub-expressions once at compile time.

mod diff;
mod eval;
mod parse;
mod tape;

use std::fmt;
use std::sync::Arc;

pub use eval::{Bindings, EvalError};
pub use parse::{parse_expression, parse_with, ParseContext, ParseDiagnostic};
pub use tape::Tape;

/// A free symbol of an expression. Indices are zero-based; they print
/// one-based (`X(0)` is `x1`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Symbol {
    X(usize),
    V(usize),
    Named(Arc<str>),
}

impl Symbol {
    pub fn named(name: &str) -> Self {
        Symbol::Named(Arc::from(name))
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::X(i) => write!(f, "x{}", i + 1),
            Symbol::V(i) => write!(f, "v{}", i + 1),
            Symbol::Named(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Log,
    Sqrt,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
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

    fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
            BinOp::Pow => 4,
        }
    }
}

#[derive(Debug)]
pub enum Node {
    Const(f64),
    Sym(Symbol),
    Neg(Expression),
    Binary(BinOp, Expression, Expression),
    Call(Func, Expression),
}

/// Shared, immutable expression DAG.
#[derive(Clone)]
pub struct Expression(Arc<Node>);

impl Expression {
    pub fn node(&self) -> &Node {
        &self.0
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }

    fn wrap(node: Node) -> Self {
        Expression(Arc::new(node))
    }

    pub fn constant(value: f64) -> Self {
        Self::wrap(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn symbol(symbol: Symbol) -> Self {
        Self::wrap(Node::Sym(symbol))
    }

    pub fn x(i: usize) -> Self {
        Self::symbol(Symbol::X(i))
    }

    pub fn v(i: usize) -> Self {
        Self::symbol(Symbol::V(i))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    pub fn neg(&self) -> Self {
        match self.node() {
            Node::Const(c) => Self::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Self::wrap(Node::Neg(self.clone())),
        }
    }

    pub fn add(&self, rhs: &Expression) -> Self {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Self::constant(a + b);
        }
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        Self::wrap(Node::Binary(BinOp::Add, self.clone(), rhs.clone()))
    }

    pub fn sub(&self, rhs: &Expression) -> Self {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Self::constant(a - b);
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.neg();
        }
        Self::wrap(Node::Binary(BinOp::Sub, self.clone(), rhs.clone()))
    }

    pub fn mul(&self, rhs: &Expression) -> Self {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            return Self::constant(a * b);
        }
        if self.is_zero() || rhs.is_zero() {
            return Self::zero();
        }
        if self.is_one() {
            return rhs.clone();
        }
        if rhs.is_one() {
            return self.clone();
        }
        Self::wrap(Node::Binary(BinOp::Mul, self.clone(), rhs.clone()))
    }

    pub fn div(&self, rhs: &Expression) -> Self {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            if b != 0.0 {
                return Self::constant(a / b);
            }
        }
        if rhs.is_one() {
            return self.clone();
        }
        if self.is_zero() && rhs.as_const().is_none_or(|b| b != 0.0) {
            return Self::zero();
        }
        Self::wrap(Node::Binary(BinOp::Div, self.clone(), rhs.clone()))
    }

    pub fn pow(&self, rhs: &Expression) -> Self {
        if let (Some(a), Some(b)) = (self.as_const(), rhs.as_const()) {
            if a >= 0.0 || b.fract() == 0.0 {
                let value = a.powf(b);
                if value.is_finite() {
                    return Self::constant(value);
                }
            }
        }
        if rhs.is_one() {
            return self.clone();
        }
        if rhs.is_zero() {
            return Self::one();
        }
        Self::wrap(Node::Binary(BinOp::Pow, self.clone(), rhs.clone()))
    }

    pub fn powi(&self, exponent: i32) -> Self {
        self.pow(&Self::constant(exponent as f64))
    }

    pub fn powf(&self, exponent: f64) -> Self {
        self.pow(&Self::constant(exponent))
    }

    pub fn call(func: Func, arg: &Expression) -> Self {
        if let Some(a) = arg.as_const() {
            let value = eval::apply_func(func, a);
            if let Ok(value) = value {
                return Self::constant(value);
            }
        }
        Self::wrap(Node::Call(func, arg.clone()))
    }

    pub fn sqrt(&self) -> Self {
        Self::call(Func::Sqrt, self)
    }

    pub fn binary(op: BinOp, lhs: &Expression, rhs: &Expression) -> Self {
        match op {
            BinOp::Add => lhs.add(rhs),
            BinOp::Sub => lhs.sub(rhs),
            BinOp::Mul => lhs.mul(rhs),
            BinOp::Div => lhs.div(rhs),
            BinOp::Pow => lhs.pow(rhs),
        }
    }

    /// Sum of the given terms, folding as it goes.
    pub fn sum<'a>(terms: impl IntoIterator<Item = &'a Expression>) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, t| acc.add(t))
    }

    /// `self²`, with `sqrt(e)² = e` and `(e^a)^2 = e^(2a)` resolved
    /// structurally. Both rewrites are exact on the domain where the
    /// original expression is defined; they keep the square of a norm free
    /// of the square-root singularity at the zero section.
    pub fn square(&self) -> Self {
        match self.node() {
            Node::Call(Func::Sqrt, inner) => inner.clone(),
            Node::Binary(BinOp::Pow, base, exp) => match exp.as_const() {
                Some(0.5) => base.clone(),
                Some(a) => base.powf(2.0 * a),
                None => self.powi(2),
            },
            Node::Neg(inner) => inner.square(),
            _ => self.powi(2),
        }
    }

    /// Replace symbols according to `f`; symbols mapped to `None` are kept.
    pub fn substitute(&self, f: &dyn Fn(&Symbol) -> Option<Expression>) -> Self {
        let mut memo = std::collections::HashMap::new();
        self.substitute_memo(f, &mut memo)
    }

    fn substitute_memo(
        &self,
        f: &dyn Fn(&Symbol) -> Option<Expression>,
        memo: &mut std::collections::HashMap<*const Node, Expression>,
    ) -> Self {
        if let Some(done) = memo.get(&self.ptr()) {
            return done.clone();
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Sym(s) => f(s).unwrap_or_else(|| self.clone()),
            Node::Neg(a) => a.substitute_memo(f, memo).neg(),
            Node::Binary(op, a, b) => {
                let a = a.substitute_memo(f, memo);
                let b = b.substitute_memo(f, memo);
                Self::binary(*op, &a, &b)
            }
            Node::Call(func, a) => Self::call(*func, &a.substitute_memo(f, memo)),
        };
        memo.insert(self.ptr(), out.clone());
        out
    }

    /// Substitute `symbol` by `sqrt(square)`, writing even integer powers
    /// `symbol^(2k)` directly as `square^k`.
    ///
    /// Used when a slot of an outer norm receives the length of an inner
    /// norm: the result stays smooth wherever the outer expression only sees
    /// the slot through even powers.
    pub fn substitute_length(&self, symbol: &Symbol, square: &Expression) -> Self {
        let mut memo = std::collections::HashMap::new();
        self.substitute_length_memo(symbol, square, &mut memo)
    }

    fn substitute_length_memo(
        &self,
        symbol: &Symbol,
        square: &Expression,
        memo: &mut std::collections::HashMap<*const Node, Expression>,
    ) -> Self {
        if let Some(done) = memo.get(&self.ptr()) {
            return done.clone();
        }
        let out = match self.node() {
            Node::Const(_) => self.clone(),
            Node::Sym(s) if s == symbol => square.sqrt(),
            Node::Sym(_) => self.clone(),
            Node::Neg(a) => a.substitute_length_memo(symbol, square, memo).neg(),
            Node::Binary(BinOp::Pow, base, exp)
                if matches!(base.node(), Node::Sym(s) if s == symbol)
                    && exp
                        .as_const()
                        .is_some_and(|k| k.fract() == 0.0 && (k / 2.0).fract() == 0.0) =>
            {
                let k = exp.as_const().unwrap_or(2.0);
                square.powf(k / 2.0)
            }
            Node::Binary(op, a, b) => {
                let a = a.substitute_length_memo(symbol, square, memo);
                let b = b.substitute_length_memo(symbol, square, memo);
                Self::binary(*op, &a, &b)
            }
            Node::Call(func, a) => Self::call(*func, &a.substitute_length_memo(symbol, square, memo)),
        };
        memo.insert(self.ptr(), out.clone());
        out
    }

    /// All distinct free symbols, sorted.
    pub fn symbols(&self) -> Vec<Symbol> {
        let mut seen = std::collections::HashSet::new();
        let mut out = std::collections::BTreeSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Const(_) => {}
                Node::Sym(s) => {
                    out.insert(s.clone());
                }
                Node::Neg(a) | Node::Call(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
            }
        }
        out.into_iter().collect()
    }

    pub fn depends_on(&self, symbol: &Symbol) -> bool {
        self.symbols().contains(symbol)
    }

    /// Number of distinct nodes in the DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self.clone()];
        while let Some(e) = stack.pop() {
            if !seen.insert(e.ptr()) {
                continue;
            }
            match e.node() {
                Node::Neg(a) | Node::Call(_, a) => stack.push(a.clone()),
                Node::Binary(_, a, b) => {
                    stack.push(a.clone());
                    stack.push(b.clone());
                }
                _ => {}
            }
        }
        seen.len()
    }

    fn precedence(&self) -> u8 {
        match self.node() {
            Node::Binary(op, _, _) => op.precedence(),
            Node::Neg(_) => 3,
            Node::Const(c) if *c < 0.0 => 3,
            _ => 5,
        }
    }
}

impl PartialEq for Expression {
    /// Structural equality. Constants compare bitwise so that `NaN == NaN`
    /// and `0.0 != -0.0`.
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::Sym(a), Node::Sym(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Binary(o1, a1, b1), Node::Binary(o2, a2, b2)) => o1 == o2 && a1 == a2 && b1 == b2,
            (Node::Call(f1, a1), Node::Call(f2, a2)) => f1 == f2 && a1 == a2,
            _ => false,
        }
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expression({self})")
    }
}

impl serde::Serialize for Expression {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.node() {
            Node::Const(c) => {
                if *c < 0.0 {
                    write!(f, "-{}", -c)
                } else if c.is_infinite() {
                    write!(f, "(1/0)")
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Sym(s) => write!(f, "{s}"),
            Node::Neg(a) => {
                // the operand of a unary minus binds at least as tightly as ^
                if a.precedence() >= 4 {
                    write!(f, "-{a}")
                } else {
                    write!(f, "-({a})")
                }
            }
            Node::Call(func, a) => write!(f, "{}({a})", func.name()),
            Node::Binary(op, a, b) => {
                let p = op.precedence();
                // left operand: parenthesize lower precedence; for ^ (right
                // associative) also parenthesize equal precedence and unary minus
                let left_paren = if *op == BinOp::Pow {
                    a.precedence() <= p
                } else {
                    a.precedence() < p
                };
                let right_paren = if *op == BinOp::Pow {
                    b.precedence() < p
                } else {
                    b.precedence() <= p
                };
                if left_paren {
                    write!(f, "({a})")?;
                } else {
                    write!(f, "{a}")?;
                }
                write!(f, " {} ", op.symbol())?;
                if right_paren {
                    write!(f, "({b})")
                } else {
                    write!(f, "{b}")
                }
            }
        }
    }
}
