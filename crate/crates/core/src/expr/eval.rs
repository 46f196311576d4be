use std::collections::{BTreeMap, HashMap};

use super::{BinOp, Expression, Func, Node, Symbol};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(Symbol),
    #[error("domain error in `{subexpression}`: {message}")]
    Domain { subexpression: String, message: String },
}

impl EvalError {
    pub(crate) fn domain(e: &Expression, message: &str) -> Self {
        let mut subexpression = e.to_string();
        if subexpression.len() > 200 {
            subexpression.truncate(200);
            subexpression.push_str("...");
        }
        EvalError::Domain {
            subexpression,
            message: message.to_string(),
        }
    }
}

/// Values for the free symbols of an expression.
#[derive(Debug, Clone, Default)]
pub struct Bindings {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub named: BTreeMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_x(mut self, x: &[f64]) -> Self {
        self.x = x.to_vec();
        self
    }

    pub fn with_v(mut self, v: &[f64]) -> Self {
        self.v = v.to_vec();
        self
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.named.insert(name.to_string(), value);
        self
    }

    pub fn get(&self, symbol: &Symbol) -> Option<f64> {
        match symbol {
            Symbol::X(i) => self.x.get(*i).copied(),
            Symbol::V(i) => self.v.get(*i).copied(),
            Symbol::Named(name) => self.named.get(name.as_ref()).copied(),
        }
    }
}

pub(crate) fn apply_func(func: Func, a: f64) -> Result<f64, &'static str> {
    let value = match func {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Tan => a.tan(),
        Func::Exp => a.exp(),
        Func::Log => {
            if a <= 0.0 {
                return Err("log of non-positive value");
            }
            a.ln()
        }
        Func::Sqrt => {
            if a < 0.0 {
                return Err("sqrt of negative value");
            }
            a.sqrt()
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err("non-finite result")
    }
}

pub(crate) fn apply_binary(op: BinOp, a: f64, b: f64) -> Result<f64, &'static str> {
    let value = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err("division by zero");
            }
            a / b
        }
        BinOp::Pow => {
            if b.fract() == 0.0 && b.abs() <= i32::MAX as f64 {
                if a == 0.0 && b < 0.0 {
                    return Err("division by zero");
                }
                a.powi(b as i32)
            } else {
                if a < 0.0 {
                    return Err("non-integer power of negative value");
                }
                if a == 0.0 && b < 0.0 {
                    return Err("division by zero");
                }
                a.powf(b)
            }
        }
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err("non-finite result")
    }
}

impl Expression {
    /// Evaluate at the given bindings. Shared sub-expressions are evaluated
    /// once.
    pub fn evaluate(&self, bindings: &Bindings) -> Result<f64, EvalError> {
        let mut memo = HashMap::new();
        self.eval_memo(bindings, &mut memo)
    }

    fn eval_memo(&self, bindings: &Bindings, memo: &mut HashMap<*const Node, f64>) -> Result<f64, EvalError> {
        if let Some(v) = memo.get(&self.ptr()) {
            return Ok(*v);
        }
        let value = match self.node() {
            Node::Const(c) => *c,
            Node::Sym(s) => bindings.get(s).ok_or_else(|| EvalError::Unbound(s.clone()))?,
            Node::Neg(a) => -a.eval_memo(bindings, memo)?,
            Node::Binary(op, a, b) => {
                let a = a.eval_memo(bindings, memo)?;
                let b = b.eval_memo(bindings, memo)?;
                apply_binary(*op, a, b).map_err(|m| EvalError::domain(self, m))?
            }
            Node::Call(func, a) => {
                let a = a.eval_memo(bindings, memo)?;
                apply_func(*func, a).map_err(|m| EvalError::domain(self, m))?
            }
        };
        memo.insert(self.ptr(), value);
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;

    #[test]
    fn simple_values() {
        let e = parse_expression("v1^2 + v2^2", 2).unwrap();
        assert_eq!(e.evaluate(&Bindings::new().with_v(&[3.0, 4.0])).unwrap(), 25.0);
        let e = parse_expression("sqrt(v1^2)", 1).unwrap();
        assert_eq!(e.evaluate(&Bindings::new().with_v(&[-2.0])).unwrap(), 2.0);
    }

    #[test]
    fn domain_errors_name_the_subexpression() {
        let e = parse_expression("1 + log(x1)", 1).unwrap();
        match e.evaluate(&Bindings::new().with_x(&[0.0])) {
            Err(EvalError::Domain { subexpression, .. }) => assert_eq!(subexpression, "log(x1)"),
            other => panic!("{other:?}"),
        }
        let e = parse_expression("v1 / x1", 1).unwrap();
        assert!(e.evaluate(&Bindings::new().with_x(&[0.0]).with_v(&[1.0])).is_err());
        let e = parse_expression("x1^0.5", 1).unwrap();
        assert!(e.evaluate(&Bindings::new().with_x(&[-1.0])).is_err());
        let e = parse_expression("x1^3", 1).unwrap();
        assert_eq!(e.evaluate(&Bindings::new().with_x(&[-2.0])).unwrap(), -8.0);
    }

    #[test]
    fn unbound() {
        let e = parse_expression("x1 + v1", 1).unwrap();
        assert_eq!(
            e.evaluate(&Bindings::new().with_x(&[1.0])),
            Err(EvalError::Unbound(Symbol::V(0)))
        );
    }
}
