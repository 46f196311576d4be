use std::collections::HashMap;

use super::{BinOp, Expression, Func, Node, Symbol};

impl Expression {
    /// Exact partial derivative with respect to `var`.
    ///
    /// Shared sub-expressions are differentiated once, so the derivative of
    /// a DAG stays a DAG of comparable size.
    pub fn differentiate(&self, var: &Symbol) -> Expression {
        let mut memo = HashMap::new();
        self.diff_memo(var, &mut memo)
    }

    /// Mixed partial derivative along a sequence of symbols.
    pub fn differentiate_all(&self, vars: &[Symbol]) -> Expression {
        vars.iter().fold(self.clone(), |e, s| e.differentiate(s))
    }

    fn diff_memo(&self, var: &Symbol, memo: &mut HashMap<*const Node, Expression>) -> Expression {
        if let Some(done) = memo.get(&self.ptr()) {
            return done.clone();
        }
        let out = match self.node() {
            Node::Const(_) => Expression::zero(),
            Node::Sym(s) => {
                if s == var {
                    Expression::one()
                } else {
                    Expression::zero()
                }
            }
            Node::Neg(a) => a.diff_memo(var, memo).neg(),
            Node::Binary(op, a, b) => {
                let da = a.diff_memo(var, memo);
                let db = b.diff_memo(var, memo);
                match op {
                    BinOp::Add => da.add(&db),
                    BinOp::Sub => da.sub(&db),
                    BinOp::Mul => da.mul(b).add(&a.mul(&db)),
                    BinOp::Div => {
                        // (a/b)' = a'/b - (a/b) b'/b
                        da.div(b).sub(&self.mul(&db).div(b))
                    }
                    BinOp::Pow => power_derivative(self, a, b, &da, &db),
                }
            }
            Node::Call(func, a) => {
                let da = a.diff_memo(var, memo);
                if da.is_zero() {
                    Expression::zero()
                } else {
                    let outer = match func {
                        Func::Sin => Expression::call(Func::Cos, a),
                        Func::Cos => Expression::call(Func::Sin, a).neg(),
                        // tan' = 1 + tan^2, reusing this node
                        Func::Tan => Expression::one().add(&self.powi(2)),
                        Func::Exp => self.clone(),
                        Func::Log => Expression::one().div(a),
                        Func::Sqrt => Expression::constant(0.5).div(self),
                    };
                    outer.mul(&da)
                }
            }
        };
        memo.insert(self.ptr(), out.clone());
        out
    }
}

fn power_derivative(
    whole: &Expression,
    base: &Expression,
    exponent: &Expression,
    dbase: &Expression,
    dexp: &Expression,
) -> Expression {
    match exponent.as_const() {
        Some(c) => {
            if dbase.is_zero() {
                return Expression::zero();
            }
            let factor = if c == 2.0 {
                Expression::constant(2.0).mul(base)
            } else {
                Expression::constant(c).mul(&base.powf(c - 1.0))
            };
            factor.mul(dbase)
        }
        None => {
            // d(b^e) = b^e (e' ln b + e b'/b)
            let log_term = dexp.mul(&Expression::call(Func::Log, base));
            let base_term = exponent.mul(dbase).div(base);
            whole.mul(&log_term.add(&base_term))
        }
    }
}
