use std::collections::HashMap;

use super::eval::{apply_binary, apply_func, EvalError};
use super::{BinOp, Expression, Func, Node, Symbol};

#[derive(Debug, Clone, Copy)]
enum Instr {
    Const(f64),
    X(u32),
    V(u32),
    Neg(u32),
    Bin(BinOp, u32, u32),
    Call(Func, u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Key {
    Const(u64),
    X(u32),
    V(u32),
    Neg(u32),
    Bin(BinOp, u32, u32),
    Call(Func, u32),
}

/// A batch of expressions in `x`/`v` flattened into one straight-line
/// program. Structurally identical sub-expressions across all roots are
/// computed once per evaluation.
#[derive(Debug, Clone)]
pub struct Tape {
    instrs: Vec<Instr>,
    nodes: Vec<Expression>,
    outputs: Vec<u32>,
    dim: usize,
}

struct Builder {
    instrs: Vec<Instr>,
    nodes: Vec<Expression>,
    by_ptr: HashMap<*const Node, u32>,
    by_key: HashMap<Key, u32>,
    dim: usize,
}

impl Builder {
    fn push(&mut self, key: Key, instr: Instr, node: &Expression) -> u32 {
        if let Some(&slot) = self.by_key.get(&key) {
            return slot;
        }
        let slot = self.instrs.len() as u32;
        self.instrs.push(instr);
        self.nodes.push(node.clone());
        self.by_key.insert(key, slot);
        slot
    }

    fn visit(&mut self, e: &Expression) -> Result<u32, EvalError> {
        if let Some(&slot) = self.by_ptr.get(&e.ptr()) {
            return Ok(slot);
        }
        let slot = match e.node() {
            Node::Const(c) => self.push(Key::Const(c.to_bits()), Instr::Const(*c), e),
            Node::Sym(Symbol::X(i)) if *i < self.dim => self.push(Key::X(*i as u32), Instr::X(*i as u32), e),
            Node::Sym(Symbol::V(i)) if *i < self.dim => self.push(Key::V(*i as u32), Instr::V(*i as u32), e),
            Node::Sym(s) => return Err(EvalError::Unbound(s.clone())),
            Node::Neg(a) => {
                let a = self.visit(a)?;
                self.push(Key::Neg(a), Instr::Neg(a), e)
            }
            Node::Binary(op, a, b) => {
                let a = self.visit(a)?;
                let b = self.visit(b)?;
                self.push(Key::Bin(*op, a, b), Instr::Bin(*op, a, b), e)
            }
            Node::Call(func, a) => {
                let a = self.visit(a)?;
                self.push(Key::Call(*func, a), Instr::Call(*func, a), e)
            }
        };
        self.by_ptr.insert(e.ptr(), slot);
        Ok(slot)
    }
}

impl Tape {
    /// Compile `roots`, whose symbols must all be `x1..x{dim}` / `v1..v{dim}`.
    pub fn compile(roots: &[Expression], dim: usize) -> Result<Self, EvalError> {
        let mut builder = Builder {
            instrs: Vec::new(),
            nodes: Vec::new(),
            by_ptr: HashMap::new(),
            by_key: HashMap::new(),
            dim,
        };
        let outputs = roots.iter().map(|r| builder.visit(r)).collect::<Result<Vec<_>, _>>()?;
        Ok(Tape {
            instrs: builder.instrs,
            nodes: builder.nodes,
            outputs,
            dim,
        })
    }

    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn output_count(&self) -> usize {
        self.outputs.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluate every root at `(x, v)`; outputs come back in root order.
    pub fn eval(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>, EvalError> {
        let mut scratch = vec![0.0; self.instrs.len()];
        for (k, instr) in self.instrs.iter().enumerate() {
            scratch[k] = match *instr {
                Instr::Const(c) => c,
                Instr::X(i) => x[i as usize],
                Instr::V(i) => v[i as usize],
                Instr::Neg(a) => -scratch[a as usize],
                Instr::Bin(op, a, b) => apply_binary(op, scratch[a as usize], scratch[b as usize])
                    .map_err(|m| EvalError::domain(&self.nodes[k], m))?,
                Instr::Call(func, a) => {
                    apply_func(func, scratch[a as usize]).map_err(|m| EvalError::domain(&self.nodes[k], m))?
                }
            };
        }
        Ok(self.outputs.iter().map(|&o| scratch[o as usize]).collect())
    }
}
