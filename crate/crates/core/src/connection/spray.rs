//! Geodesic spray and Berwald coefficients of a Finsler model.
//!
//! With `L = F²`, `M_ab = ∂²L/∂v^a∂v^b` and
//! `A_l = ∂²L/∂v^l∂x^m v^m − ∂L/∂x^l`, the spray solves `M G = A / 2`.
//! Differentiating that linear system with the Leibniz rule gives every
//! mixed partial of `G` from symbolic partials of `M` and `A`:
//!
//! `G_S = M⁻¹ (A_S / 2 − Σ_{∅ ≠ T ⊆ S} M_T G_{S∖T})`
//!
//! where `S` runs over multisets of differentiation variables. The Berwald
//! coefficients are `Γ^k_ij = G^k_{v^i v^j}` and their position derivatives
//! are `G^k_{v^i v^j x^m}`; no finite differences are involved.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::expr::{Expression, Symbol, Tape};
use crate::linalg::{symmetric_from_upper, Matrix, Vector};
use crate::norms::FinslerModel;

use super::Coefficients;

type Key = Vec<Symbol>;

/// Which derivatives a tape provides.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Level {
    Spray,
    Coefficients,
    Derivatives,
}

#[derive(Debug)]
struct JetTape {
    tape: Tape,
    /// output offset of the block for each key
    slots: HashMap<Key, usize>,
}

/// Compiled symbolic partials of `M` and `A` for one model.
#[derive(Debug)]
pub struct SprayJets {
    dim: usize,
    spray: JetTape,
    coefficients: std::sync::OnceLock<Result<JetTape>>,
    derivatives: std::sync::OnceLock<Result<JetTape>>,
    norm_squared: Expression,
}

struct Partials {
    cache: HashMap<Key, (Vec<Expression>, Vec<Expression>)>,
}

impl Partials {
    fn new(norm_squared: &Expression, dim: usize) -> Self {
        let l = norm_squared;
        let lv: Vec<Expression> = (0..dim).map(|i| l.differentiate(&Symbol::V(i))).collect();
        let mut m = Vec::with_capacity(dim * (dim + 1) / 2);
        for a in 0..dim {
            for b in a..dim {
                m.push(lv[a].differentiate(&Symbol::V(b)));
            }
        }
        let a: Vec<Expression> = (0..dim)
            .map(|l_idx| {
                let terms: Vec<Expression> = (0..dim)
                    .map(|k| lv[l_idx].differentiate(&Symbol::X(k)).mul(&Expression::v(k)))
                    .collect();
                Expression::sum(&terms).sub(&l.differentiate(&Symbol::X(l_idx)))
            })
            .collect();
        let mut cache = HashMap::new();
        cache.insert(Vec::new(), (m, a));
        Self { cache }
    }

    fn get(&mut self, key: &Key) -> (Vec<Expression>, Vec<Expression>) {
        if let Some(found) = self.cache.get(key) {
            return found.clone();
        }
        let (last, parent) = key.split_last().expect("empty key is always cached");
        let (pm, pa) = self.get(&parent.to_vec());
        let m = pm.iter().map(|e| e.differentiate(last)).collect();
        let a = pa.iter().map(|e| e.differentiate(last)).collect();
        self.cache.insert(key.clone(), (m, a));
        self.cache[key].clone()
    }
}

fn sorted(mut key: Key) -> Key {
    key.sort();
    key
}

fn keys_for(level: Level, n: usize) -> Vec<Key> {
    let mut v_keys: Vec<Key> = vec![Vec::new()];
    if level != Level::Spray {
        for i in 0..n {
            v_keys.push(vec![Symbol::V(i)]);
            for j in i..n {
                v_keys.push(vec![Symbol::V(i), Symbol::V(j)]);
            }
        }
    }
    let mut keys = v_keys.clone();
    if level == Level::Derivatives {
        for m in 0..n {
            for k in &v_keys {
                let mut key = k.clone();
                key.push(Symbol::X(m));
                keys.push(sorted(key));
            }
        }
    }
    keys
}

fn build_tape(partials: &mut Partials, level: Level, n: usize) -> Result<JetTape> {
    let mut roots = Vec::new();
    let mut slots = HashMap::new();
    for key in keys_for(level, n) {
        let (m, a) = partials.get(&key);
        slots.insert(key, roots.len());
        roots.extend(m);
        roots.extend(a);
    }
    Ok(JetTape {
        tape: Tape::compile(&roots, n)?,
        slots,
    })
}

/// Numeric values of the partials at one `(x, v)`.
struct JetValues<'a> {
    jets: &'a JetTape,
    values: Vec<f64>,
    n: usize,
}

impl JetValues<'_> {
    fn m(&self, key: &Key) -> Matrix {
        let off = self.jets.slots[key];
        let w = self.n * (self.n + 1) / 2;
        symmetric_from_upper(self.n, &self.values[off..off + w])
    }

    fn a(&self, key: &Key) -> Vector {
        let off = self.jets.slots[key] + self.n * (self.n + 1) / 2;
        Vector::from_column_slice(&self.values[off..off + self.n])
    }
}

struct Solver<'a> {
    values: JetValues<'a>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    memo: HashMap<Key, Vector>,
}

impl Solver<'_> {
    fn g(&mut self, key: &Key) -> Vector {
        if let Some(done) = self.memo.get(key) {
            return done.clone();
        }
        let mut rhs = self.values.a(key) * 0.5;
        let len = key.len();
        // proper non-empty subsets of positions
        for mask in 1..(1u32 << len) {
            let t: Key = sorted(
                (0..len)
                    .filter(|p| mask & (1 << p) != 0)
                    .map(|p| key[p].clone())
                    .collect(),
            );
            let rest: Key = sorted(
                (0..len)
                    .filter(|p| mask & (1 << p) == 0)
                    .map(|p| key[p].clone())
                    .collect(),
            );
            let g_rest = self.g(&rest);
            rhs -= self.values.m(&t) * g_rest;
        }
        let out = self.lu.solve(&rhs).expect("LU checked invertible");
        self.memo.insert(key.clone(), out.clone());
        out
    }
}

impl SprayJets {
    pub(crate) fn build(model: &FinslerModel) -> Result<Self> {
        let n = model.dim();
        let mut partials = Partials::new(model.norm_squared_expression(), n);
        let spray = build_tape(&mut partials, Level::Spray, n)?;
        Ok(Self {
            dim: n,
            spray,
            coefficients: Default::default(),
            derivatives: Default::default(),
            norm_squared: model.norm_squared_expression().clone(),
        })
    }

    fn tape(&self, level: Level) -> Result<&JetTape> {
        let (cell, lvl) = match level {
            Level::Spray => return Ok(&self.spray),
            Level::Coefficients => (&self.coefficients, Level::Coefficients),
            Level::Derivatives => (&self.derivatives, Level::Derivatives),
        };
        cell.get_or_init(|| {
            let mut partials = Partials::new(&self.norm_squared, self.dim);
            build_tape(&mut partials, lvl, self.dim)
        })
        .as_ref()
        .map_err(Clone::clone)
    }

    fn solver(&self, level: Level, x: &[f64], v: &[f64]) -> Result<Solver<'_>> {
        if v.iter().all(|c| *c == 0.0) {
            return Err(Error::ZeroVector);
        }
        let jets = self.tape(level)?;
        let values = jets.tape.eval(x, v).map_err(|e| Error::eval_at(e, x, v))?;
        let values = JetValues {
            jets,
            values,
            n: self.dim,
        };
        let m0 = values.m(&Vec::new());
        let lu = m0.clone().lu();
        let scale = m0.abs().max().max(f64::MIN_POSITIVE);
        let singular = lu.determinant().abs() <= (1e-13 * scale).powi(self.dim as i32) || lu.try_inverse().is_none();
        if singular {
            return Err(Error::Singular {
                what: "fundamental tensor",
                x: x.to_vec(),
            });
        }
        Ok(Solver {
            values,
            lu,
            memo: HashMap::new(),
        })
    }

    /// `G^i(x, v)`.
    pub fn spray(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let mut s = self.solver(Level::Spray, x, v)?;
        Ok(s.g(&Vec::new()).iter().copied().collect())
    }

    /// `Γ^k_ij(x, v) = ∂²G^k/∂v^i∂v^j`.
    pub fn coefficients(&self, x: &[f64], v: &[f64]) -> Result<Coefficients> {
        let n = self.dim;
        let mut s = self.solver(Level::Coefficients, x, v)?;
        let mut out = Coefficients::zeros(n);
        for i in 0..n {
            for j in i..n {
                let g = s.g(&vec![Symbol::V(i), Symbol::V(j)]);
                for k in 0..n {
                    out.set(k, i, j, g[k]);
                    out.set(k, j, i, g[k]);
                }
            }
        }
        Ok(out)
    }

    /// Coefficients and their position derivatives `∂_m Γ^k_ij` at fixed `v`.
    pub fn coefficients_with_derivatives(&self, x: &[f64], v: &[f64]) -> Result<(Coefficients, Vec<Coefficients>)> {
        let n = self.dim;
        let mut s = self.solver(Level::Derivatives, x, v)?;
        let mut gamma = Coefficients::zeros(n);
        let mut d = vec![Coefficients::zeros(n); n];
        for i in 0..n {
            for j in i..n {
                let g = s.g(&vec![Symbol::V(i), Symbol::V(j)]);
                for k in 0..n {
                    gamma.set(k, i, j, g[k]);
                    gamma.set(k, j, i, g[k]);
                }
                for (m, dm) in d.iter_mut().enumerate() {
                    let g = s.g(&sorted(vec![Symbol::V(i), Symbol::V(j), Symbol::X(m)]));
                    for k in 0..n {
                        dm.set(k, i, j, g[k]);
                        dm.set(k, j, i, g[k]);
                    }
                }
            }
        }
        Ok((gamma, d))
    }
}

pub(crate) fn jets_for(model: &FinslerModel) -> Result<std::sync::Arc<SprayJets>> {
    model
        .cache
        .spray
        .get_or_init(|| SprayJets::build(model).map(std::sync::Arc::new))
        .clone()
}

/// Geodesic spray `G^i(x, v)`; geodesics solve `ẍ^i + 2 G^i(x, ẋ) = 0`.
pub fn spray_coefficients(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    model.check_dims(x, v)?;
    jets_for(model)?.spray(x, v)
}

/// Berwald connection coefficients `Γ^k_ij(x, v)`, symmetric in `(i, j)`.
pub fn berwald_coefficients(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<Coefficients> {
    model.check_dims(x, v)?;
    jets_for(model)?.coefficients(x, v)
}
