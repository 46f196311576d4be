use super::{ChartBox, FinslerModel};
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expression, Symbol};
use crate::sampling::{gaussian_vector, stream};

/// Data of a norm `F(v_0, v_1, ..., v_m) = G(v_0, F_1(v_1), ..., F_m(v_m))`
/// on a product chart: `flat_dim` flat coordinates first, then each factor's
/// coordinates in order.
#[derive(Debug, Clone)]
pub struct ProductStructure {
    /// `G` in the symbols `a1..ak` (flat slots) and `s1..sm` (factor lengths).
    pub outer: Expression,
    pub flat_dim: usize,
    pub factors: Vec<FinslerModel>,
    /// First chart coordinate of each factor.
    pub offsets: Vec<usize>,
}

pub fn flat_slot(i: usize) -> Symbol {
    Symbol::named(&format!("a{}", i + 1))
}

pub fn length_slot(j: usize) -> Symbol {
    Symbol::named(&format!("s{}", j + 1))
}

/// Names `a1..ak, s1..sm` for parsing an outer norm.
pub fn slot_names(flat_dim: usize, factors: usize) -> Vec<String> {
    (0..flat_dim)
        .map(|i| format!("a{}", i + 1))
        .chain((0..factors).map(|j| format!("s{}", j + 1)))
        .collect()
}

fn shift(e: &Expression, offset: usize) -> Expression {
    e.substitute(&|s| match s {
        Symbol::X(i) => Some(Expression::x(i + offset)),
        Symbol::V(i) => Some(Expression::v(i + offset)),
        Symbol::Named(_) => None,
    })
}

fn eval_outer(outer: &Expression, flat: &[f64], lengths: &[f64]) -> Result<f64> {
    let mut b = Bindings::new();
    for (i, a) in flat.iter().enumerate() {
        b = b.with(&format!("a{}", i + 1), *a);
    }
    for (j, s) in lengths.iter().enumerate() {
        b = b.with(&format!("s{}", j + 1), *s);
    }
    Ok(outer.evaluate(&b)?)
}

const OUTER_CHECK_SAMPLES: u64 = 64;
const OUTER_CHECK_TOLERANCE: f64 = 1e-10;

/// Compose a product norm. `outer` must be positively 1-homogeneous and even
/// in every length slot `s_j`; both are checked on seeded samples.
pub fn make_product_norm(
    outer: Expression,
    flat_dim: usize,
    flat_chart: ChartBox,
    factors: Vec<FinslerModel>,
) -> Result<FinslerModel> {
    let m = factors.len();
    if flat_chart.dim() != flat_dim {
        return Err(Error::Dimension {
            expected: flat_dim,
            found: flat_chart.dim(),
        });
    }
    let allowed = slot_names(flat_dim, m);
    for s in outer.symbols() {
        let ok = matches!(&s, Symbol::Named(name) if allowed.iter().any(|a| a.as_str() == name.as_ref()));
        if !ok {
            return Err(Error::InvalidModel(format!(
                "outer norm refers to `{s}`; expected slots {allowed:?}"
            )));
        }
    }

    let slots = flat_dim + m;
    for k in 0..OUTER_CHECK_SAMPLES {
        let mut rng = stream(0x9_0d, k);
        let p = gaussian_vector(&mut rng, slots);
        let (flat, lengths) = p.split_at(flat_dim);
        let base = eval_outer(&outer, flat, lengths)?;
        let scale = base.abs().max(1e-300);
        for lambda in [0.5, 3.0] {
            let f2: Vec<f64> = flat.iter().map(|c| lambda * c).collect();
            let l2: Vec<f64> = lengths.iter().map(|c| lambda * c).collect();
            let value = eval_outer(&outer, &f2, &l2)?;
            if (value - lambda * base).abs() > OUTER_CHECK_TOLERANCE * lambda * scale {
                return Err(Error::InvalidModel(format!(
                    "outer norm is not positively homogeneous at {p:?}"
                )));
            }
        }
        for j in 0..m {
            let mut flipped = lengths.to_vec();
            flipped[j] = -flipped[j];
            let value = eval_outer(&outer, flat, &flipped)?;
            if (value - base).abs() > OUTER_CHECK_TOLERANCE * scale {
                return Err(Error::InvalidModel(format!(
                    "outer norm is not symmetric under s{} -> -s{} at {p:?}",
                    j + 1,
                    j + 1
                )));
            }
        }
    }

    let mut chart = flat_chart;
    let mut offsets = Vec::with_capacity(m);
    let mut offset = flat_dim;
    let mut outer_sq = outer.square();
    let mut norm = outer.clone();
    for i in 0..flat_dim {
        let slot = flat_slot(i);
        let sub = |s: &Symbol| (s == &slot).then(|| Expression::v(i));
        outer_sq = outer_sq.substitute(&sub);
        norm = norm.substitute(&sub);
    }
    for (j, factor) in factors.iter().enumerate() {
        offsets.push(offset);
        let q = shift(factor.norm_squared_expression(), offset);
        outer_sq = outer_sq.substitute_length(&length_slot(j), &q);
        norm = norm.substitute_length(&length_slot(j), &q);
        chart = chart.concat(factor.chart());
        offset += factor.dim();
    }
    let structure = ProductStructure {
        outer,
        flat_dim,
        factors,
        offsets,
    };
    Ok(FinslerModel::from_product(structure, chart, norm, outer_sq))
}

/// Distance on a product without higher-rank factors:
/// `G(y_0 − x_0, d_1(p_1, q_1), ..., d_m(p_m, q_m))`.
pub fn product_distance(product: &FinslerModel, from: &[f64], to: &[f64], factor_distances: &[f64]) -> Result<f64> {
    let super::NormKind::Product(structure) = product.kind() else {
        return Err(Error::Precondition("product_distance needs a product model".into()));
    };
    if factor_distances.len() != structure.factors.len() {
        return Err(Error::Dimension {
            expected: structure.factors.len(),
            found: factor_distances.len(),
        });
    }
    if let Some(d) = factor_distances.iter().find(|d| **d < 0.0 || !d.is_finite()) {
        return Err(Error::Precondition(format!("factor distance {d} must be non-negative")));
    }
    let k = structure.flat_dim;
    if from.len() < k || to.len() < k {
        return Err(Error::Dimension {
            expected: k,
            found: from.len().min(to.len()),
        });
    }
    let delta: Vec<f64> = (0..k).map(|i| to[i] - from[i]).collect();
    eval_outer(&structure.outer, &delta, factor_distances)
}
