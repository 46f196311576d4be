use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::ricci;
use crate::connection::ConnectionField;
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expression, Symbol};
use crate::norms::FinslerModel;

/// Threshold below which `(Ψ∘η)'(0)` counts as zero for `Ric_n`.
pub const FIRST_DERIVATIVE_ZERO: f64 = 1e-10;

/// The dimension parameter `N` of `Ric_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EffectiveDimension {
    Finite(f64),
    Infinite,
}

impl EffectiveDimension {
    pub fn finite(&self) -> Option<f64> {
        match self {
            Self::Finite(n) => Some(*n),
            Self::Infinite => None,
        }
    }
}

impl fmt::Display for EffectiveDimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(n) => write!(f, "{n}"),
            Self::Infinite => f.write_str("inf"),
        }
    }
}

impl FromStr for EffectiveDimension {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Self::Infinite),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|n| n.is_finite())
                .map(Self::Finite)
                .ok_or_else(|| format!("`{s}` is neither a number nor `inf`")),
        }
    }
}

/// A weight `Ψ(x)` with `m = e^{−Ψ} vol_F`, and the parameter `N`.
#[derive(Debug, Clone)]
pub struct WeightSpec {
    pub psi: Expression,
    pub dimension: EffectiveDimension,
}

impl WeightSpec {
    pub fn new(psi: Expression, dimension: EffectiveDimension) -> Self {
        Self { psi, dimension }
    }

    pub fn zero(dimension: EffectiveDimension) -> Self {
        Self::new(Expression::zero(), dimension)
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let EffectiveDimension::Finite(big_n) = self.dimension {
            if !(big_n >= n as f64) {
                return Err(Error::Precondition(format!(
                    "weighted Ricci needs N >= n = {n}, got N = {big_n}"
                )));
            }
        }
        for s in self.psi.symbols() {
            if !matches!(s, Symbol::X(i) if i < n) {
                return Err(Error::InvalidModel(format!(
                    "weight refers to `{s}`; only positions x1..x{n} are allowed"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WeightedRicci {
    /// `Ric_N(v)`; `−∞` for `N = n` with nonzero `(Ψ∘η)'(0)`.
    pub value: f64,
    pub ricci: f64,
    /// `(Ψ∘η)'(0)`.
    pub first: f64,
    /// `(Ψ∘η)''(0)`.
    pub second: f64,
    pub dimension: EffectiveDimension,
}

/// `Ric_N(v)` along the geodesic `η` with `η̇(0) = v`:
///
/// - `Ric_n = Ric + (Ψ∘η)''` when `(Ψ∘η)' = 0`, otherwise `−∞`;
/// - `Ric_N = Ric + (Ψ∘η)'' + ((Ψ∘η)')² / (N − n)`;
/// - `Ric_∞ = Ric + (Ψ∘η)''`.
pub fn weighted_ricci(model: &FinslerModel, weight: &WeightSpec, x: &[f64], v: &[f64]) -> Result<WeightedRicci> {
    weighted_ricci_with(&ConnectionField::berwald(model)?, weight, x, v)
}

pub fn weighted_ricci_with(
    connection: &ConnectionField,
    weight: &WeightSpec,
    x: &[f64],
    v: &[f64],
) -> Result<WeightedRicci> {
    let n = connection.dim();
    weight.validate(n)?;
    let ric = ricci(connection, x, v)?;
    let b = Bindings::new().with_x(x);
    let eval = |e: &Expression| e.evaluate(&b).map_err(|err| Error::eval_at(err, x, v));
    let grad: Vec<Expression> = (0..n).map(|i| weight.psi.differentiate(&Symbol::X(i))).collect();
    let grad_values = grad.iter().map(eval).collect::<Result<Vec<_>>>()?;
    let first: f64 = grad_values.iter().zip(v).map(|(g, c)| g * c).sum();
    // (Ψ∘η)'' = ∂²Ψ(v, v) + ∂Ψ·η̈ with η̈ the geodesic acceleration
    let acc = connection.acceleration(x, v)?;
    let mut second: f64 = grad_values.iter().zip(&acc).map(|(g, a)| g * a).sum();
    for i in 0..n {
        if v[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            if v[j] != 0.0 {
                second += v[i] * v[j] * eval(&grad[i].differentiate(&Symbol::X(j)))?;
            }
        }
    }
    let value = match weight.dimension {
        EffectiveDimension::Infinite => ric + second,
        EffectiveDimension::Finite(big_n) if big_n == n as f64 => {
            if first.abs() > FIRST_DERIVATIVE_ZERO {
                f64::NEG_INFINITY
            } else {
                ric + second
            }
        }
        EffectiveDimension::Finite(big_n) => ric + second + first * first / (big_n - n as f64),
    };
    Ok(WeightedRicci {
        value,
        ricci: ric,
        first,
        second,
        dimension: weight.dimension,
    })
}
