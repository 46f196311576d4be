use std::sync::{Arc, OnceLock};

use super::Coefficients;
use crate::error::{Error, Result};
use crate::expr::{Expression, Symbol, Tape};
use crate::linalg::{symmetric_from_upper, Matrix};
use crate::norms::FinslerModel;

/// Compiled first and second position derivatives of a metric `g_ij(x)`.
#[derive(Debug)]
pub struct MetricJets {
    dim: usize,
    first: Tape,
    second: OnceLock<Result<Tape>>,
    upper: Vec<Expression>,
}

fn first_roots(upper: &[Expression], n: usize) -> Vec<Expression> {
    let mut roots = upper.to_vec();
    for m in 0..n {
        roots.extend(upper.iter().map(|e| e.differentiate(&Symbol::X(m))));
    }
    roots
}

impl MetricJets {
    /// `upper` lists `g_ij` for `i <= j`, row-major.
    pub fn new(upper: &[Expression], dim: usize) -> Result<Self> {
        if upper.len() != dim * (dim + 1) / 2 {
            return Err(Error::Dimension {
                expected: dim * (dim + 1) / 2,
                found: upper.len(),
            });
        }
        Ok(Self {
            dim,
            first: Tape::compile(&first_roots(upper, dim), dim)?,
            second: OnceLock::new(),
            upper: upper.to_vec(),
        })
    }

    fn eval(&self, tape: &Tape, x: &[f64]) -> Result<Vec<f64>> {
        let v = vec![0.0; self.dim];
        tape.eval(x, &v).map_err(|e| Error::eval_at(e, x, &[]))
    }

    fn blocks(&self, values: &[f64], count: usize) -> Vec<Matrix> {
        let w = self.dim * (self.dim + 1) / 2;
        (0..count)
            .map(|b| symmetric_from_upper(self.dim, &values[b * w..(b + 1) * w]))
            .collect()
    }

    /// `g`, `∂_m g`.
    pub fn metric_with_first(&self, x: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        let values = self.eval(&self.first, x)?;
        let mut b = self.blocks(&values, self.dim + 1);
        let g = b.remove(0);
        Ok((g, b))
    }

    /// `g`, `∂_m g`, `∂_m∂_l g` (indexed `[m][l]`).
    #[allow(clippy::type_complexity)]
    pub fn metric_with_second(&self, x: &[f64]) -> Result<(Matrix, Vec<Matrix>, Vec<Vec<Matrix>>)> {
        let n = self.dim;
        let tape = self
            .second
            .get_or_init(|| {
                let mut roots = first_roots(&self.upper, n);
                for m in 0..n {
                    for l in 0..n {
                        roots.extend(
                            self.upper
                                .iter()
                                .map(|e| e.differentiate(&Symbol::X(m)).differentiate(&Symbol::X(l))),
                        );
                    }
                }
                Ok(Tape::compile(&roots, n)?)
            })
            .as_ref()
            .map_err(Clone::clone)?;
        let values = self.eval(tape, x)?;
        let mut b = self.blocks(&values, 1 + n + n * n);
        let second_flat = b.split_off(1 + n);
        let g = b.remove(0);
        let mut second = Vec::with_capacity(n);
        let mut it = second_flat.into_iter();
        for _ in 0..n {
            second.push(it.by_ref().take(n).collect());
        }
        Ok((g, b, second))
    }

    pub fn coefficients(&self, x: &[f64]) -> Result<Coefficients> {
        let (g, dg) = self.metric_with_first(x)?;
        Ok(christoffel_from_jets(x, &g, &dg, None)?.0)
    }

    pub fn coefficients_with_derivatives(&self, x: &[f64]) -> Result<(Coefficients, Vec<Coefficients>)> {
        let (g, dg, ddg) = self.metric_with_second(x)?;
        let (gamma, d) = christoffel_from_jets(x, &g, &dg, Some(&ddg))?;
        Ok((gamma, d.expect("second derivatives supplied")))
    }
}

/// Christoffel symbols from numeric metric jets; with second derivatives
/// also returns `∂_m Γ`.
pub fn christoffel_from_jets(
    x: &[f64],
    g: &Matrix,
    dg: &[Matrix],
    ddg: Option<&[Vec<Matrix>]>,
) -> Result<(Coefficients, Option<Vec<Coefficients>>)> {
    let n = g.nrows();
    let chol = g.clone().cholesky().ok_or_else(|| Error::Singular {
        what: "metric",
        x: x.to_vec(),
    })?;
    let inv = chol.inverse();
    // first kind: Γ_{k,ij} = ½(∂_i g_jk + ∂_j g_ik − ∂_k g_ij)
    let first = |d: &[Matrix], k: usize, i: usize, j: usize| 0.5 * (d[i][(j, k)] + d[j][(i, k)] - d[k][(i, j)]);
    let mut gamma = Coefficients::zeros(n);
    let mut first_kind = vec![0.0; n * n * n];
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                first_kind[(k * n + i) * n + j] = first(dg, k, i, j);
            }
        }
    }
    for l in 0..n {
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| inv[(l, k)] * first_kind[(k * n + i) * n + j]).sum();
                gamma.set(l, i, j, s);
            }
        }
    }
    let Some(ddg) = ddg else {
        return Ok((gamma, None));
    };
    let mut derivs = Vec::with_capacity(n);
    for m in 0..n {
        // ∂_m g⁻¹ = −g⁻¹ ∂_m g g⁻¹
        let dinv = -(&inv * &dg[m] * &inv);
        let dm: Vec<Matrix> = (0..n).map(|i| ddg[m][i].clone()).collect();
        let mut out = Coefficients::zeros(n);
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    let mut s = 0.0;
                    for k in 0..n {
                        s += dinv[(l, k)] * first_kind[(k * n + i) * n + j] + inv[(l, k)] * first(&dm, k, i, j);
                    }
                    out.set(l, i, j, s);
                }
            }
        }
        derivs.push(out);
    }
    Ok((gamma, Some(derivs)))
}

/// Christoffel symbols of a Riemannian model at `x`.
pub fn christoffel(model: &FinslerModel, x: &[f64]) -> Result<Coefficients> {
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: x.len(),
        });
    }
    metric_jets_for(model)?.coefficients(x)
}

pub(crate) fn riemannian_upper(model: &FinslerModel) -> Result<Vec<Expression>> {
    model.riemannian_metric().ok_or_else(|| {
        Error::Precondition(format!(
            "model `{}` is not Riemannian: its fundamental tensor depends on v",
            model.name()
        ))
    })
}

pub(crate) fn metric_jets_for(model: &FinslerModel) -> Result<Arc<MetricJets>> {
    model
        .cache
        .metric
        .get_or_init(|| Ok(Arc::new(MetricJets::new(&riemannian_upper(model)?, model.dim())?)))
        .clone()
}
