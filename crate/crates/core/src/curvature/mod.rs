//! Curvature of a connection: the Riemann tensor and its contractions.

mod checks;
mod weighted;

use serde::Serialize;

use crate::connection::{Coefficients, ConnectionField};
use crate::error::{Error, Result};
use crate::linalg::{quadratic_form, Matrix};
use crate::norms::{fundamental_tensor, FinslerModel};

pub use checks::{
    einstein_check, ricci_invariance_check, weighted_invariance_check, EinsteinReport, EinsteinVerdict,
    InvarianceReport, EINSTEIN_TOLERANCE, RICCI_INVARIANCE_TOLERANCE, WEIGHTED_INVARIANCE_TOLERANCE,
};
pub use weighted::{weighted_ricci, weighted_ricci_with, EffectiveDimension, WeightSpec, WeightedRicci};

pub const ANTISYMMETRY_TOLERANCE: f64 = 1e-10;
pub const BIANCHI_TOLERANCE: f64 = 1e-9;

/// `R^i_{jkl}` stored as `[i][j][k][l]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvatureTensor {
    dim: usize,
    data: Vec<f64>,
}

impl CurvatureTensor {
    fn from_jets(gamma: &Coefficients, d: &[Coefficients]) -> Self {
        let n = gamma.dim();
        let mut data = vec![0.0; n * n * n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let mut r = d[k].get(i, l, j) - d[l].get(i, k, j);
                        for m in 0..n {
                            r += gamma.get(i, k, m) * gamma.get(m, l, j) - gamma.get(i, l, m) * gamma.get(m, k, j);
                        }
                        data[((i * n + j) * n + k) * n + l] = r;
                    }
                }
            }
        }
        Self { dim: n, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize, k: usize, l: usize) -> f64 {
        let n = self.dim;
        self.data[((i * n + j) * n + k) * n + l]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `(R(V, W)Z)^i = R^i_{jkl} Z^j V^k W^l`.
    pub fn apply(&self, v: &[f64], w: &[f64], z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| {
                let mut s = 0.0;
                for j in 0..n {
                    for k in 0..n {
                        for l in 0..n {
                            s += self.get(i, j, k, l) * z[j] * v[k] * w[l];
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// `Ric(v) = R^i_{jik} v^j v^k`.
    pub fn ricci(&self, v: &[f64]) -> f64 {
        let n = self.dim;
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    s += self.get(i, j, i, k) * v[j] * v[k];
                }
            }
        }
        s
    }

    /// `max |R^i_{jkl} + R^i_{jlk}|`.
    pub fn antisymmetry_defect(&self) -> f64 {
        let n = self.dim;
        let mut m = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        m = m.max((self.get(i, j, k, l) + self.get(i, j, l, k)).abs());
                    }
                }
            }
        }
        m
    }

    /// `max |R^i_{jkl} + R^i_{klj} + R^i_{ljk}|`.
    pub fn bianchi_defect(&self) -> f64 {
        let n = self.dim;
        let mut m = 0.0_f64;
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let s = self.get(i, j, k, l) + self.get(i, k, l, j) + self.get(i, l, j, k);
                        m = m.max(s.abs());
                    }
                }
            }
        }
        m
    }
}

/// Curvature tensor of `C` at `x`; `v` is the reference vector of the
/// coefficients (irrelevant for Berwald and Levi-Civita connections).
pub fn curvature_tensor(connection: &ConnectionField, x: &[f64], v: &[f64]) -> Result<CurvatureTensor> {
    let (gamma, d) = connection.coefficients_with_derivatives(x, v)?;
    Ok(CurvatureTensor::from_jets(&gamma, &d))
}

fn bilinear(g: &Matrix, a: &[f64], b: &[f64]) -> f64 {
    quadratic_form(g, a, b)
}

fn plane_curvature(g: &Matrix, r: &CurvatureTensor, v: &[f64], w: &[f64]) -> Result<f64> {
    let (vv, ww, vw) = (bilinear(g, v, v), bilinear(g, w, w), bilinear(g, v, w));
    let den = vv * ww - vw * vw;
    if den <= 1e-14 * (vv * ww).abs().max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(format!(
            "vectors {v:?} and {w:?} do not span a plane"
        )));
    }
    let num = bilinear(g, &r.apply(v, w, w), v);
    Ok(num / den)
}

/// `K(v, w) = g(R(v, w)w, v) / (g(v, v)g(w, w) − g(v, w)²)` for a Riemannian model.
pub fn sectional_curvature(model: &FinslerModel, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let c = ConnectionField::levi_civita(model)?;
    model.check_dims(x, v)?;
    model.check_dims(x, w)?;
    let g = model.metric_at(x)?;
    plane_curvature(&g, &curvature_tensor(&c, x, v)?, v, w)
}

/// Flag curvature with pole `v`, computed with `g_v` throughout. Refused
/// unless the model passes the Berwald test.
pub fn flag_curvature(model: &FinslerModel, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let c = ConnectionField::berwald(model)?;
    flag_curvature_with(&c, x, v, w)
}

pub fn flag_curvature_with(connection: &ConnectionField, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    let report = connection.verdict()?;
    if !report.is_berwald {
        return Err(Error::Precondition(format!(
            "flag curvature is only defined here for Berwald models; `{}` has Berwald deviation {:.3e}",
            connection.model().name(),
            report.max_deviation
        )));
    }
    let model = connection.model();
    model.check_dims(x, w)?;
    let gv = fundamental_tensor(model, x, v)?.matrix;
    plane_curvature(&gv, &curvature_tensor(connection, x, v)?, v, w)
}

/// `Ric(v)` of the connection at `x`.
pub fn ricci(connection: &ConnectionField, x: &[f64], v: &[f64]) -> Result<f64> {
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(curvature_tensor(connection, x, v)?.ricci(v))
}

/// Curvature data at one point, as reported by the command line.
#[derive(Debug, Clone, Serialize)]
pub struct CurvatureSample {
    pub point: Vec<f64>,
    pub reference: Vec<f64>,
    pub tensor: CurvatureTensor,
    pub pole: Option<Vec<f64>>,
    pub edge: Option<Vec<f64>>,
    pub sectional: Option<f64>,
    pub flag: Option<f64>,
    pub ricci: f64,
    /// `(N, Ric_N(v))`; `N = None` stands for `∞`.
    pub weighted: Vec<(Option<f64>, f64)>,
    pub antisymmetry_defect: f64,
    pub bianchi_defect: f64,
}

impl CurvatureSample {
    pub fn at(connection: &ConnectionField, x: &[f64], v: &[f64]) -> Result<Self> {
        let tensor = curvature_tensor(connection, x, v)?;
        Ok(Self {
            point: x.to_vec(),
            reference: v.to_vec(),
            ricci: tensor.ricci(v),
            antisymmetry_defect: tensor.antisymmetry_defect(),
            bianchi_defect: tensor.bianchi_defect(),
            tensor,
            pole: None,
            edge: None,
            sectional: None,
            flag: None,
            weighted: Vec::new(),
        })
    }

    /// Add the flag with pole `v` (the reference vector) and edge `w`.
    /// Sectional curvature is filled for Riemannian models, flag curvature
    /// for Berwald ones.
    pub fn with_flag(mut self, connection: &ConnectionField, w: &[f64]) -> Result<Self> {
        let model = connection.model();
        let v = self.reference.clone();
        if model.is_riemannian() {
            let g = model.metric_at(&self.point)?;
            self.sectional = Some(plane_curvature(&g, &self.tensor, &v, w)?);
        }
        if connection.is_berwald()? {
            let gv = fundamental_tensor(model, &self.point, &v)?.matrix;
            self.flag = Some(plane_curvature(&gv, &self.tensor, &v, w)?);
        }
        self.pole = Some(v);
        self.edge = Some(w.to_vec());
        Ok(self)
    }

    pub fn with_weighted(mut self, connection: &ConnectionField, specs: &[WeightSpec]) -> Result<Self> {
        for spec in specs {
            let r = weighted_ricci_with(connection, spec, &self.point, &self.reference)?;
            self.weighted.push((spec.dimension.finite(), r.value));
        }
        Ok(self)
    }

    pub fn csv_header(n: usize) -> String {
        let mut h: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        h.extend((1..=n).map(|i| format!("v{i}")));
        h.extend(["K", "flag", "Ric"].map(String::from));
        h.join(",")
    }

    pub fn csv_row(&self) -> String {
        let opt = |o: Option<f64>| o.map_or(String::new(), |v| format!("{v:e}"));
        let mut cells: Vec<String> = self
            .point
            .iter()
            .chain(&self.reference)
            .map(|c| format!("{c:e}"))
            .collect();
        cells.push(opt(self.sectional));
        cells.push(opt(self.flag));
        cells.push(format!("{:e}", self.ricci));
        for (_, r) in &self.weighted {
            cells.push(format!("{r:e}"));
        }
        cells.join(",")
    }
}

#[cfg(test)]
mod tests;
