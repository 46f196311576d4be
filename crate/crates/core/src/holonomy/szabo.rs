use std::f64::consts::TAU;
use std::num::NonZeroUsize;
use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{christoffel_from_jets, default_verdict, Coefficients, ConnectionField};
use crate::error::{Error, Result};
use crate::expr::{Expression, Symbol, Tape};
use crate::linalg::{min_eigenvalue, serialize_rows, symmetric_from_upper, Matrix};
use crate::norms::{strong_convexity_check, FinslerModel};
use crate::sampling::{stream, unit_vector, QuasiPoints};

/// Agreement required between the Levi-Civita connection of the averaged
/// metric and the Berwald connection.
pub const SZABO_TOLERANCE: f64 = 1e-6;
const PLANAR_NODES: usize = 256;
const POLAR_NODES: usize = 48;
const AZIMUTH_NODES: usize = 96;
const MONTE_CARLO_SAMPLES: usize = 40_000;

/// Rule for integrating over Euclidean directions in the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Quadrature {
    /// Both directions of a line.
    Pair,
    /// Equally spaced angles on the circle.
    Trapezoid {
        nodes: usize,
    },
    /// Gauss–Legendre in the cosine of the polar angle, equally spaced azimuth.
    GaussLegendre {
        polar: usize,
        azimuth: usize,
    },
    MonteCarlo {
        samples: usize,
        seed: u64,
    },
}

impl Quadrature {
    pub fn for_dim(n: usize, seed: u64) -> Self {
        match n {
            1 => Self::Pair,
            2 => Self::Trapezoid { nodes: PLANAR_NODES },
            3 => Self::GaussLegendre {
                polar: POLAR_NODES,
                azimuth: AZIMUTH_NODES,
            },
            _ => Self::MonteCarlo {
                samples: MONTE_CARLO_SAMPLES,
                seed,
            },
        }
    }

    /// The same rule at half resolution, used for the error estimate.
    fn coarse(&self) -> Self {
        match *self {
            Self::Pair => Self::Pair,
            Self::Trapezoid { nodes } => Self::Trapezoid { nodes: nodes / 2 },
            Self::GaussLegendre { polar, azimuth } => Self::GaussLegendre {
                polar: polar / 2,
                azimuth: azimuth / 2,
            },
            Self::MonteCarlo { samples, seed } => Self::MonteCarlo {
                samples: samples / 2,
                seed,
            },
        }
    }

    /// Unit directions with positive weights; only ratios of weighted sums
    /// are used, so the weights need no normalization.
    fn directions(&self, n: usize) -> Vec<(Vec<f64>, f64)> {
        match *self {
            Self::Pair => vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)],
            Self::Trapezoid { nodes } => (0..nodes)
                .map(|k| {
                    let a = TAU * k as f64 / nodes as f64;
                    (vec![a.cos(), a.sin()], 1.0)
                })
                .collect(),
            Self::GaussLegendre { polar, azimuth } => {
                let rule = GaussLegendre::new(NonZeroUsize::new(polar.max(1)).expect("nonzero"));
                let mut out = Vec::with_capacity(polar * azimuth);
                for &(c, w) in rule.as_node_weight_pairs() {
                    let s = (1.0 - c * c).max(0.0).sqrt();
                    for k in 0..azimuth {
                        let a = TAU * k as f64 / azimuth as f64;
                        out.push((vec![c, s * a.cos(), s * a.sin()], w));
                    }
                }
                out
            }
            Self::MonteCarlo { samples, seed } => {
                let mut rng = stream(seed, 0x5ab0);
                (0..samples).map(|_| (unit_vector(&mut rng, n), 1.0)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SzaboProbe {
    pub point: Vec<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub metric: Matrix,
    pub min_eigenvalue: f64,
    pub quadrature_error: f64,
    /// `max |Γ(h) − Γ_Berwald|` at the point.
    pub christoffel_deviation: f64,
}

/// The Riemannian metric `h(x)` obtained by averaging the fundamental
/// tensor over the indicatrix with the normalized cone measure.
#[derive(Debug, Clone, Serialize)]
pub struct SzaboMetric {
    #[serde(skip)]
    model: FinslerModel,
    #[serde(skip)]
    tape: Arc<Tape>,
    #[serde(skip)]
    fine: Arc<Vec<(Vec<f64>, f64)>>,
    #[serde(skip)]
    coarse: Arc<Vec<(Vec<f64>, f64)>>,
    pub model_name: String,
    pub quadrature: Quadrature,
    pub probes: Vec<SzaboProbe>,
    /// Largest change between full and half resolution at the probes.
    pub error_estimate: f64,
    pub max_christoffel_deviation: f64,
    pub min_eigenvalue: f64,
    pub tolerance: f64,
    pub consistent: bool,
}

/// Outputs `[F, ∂_m F, g_ij, ∂_m g_ij]` with `g` in upper-triangular order.
fn averaging_tape(model: &FinslerModel) -> Result<Tape> {
    let n = model.dim();
    let f = model.norm_expression().clone();
    let g = model.fundamental_tensor_expressions();
    let mut roots: Vec<Expression> = vec![f.clone()];
    roots.extend((0..n).map(|m| f.differentiate(&Symbol::X(m))));
    roots.extend(g.iter().cloned());
    for m in 0..n {
        roots.extend(g.iter().map(|e| e.differentiate(&Symbol::X(m))));
    }
    Ok(Tape::compile(&roots, n)?)
}

/// `h = ∫ g F^{−n} du / ∫ F^{−n} du` over unit directions `u`, which is the
/// cone-measure average because `g` is 0-homogeneous; `∂_m h` follows by
/// differentiating under the integral.
fn average(tape: &Tape, n: usize, x: &[f64], dirs: &[(Vec<f64>, f64)]) -> Result<(Matrix, Vec<Matrix>)> {
    let p = n * (n + 1) / 2;
    let mut den = 0.0;
    let mut dden = vec![0.0; n];
    let mut num = vec![0.0; p];
    let mut dnum = vec![0.0; n * p];
    for (u, q) in dirs {
        let out = tape.eval(x, u).map_err(|e| Error::eval_at(e, x, u))?;
        let f = out[0];
        if !(f > 0.0) {
            return Err(Error::InvalidModel(format!(
                "F(x, u) = {f} is not positive at x = {x:?}, u = {u:?}"
            )));
        }
        let w = f.powi(-(n as i32));
        let g = &out[1 + n..1 + n + p];
        let dg = &out[1 + n + p..];
        den += q * w;
        for m in 0..n {
            let dw = -(n as f64) * w / f * out[1 + m];
            dden[m] += q * dw;
            for k in 0..p {
                dnum[m * p + k] += q * (dg[m * p + k] * w + g[k] * dw);
            }
        }
        for k in 0..p {
            num[k] += q * g[k] * w;
        }
    }
    let h: Vec<f64> = num.iter().map(|a| a / den).collect();
    let dh: Vec<Matrix> = (0..n)
        .map(|m| {
            let d: Vec<f64> = (0..p).map(|k| (dnum[m * p + k] - h[k] * dden[m]) / den).collect();
            symmetric_from_upper(n, &d)
        })
        .collect();
    Ok((symmetric_from_upper(n, &h), dh))
}

fn resolution_gap(fine: (&Matrix, &[Matrix]), coarse: (&Matrix, &[Matrix])) -> f64 {
    fine.1
        .iter()
        .zip(coarse.1)
        .map(|(a, b)| (a - b).abs().max())
        .fold((fine.0 - coarse.0).abs().max(), f64::max)
}

impl SzaboMetric {
    pub fn model(&self) -> &FinslerModel {
        &self.model
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        let n = self.model.dim();
        if x.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: x.len(),
            });
        }
        if !self.model.chart().contains(x) {
            return Err(Error::OutsideChart { x: x.to_vec() });
        }
        Ok(())
    }

    pub fn metric_at(&self, x: &[f64]) -> Result<Matrix> {
        Ok(self.metric_with_first(x)?.0)
    }

    /// `h(x)` and `∂_m h(x)`.
    pub fn metric_with_first(&self, x: &[f64]) -> Result<(Matrix, Vec<Matrix>)> {
        self.check_point(x)?;
        average(&self.tape, self.model.dim(), x, &self.fine)
    }

    /// Largest entry change of `h` and `∂h` between full and half resolution.
    pub fn quadrature_error_at(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let n = self.model.dim();
        let (h, dh) = average(&self.tape, n, x, &self.fine)?;
        let (hc, dhc) = average(&self.tape, n, x, &self.coarse)?;
        Ok(resolution_gap((&h, &dh), (&hc, &dhc)))
    }

    /// Levi-Civita coefficients of `h`.
    pub fn christoffel_at(&self, x: &[f64]) -> Result<Coefficients> {
        let (h, dh) = self.metric_with_first(x)?;
        Ok(christoffel_from_jets(x, &h, &dh, None)?.0)
    }
}

/// Average the fundamental tensor of a Berwald model and compare the
/// Levi-Civita connection of the result with the Berwald connection at
/// `probes` quasi-random points.
pub fn szabo_metrize(model: &FinslerModel, probes: usize, seed: u64) -> Result<SzaboMetric> {
    if probes == 0 {
        return Err(Error::Precondition("at least one probe point required".into()));
    }
    let verdict = default_verdict(model)?;
    if !verdict.is_berwald {
        return Err(Error::Precondition(format!(
            "averaging needs a Berwald model; `{}` has Berwald deviation {:.3e}",
            model.name(),
            verdict.max_deviation
        )));
    }
    let convexity = strong_convexity_check(model, probes, seed)?;
    if !convexity.pass {
        return Err(Error::Precondition(format!(
            "`{}` is not strongly convex: minimal eigenvalue {:e} at x = {:?}, v = {:?}",
            model.name(),
            convexity.min_eigenvalue,
            convexity.witness_point,
            convexity.witness_vector
        )));
    }
    let n = model.dim();
    let quadrature = Quadrature::for_dim(n, seed);
    let mut metric = SzaboMetric {
        model: model.clone(),
        tape: Arc::new(averaging_tape(model)?),
        fine: Arc::new(quadrature.directions(n)),
        coarse: Arc::new(quadrature.coarse().directions(n)),
        model_name: model.name().to_string(),
        quadrature,
        probes: Vec::new(),
        error_estimate: 0.0,
        max_christoffel_deviation: 0.0,
        min_eigenvalue: f64::INFINITY,
        tolerance: SZABO_TOLERANCE,
        consistent: false,
    };
    let berwald = ConnectionField::berwald(model)?;
    let mut reference = vec![0.0; n];
    reference[0] = 1.0;
    let mut q = QuasiPoints::new(n, seed ^ 0x5ab0);
    let points: Vec<Vec<f64>> = (0..probes).map(|_| q.next_in(model.chart())).collect();
    let results = points
        .par_iter()
        .map(|x| {
            let (h, dh) = metric.metric_with_first(x)?;
            let coarse = average(&metric.tape, n, x, &metric.coarse)?;
            let gamma = christoffel_from_jets(x, &h, &dh, None)?.0;
            Ok(SzaboProbe {
                point: x.clone(),
                min_eigenvalue: min_eigenvalue(&h),
                quadrature_error: resolution_gap((&h, &dh), (&coarse.0, &coarse.1)),
                christoffel_deviation: gamma.max_abs_diff(&berwald.coefficients(x, &reference)?),
                metric: h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    for p in &results {
        metric.error_estimate = metric.error_estimate.max(p.quadrature_error);
        metric.max_christoffel_deviation = metric.max_christoffel_deviation.max(p.christoffel_deviation);
        metric.min_eigenvalue = metric.min_eigenvalue.min(p.min_eigenvalue);
    }
    if !(metric.min_eigenvalue > 0.0) {
        return Err(Error::Degenerate(format!(
            "averaged metric is not positive definite (minimal eigenvalue {:e})",
            metric.min_eigenvalue
        )));
    }
    metric.consistent = metric.max_christoffel_deviation <= SZABO_TOLERANCE;
    metric.probes = results;
    Ok(metric)
}
