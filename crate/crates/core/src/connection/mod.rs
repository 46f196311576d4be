//! Affine connections induced by Finsler models.

mod checks;
mod christoffel;
mod geodesic;
pub mod ode;
mod spray;
mod transport;

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::error::Result;
use crate::norms::FinslerModel;

pub use checks::{
    berwald_test, connections_agree, covariant_derivative, AgreementReport, BerwaldReport, AGREEMENT_TOLERANCE,
    BERWALD_TOLERANCE, DEFAULT_PROBE_POINTS, DEFAULT_PROBE_VECTORS,
};
pub use christoffel::{christoffel, christoffel_from_jets, MetricJets};
pub use geodesic::{integrate_geodesic, shoot_geodesic, CurveRecord, GeodesicOptions, SPEED_DRIFT_TOLERANCE};
pub use spray::{berwald_coefficients, spray_coefficients, SprayJets};
pub use transport::{parallel_transport, transport_matrix, Curve, ParametricCurve, TransportRecord};

/// Connection coefficients `Γ^k_ij`, stored as `[k][i][j]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficients {
    dim: usize,
    data: Vec<f64>,
}

impl Coefficients {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    #[inline]
    pub fn set(&mut self, k: usize, i: usize, j: usize, value: f64) {
        self.data[(k * self.dim + i) * self.dim + j] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// `Γ^k_ij a^i b^j`.
    pub fn contract(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|k| {
                let mut s = 0.0;
                for i in 0..n {
                    for j in 0..n {
                        s += self.get(k, i, j) * a[i] * b[j];
                    }
                }
                s
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &Coefficients) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, a| m.max(a.abs()))
    }

    /// `max |Γ^k_ij − Γ^k_ji|`.
    pub fn torsion(&self) -> f64 {
        let n = self.dim;
        let mut t = 0.0_f64;
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    t = t.max((self.get(k, i, j) - self.get(k, j, i)).abs());
                }
            }
        }
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConnectionSource {
    /// `Γ = ∂²G/∂v∂v` from the geodesic spray of the Finsler norm.
    Berwald,
    /// Christoffel symbols of a Riemannian metric.
    LeviCivita,
}

#[derive(Debug, Clone)]
enum Jets {
    Spray(Arc<SprayJets>),
    Metric(Arc<MetricJets>),
}

/// An immutable connection on the chart of a model.
#[derive(Debug, Clone)]
pub struct ConnectionField {
    model: FinslerModel,
    source: ConnectionSource,
    jets: Jets,
    /// Attached verdict; the model-wide default is used when empty.
    verdict: Arc<OnceLock<Result<BerwaldReport>>>,
}

impl ConnectionField {
    pub fn berwald(model: &FinslerModel) -> Result<Self> {
        Ok(Self {
            jets: Jets::Spray(spray::jets_for(model)?),
            model: model.clone(),
            source: ConnectionSource::Berwald,
            verdict: Default::default(),
        })
    }

    pub fn levi_civita(model: &FinslerModel) -> Result<Self> {
        Ok(Self {
            jets: Jets::Metric(christoffel::metric_jets_for(model)?),
            model: model.clone(),
            source: ConnectionSource::LeviCivita,
            verdict: Default::default(),
        })
    }

    /// Attach a precomputed Berwald verdict.
    pub fn with_verdict(self, report: BerwaldReport) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(Ok(report));
        Self {
            verdict: Arc::new(cell),
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn model(&self) -> &FinslerModel {
        &self.model
    }

    pub fn source(&self) -> ConnectionSource {
        self.source
    }

    /// Berwald verdict of the underlying model, probed with default settings
    /// at seed 0 unless one was attached.
    pub fn verdict(&self) -> Result<&BerwaldReport> {
        if let Some(attached) = self.verdict.get() {
            return attached.as_ref().map_err(Clone::clone);
        }
        default_verdict(&self.model)
    }

    pub fn is_berwald(&self) -> Result<bool> {
        Ok(self.verdict()?.is_berwald)
    }

    fn check(&self, x: &[f64], v: &[f64]) -> Result<()> {
        self.model.check_dims(x, v)
    }

    /// `Γ^k_ij(x, v)`; `v` is the reference vector and is ignored by
    /// Levi-Civita connections.
    pub fn coefficients(&self, x: &[f64], v: &[f64]) -> Result<Coefficients> {
        self.check(x, v)?;
        match &self.jets {
            Jets::Spray(j) => j.coefficients(x, v),
            Jets::Metric(j) => j.coefficients(x),
        }
    }

    /// `Γ` and `∂_m Γ` (indexed by `m`) at fixed reference vector.
    pub fn coefficients_with_derivatives(&self, x: &[f64], v: &[f64]) -> Result<(Coefficients, Vec<Coefficients>)> {
        self.check(x, v)?;
        match &self.jets {
            Jets::Spray(j) => j.coefficients_with_derivatives(x, v),
            Jets::Metric(j) => j.coefficients_with_derivatives(x),
        }
    }

    /// Geodesic acceleration `ẍ` for velocity `v`.
    pub fn acceleration(&self, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check(x, v)?;
        match &self.jets {
            Jets::Spray(j) => Ok(j.spray(x, v)?.into_iter().map(|g| -2.0 * g).collect()),
            Jets::Metric(j) => Ok(j.coefficients(x)?.contract(v, v).into_iter().map(|a| -a).collect()),
        }
    }
}

/// Berwald verdict with default probes at seed 0, computed once per model.
pub fn default_verdict(model: &FinslerModel) -> Result<&BerwaldReport> {
    model
        .cache
        .verdict
        .get_or_init(|| berwald_test(model, DEFAULT_PROBE_POINTS, DEFAULT_PROBE_VECTORS, 0))
        .as_ref()
        .map_err(Clone::clone)
}

#[cfg(test)]
mod tests;
