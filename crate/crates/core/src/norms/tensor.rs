use serde::Serialize;

use super::FinslerModel;
use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, symmetric_from_upper, Matrix};
use crate::sampling::{stream, unit_vector, QuasiPoints};

/// `g_ij(x, v) = ½ ∂²F²/∂v^i∂v^j` at one point-vector pair.
#[derive(Debug, Clone, Serialize)]
pub struct FundamentalTensorSample {
    pub point: Vec<f64>,
    pub vector: Vec<f64>,
    pub norm: f64,
    pub matrix: Matrix,
    pub min_eigenvalue: f64,
}

pub fn fundamental_tensor(model: &FinslerModel, x: &[f64], v: &[f64]) -> Result<FundamentalTensorSample> {
    model.check_dims(x, v)?;
    if v.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    if !model.chart().contains(x) {
        return Err(Error::OutsideChart { x: x.to_vec() });
    }
    let out = model
        .fundamental_tape()?
        .eval(x, v)
        .map_err(|e| Error::eval_at(e, x, v))?;
    let matrix = symmetric_from_upper(model.dim(), &out[2..]);
    Ok(FundamentalTensorSample {
        point: x.to_vec(),
        vector: v.to_vec(),
        norm: out[0],
        min_eigenvalue: min_eigenvalue(&matrix),
        matrix,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub min_eigenvalue: f64,
    pub min_norm: f64,
    pub witness_point: Vec<f64>,
    pub witness_vector: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

pub const CONVEXITY_TOLERANCE: f64 = 1e-9;

/// Probe pairs shared by the sampled checks: the coordinate axes at the
/// chart center first, then quasi-random points with uniform directions.
/// Each vector is also used with its sign flipped.
pub(crate) fn probe_pairs(model: &FinslerModel, samples: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let n = model.dim();
    let center = model.chart().center();
    let mut pairs = Vec::with_capacity(2 * samples);
    for i in 0..n.min(samples) {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        pairs.push((center.clone(), e));
    }
    let mut quasi = QuasiPoints::new(n, seed);
    let mut rng = stream(seed, 0x5eed);
    while pairs.len() < samples {
        let x = quasi.next_in(model.chart());
        let v = unit_vector(&mut rng, n);
        pairs.push((x, v));
    }
    let flipped: Vec<_> = pairs
        .iter()
        .map(|(x, v)| (x.clone(), v.iter().map(|c| -c).collect()))
        .collect();
    pairs.extend(flipped);
    pairs
}

pub fn strong_convexity_check(model: &FinslerModel, samples: usize, seed: u64) -> Result<ConvexityReport> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let mut report = ConvexityReport {
        samples,
        min_eigenvalue: f64::INFINITY,
        min_norm: f64::INFINITY,
        witness_point: Vec::new(),
        witness_vector: Vec::new(),
        tolerance: CONVEXITY_TOLERANCE,
        pass: false,
    };
    for (x, v) in probe_pairs(model, samples, seed) {
        let sample = fundamental_tensor(model, &x, &v)?;
        report.min_norm = report.min_norm.min(sample.norm);
        if sample.min_eigenvalue < report.min_eigenvalue {
            report.min_eigenvalue = sample.min_eigenvalue;
            report.witness_point = x;
            report.witness_vector = v;
        }
    }
    report.pass = report.min_eigenvalue > CONVEXITY_TOLERANCE && report.min_norm > 0.0;
    Ok(report)
}

pub const HOMOGENEITY_LAMBDAS: [f64; 3] = [0.5, 2.0, 7.0];
pub const HOMOGENEITY_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Serialize)]
pub struct HomogeneityReport {
    pub samples: usize,
    /// `max |F(x, λv) − λF(x, v)| / (λ F(x, v))` over probes, per λ.
    pub deviation_by_lambda: Vec<(f64, f64)>,
    pub max_relative_deviation: f64,
    pub witness_point: Vec<f64>,
    pub witness_vector: Vec<f64>,
    pub witness_lambda: f64,
    pub tolerance: f64,
    pub pass: bool,
}

pub fn homogeneity_check(model: &FinslerModel, samples: usize, seed: u64) -> Result<HomogeneityReport> {
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let mut report = HomogeneityReport {
        samples,
        deviation_by_lambda: HOMOGENEITY_LAMBDAS.iter().map(|&l| (l, 0.0)).collect(),
        max_relative_deviation: 0.0,
        witness_point: Vec::new(),
        witness_vector: Vec::new(),
        witness_lambda: f64::NAN,
        tolerance: HOMOGENEITY_TOLERANCE,
        pass: false,
    };
    for (x, v) in probe_pairs(model, samples, seed) {
        let base = model.norm_at(&x, &v)?;
        for (k, &lambda) in HOMOGENEITY_LAMBDAS.iter().enumerate() {
            let scaled: Vec<f64> = v.iter().map(|c| lambda * c).collect();
            let value = model.norm_at(&x, &scaled)?;
            let denom = (lambda * base).abs().max(f64::MIN_POSITIVE);
            let dev = (value - lambda * base).abs() / denom;
            let slot = &mut report.deviation_by_lambda[k].1;
            *slot = slot.max(dev);
            if dev > report.max_relative_deviation || report.witness_point.is_empty() {
                report.max_relative_deviation = report.max_relative_deviation.max(dev);
                report.witness_point = x.clone();
                report.witness_vector = v.clone();
                report.witness_lambda = lambda;
            }
        }
    }
    report.pass = report.max_relative_deviation <= HOMOGENEITY_TOLERANCE;
    Ok(report)
}
