use rayon::prelude::*;
use serde::Serialize;

use super::{Coefficients, ConnectionField};
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expression, Symbol};
use crate::norms::{ChartBox, FinslerModel};
use crate::sampling::{stream, unit_vector, QuasiPoints};

pub const BERWALD_TOLERANCE: f64 = 1e-8;
pub const AGREEMENT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_PROBE_POINTS: usize = 20;
pub const DEFAULT_PROBE_VECTORS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerwaldReport {
    pub points: usize,
    pub vectors: usize,
    pub seed: u64,
    /// `max_x max_{v,w} max_entry |Γ(x, v) − Γ(x, w)|`.
    pub max_deviation: f64,
    pub witness_point: Vec<f64>,
    pub witness_vectors: [Vec<f64>; 2],
    pub max_torsion: f64,
    pub tolerance: f64,
    pub is_berwald: bool,
}

impl BerwaldReport {
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.is_berwald = self.max_deviation <= tolerance;
        self
    }
}

/// Sampled points of a check: quasi-random positions and, per position,
/// `vectors` uniform directions from an independent stream.
pub(crate) fn probe_points(chart: &ChartBox, points: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut q = QuasiPoints::new(chart.dim(), seed);
    (0..points).map(|_| q.next_in(chart)).collect()
}

pub(crate) fn probe_vectors(n: usize, count: usize, seed: u64, point: usize) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, 0xb0_0000 + point as u64);
    (0..count).map(|_| unit_vector(&mut rng, n)).collect()
}

struct PointDeviation {
    deviation: f64,
    pair: (usize, usize),
    torsion: f64,
}

fn spread(coefficients: &[Coefficients]) -> PointDeviation {
    let mut out = PointDeviation {
        deviation: 0.0,
        pair: (0, usize::from(coefficients.len() > 1)),
        torsion: 0.0,
    };
    let len = coefficients[0].as_slice().len();
    for c in coefficients {
        out.torsion = out.torsion.max(c.torsion());
    }
    for e in 0..len {
        let (mut lo, mut hi) = (0, 0);
        for (a, c) in coefficients.iter().enumerate() {
            if c.as_slice()[e] < coefficients[lo].as_slice()[e] {
                lo = a;
            }
            if c.as_slice()[e] > coefficients[hi].as_slice()[e] {
                hi = a;
            }
        }
        let d = coefficients[hi].as_slice()[e] - coefficients[lo].as_slice()[e];
        if d > out.deviation {
            out.deviation = d;
            out.pair = (lo, hi);
        }
    }
    out
}

/// Probe the reference-vector dependence of the Berwald coefficients.
pub fn berwald_test(model: &FinslerModel, points: usize, vectors: usize, seed: u64) -> Result<BerwaldReport> {
    if points == 0 {
        return Err(Error::Precondition("at least one probe point required".into()));
    }
    if vectors < 2 {
        return Err(Error::Precondition(
            "at least two probe vectors per point required".into(),
        ));
    }
    let n = model.dim();
    let xs = probe_points(model.chart(), points, seed);
    let per_point: Vec<Result<(PointDeviation, Vec<Vec<f64>>)>> = xs
        .par_iter()
        .enumerate()
        .map(|(p, x)| {
            let vs = probe_vectors(n, vectors, seed, p);
            let cs = vs
                .iter()
                .map(|v| super::berwald_coefficients(model, x, v))
                .collect::<Result<Vec<_>>>()?;
            Ok((spread(&cs), vs))
        })
        .collect();
    let mut report = BerwaldReport {
        points,
        vectors,
        seed,
        max_deviation: 0.0,
        witness_point: xs[0].clone(),
        witness_vectors: [Vec::new(), Vec::new()],
        max_torsion: 0.0,
        tolerance: BERWALD_TOLERANCE,
        is_berwald: false,
    };
    for (p, r) in per_point.into_iter().enumerate() {
        let (d, vs) = r?;
        report.max_torsion = report.max_torsion.max(d.torsion);
        if d.deviation > report.max_deviation || report.witness_vectors[0].is_empty() {
            report.max_deviation = report.max_deviation.max(d.deviation);
            report.witness_point = xs[p].clone();
            report.witness_vectors = [vs[d.pair.0].clone(), vs[d.pair.1].clone()];
        }
    }
    report.is_berwald = report.max_deviation <= BERWALD_TOLERANCE;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub probes: usize,
    pub seed: u64,
    pub max_deviation: f64,
    pub witness_point: Vec<f64>,
    pub witness_vector: Vec<f64>,
    pub tolerance: f64,
    pub agree: bool,
}

/// Compare the Berwald coefficients of two models on the common part of
/// their chart boxes.
pub fn connections_agree(
    first: &FinslerModel,
    second: &FinslerModel,
    probes: usize,
    seed: u64,
) -> Result<AgreementReport> {
    if first.dim() != second.dim() {
        return Err(Error::Dimension {
            expected: first.dim(),
            found: second.dim(),
        });
    }
    let Some(chart) = first.chart().intersect(second.chart()) else {
        return Err(Error::Precondition(format!(
            "chart boxes of `{}` and `{}` do not overlap",
            first.name(),
            second.name()
        )));
    };
    if probes == 0 {
        return Err(Error::Precondition("at least one probe required".into()));
    }
    let n = first.dim();
    let xs = probe_points(&chart, probes, seed);
    let devs: Vec<Result<(f64, Vec<f64>)>> = xs
        .par_iter()
        .enumerate()
        .map(|(p, x)| {
            let v = probe_vectors(n, 1, seed, p).remove(0);
            let a = super::berwald_coefficients(first, x, &v)?;
            let b = super::berwald_coefficients(second, x, &v)?;
            Ok((a.max_abs_diff(&b), v))
        })
        .collect();
    let mut report = AgreementReport {
        probes,
        seed,
        max_deviation: 0.0,
        witness_point: xs[0].clone(),
        witness_vector: Vec::new(),
        tolerance: AGREEMENT_TOLERANCE,
        agree: false,
    };
    for (p, r) in devs.into_iter().enumerate() {
        let (d, v) = r?;
        if d > report.max_deviation || report.witness_vector.is_empty() {
            report.max_deviation = report.max_deviation.max(d);
            report.witness_point = xs[p].clone();
            report.witness_vector = v;
        }
    }
    report.agree = report.max_deviation <= AGREEMENT_TOLERANCE;
    Ok(report)
}

/// `(D_V X)^i = v^j ∂_j X^i + Γ^i_jk v^j X^k` for a vector field given by
/// expressions in the position symbols. Reference vector is `v`.
pub fn covariant_derivative(
    connection: &ConnectionField,
    field: &[Expression],
    v: &[f64],
    x: &[f64],
) -> Result<Vec<f64>> {
    let n = connection.dim();
    if field.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: field.len(),
        });
    }
    connection.model().check_dims(x, v)?;
    for e in field {
        if let Some(s) = e.symbols().into_iter().find(|s| !matches!(s, Symbol::X(i) if *i < n)) {
            return Err(Error::InvalidModel(format!(
                "vector field component refers to `{s}`; only positions are allowed"
            )));
        }
    }
    let b = Bindings::new().with_x(x);
    let values = field
        .iter()
        .map(|e| e.evaluate(&b).map_err(|err| Error::eval_at(err, x, v)))
        .collect::<Result<Vec<_>>>()?;
    let gamma = connection.coefficients(x, v)?;
    let correction = gamma.contract(v, &values);
    let mut out = Vec::with_capacity(n);
    for (i, e) in field.iter().enumerate() {
        let mut d = correction[i];
        for (j, vj) in v.iter().enumerate() {
            if *vj != 0.0 {
                d += vj
                    * e.differentiate(&Symbol::X(j))
                        .evaluate(&b)
                        .map_err(|err| Error::eval_at(err, x, v))?;
            }
        }
        out.push(d);
    }
    Ok(out)
}
