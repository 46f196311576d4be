use rayon::prelude::*;
use serde::Serialize;

use super::ricci;
use super::weighted::{weighted_ricci_with, EffectiveDimension, WeightSpec};
use crate::connection::{connections_agree, AgreementReport, ConnectionField};
use crate::error::{Error, Result};
use crate::norms::{fundamental_tensor, FinslerModel};
use crate::sampling::{stream, unit_vector, QuasiPoints};

pub const RICCI_INVARIANCE_TOLERANCE: f64 = 1e-8;
pub const WEIGHTED_INVARIANCE_TOLERANCE: f64 = 1e-7;
pub const EINSTEIN_TOLERANCE: f64 = 1e-7;
const RICCI_FLAT: f64 = 1e-7;
const FIBER_VARIATION: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub probes: usize,
    pub seed: u64,
    pub agreement: AgreementReport,
    pub max_difference: f64,
    pub witness_point: Vec<f64>,
    pub witness_vector: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Probe positions paired with reference vectors.
type Probes = Vec<(Vec<f64>, Vec<f64>)>;

fn common_probes(
    first: &FinslerModel,
    second: &FinslerModel,
    probes: usize,
    seed: u64,
) -> Result<(AgreementReport, Probes)> {
    let agreement = connections_agree(first, second, probes, seed)?;
    if !agreement.agree {
        return Err(Error::Precondition(format!(
            "connections of `{}` and `{}` differ by {:.3e}; the models are not affinely equivalent",
            first.name(),
            second.name(),
            agreement.max_deviation
        )));
    }
    let chart = first
        .chart()
        .intersect(second.chart())
        .expect("agreement check found a common box");
    let n = first.dim();
    let mut q = QuasiPoints::new(n, seed ^ 0x0ff5e7);
    let mut rng = stream(seed, 0x71cc1);
    let pairs = (0..probes)
        .map(|_| (q.next_in(&chart), unit_vector(&mut rng, n)))
        .collect();
    Ok((agreement, pairs))
}

/// Difference of two values that may both be `−∞`.
fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

fn invariance_report(
    agreement: AgreementReport,
    pairs: &[(Vec<f64>, Vec<f64>)],
    differences: Vec<Result<f64>>,
    seed: u64,
    tolerance: f64,
) -> Result<InvarianceReport> {
    let mut report = InvarianceReport {
        probes: pairs.len(),
        seed,
        agreement,
        max_difference: 0.0,
        witness_point: pairs[0].0.clone(),
        witness_vector: pairs[0].1.clone(),
        tolerance,
        pass: false,
    };
    for ((x, v), d) in pairs.iter().zip(differences) {
        let d = d?;
        if d > report.max_difference {
            report.max_difference = d;
            report.witness_point = x.clone();
            report.witness_vector = v.clone();
        }
    }
    report.pass = report.max_difference <= tolerance;
    Ok(report)
}

/// Compare `Ric` of two affinely equivalent models at random `(x, v)`.
pub fn ricci_invariance_check(
    first: &FinslerModel,
    second: &FinslerModel,
    probes: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    let (agreement, pairs) = common_probes(first, second, probes, seed)?;
    let (c1, c2) = (ConnectionField::berwald(first)?, ConnectionField::berwald(second)?);
    let diffs = pairs
        .par_iter()
        .map(|(x, v)| Ok(gap(ricci(&c1, x, v)?, ricci(&c2, x, v)?)))
        .collect();
    invariance_report(agreement, &pairs, diffs, seed, RICCI_INVARIANCE_TOLERANCE)
}

/// Compare `Ric_N` for `N ∈ {n, n + 1, ∞}` and the dimension of `weight`,
/// with the same weight relative to each model's Busemann–Hausdorff measure.
pub fn weighted_invariance_check(
    first: &FinslerModel,
    second: &FinslerModel,
    weight: &WeightSpec,
    probes: usize,
    seed: u64,
) -> Result<InvarianceReport> {
    let (agreement, pairs) = common_probes(first, second, probes, seed)?;
    let n = first.dim() as f64;
    let mut dims = vec![
        EffectiveDimension::Finite(n),
        EffectiveDimension::Finite(n + 1.0),
        EffectiveDimension::Infinite,
    ];
    if !dims.contains(&weight.dimension) {
        dims.push(weight.dimension);
    }
    let (c1, c2) = (ConnectionField::berwald(first)?, ConnectionField::berwald(second)?);
    let diffs = pairs
        .par_iter()
        .map(|(x, v)| {
            let mut worst = 0.0_f64;
            for d in &dims {
                let spec = WeightSpec::new(weight.psi.clone(), *d);
                let a = weighted_ricci_with(&c1, &spec, x, v)?.value;
                let b = weighted_ricci_with(&c2, &spec, x, v)?.value;
                worst = worst.max(gap(a, b));
            }
            Ok(worst)
        })
        .collect();
    invariance_report(agreement, &pairs, diffs, seed, WEIGHTED_INVARIANCE_TOLERANCE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum EinsteinVerdict {
    Einstein { lambda: f64 },
    RicciFlat,
    NotEinstein,
}

#[derive(Debug, Clone, Serialize)]
pub struct EinsteinReport {
    pub points: Vec<Vec<f64>>,
    pub vectors_per_point: usize,
    pub seed: u64,
    /// Least-squares `λ̂(x)` per point from `Ric(v) ≈ λ F(v)²`.
    pub lambdas: Vec<f64>,
    /// `max |Ric(v) − λ̂ F(v)²| / max(1, |λ̂|)` over all samples.
    pub max_residual: f64,
    pub lambda_spread: f64,
    /// Largest change of `g_ij(x, v)` across sampled `v` at a point.
    pub fiber_variation: f64,
    pub tolerance: f64,
    pub verdict: EinsteinVerdict,
    /// Einstein with `λ ≠ 0` on a model whose fundamental tensor depends
    /// on `v`, which a Berwald space cannot be.
    pub rigidity_flag: bool,
}

struct PointFit {
    lambda: f64,
    residual: f64,
    fiber_variation: f64,
}

/// Test `Ric(v) = λ F(v)²` with constant `λ` on sampled points.
pub fn einstein_check(model: &FinslerModel, points: usize, seed: u64) -> Result<EinsteinReport> {
    if points == 0 {
        return Err(Error::Precondition("at least one probe point required".into()));
    }
    let c = ConnectionField::berwald(model)?;
    let verdict = c.verdict()?;
    if !verdict.is_berwald {
        return Err(Error::Precondition(format!(
            "Einstein check needs a Berwald model; `{}` has Berwald deviation {:.3e}",
            model.name(),
            verdict.max_deviation
        )));
    }
    let n = model.dim();
    let per_point = 4 * n;
    let mut q = QuasiPoints::new(n, seed);
    let xs: Vec<Vec<f64>> = (0..points).map(|_| q.next_in(model.chart())).collect();
    let fits: Vec<Result<PointFit>> = xs
        .par_iter()
        .enumerate()
        .map(|(p, x)| {
            let mut rng = stream(seed, 0xe1_0000 + p as u64);
            let mut ric = Vec::with_capacity(per_point);
            let mut tensors = Vec::with_capacity(per_point);
            for _ in 0..per_point {
                let u = unit_vector(&mut rng, n);
                let sample = fundamental_tensor(model, x, &u)?;
                let v: Vec<f64> = u.iter().map(|c| c / sample.norm).collect();
                ric.push(ricci(&c, x, &v)?);
                tensors.push(sample.matrix);
            }
            // F(v) = 1 for every sample, so the fit is the mean
            let lambda = ric.iter().sum::<f64>() / per_point as f64;
            let residual = ric.iter().fold(0.0_f64, |m, r| m.max((r - lambda).abs())) / lambda.abs().max(1.0);
            let fiber_variation = tensors
                .iter()
                .fold(0.0_f64, |m, t| m.max((t - &tensors[0]).abs().max()));
            Ok(PointFit {
                lambda,
                residual,
                fiber_variation,
            })
        })
        .collect();
    let mut lambdas = Vec::with_capacity(points);
    let mut max_residual = 0.0_f64;
    let mut fiber_variation = 0.0_f64;
    for f in fits {
        let f = f?;
        lambdas.push(f.lambda);
        max_residual = max_residual.max(f.residual);
        fiber_variation = fiber_variation.max(f.fiber_variation);
    }
    let lo = lambdas.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lambda_spread = hi - lo;
    let mean = lambdas.iter().sum::<f64>() / lambdas.len() as f64;
    let verdict = if max_residual > EINSTEIN_TOLERANCE || lambda_spread > EINSTEIN_TOLERANCE {
        EinsteinVerdict::NotEinstein
    } else if mean.abs() <= RICCI_FLAT {
        EinsteinVerdict::RicciFlat
    } else {
        EinsteinVerdict::Einstein { lambda: mean }
    };
    let rigidity_flag = matches!(verdict, EinsteinVerdict::Einstein { .. }) && fiber_variation > FIBER_VARIATION;
    Ok(EinsteinReport {
        points: xs,
        vectors_per_point: per_point,
        seed,
        lambdas,
        max_residual,
        lambda_spread,
        fiber_variation,
        tolerance: EINSTEIN_TOLERANCE,
        verdict,
        rigidity_flag,
    })
}
