use serde::Serialize;

use super::HolonomyBundle;
use crate::error::{Error, Result};
use crate::expr::{Expression, Symbol, Tape};
use crate::norms::FinslerModel;
use crate::sampling::{gaussian_vector, stream};

pub const FUNCTION_INVARIANCE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct FunctionInvarianceReport {
    pub function: Expression,
    pub samples: usize,
    pub seed: u64,
    /// `max |G(P v) − G(v)|` over sampled `v` and all elements.
    pub max_defect: f64,
    pub witness_element: Option<usize>,
    pub witness_vector: Vec<f64>,
    /// `max G − min G` over sampled points of the indicatrix.
    pub indicatrix_spread: f64,
    pub tolerance: f64,
    pub invariant: bool,
    /// Invariant and constant on the indicatrix, so `G = φ∘F`.
    pub radial: bool,
}

/// Is `G(v)` (positions bound at the base point) unchanged by the sampled
/// holonomy, and is it a function of `F` alone?
pub fn invariant_function_test(
    function: &Expression,
    model: &FinslerModel,
    bundle: &HolonomyBundle,
    samples: usize,
    seed: u64,
) -> Result<FunctionInvarianceReport> {
    let n = model.dim();
    if bundle.dim() != n {
        return Err(Error::Dimension {
            expected: n,
            found: bundle.dim(),
        });
    }
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    for s in function.symbols() {
        if !matches!(s, Symbol::V(i) | Symbol::X(i) if i < n) {
            return Err(Error::InvalidModel(format!(
                "function refers to `{s}`; only x1..x{n} and v1..v{n} are allowed"
            )));
        }
    }
    let x = &bundle.base;
    let tape = Tape::compile(std::slice::from_ref(function), n)?;
    let eval = |v: &[f64]| -> Result<f64> { Ok(tape.eval(x, v).map_err(|e| Error::eval_at(e, x, v))?[0]) };
    let mut rng = stream(seed, 0x1f_0001);
    let mut report = FunctionInvarianceReport {
        function: function.clone(),
        samples,
        seed,
        max_defect: 0.0,
        witness_element: None,
        witness_vector: vec![0.0; n],
        indicatrix_spread: 0.0,
        tolerance: FUNCTION_INVARIANCE_TOLERANCE,
        invariant: false,
        radial: false,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let v = gaussian_vector(&mut rng, n);
        let g = eval(&v)?;
        let vv = nalgebra::DVector::from_column_slice(&v);
        for (k, p) in bundle.matrices().enumerate() {
            let d = (eval((p * &vv).as_slice())? - g).abs();
            if d > report.max_defect || (report.witness_element.is_none() && d.is_nan()) {
                report.max_defect = d;
                report.witness_element = Some(k);
                report.witness_vector = v.clone();
            }
        }
        let f = model.norm_at(x, &v)?;
        let unit: Vec<f64> = v.iter().map(|c| c / f).collect();
        let on_indicatrix = eval(&unit)?;
        lo = lo.min(on_indicatrix);
        hi = hi.max(on_indicatrix);
    }
    report.indicatrix_spread = hi - lo;
    report.invariant = report.max_defect <= FUNCTION_INVARIANCE_TOLERANCE;
    report.radial = report.invariant && report.indicatrix_spread <= FUNCTION_INVARIANCE_TOLERANCE;
    Ok(report)
}
