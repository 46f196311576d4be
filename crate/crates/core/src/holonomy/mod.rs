//! Holonomy of a connection at a point: sampled loop transports, the
//! averaged Riemannian metric, the invariant-subspace splitting and the
//! invariant-function probe.

mod invariant;
mod split;
mod szabo;

use rayon::prelude::*;
use serde::Serialize;

use crate::connection::{shoot_geodesic, transport_matrix, ConnectionField, GeodesicOptions, ParametricCurve};
use crate::error::{Error, Result};
use crate::linalg::{serialize_rows, Matrix};
use crate::norms::FinslerModel;
use crate::sampling::{gaussian_vector, stream, unit_vector};

pub use invariant::{invariant_function_test, FunctionInvarianceReport, FUNCTION_INVARIANCE_TOLERANCE};
pub use split::{
    de_rham_split, de_rham_split_with, principal_angles, SplitResult, Subspace, FLAT_TOLERANCE, MIN_SPLIT_SAMPLES,
};
pub use szabo::{szabo_metrize, Quadrature, SzaboMetric, SzaboProbe, SZABO_TOLERANCE};

/// Triangle sizes as fractions of the chart half-widths.
pub const LOOP_SCALES: [f64; 3] = [0.1, 0.3, 0.6];
pub const DETERMINANT_FLOOR: f64 = 1e-10;
pub const NORM_PRESERVATION_TOLERANCE: f64 = 1e-6;
const LOOP_ATTEMPTS: usize = 64;
/// Allowed gap between a loop's start and the base point.
const CLOSURE_TOLERANCE: f64 = 1e-9;

/// A loop based at the bundle's base point.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoopSpec {
    /// Geodesic edges through the vertices, closed back to the first one.
    GeodesicTriangle {
        scale: f64,
        vertices: Vec<Vec<f64>>,
    },
    Polygon {
        vertices: Vec<Vec<f64>>,
    },
    Parametric {
        curve: ParametricCurve,
    },
    /// `P_first · P_second`: loop `second` followed by loop `first`.
    Product {
        first: usize,
        second: usize,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct HolonomyElement {
    pub spec: LoopSpec,
    #[serde(serialize_with = "serialize_rows")]
    pub matrix: Matrix,
    pub determinant: f64,
}

/// Transport matrices `P_γ` around loops based at one point.
#[derive(Debug, Clone, Serialize)]
pub struct HolonomyBundle {
    pub base: Vec<f64>,
    pub seed: u64,
    pub elements: Vec<HolonomyElement>,
}

fn transport_polygon(connection: &ConnectionField, vertices: &[Vec<f64>]) -> Result<Matrix> {
    let opts = GeodesicOptions::default();
    let n = connection.dim();
    let mut total = Matrix::identity(n, n);
    for k in 0..vertices.len() {
        let (a, b) = (&vertices[k], &vertices[(k + 1) % vertices.len()]);
        let edge = shoot_geodesic(connection, a, b, &opts)?;
        total = transport_matrix(connection, &edge)? * total;
    }
    Ok(total)
}

/// Transport matrix around one loop starting and ending at `x`.
pub fn transport_loop(connection: &ConnectionField, x: &[f64], spec: &LoopSpec) -> Result<Matrix> {
    let starts_at_x = |p: &[f64]| p.iter().zip(x).all(|(a, b)| (a - b).abs() <= CLOSURE_TOLERANCE);
    match spec {
        LoopSpec::GeodesicTriangle { vertices, .. } | LoopSpec::Polygon { vertices } => {
            if vertices.len() < 2 || !starts_at_x(&vertices[0]) {
                return Err(Error::Precondition(format!(
                    "a loop at {x:?} needs at least two vertices, the first one at the base point"
                )));
            }
            for v in vertices {
                if !connection.model().chart().contains(v) {
                    return Err(Error::OutsideChart { x: v.clone() });
                }
            }
            transport_polygon(connection, vertices)
        }
        LoopSpec::Parametric { curve } => {
            use crate::connection::Curve;
            // only the start is checked: a chart may unroll a periodic
            // coordinate, so a closed loop need not end at the same numbers
            let a = curve.eval(curve.interval().0)?.0;
            if !starts_at_x(&a) {
                return Err(Error::Precondition(format!("curve starts at {a:?}, not at {x:?}")));
            }
            transport_matrix(connection, curve)
        }
        LoopSpec::Product { .. } => Err(Error::Precondition(
            "products are formed from already transported loops".into(),
        )),
    }
}

fn element(spec: LoopSpec, matrix: Matrix) -> Result<HolonomyElement> {
    let determinant = matrix.determinant();
    if !(determinant.abs() > DETERMINANT_FLOOR) {
        return Err(Error::Degenerate(format!(
            "transport matrix has determinant {determinant:e}"
        )));
    }
    Ok(HolonomyElement {
        spec,
        matrix,
        determinant,
    })
}

/// Append `P_i · P_{i+1}` cyclically; products enrich the sample with
/// group elements at no transport cost.
fn close_products(elements: &mut Vec<HolonomyElement>) -> Result<()> {
    let count = elements.len();
    let pairs = match count {
        0 | 1 => 0,
        2 => 1,
        _ => count,
    };
    for i in 0..pairs {
        let j = (i + 1) % count;
        let m = &elements[i].matrix * &elements[j].matrix;
        elements.push(element(LoopSpec::Product { first: i, second: j }, m)?);
    }
    Ok(())
}

impl HolonomyBundle {
    /// Transport around each loop, then append the products of consecutive
    /// loops (cyclically) when there are at least two.
    pub fn from_loops(connection: &ConnectionField, x: &[f64], loops: Vec<LoopSpec>, seed: u64) -> Result<Self> {
        let matrices = loops
            .par_iter()
            .map(|spec| transport_loop(connection, x, spec))
            .collect::<Result<Vec<_>>>()?;
        let mut elements = loops
            .into_iter()
            .zip(matrices)
            .map(|(s, m)| element(s, m))
            .collect::<Result<Vec<_>>>()?;
        close_products(&mut elements)?;
        Ok(Self {
            base: x.to_vec(),
            seed,
            elements,
        })
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Matrix> {
        self.elements.iter().map(|e| &e.matrix)
    }

    /// One row per element: index, kind, then the entries row by row.
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("index,kind");
        for i in 1..=n {
            for j in 1..=n {
                out.push_str(&format!(",p{i}{j}"));
            }
        }
        out.push('\n');
        for (k, e) in self.elements.iter().enumerate() {
            let kind = match e.spec {
                LoopSpec::GeodesicTriangle { .. } => "triangle",
                LoopSpec::Polygon { .. } => "polygon",
                LoopSpec::Parametric { .. } => "parametric",
                LoopSpec::Product { .. } => "product",
            };
            out.push_str(&format!("{k},{kind}"));
            for i in 0..n {
                for j in 0..n {
                    out.push_str(&format!(",{:e}", e.matrix[(i, j)]));
                }
            }
            out.push('\n');
        }
        out
    }
}

fn random_triangle(
    connection: &ConnectionField,
    x: &[f64],
    scale: f64,
    index: usize,
    seed: u64,
) -> Result<(LoopSpec, Matrix)> {
    let chart = connection.model().chart();
    let half = chart.half_widths();
    let n = x.len();
    let mut rng = stream(seed, 0x4010_0000 + index as u64);
    let mut last = None;
    for _ in 0..LOOP_ATTEMPTS {
        let mut vertices = vec![x.to_vec()];
        for _ in 0..2 {
            let u = unit_vector(&mut rng, n);
            vertices.push((0..n).map(|i| x[i] + scale * half[i] * u[i]).collect());
        }
        if !vertices.iter().all(|p| chart.contains(p)) {
            continue;
        }
        let spec = LoopSpec::GeodesicTriangle { scale, vertices };
        match transport_loop(connection, x, &spec) {
            Ok(m) => return Ok((spec, m)),
            Err(e @ (Error::OutsideChart { .. } | Error::Integration(_) | Error::StepUnderflow { .. })) => {
                last = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::OutsideChart { x: x.to_vec() }))
}

/// Transports around `loop_count` random geodesic triangles at `x`, cycling
/// through the sizes `loop_scale × LOOP_SCALES`, plus products of
/// consecutive loops. A triangle whose edges leave the chart is redrawn.
pub fn holonomy_samples(
    connection: &ConnectionField,
    x: &[f64],
    loop_count: usize,
    loop_scale: f64,
    seed: u64,
) -> Result<HolonomyBundle> {
    let model = connection.model();
    if x.len() != model.dim() {
        return Err(Error::Dimension {
            expected: model.dim(),
            found: x.len(),
        });
    }
    if !model.chart().contains(x) {
        return Err(Error::OutsideChart { x: x.to_vec() });
    }
    if loop_count == 0 || !(loop_scale > 0.0) {
        return Err(Error::Precondition("need a positive loop count and scale".into()));
    }
    let loops = (0..loop_count)
        .into_par_iter()
        .map(|k| random_triangle(connection, x, loop_scale * LOOP_SCALES[k % LOOP_SCALES.len()], k, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut elements = loops
        .into_iter()
        .map(|(s, m)| element(s, m))
        .collect::<Result<Vec<_>>>()?;
    close_products(&mut elements)?;
    Ok(HolonomyBundle {
        base: x.to_vec(),
        seed,
        elements,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NormPreservationReport {
    pub vectors: usize,
    pub elements: usize,
    /// `max |F(x, Pv) − F(x, v)| / F(x, v)`.
    pub max_relative_change: f64,
    pub witness_element: usize,
    pub witness_vector: Vec<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

/// Compare `F_x(P v)` with `F_x(v)` for random `v` and every element.
pub fn norm_preservation(
    model: &FinslerModel,
    bundle: &HolonomyBundle,
    vectors: usize,
    seed: u64,
) -> Result<NormPreservationReport> {
    let x = &bundle.base;
    let n = bundle.dim();
    let mut rng = stream(seed, 0x40f_0001);
    let vs: Vec<Vec<f64>> = (0..vectors).map(|_| gaussian_vector(&mut rng, n)).collect();
    let mut report = NormPreservationReport {
        vectors,
        elements: bundle.len(),
        max_relative_change: 0.0,
        witness_element: 0,
        witness_vector: vec![0.0; n],
        tolerance: NORM_PRESERVATION_TOLERANCE,
        pass: false,
    };
    for v in &vs {
        let f = model.norm_at(x, v)?;
        let vv = nalgebra::DVector::from_column_slice(v);
        for (k, p) in bundle.matrices().enumerate() {
            let w = p * &vv;
            let change = (model.norm_at(x, w.as_slice())? - f).abs() / f;
            if change > report.max_relative_change {
                report.max_relative_change = change;
                report.witness_element = k;
                report.witness_vector = v.clone();
            }
        }
    }
    report.pass = report.max_relative_change <= NORM_PRESERVATION_TOLERANCE;
    Ok(report)
}

/// `max |Pᵀ h P − h|` entrywise over the bundle.
pub fn metric_invariance(bundle: &HolonomyBundle, h: &Matrix) -> f64 {
    bundle
        .matrices()
        .map(|p| (p.transpose() * h * p - h).abs().max())
        .fold(0.0, f64::max)
}

/// Rotation angle in `(−π, π]` of a 2×2 transport that preserves the inner
/// product `h`.
pub fn rotation_angle(p: &Matrix, h: &Matrix) -> Result<f64> {
    if p.shape() != (2, 2) || h.shape() != (2, 2) {
        return Err(Error::Dimension {
            expected: 2,
            found: p.nrows(),
        });
    }
    let (root, inv_root) = crate::linalg::sqrt_and_inverse(h).ok_or_else(|| Error::Singular {
        what: "metric",
        x: Vec::new(),
    })?;
    let q = root * p * inv_root;
    Ok(q[(1, 0)].atan2(q[(0, 0)]))
}
