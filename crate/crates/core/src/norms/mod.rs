//! Finsler norm constructions on coordinate charts and the checks that make
//! a candidate a Finsler structure: positive homogeneity, positivity, and
//! strong convexity of the fundamental tensor.

mod density;
mod product;
mod tensor;

use std::sync::{Arc, OnceLock};

use serde::Serialize;

use crate::connection::{BerwaldReport, MetricJets, SprayJets};
use crate::error::{Error, Result};
use crate::expr::{Expression, Symbol, Tape};
use crate::linalg::Matrix;

pub use density::{bh_density, euclidean_ball_volume, DensityEstimate, DEFAULT_DENSITY_SAMPLES};
pub use product::{flat_slot, length_slot, make_product_norm, product_distance, slot_names, ProductStructure};
pub use tensor::{
    fundamental_tensor, homogeneity_check, strong_convexity_check, ConvexityReport, FundamentalTensorSample,
    HomogeneityReport, HOMOGENEITY_LAMBDAS,
};

/// Closed coordinate box standing in for the manifold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartBox {
    intervals: Vec<(f64, f64)>,
}

impl ChartBox {
    pub fn new(intervals: Vec<(f64, f64)>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidModel(format!(
                    "chart interval [{lo}, {hi}] is empty or unbounded"
                )));
            }
        }
        Ok(Self { intervals })
    }

    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            intervals: vec![(lo, hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().zip(&self.intervals).all(|(c, &(lo, hi))| *c >= lo && *c <= hi)
    }

    pub fn center(&self) -> Vec<f64> {
        self.intervals.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.intervals.iter().map(|(lo, hi)| 0.5 * (hi - lo)).collect()
    }

    /// Box scaled about its center by `factor`.
    pub fn shrink(&self, factor: f64) -> Self {
        Self {
            intervals: self
                .intervals
                .iter()
                .map(|&(lo, hi)| {
                    let c = 0.5 * (lo + hi);
                    let h = 0.5 * (hi - lo) * factor;
                    (c - h, c + h)
                })
                .collect(),
        }
    }

    pub fn concat(&self, other: &ChartBox) -> Self {
        let mut intervals = self.intervals.clone();
        intervals.extend_from_slice(&other.intervals);
        Self { intervals }
    }

    pub fn slice(&self, start: usize, len: usize) -> Self {
        Self {
            intervals: self.intervals[start..start + len].to_vec(),
        }
    }

    /// Common part of two boxes of the same dimension, if it has interior.
    pub fn intersect(&self, other: &ChartBox) -> Option<ChartBox> {
        if self.dim() != other.dim() {
            return None;
        }
        let intervals: Vec<(f64, f64)> = self
            .intervals
            .iter()
            .zip(&other.intervals)
            .map(|(a, b)| (a.0.max(b.0), a.1.min(b.1)))
            .collect();
        ChartBox::new(intervals).ok()
    }

    /// Center plus the `3^n` grid of interval midpoints and endpoints.
    pub(crate) fn grid_points(&self) -> Vec<Vec<f64>> {
        let n = self.dim();
        let mut points = vec![Vec::with_capacity(n)];
        for &(lo, hi) in &self.intervals {
            let mut next = Vec::with_capacity(points.len() * 3);
            for p in &points {
                for c in [lo, 0.5 * (lo + hi), hi] {
                    let mut q: Vec<f64> = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}

/// How the norm was specified.
#[derive(Debug, Clone)]
pub enum NormKind {
    /// `F² = g_ij(x) v^i v^j`.
    Riemannian { metric: Vec<Vec<Expression>> },
    /// `F(v)` with no dependence on position.
    Minkowski { norm: Expression },
    /// `F = sqrt(a_ij v^i v^j) + b_i v^i`.
    Randers {
        alpha: Vec<Vec<Expression>>,
        beta: Vec<Expression>,
    },
    /// `F = G(v_0, F_1(v_1), ..., F_m(v_m))`.
    Product(ProductStructure),
    /// Any expression `F(x, v)`.
    Raw { norm: Expression },
}

impl NormKind {
    pub fn label(&self) -> &'static str {
        match self {
            NormKind::Riemannian { .. } => "riemannian",
            NormKind::Minkowski { .. } => "minkowski",
            NormKind::Randers { .. } => "randers",
            NormKind::Product(_) => "product",
            NormKind::Raw { .. } => "raw",
        }
    }
}

#[derive(Debug, Default)]
pub(crate) struct ModelCache {
    pub(crate) fundamental: OnceLock<std::result::Result<Tape, crate::expr::EvalError>>,
    pub(crate) spray: OnceLock<Result<Arc<SprayJets>>>,
    pub(crate) metric: OnceLock<Result<Arc<MetricJets>>>,
    pub(crate) verdict: OnceLock<Result<BerwaldReport>>,
}

/// A Finsler norm on a coordinate chart, with an optional reference measure
/// `m = exp(-weight) vol_F`.
#[derive(Debug, Clone)]
pub struct FinslerModel {
    name: String,
    dim: usize,
    kind: NormKind,
    chart: ChartBox,
    norm: Expression,
    norm_squared: Expression,
    weight: Option<Expression>,
    pub(crate) cache: Arc<ModelCache>,
}

fn check_symbols(e: &Expression, dim: usize, allow_x: bool, what: &str) -> Result<()> {
    for s in e.symbols() {
        let ok = match s {
            Symbol::X(i) => allow_x && i < dim,
            Symbol::V(i) => i < dim,
            Symbol::Named(_) => false,
        };
        if !ok {
            return Err(Error::InvalidModel(format!("{what} refers to `{s}`")));
        }
    }
    Ok(())
}

fn metric_quadratic_form(metric: &[Vec<Expression>]) -> Expression {
    let n = metric.len();
    let mut terms = Vec::new();
    for i in 0..n {
        for j in i..n {
            let vv = if i == j {
                Expression::v(i).powi(2)
            } else {
                Expression::constant(2.0).mul(&Expression::v(i).mul(&Expression::v(j)))
            };
            terms.push(metric[i][j].mul(&vv));
        }
    }
    Expression::sum(&terms)
}

fn validate_metric(metric: &[Vec<Expression>], chart: &ChartBox, what: &str) -> Result<()> {
    let n = chart.dim();
    if metric.len() != n || metric.iter().any(|row| row.len() != n) {
        return Err(Error::Dimension {
            expected: n,
            found: metric.len(),
        });
    }
    for row in metric {
        for e in row {
            check_symbols(e, n, true, what)?;
            if e.symbols().iter().any(|s| matches!(s, Symbol::V(_))) {
                return Err(Error::InvalidModel(format!(
                    "{what} entries must not depend on the fiber"
                )));
            }
        }
    }
    for x in chart.grid_points() {
        let b = crate::expr::Bindings::new().with_x(&x);
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = metric[i][j].evaluate(&b).map_err(|e| Error::eval_at(e, &x, &[]))?;
            }
        }
        let asym = (&m - m.transpose()).abs().max();
        if asym > 1e-12 * (1.0 + m.abs().max()) {
            return Err(Error::InvalidModel(format!("{what} is not symmetric at x = {x:?}")));
        }
        if m.cholesky().is_none() {
            return Err(Error::InvalidModel(format!(
                "{what} is not positive definite at x = {x:?}"
            )));
        }
    }
    Ok(())
}

impl FinslerModel {
    fn assemble(kind: NormKind, chart: ChartBox, norm: Expression, norm_squared: Expression) -> Self {
        Self {
            name: kind.label().to_string(),
            dim: chart.dim(),
            kind,
            chart,
            norm,
            norm_squared,
            weight: None,
            cache: Arc::new(ModelCache::default()),
        }
    }

    /// Riemannian metric `g_ij(x)`; must be symmetric and positive definite
    /// on the chart box (checked on a grid).
    pub fn riemannian(metric: Vec<Vec<Expression>>, chart: ChartBox) -> Result<Self> {
        validate_metric(&metric, &chart, "metric")?;
        let q = metric_quadratic_form(&metric);
        Ok(Self::assemble(NormKind::Riemannian { metric }, chart, q.sqrt(), q))
    }

    /// Minkowski norm `F(v)`.
    pub fn minkowski(norm: Expression, chart: ChartBox) -> Result<Self> {
        check_symbols(&norm, chart.dim(), false, "Minkowski norm")?;
        let sq = norm.square();
        Ok(Self::assemble(
            NormKind::Minkowski { norm: norm.clone() },
            chart,
            norm,
            sq,
        ))
    }

    /// Minkowski norm given through `F²`.
    pub fn minkowski_squared(norm_squared: Expression, chart: ChartBox) -> Result<Self> {
        check_symbols(&norm_squared, chart.dim(), false, "Minkowski norm")?;
        let norm = norm_squared.sqrt();
        Ok(Self::assemble(
            NormKind::Minkowski { norm: norm.clone() },
            chart,
            norm,
            norm_squared,
        ))
    }

    /// Arbitrary `F(x, v)`; no structural checks beyond symbol ranges.
    pub fn raw(norm: Expression, chart: ChartBox) -> Result<Self> {
        check_symbols(&norm, chart.dim(), true, "norm")?;
        let sq = norm.square();
        Ok(Self::assemble(NormKind::Raw { norm: norm.clone() }, chart, norm, sq))
    }

    pub fn raw_squared(norm_squared: Expression, chart: ChartBox) -> Result<Self> {
        check_symbols(&norm_squared, chart.dim(), true, "norm")?;
        let norm = norm_squared.sqrt();
        Ok(Self::assemble(
            NormKind::Raw { norm: norm.clone() },
            chart,
            norm,
            norm_squared,
        ))
    }

    /// Randers norm `alpha + beta`. The chart box is shrunk about its center
    /// until `sup |beta|_alpha < 0.99` on a sample grid.
    pub fn randers(alpha: Vec<Vec<Expression>>, beta: Vec<Expression>, chart: ChartBox) -> Result<Self> {
        let n = chart.dim();
        if beta.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: beta.len(),
            });
        }
        validate_metric(&alpha, &chart, "Randers alpha")?;
        for b in &beta {
            check_symbols(b, n, true, "Randers beta")?;
        }
        let mut chart = chart;
        let mut shrinks = 0;
        while randers_sup_beta(&alpha, &beta, &chart)? >= 0.99 {
            shrinks += 1;
            if shrinks > 60 {
                return Err(Error::InvalidModel(
                    "Randers beta has alpha-norm >= 0.99 at every box size".into(),
                ));
            }
            chart = chart.shrink(0.9);
        }
        let q = metric_quadratic_form(&alpha);
        let a = q.sqrt();
        let terms: Vec<Expression> = beta.iter().enumerate().map(|(i, b)| b.mul(&Expression::v(i))).collect();
        let b = Expression::sum(&terms);
        let norm = a.add(&b);
        let sq = q.add(&Expression::constant(2.0).mul(&a.mul(&b))).add(&b.powi(2));
        Ok(Self::assemble(NormKind::Randers { alpha, beta }, chart, norm, sq))
    }

    pub(crate) fn from_product(
        structure: ProductStructure,
        chart: ChartBox,
        norm: Expression,
        norm_squared: Expression,
    ) -> Self {
        Self::assemble(NormKind::Product(structure), chart, norm, norm_squared)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Reference measure `m = exp(-psi) vol_F`, `psi` a function of position.
    pub fn with_weight(mut self, psi: Expression) -> Result<Self> {
        check_symbols(&psi, self.dim, true, "weight")?;
        if psi.symbols().iter().any(|s| matches!(s, Symbol::V(_))) {
            return Err(Error::InvalidModel("weight must not depend on the fiber".into()));
        }
        self.weight = Some(psi);
        Ok(self)
    }

    /// Reference measure `m = rho vol_F`, stored as the weight `-log rho`.
    pub fn with_density(self, rho: Expression) -> Result<Self> {
        let psi = crate::expr::Expression::call(crate::expr::Func::Log, &rho).neg();
        self.with_weight(psi)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn chart(&self) -> &ChartBox {
        &self.chart
    }

    pub fn norm_expression(&self) -> &Expression {
        &self.norm
    }

    pub fn norm_squared_expression(&self) -> &Expression {
        &self.norm_squared
    }

    pub fn weight(&self) -> Option<&Expression> {
        self.weight.as_ref()
    }

    pub fn is_riemannian_kind(&self) -> bool {
        matches!(self.kind, NormKind::Riemannian { .. })
    }

    /// Expressions for `g_ij`, upper triangle in row-major order. For the
    /// Riemannian kind these are the metric entries themselves.
    pub fn fundamental_tensor_expressions(&self) -> Vec<Expression> {
        let n = self.dim;
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        if let NormKind::Riemannian { metric } = &self.kind {
            for i in 0..n {
                for j in i..n {
                    out.push(metric[i][j].clone());
                }
            }
            return out;
        }
        let first: Vec<Expression> = (0..n).map(|i| self.norm_squared.differentiate(&Symbol::V(i))).collect();
        for i in 0..n {
            for j in i..n {
                out.push(Expression::constant(0.5).mul(&first[i].differentiate(&Symbol::V(j))));
            }
        }
        out
    }

    /// Tape with outputs `[F, F², g_ij (upper triangle)]`.
    pub(crate) fn fundamental_tape(&self) -> Result<&Tape> {
        self.cache
            .fundamental
            .get_or_init(|| {
                let mut roots = vec![self.norm.clone(), self.norm_squared.clone()];
                roots.extend(self.fundamental_tensor_expressions());
                Tape::compile(&roots, self.dim)
            })
            .as_ref()
            .map_err(|e| Error::Eval(e.clone()))
    }

    /// `F(x, v)`.
    pub fn norm_at(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        self.check_dims(x, v)?;
        let b = crate::expr::Bindings::new().with_x(x).with_v(v);
        self.norm.evaluate(&b).map_err(|e| Error::eval_at(e, x, v))
    }

    pub(crate) fn check_dims(&self, x: &[f64], v: &[f64]) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: x.len(),
            });
        }
        if v.len() != self.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: v.len(),
            });
        }
        Ok(())
    }

    /// The metric `g_ij(x)` (upper triangle) when the fundamental tensor
    /// does not depend on the fiber, as for the Riemannian kind and for
    /// products with a quadratic outer norm.
    pub fn riemannian_metric(&self) -> Option<Vec<Expression>> {
        let upper = self.fundamental_tensor_expressions();
        let fiber_free = upper
            .iter()
            .all(|e| !e.symbols().iter().any(|s| matches!(s, Symbol::V(_))));
        fiber_free.then_some(upper)
    }

    pub fn is_riemannian(&self) -> bool {
        self.riemannian_metric().is_some()
    }

    /// Metric matrix at `x` of a model with fiber-independent fundamental tensor.
    pub fn metric_at(&self, x: &[f64]) -> Result<Matrix> {
        let upper = self.riemannian_metric().ok_or_else(|| {
            Error::Precondition(format!(
                "model `{}` is not Riemannian (fundamental tensor depends on v)",
                self.name
            ))
        })?;
        let n = self.dim;
        if x.len() != n {
            return Err(Error::Dimension {
                expected: n,
                found: x.len(),
            });
        }
        let b = crate::expr::Bindings::new().with_x(x);
        let values = upper
            .iter()
            .map(|e| e.evaluate(&b).map_err(|err| Error::eval_at(err, x, &[])))
            .collect::<Result<Vec<_>>>()?;
        Ok(crate::linalg::symmetric_from_upper(n, &values))
    }
}

fn randers_sup_beta(alpha: &[Vec<Expression>], beta: &[Expression], chart: &ChartBox) -> Result<f64> {
    let n = chart.dim();
    let mut sup = 0.0_f64;
    let mut points = chart.grid_points();
    let mut quasi = crate::sampling::QuasiPoints::new(n, 0);
    points.extend((0..64).map(|_| quasi.next_in(chart)));
    for x in points {
        let bind = crate::expr::Bindings::new().with_x(&x);
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = alpha[i][j].evaluate(&bind).map_err(|e| Error::eval_at(e, &x, &[]))?;
            }
        }
        let b = crate::linalg::Vector::from_iterator(
            n,
            beta.iter()
                .map(|e| e.evaluate(&bind))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::eval_at(e, &x, &[]))?,
        );
        let inv = a.try_inverse().ok_or(Error::Singular {
            what: "Randers alpha",
            x: x.clone(),
        })?;
        let norm_sq = (b.transpose() * inv * &b)[(0, 0)];
        sup = sup.max(norm_sq.max(0.0).sqrt());
    }
    Ok(sup)
}
