//! Canonical models used by the tests and the bundled model files.

use crate::connection::ParametricCurve;
use crate::expr::Symbol;
use crate::expr::{parse_expression, parse_with, Expression, ParseContext};
use crate::norms::{make_product_norm, slot_names, ChartBox, FinslerModel};

fn e(text: &str, dim: usize) -> Expression {
    parse_expression(text, dim).expect("gallery expression parses")
}

/// Euclidean norm on `[-1, 1]^n`.
pub fn euclidean(n: usize) -> FinslerModel {
    let terms: Vec<String> = (1..=n).map(|i| format!("v{i}^2")).collect();
    FinslerModel::minkowski(
        e(&format!("sqrt({})", terms.join(" + ")), n),
        ChartBox::cube(n, -1.0, 1.0),
    )
    .expect("euclidean model")
    .with_name(format!("flat{n}"))
}

/// Flat line, for weighted curvature on a 1-dimensional base.
pub fn line() -> FinslerModel {
    FinslerModel::minkowski_squared(e("v1^2", 1), ChartBox::cube(1, -2.0, 2.0))
        .expect("line model")
        .with_name("line")
}

/// Round unit sphere in polar coordinates `(θ, φ)` away from the poles.
pub fn sphere() -> FinslerModel {
    FinslerModel::riemannian(
        vec![vec![e("1", 2), e("0", 2)], vec![e("0", 2), e("sin(x1)^2", 2)]],
        ChartBox::new(vec![(0.4, 2.75), (-0.5, 6.9)]).expect("box"),
    )
    .expect("sphere model")
    .with_name("sphere")
}

/// Poincaré half-plane.
pub fn hyperbolic() -> FinslerModel {
    FinslerModel::riemannian(
        vec![vec![e("1/x2^2", 2), e("0", 2)], vec![e("0", 2), e("1/x2^2", 2)]],
        ChartBox::new(vec![(-1.0, 1.0), (0.5, 2.0)]).expect("box"),
    )
    .expect("hyperbolic model")
    .with_name("hyperbolic")
}

/// `F² = |v|² + ‖v‖₄²` on the plane.
pub fn quartic_minkowski() -> FinslerModel {
    FinslerModel::minkowski_squared(e("v1^2 + v2^2 + (v1^4 + v2^4)^(1/2)", 2), ChartBox::cube(2, -1.0, 1.0))
        .expect("quartic Minkowski model")
        .with_name("quartic-minkowski")
}

/// `α + β` with `α` Euclidean and `β = 0.1·x1·dx2`.
pub fn randers() -> FinslerModel {
    FinslerModel::randers(
        vec![vec![e("1", 2), e("0", 2)], vec![e("0", 2), e("1", 2)]],
        vec![e("0", 2), e("0.1*x1", 2)],
        ChartBox::cube(2, -1.0, 1.0),
    )
    .expect("Randers model")
    .with_name("randers")
}

fn product(outer: &str, name: &str) -> FinslerModel {
    let outer = parse_with(outer, &ParseContext::new(0).with_names(slot_names(1, 1))).expect("outer norm parses");
    make_product_norm(outer, 1, ChartBox::new(vec![(-2.0, 2.0)]).expect("box"), vec![sphere()])
        .expect("product model")
        .with_name(name)
}

/// Riemannian product `R × S²`.
pub fn product_riemannian() -> FinslerModel {
    product("sqrt(a1^2 + s1^2)", "product")
}

/// Non-Riemannian Berwald product `R × S²` with outer norm
/// `sqrt(a² + s² + (a⁴ + s⁴)^(1/2))`.
pub fn quartic_product() -> FinslerModel {
    product("sqrt(a1^2 + s1^2 + (a1^4 + s1^4)^(1/2))", "quartic-product")
}

/// The circle of latitude `θ = θ₀` on [`sphere`], once around from `φ = 0`.
pub fn latitude_loop(theta: f64) -> ParametricCurve {
    ParametricCurve::new(
        vec![Expression::constant(theta), Expression::symbol(Symbol::named("t"))],
        0.0,
        std::f64::consts::TAU,
    )
    .expect("latitude loop")
}
