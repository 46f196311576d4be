use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

use super::*;
use crate::expr::{parse_expression, parse_with, ParseContext};
use crate::gallery;
use crate::linalg::Matrix;
use crate::norms::ChartBox;

fn f2(m: &FinslerModel, x: &[f64], v: &[f64]) -> f64 {
    m.norm_at(x, v).unwrap().powi(2)
}

fn bump(a: &[f64], i: usize, h: f64) -> Vec<f64> {
    let mut b = a.to_vec();
    b[i] += h;
    b
}

/// `G = ¼ g⁻¹ (∂²F²/∂v∂x · v − ∂F²/∂x)` from finite differences of `F²`.
fn spray_by_differences(m: &FinslerModel, x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = x.len();
    let h = 1e-4;
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let pp = f2(m, x, &bump(&bump(v, i, h), j, h));
            let pm = f2(m, x, &bump(&bump(v, i, h), j, -h));
            let mp = f2(m, x, &bump(&bump(v, i, -h), j, h));
            let mm = f2(m, x, &bump(&bump(v, i, -h), j, -h));
            g[(i, j)] = 0.5 * (pp - pm - mp + mm) / (4.0 * h * h);
        }
    }
    let mut rhs = vec![0.0; n];
    for l in 0..n {
        let mut mixed = 0.0;
        for k in 0..n {
            let pp = f2(m, &bump(x, k, h), &bump(v, l, h));
            let pm = f2(m, &bump(x, k, h), &bump(v, l, -h));
            let mp = f2(m, &bump(x, k, -h), &bump(v, l, h));
            let mm = f2(m, &bump(x, k, -h), &bump(v, l, -h));
            mixed += (pp - pm - mp + mm) / (4.0 * h * h) * v[k];
        }
        let dx = (f2(m, &bump(x, l, h), v) - f2(m, &bump(x, l, -h), v)) / (2.0 * h);
        rhs[l] = mixed - dx;
    }
    let sol = g.lu().solve(&nalgebra::DVector::from_vec(rhs)).unwrap();
    sol.iter().map(|c| 0.25 * c).collect()
}

#[test]
fn minkowski_spray_vanishes() {
    let g = spray_coefficients(&gallery::quartic_minkowski(), &[0.3, -0.2], &[0.7, 0.1]).unwrap();
    assert!(g.iter().all(|c| c.abs() < 1e-15));
    let c = berwald_coefficients(&gallery::quartic_minkowski(), &[0.3, -0.2], &[0.7, 0.1]).unwrap();
    assert!(c.max_abs() < 1e-14);
}

#[test]
fn sphere_spray_and_coefficients() {
    let m = gallery::sphere();
    let g = spray_coefficients(&m, &[FRAC_PI_4, 0.0], &[0.0, 1.0]).unwrap();
    assert!((g[0] + 0.25).abs() < 1e-14, "{g:?}");
    assert!(g[1].abs() < 1e-14);
    for v in [[0.3, 1.0], [-1.0, 0.2]] {
        let c = berwald_coefficients(&m, &[FRAC_PI_4, 0.5], &v).unwrap();
        assert!((c.get(0, 1, 1) + 0.5).abs() < 1e-12);
        assert!((c.get(1, 0, 1) - 1.0).abs() < 1e-12);
        assert!((c.get(1, 1, 0) - 1.0).abs() < 1e-12);
        assert!(c.get(0, 0, 0).abs() < 1e-12);
    }
}

#[test]
fn randers_spray_matches_difference_oracle() {
    let m = gallery::randers();
    let x = [0.4, -0.3];
    let mut seen = Vec::new();
    for v in [[1.0, 0.5], [-0.3, 1.2], [0.8, -0.9]] {
        let g = spray_coefficients(&m, &x, &v).unwrap();
        let oracle = spray_by_differences(&m, &x, &v);
        for (a, b) in g.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-6, "{g:?} vs {oracle:?}");
        }
        assert!(g.iter().any(|c| c.abs() > 1e-3));
        seen.push(g);
    }
    // not quadratic in v: G(v)/|v|² differs between directions
    let c0 = berwald_coefficients(&m, &x, &[1.0, 0.5]).unwrap();
    let c1 = berwald_coefficients(&m, &x, &[-0.3, 1.2]).unwrap();
    assert!(c0.max_abs_diff(&c1) > 1e-3);
}

#[test]
fn quartic_spray_matches_difference_oracle() {
    let m = gallery::quartic_product();
    let x = [0.3, 1.1, 0.7];
    let v = [0.6, -0.4, 0.9];
    let g = spray_coefficients(&m, &x, &v).unwrap();
    let oracle = spray_by_differences(&m, &x, &v);
    for (a, b) in g.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-6, "{g:?} vs {oracle:?}");
    }
}

#[test]
fn christoffel_values() {
    let e = christoffel(&gallery::euclidean(3), &[0.1, 0.2, 0.3]).unwrap();
    assert_eq!(e.max_abs(), 0.0);
    assert!(christoffel(&gallery::quartic_minkowski(), &[0.1, 0.2]).is_err());
    let flat = FinslerModel::riemannian(
        vec![
            vec![parse_expression("1", 2).unwrap(), parse_expression("0", 2).unwrap()],
            vec![parse_expression("0", 2).unwrap(), parse_expression("1", 2).unwrap()],
        ],
        ChartBox::cube(2, -1.0, 1.0),
    )
    .unwrap();
    assert!(christoffel(&flat, &[0.2, 0.1]).unwrap().max_abs() == 0.0);

    let s = christoffel(&gallery::sphere(), &[FRAC_PI_4, 1.0]).unwrap();
    assert!((s.get(0, 1, 1) + 0.5).abs() < 1e-14);

    let y = 1.3;
    let h = christoffel(&gallery::hyperbolic(), &[0.2, y]).unwrap();
    assert!((h.get(0, 0, 1) + 1.0 / y).abs() < 1e-14);
    assert!((h.get(1, 0, 0) - 1.0 / y).abs() < 1e-14);
    assert!((h.get(1, 1, 1) + 1.0 / y).abs() < 1e-14);
    assert!(h.get(0, 0, 0).abs() < 1e-14);
}

#[test]
fn berwald_matches_christoffel_on_riemannian_models() {
    for m in [gallery::sphere(), gallery::hyperbolic(), gallery::product_riemannian()] {
        let n = m.dim();
        let x = m.chart().center();
        let lc = christoffel(&m, &x).unwrap();
        for k in 0..3 {
            let v: Vec<f64> = (0..n).map(|i| ((i + k) as f64 * 0.7).cos()).collect();
            let b = berwald_coefficients(&m, &x, &v).unwrap();
            assert!(b.max_abs_diff(&lc) < 1e-10, "{}", m.name());
        }
    }
}

#[test]
fn quartic_product_coefficients_are_product_christoffels() {
    let q = gallery::quartic_product();
    let p = gallery::product_riemannian();
    for (x, v) in [
        ([0.1, 1.2, 0.4], [1.0, 0.0, 0.0]),
        ([-1.0, 0.7, 2.0], [0.3, -0.8, 0.5]),
        ([1.5, 2.2, -0.1], [0.0, 0.2, 1.0]),
    ] {
        let a = berwald_coefficients(&q, &x, &v).unwrap();
        let b = christoffel(&p, &x).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-10);
    }
}

#[test]
fn berwald_verdicts() {
    for m in [gallery::sphere(), gallery::quartic_minkowski(), gallery::euclidean(3)] {
        let r = berwald_test(&m, 8, 4, 0).unwrap();
        assert!(r.is_berwald && r.max_deviation <= 1e-12, "{}: {r:?}", m.name());
    }
    let r = berwald_test(&gallery::quartic_product(), 10, 4, 0).unwrap();
    assert!(r.is_berwald && r.max_deviation <= 1e-8, "{r:?}");
    assert!(r.max_torsion <= 1e-12);

    let r = berwald_test(&gallery::randers(), 10, 4, 7).unwrap();
    assert!(!r.is_berwald && r.max_deviation > 1e-3, "{r:?}");
    assert!(r.max_deviation < 1.0);
    assert!(berwald_test(&gallery::randers(), 4, 1, 0).is_err());
}

#[test]
fn verdict_is_cached_or_attached() {
    let c = ConnectionField::berwald(&gallery::randers()).unwrap();
    assert!(!c.is_berwald().unwrap());
    let report = berwald_test(&gallery::randers(), 3, 2, 1).unwrap().with_tolerance(1.0);
    let c = c.with_verdict(report);
    assert!(c.is_berwald().unwrap());
}

#[test]
fn agreement() {
    let q = gallery::quartic_minkowski();
    let double = FinslerModel::minkowski(
        q.norm_expression().mul(&crate::expr::Expression::constant(2.0)),
        q.chart().clone(),
    )
    .unwrap();
    assert!(connections_agree(&q, &double, 10, 0).unwrap().agree);
    assert!(connections_agree(&gallery::euclidean(2), &q, 10, 0).unwrap().agree);
    let r = connections_agree(&gallery::quartic_product(), &gallery::product_riemannian(), 20, 3).unwrap();
    assert!(r.agree && r.max_deviation < 1e-10);
    let r = connections_agree(&gallery::sphere(), &gallery::hyperbolic(), 10, 0).unwrap();
    assert!(!r.agree && r.max_deviation > 0.1);
}

#[test]
fn covariant_derivatives() {
    let flat = ConnectionField::berwald(&gallery::euclidean(2)).unwrap();
    let field = vec![parse_expression("x1", 2).unwrap(), parse_expression("0", 2).unwrap()];
    let d = covariant_derivative(&flat, &field, &[1.0, 0.0], &[0.3, 0.4]).unwrap();
    assert_eq!(d, vec![1.0, 0.0]);

    let sphere = ConnectionField::levi_civita(&gallery::sphere()).unwrap();
    let field = vec![parse_expression("0", 2).unwrap(), parse_expression("1", 2).unwrap()];
    let d = covariant_derivative(&sphere, &field, &[1.0, 0.0], &[FRAC_PI_4, 0.2]).unwrap();
    assert!(d[0].abs() < 1e-14 && (d[1] - 1.0).abs() < 1e-14);

    // Leibniz rule
    let f = parse_expression("sin(x1) * x2 + 2", 2).unwrap();
    let field = vec![
        parse_expression("x2^2", 2).unwrap(),
        parse_expression("cos(x1)", 2).unwrap(),
    ];
    let scaled: Vec<_> = field.iter().map(|c| f.mul(c)).collect();
    let (x, v) = ([1.1, 0.6], [0.4, -0.7]);
    let lhs = covariant_derivative(&sphere, &scaled, &v, &x).unwrap();
    let plain = covariant_derivative(&sphere, &field, &v, &x).unwrap();
    let b = crate::expr::Bindings::new().with_x(&x);
    let fx = f.evaluate(&b).unwrap();
    let df: f64 = (0..2)
        .map(|j| v[j] * f.differentiate(&crate::expr::Symbol::X(j)).evaluate(&b).unwrap())
        .sum();
    for i in 0..2 {
        let xi = field[i].evaluate(&b).unwrap();
        assert!((lhs[i] - (df * xi + fx * plain[i])).abs() < 1e-10);
    }
}

#[test]
fn coefficient_derivatives_match_differences() {
    for m in [gallery::quartic_product(), gallery::randers(), gallery::hyperbolic()] {
        let c = ConnectionField::berwald(&m).unwrap();
        let x = m.chart().center();
        let x: Vec<f64> = x.iter().enumerate().map(|(i, c)| c + 0.05 * (i as f64 + 1.0)).collect();
        let v: Vec<f64> = (0..m.dim()).map(|i| 0.3 + 0.5 * i as f64).collect();
        let (_, d) = c.coefficients_with_derivatives(&x, &v).unwrap();
        let h = 1e-5;
        for (mi, dm) in d.iter().enumerate() {
            let p = c.coefficients(&bump(&x, mi, h), &v).unwrap();
            let q = c.coefficients(&bump(&x, mi, -h), &v).unwrap();
            for idx in 0..p.as_slice().len() {
                let fd = (p.as_slice()[idx] - q.as_slice()[idx]) / (2.0 * h);
                let sym = dm.as_slice()[idx];
                assert!(
                    (fd - sym).abs() <= 1e-6 * (1.0 + sym.abs()),
                    "{}: {fd} vs {sym}",
                    m.name()
                );
            }
        }
    }
    let lc = ConnectionField::levi_civita(&gallery::sphere()).unwrap();
    let (_, d) = lc.coefficients_with_derivatives(&[1.0, 0.3], &[1.0, 0.0]).unwrap();
    // ∂_θ Γ^θ_φφ = −cos 2θ
    assert!((d[0].get(0, 1, 1) + (2.0_f64).cos()).abs() < 1e-13);
}

#[test]
fn flat_geodesic_is_straight() {
    let c = ConnectionField::berwald(&gallery::quartic_minkowski()).unwrap();
    let r = integrate_geodesic(&c, &[-0.5, -0.2], &[0.3, 0.1], 2.0, &GeodesicOptions::default()).unwrap();
    assert!(!r.exited_chart);
    assert_eq!(*r.times.last().unwrap(), 2.0);
    for (t, x) in r.times.iter().zip(&r.positions) {
        assert!((x[0] - (-0.5 + 0.3 * t)).abs() < 1e-14);
        assert!((x[1] - (-0.2 + 0.1 * t)).abs() < 1e-14);
    }
    let csv = r.to_csv();
    assert!(csv.starts_with("t,x1,x2,v1,v2,F\n"));
    assert_eq!(csv.lines().count(), r.len() + 1);
}

#[test]
fn equator_is_a_geodesic() {
    let c = ConnectionField::berwald(&gallery::sphere()).unwrap();
    let r = integrate_geodesic(&c, &[FRAC_PI_2, 0.0], &[0.0, 1.0], 6.0, &GeodesicOptions::default()).unwrap();
    for (t, x) in r.times.iter().zip(&r.positions) {
        assert!((x[0] - FRAC_PI_2).abs() < 1e-12);
        assert!((x[1] - t).abs() < 1e-9);
    }
}

#[test]
fn chart_exit_is_flagged() {
    let c = ConnectionField::berwald(&gallery::euclidean(2)).unwrap();
    let r = integrate_geodesic(&c, &[0.0, 0.0], &[1.0, 0.0], 5.0, &GeodesicOptions::default()).unwrap();
    assert!(r.exited_chart);
    assert!(r.positions.iter().all(|x| c.model().chart().contains(x)));
    assert!(*r.times.last().unwrap() <= 1.0);
}

#[test]
fn quartic_product_geodesic_keeps_speed() {
    let m = gallery::quartic_product();
    let c = ConnectionField::berwald(&m).unwrap();
    let r = integrate_geodesic(
        &c,
        &[-1.5, 1.2, 0.3],
        &[0.3, 0.1, 0.25],
        10.0,
        &GeodesicOptions::default(),
    )
    .unwrap();
    assert!(!r.exited_chart);
    assert!(r.speed_drift() <= 1e-7, "{}", r.speed_drift());
    assert!(r.times.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn berwald_geodesics_reverse() {
    let c = ConnectionField::berwald(&gallery::quartic_product()).unwrap();
    let fwd = integrate_geodesic(
        &c,
        &[0.0, 1.0, 0.5],
        &[0.4, 0.2, -0.3],
        3.0,
        &GeodesicOptions::default(),
    )
    .unwrap();
    let back_v: Vec<f64> = fwd.end_velocity().iter().map(|c| -c).collect();
    let back = integrate_geodesic(&c, fwd.end_position(), &back_v, 3.0, &GeodesicOptions::default()).unwrap();
    for (a, b) in back.end_position().iter().zip(&fwd.positions[0]) {
        assert!((a - b).abs() < 1e-7);
    }
}

#[test]
fn shooting_hits_target() {
    let c = ConnectionField::berwald(&gallery::hyperbolic()).unwrap();
    let r = shoot_geodesic(&c, &[-0.5, 1.0], &[0.5, 1.0], &GeodesicOptions::default()).unwrap();
    assert!((r.end_position()[0] - 0.5).abs() < 1e-10);
    assert!((r.end_position()[1] - 1.0).abs() < 1e-10);
    // half-plane geodesics between points at equal height bulge upwards
    assert!(r.positions.iter().any(|x| x[1] > 1.05));
}

#[test]
fn flat_transport_is_identity() {
    let c = ConnectionField::berwald(&gallery::euclidean(2)).unwrap();
    let g = integrate_geodesic(&c, &[-0.5, 0.0], &[0.5, 0.2], 1.0, &GeodesicOptions::default()).unwrap();
    let t = parallel_transport(&c, &g, &[0.3, -0.7]).unwrap();
    assert!((t.end_vector()[0] - 0.3).abs() < 1e-14 && (t.end_vector()[1] + 0.7).abs() < 1e-14);
}

fn latitude_loop(theta: f64) -> ParametricCurve {
    let names = ParseContext::new(0).with_names(["t".to_string()]);
    ParametricCurve::new(
        vec![
            parse_with(&format!("{theta}"), &names).unwrap(),
            parse_with("t", &names).unwrap(),
        ],
        0.0,
        2.0 * PI,
    )
    .unwrap()
}

#[test]
fn latitude_holonomy_angle() {
    let c = ConnectionField::levi_civita(&gallery::sphere()).unwrap();
    let theta = FRAC_PI_3;
    let p = transport_matrix(&c, &latitude_loop(theta)).unwrap();
    // orthonormal frame (∂θ, ∂φ / sin θ)
    let s = Matrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, theta.sin()]));
    let q = &s * &p * s.try_inverse().unwrap();
    let angle = q[(1, 0)].atan2(q[(0, 0)]);
    let expected = 2.0 * PI * (1.0 - theta.cos());
    let diff = (angle - expected).rem_euclid(2.0 * PI);
    assert!(diff.min(2.0 * PI - diff) < 1e-8, "{angle} vs {expected}");
}

#[test]
fn quartic_product_transport_preserves_norm() {
    let m = gallery::quartic_product();
    let c = ConnectionField::berwald(&m).unwrap();
    let g = integrate_geodesic(
        &c,
        &[0.5, 1.3, 0.0],
        &[-0.4, 0.3, 0.5],
        4.0,
        &GeodesicOptions::default(),
    )
    .unwrap();
    for x0 in [[1.0, 0.0, 0.0], [0.2, -0.5, 0.8], [-0.3, 0.9, 0.1]] {
        let t = parallel_transport(&c, &g, &x0).unwrap();
        assert!(t.norm_drift() <= 1e-7, "{}", t.norm_drift());
    }
}

#[test]
fn transport_is_linear_and_orthogonal() {
    let m = gallery::sphere();
    let c = ConnectionField::levi_civita(&m).unwrap();
    let g = integrate_geodesic(&c, &[1.0, 0.0], &[0.3, 0.8], 2.0, &GeodesicOptions::default()).unwrap();
    let (a, b) = (0.7, -1.9);
    let (x, y) = ([0.2, 0.5], [-1.0, 0.3]);
    let combo: Vec<f64> = (0..2).map(|i| a * x[i] + b * y[i]).collect();
    let px = parallel_transport(&c, &g, &x).unwrap();
    let py = parallel_transport(&c, &g, &y).unwrap();
    let pc = parallel_transport(&c, &g, &combo).unwrap();
    for i in 0..2 {
        assert!((pc.end_vector()[i] - (a * px.end_vector()[i] + b * py.end_vector()[i])).abs() < 1e-9);
    }
    let p = transport_matrix(&c, &g).unwrap();
    let g0 = m.metric_at(&g.positions[0]).unwrap();
    let g1 = m.metric_at(g.end_position()).unwrap();
    let defect = p.transpose() * g1 * &p - g0;
    assert!(defect.abs().max() < 1e-8);
}
