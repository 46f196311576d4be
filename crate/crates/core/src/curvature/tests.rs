use std::f64::consts::FRAC_PI_4;

use super::*;
use crate::expr::parse_expression;
use crate::gallery;
use crate::sampling::{stream, unit_vector, QuasiPoints};

fn berwald(m: &FinslerModel) -> ConnectionField {
    ConnectionField::berwald(m).unwrap()
}

#[test]
fn flat_tensor_vanishes() {
    let r = curvature_tensor(&berwald(&gallery::quartic_minkowski()), &[0.1, 0.2], &[1.0, 0.3]).unwrap();
    assert!(r.as_slice().iter().all(|c| *c == 0.0));
}

#[test]
fn sphere_component() {
    let x = [FRAC_PI_4, 0.7];
    for c in [
        berwald(&gallery::sphere()),
        ConnectionField::levi_civita(&gallery::sphere()).unwrap(),
    ] {
        let r = curvature_tensor(&c, &x, &[0.2, 1.0]).unwrap();
        assert!((r.get(0, 1, 0, 1) - 0.5).abs() < 1e-13);
        assert!((r.get(0, 1, 1, 0) + 0.5).abs() < 1e-13);
    }
}

#[test]
fn product_flat_slot_vanishes() {
    for m in [gallery::product_riemannian(), gallery::quartic_product()] {
        let r = curvature_tensor(&berwald(&m), &[0.3, 1.1, 2.0], &[0.5, 0.2, -0.4]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    for l in 0..3 {
                        if [i, j, k, l].contains(&0) {
                            assert!(r.get(i, j, k, l).abs() < 1e-12);
                        }
                    }
                }
            }
        }
        assert!(r.get(1, 2, 1, 2).abs() > 0.1);
    }
}

#[test]
fn sectional_values() {
    let e = sectional_curvature(&gallery::euclidean(2), &[0.0, 0.1], &[1.0, 0.0], &[0.3, 1.0]).unwrap();
    assert_eq!(e, 0.0);
    let mut rng = stream(4, 0);
    for m in [gallery::sphere(), gallery::hyperbolic()] {
        let expected = if m.name() == "sphere" { 1.0 } else { -1.0 };
        let mut q = QuasiPoints::new(2, 1);
        for _ in 0..10 {
            let x = q.next_in(m.chart());
            let v = unit_vector(&mut rng, 2);
            let w = unit_vector(&mut rng, 2);
            let k = sectional_curvature(&m, &x, &v, &w).unwrap();
            assert!((k - expected).abs() < 1e-9, "{}: {k}", m.name());
        }
    }
    let dep = sectional_curvature(&gallery::sphere(), &[1.0, 0.0], &[1.0, 2.0], &[2.0, 4.0]);
    assert!(matches!(dep, Err(Error::Degenerate(_))));
    assert!(sectional_curvature(
        &gallery::quartic_product(),
        &[0.0, 1.0, 0.0],
        &[1.0, 0.0, 0.0],
        &[0.0, 1.0, 0.0]
    )
    .is_err());
}

#[test]
fn flag_values() {
    let k = flag_curvature(&gallery::quartic_minkowski(), &[0.0, 0.0], &[1.0, 0.2], &[0.1, 1.0]).unwrap();
    assert_eq!(k, 0.0);
    let mut rng = stream(5, 0);
    let m = gallery::sphere();
    let mut q = QuasiPoints::new(2, 2);
    for _ in 0..10 {
        let x = q.next_in(m.chart());
        let v = unit_vector(&mut rng, 2);
        let w = unit_vector(&mut rng, 2);
        let flag = flag_curvature(&m, &x, &v, &w).unwrap();
        let sec = sectional_curvature(&m, &x, &v, &w).unwrap();
        assert!((flag - sec).abs() < 1e-9);
    }
    for m in [gallery::product_riemannian(), gallery::quartic_product()] {
        let k = flag_curvature(&m, &[0.2, 1.3, 0.4], &[1.0, 0.0, 0.0], &[0.0, 0.6, 0.8]).unwrap();
        assert!(k.abs() <= 1e-9);
        let k = flag_curvature(&m, &[0.2, 1.3, 0.4], &[0.0, 0.6, 0.8], &[1.0, 0.0, 0.0]).unwrap();
        assert!(k.abs() <= 1e-9);
    }
    let refused = flag_curvature(&gallery::randers(), &[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]);
    assert!(matches!(refused, Err(Error::Precondition(_))));
}

#[test]
fn ricci_values() {
    let c = berwald(&gallery::quartic_minkowski());
    assert_eq!(ricci(&c, &[0.0, 0.0], &[1.0, 2.0]).unwrap(), 0.0);
    let c = berwald(&gallery::sphere());
    let theta = 1.2_f64;
    let (a, b) = (0.6, 0.8);
    let r = ricci(&c, &[theta, 0.0], &[a, b / theta.sin()]).unwrap();
    assert!((r - 1.0).abs() < 1e-12);
    for m in [gallery::product_riemannian(), gallery::quartic_product()] {
        let c = berwald(&m);
        assert!(ricci(&c, &[0.0, 0.785, 0.0], &[1.0, 0.0, 0.0]).unwrap().abs() < 1e-12);
        let r = ricci(&c, &[0.0, 0.785, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
    }
    assert_eq!(ricci(&c, &[1.0, 0.0], &[0.0, 0.0]).unwrap_err(), Error::ZeroVector);
}

#[test]
fn ricci_is_quadratic() {
    let m = gallery::quartic_product();
    let c = berwald(&m);
    let x = [0.5, 1.7, -0.2];
    let v = [0.3, -0.6, 0.9];
    let base = ricci(&c, &x, &v).unwrap();
    for s in [0.5, 3.0] {
        let scaled: Vec<f64> = v.iter().map(|c| s * c).collect();
        let r = ricci(&c, &x, &scaled).unwrap();
        assert!((r - s * s * base).abs() <= 1e-10 * (s * s * base).abs());
    }
}

#[test]
fn tensor_identities() {
    for m in [
        gallery::sphere(),
        gallery::hyperbolic(),
        gallery::quartic_product(),
        gallery::product_riemannian(),
        gallery::randers(),
    ] {
        let c = berwald(&m);
        let mut q = QuasiPoints::new(m.dim(), 11);
        let mut rng = stream(11, 1);
        for _ in 0..20 {
            let x = q.next_in(m.chart());
            let v = unit_vector(&mut rng, m.dim());
            let r = curvature_tensor(&c, &x, &v).unwrap();
            assert!(r.antisymmetry_defect() <= 1e-10, "{}", m.name());
            assert!(r.bianchi_defect() <= 1e-9, "{}", m.name());
        }
    }
}

#[test]
fn sphere_lower_bounds() {
    let m = gallery::sphere();
    let c = berwald(&m);
    let mut q = QuasiPoints::new(2, 3);
    let mut rng = stream(3, 0);
    for _ in 0..10 {
        let x = q.next_in(m.chart());
        let v = unit_vector(&mut rng, 2);
        let mut min_flag = f64::INFINITY;
        for _ in 0..8 {
            let w = unit_vector(&mut rng, 2);
            min_flag = min_flag.min(flag_curvature_with(&c, &x, &v, &w).unwrap());
        }
        assert!(min_flag >= 1.0 - 1e-6);
        let f = m.norm_at(&x, &v).unwrap();
        assert!(ricci(&c, &x, &v).unwrap() >= (1.0 - 1e-6) * f * f * min_flag.min(1.0));
    }
}

#[test]
fn ricci_invariance() {
    let r = ricci_invariance_check(&gallery::product_riemannian(), &gallery::quartic_product(), 30, 0).unwrap();
    assert!(r.pass && r.max_difference <= 1e-9, "{r:?}");
    let q = gallery::quartic_minkowski();
    let r = ricci_invariance_check(&gallery::euclidean(2), &q, 10, 0).unwrap();
    assert!(r.pass && r.max_difference == 0.0);
    let refused = ricci_invariance_check(&gallery::sphere(), &gallery::hyperbolic(), 10, 0);
    assert!(matches!(refused, Err(Error::Precondition(_))));
}

fn line_weight(text: &str, n: EffectiveDimension) -> WeightSpec {
    WeightSpec::new(parse_expression(text, 1).unwrap(), n)
}

#[test]
fn weighted_values() {
    let line = gallery::line();
    let r = weighted_ricci(
        &line,
        &line_weight("x1^2", EffectiveDimension::Infinite),
        &[0.0],
        &[1.0],
    )
    .unwrap();
    assert!((r.value - 2.0).abs() < 1e-12);
    let r = weighted_ricci(
        &line,
        &line_weight("x1", EffectiveDimension::Finite(2.0)),
        &[0.0],
        &[1.0],
    )
    .unwrap();
    assert!((r.value - 1.0).abs() < 1e-12);
    let r = weighted_ricci(
        &line,
        &line_weight("x1", EffectiveDimension::Finite(1.0)),
        &[0.0],
        &[1.0],
    )
    .unwrap();
    assert_eq!(r.value, f64::NEG_INFINITY);
    let r = weighted_ricci(
        &line,
        &line_weight("x1^2", EffectiveDimension::Finite(1.0)),
        &[0.0],
        &[1.0],
    )
    .unwrap();
    assert!((r.value - 2.0).abs() < 1e-12);
    let bad = weighted_ricci(
        &line,
        &line_weight("x1", EffectiveDimension::Finite(0.5)),
        &[0.0],
        &[1.0],
    );
    assert!(matches!(bad, Err(Error::Precondition(_))));
}

#[test]
fn zero_weight_reproduces_ricci() {
    let m = gallery::quartic_product();
    let c = berwald(&m);
    let (x, v) = ([0.1, 1.0, 0.3], [0.2, 0.7, -0.4]);
    let ric = ricci(&c, &x, &v).unwrap();
    for n in [
        EffectiveDimension::Finite(3.0),
        EffectiveDimension::Finite(4.0),
        EffectiveDimension::Infinite,
    ] {
        let r = weighted_ricci(&m, &WeightSpec::zero(n), &x, &v).unwrap();
        assert!((r.value - ric).abs() <= 1e-12);
    }
}

#[test]
fn weighted_monotone_in_dimension() {
    let m = gallery::sphere();
    let psi = parse_expression("x1^2 + 0.3*x2", 2).unwrap();
    let (x, v) = ([1.0, 0.5], [0.4, 0.9]);
    let inf = weighted_ricci(&m, &WeightSpec::new(psi.clone(), EffectiveDimension::Infinite), &x, &v).unwrap();
    assert!(inf.first.abs() > 1e-3);
    let mut prev = f64::INFINITY;
    for n in [2.5, 3.0, 5.0, 50.0, 1e6] {
        let r = weighted_ricci(&m, &WeightSpec::new(psi.clone(), EffectiveDimension::Finite(n)), &x, &v).unwrap();
        assert!(r.value < prev && r.value > inf.value);
        prev = r.value;
    }
}

#[test]
fn weighted_invariance() {
    let (a, b) = (gallery::product_riemannian(), gallery::quartic_product());
    for psi in ["0", "x1^2", "x1*sin(x2) + x3"] {
        let w = WeightSpec::new(parse_expression(psi, 3).unwrap(), EffectiveDimension::Infinite);
        let r = weighted_invariance_check(&a, &b, &w, 15, 2).unwrap();
        assert!(r.pass, "{psi}: {r:?}");
    }
}

#[test]
fn einstein_verdicts() {
    let r = einstein_check(&gallery::sphere(), 6, 0).unwrap();
    match r.verdict {
        EinsteinVerdict::Einstein { lambda } => assert!((lambda - 1.0).abs() <= 1e-6),
        other => panic!("{other:?}"),
    }
    assert!(!r.rigidity_flag);
    let r = einstein_check(&gallery::quartic_minkowski(), 4, 0).unwrap();
    assert_eq!(r.verdict, EinsteinVerdict::RicciFlat);
    assert!(r.fiber_variation > 1e-3);
    let r = einstein_check(&gallery::product_riemannian(), 4, 0).unwrap();
    assert_eq!(r.verdict, EinsteinVerdict::NotEinstein);
    let r = einstein_check(&gallery::quartic_product(), 4, 0).unwrap();
    assert_eq!(r.verdict, EinsteinVerdict::NotEinstein);
    assert!(!r.rigidity_flag);
    let r = einstein_check(&gallery::hyperbolic(), 4, 0).unwrap();
    assert!(matches!(r.verdict, EinsteinVerdict::Einstein { lambda } if (lambda + 1.0).abs() < 1e-6));
    assert!(matches!(
        einstein_check(&gallery::randers(), 3, 0),
        Err(Error::Precondition(_))
    ));
}

#[test]
fn sample_rows() {
    let c = berwald(&gallery::sphere());
    let s = CurvatureSample::at(&c, &[1.0, 0.0], &[1.0, 0.0])
        .unwrap()
        .with_flag(&c, &[0.0, 1.0])
        .unwrap()
        .with_weighted(&c, &[WeightSpec::zero(EffectiveDimension::Infinite)])
        .unwrap();
    assert!((s.sectional.unwrap() - 1.0).abs() < 1e-12);
    assert!((s.flag.unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(CurvatureSample::csv_header(2), "x1,x2,v1,v2,K,flag,Ric");
    assert_eq!(s.csv_row().split(',').count(), 8);
}
