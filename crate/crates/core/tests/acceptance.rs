//! Acceptance criteria, one line each. Runs without the libtest harness so
//! the lines always show up in `cargo test` output.

use std::f64::consts::{FRAC_PI_3, PI};
use std::process::ExitCode;
use std::time::Instant;

use finslerlab::connection::{berwald_test, spray_coefficients, ConnectionField};
use finslerlab::curvature::{
    curvature_tensor, einstein_check, flag_curvature, ricci, ricci_invariance_check, sectional_curvature,
    weighted_invariance_check, weighted_ricci, EffectiveDimension, EinsteinVerdict, WeightSpec,
};
use finslerlab::expr::{parse_expression, Bindings, Expression, Symbol};
use finslerlab::gallery;
use finslerlab::holonomy::{
    de_rham_split, holonomy_samples, norm_preservation, principal_angles, rotation_angle, szabo_metrize,
    HolonomyBundle, LoopSpec,
};
use finslerlab::linalg::Matrix;
use finslerlab::norms::FinslerModel;
use finslerlab::sampling::{stream, unit_vector, QuasiPoints};
use finslerlab::Result;
use rand::Rng;

const SEED: u64 = 20_240_601;
const PRODUCT_BASE: [f64; 3] = [0.3, 1.2, 1.0];

type Outcome = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Outcome);

fn points(model: &FinslerModel, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let chart = model.chart().shrink(0.9);
    let mut q = QuasiPoints::new(model.dim(), seed);
    (0..count).map(|_| q.next_in(&chart)).collect()
}

fn unit_for(model: &FinslerModel, x: &[f64], rng: &mut impl rand::Rng) -> Result<Vec<f64>> {
    let u = unit_vector(rng, model.dim());
    let f = model.norm_at(x, &u)?;
    Ok(u.iter().map(|c| c / f).collect())
}

fn gallery_models() -> Vec<FinslerModel> {
    vec![
        gallery::euclidean(2),
        gallery::euclidean(3),
        gallery::line(),
        gallery::sphere(),
        gallery::hyperbolic(),
        gallery::quartic_minkowski(),
        gallery::randers(),
        gallery::product_riemannian(),
        gallery::quartic_product(),
    ]
}

/// `F²(x, v)` with `x` and `v` packed into one argument list.
fn l_at(model: &FinslerModel, z: &[f64]) -> f64 {
    let n = model.dim();
    model.norm_at(&z[..n], &z[n..]).unwrap().powi(2)
}

/// Richardson-extrapolated central differences in the packed variables.
fn d1(f: &dyn Fn(&[f64]) -> f64, z: &[f64], a: usize) -> f64 {
    let d = |h: f64| {
        let (mut p, mut m) = (z.to_vec(), z.to_vec());
        p[a] += h;
        m[a] -= h;
        (f(&p) - f(&m)) / (2.0 * h)
    };
    (4.0 * d(5e-4) - d(1e-3)) / 3.0
}

fn d2(f: &dyn Fn(&[f64]) -> f64, z: &[f64], a: usize, b: usize) -> f64 {
    let d = |h: f64| {
        let at = |s: f64, t: f64| {
            let mut y = z.to_vec();
            y[a] += s * h;
            y[b] += t * h;
            f(&y)
        };
        (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h * h)
    };
    (4.0 * d(5e-4) - d(1e-3)) / 3.0
}

/// Spray from finite differences of `F²` alone: `M G = A / 2`.
fn spray_oracle(model: &FinslerModel, x: &[f64], v: &[f64]) -> Vec<f64> {
    let n = model.dim();
    let z: Vec<f64> = x.iter().chain(v).copied().collect();
    let l = |y: &[f64]| l_at(model, y);
    let mut m = Matrix::zeros(n, n);
    let mut a = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = d2(&l, &z, n + i, n + j);
        }
        a[i] = (0..n).map(|k| d2(&l, &z, n + i, k) * v[k]).sum::<f64>() - d1(&l, &z, i);
    }
    let rhs = finslerlab::linalg::Vector::from_vec(a) * 0.5;
    m.lu().solve(&rhs).unwrap().iter().copied().collect()
}

fn criterion_1() -> Outcome {
    let product = gallery::quartic_product();
    let randers = gallery::randers();
    let p = berwald_test(&product, 20, 6, SEED)?;
    let r = berwald_test(&randers, 20, 6, SEED)?;
    // the symbolic spray that the test differentiates, against finite differences
    let mut oracle_gap = 0.0_f64;
    let mut rng = stream(SEED, 1);
    for model in [&product, &randers] {
        for x in points(model, 5, SEED) {
            let v = unit_vector(&mut rng, model.dim());
            let fd = spray_oracle(model, &x, &v);
            for (a, b) in spray_coefficients(model, &x, &v)?.iter().zip(&fd) {
                oracle_gap = oracle_gap.max((a - b).abs() / b.abs().max(1.0));
            }
        }
    }
    let ok = p.max_deviation <= 1e-8 && r.max_deviation >= 1e-3 && oracle_gap <= 1e-6;
    Ok((
        ok,
        format!(
            "quartic product deviation {:.2e} (<= 1e-8), Randers {:.2e} (>= 1e-3), spray vs finite differences {:.2e} (<= 1e-6)",
            p.max_deviation, r.max_deviation, oracle_gap
        ),
    ))
}

fn criterion_2() -> Outcome {
    let m = gallery::quartic_product();
    let c = ConnectionField::berwald(&m)?;
    let bundle = holonomy_samples(&c, &PRODUCT_BASE, 30, 1.0, SEED)?;
    let r = norm_preservation(&m, &bundle, 50, SEED)?;
    Ok((
        r.max_relative_change <= 1e-6,
        format!(
            "50 vectors x {} transports (30 loops and their products): max |dF|/F {:.2e} (<= 1e-6)",
            bundle.len(),
            r.max_relative_change
        ),
    ))
}

fn criterion_3() -> Outcome {
    let r = ricci_invariance_check(&gallery::product_riemannian(), &gallery::quartic_product(), 100, SEED)?;
    Ok((
        r.agreement.agree && r.max_difference <= 1e-8,
        format!(
            "connections differ by {:.2e}; Ric differs by {:.2e} at 100 probes (<= 1e-8)",
            r.agreement.max_deviation, r.max_difference
        ),
    ))
}

fn criterion_4() -> Outcome {
    let sphere = gallery::sphere();
    let hyperbolic = gallery::hyperbolic();
    let product = gallery::quartic_product();
    let cs = ConnectionField::berwald(&sphere)?;
    let mut rng = stream(SEED, 4);
    let (mut ric, mut flag, mut sec, mut mixed) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
    for x in points(&sphere, 20, SEED) {
        let v = unit_for(&sphere, &x, &mut rng)?;
        let w = unit_vector(&mut rng, 2);
        ric = ric.max((ricci(&cs, &x, &v)? - 1.0).abs());
        flag = flag.max((flag_curvature(&sphere, &x, &v, &w)? - 1.0).abs());
    }
    for x in points(&hyperbolic, 20, SEED) {
        let v = unit_vector(&mut rng, 2);
        let w = unit_vector(&mut rng, 2);
        sec = sec.max((sectional_curvature(&hyperbolic, &x, &v, &w)? + 1.0).abs());
    }
    for x in points(&product, 20, SEED) {
        let s = unit_vector(&mut rng, 2);
        let a = if rng.random::<bool>() { 1.0 } else { -0.7 };
        let flat = [a, 0.0, 0.0];
        let round = [0.0, s[0], s[1]];
        mixed = mixed.max(flag_curvature(&product, &x, &flat, &round)?.abs());
        mixed = mixed.max(flag_curvature(&product, &x, &round, &flat)?.abs());
    }
    let ok = ric <= 1e-7 && flag <= 1e-7 && sec <= 1e-7 && mixed <= 1e-9;
    Ok((
        ok,
        format!(
            "sphere |Ric - 1| {ric:.2e}, |flag - 1| {flag:.2e}; half-plane |K + 1| {sec:.2e} (all <= 1e-7); mixed product flags {mixed:.2e} (<= 1e-9)"
        ),
    ))
}

fn criterion_5() -> Outcome {
    let s = szabo_metrize(&gallery::quartic_product(), 10, SEED)?;
    let mut own = 0.0_f64;
    for model in [gallery::sphere(), gallery::hyperbolic(), gallery::product_riemannian()] {
        let h = szabo_metrize(&model, 5, SEED)?;
        for p in &h.probes {
            own = own.max((&p.metric - model.metric_at(&p.point)?).abs().max());
        }
    }
    Ok((
        s.max_christoffel_deviation <= 1e-6 && own <= 1e-10,
        format!(
            "quartic product: Christoffels of the average vs Berwald {:.2e} at 10 probes (<= 1e-6); Riemannian inputs returned within {:.2e} (<= 1e-10)",
            s.max_christoffel_deviation, own
        ),
    ))
}

fn criterion_6() -> Outcome {
    let product = gallery::quartic_product();
    let c = ConnectionField::berwald(&product)?;
    let bundle = holonomy_samples(&c, &PRODUCT_BASE, 10, 1.0, SEED)?;
    let h = szabo_metrize(&product, 1, SEED)?;
    let split = de_rham_split(&bundle, &h, SEED)?;
    let e = Matrix::identity(3, 3);
    let shape_ok = split.dimensions() == vec![1, 2] && split.subspaces[0].flat && !split.subspaces[1].flat;
    let mut worst = f64::INFINITY;
    if shape_ok {
        let line = principal_angles(&split.subspaces[0].basis, &e.columns(0, 1).into_owned())?;
        let plane = principal_angles(&split.subspaces[1].basis, &e.columns(1, 2).into_owned())?;
        worst = line.iter().chain(&plane).fold(0.0_f64, |m, a| m.max(*a));
    }
    let sphere = gallery::sphere();
    let x = [1.2, 1.0];
    let sb = holonomy_samples(&ConnectionField::levi_civita(&sphere)?, &x, 10, 1.0, SEED)?;
    let ss = de_rham_split(&sb, &szabo_metrize(&sphere, 1, SEED)?, SEED)?;
    Ok((
        shape_ok && worst <= 1e-6 && ss.is_irreducible(),
        format!(
            "product splits as {:?} (flat {:?}), principal angles to blocks {:.2e} (<= 1e-6); sphere subspaces {:?}",
            split.dimensions(),
            split.subspaces.iter().map(|s| s.flat).collect::<Vec<_>>(),
            worst,
            ss.dimensions()
        ),
    ))
}

fn criterion_7() -> Outcome {
    let sphere = gallery::sphere();
    let c = ConnectionField::levi_civita(&sphere)?;
    let x = [FRAC_PI_3, 0.0];
    let spec = LoopSpec::Parametric {
        curve: gallery::latitude_loop(FRAC_PI_3),
    };
    let b = HolonomyBundle::from_loops(&c, &x, vec![spec], SEED)?;
    let angle = rotation_angle(&b.elements[0].matrix, &sphere.metric_at(&x)?)?;
    // 2π(1 − cos θ₀) with θ₀ = π/3
    let expected = 2.0 * PI * (1.0 - FRAC_PI_3.cos());
    let gap = (angle.abs() - expected).abs();
    Ok((
        gap <= 1e-5,
        format!("rotation angle {angle:.12} vs {expected:.12}, gap {gap:.2e} (<= 1e-5)"),
    ))
}

fn criterion_8() -> Outcome {
    let mut zero_gap = 0.0_f64;
    let mut rng = stream(SEED, 8);
    for model in [gallery::sphere(), gallery::quartic_product()] {
        let c = ConnectionField::berwald(&model)?;
        let n = model.dim() as f64;
        for x in points(&model, 10, SEED) {
            let v = unit_vector(&mut rng, model.dim());
            let r = ricci(&c, &x, &v)?;
            for d in [
                EffectiveDimension::Finite(n),
                EffectiveDimension::Finite(n + 1.0),
                EffectiveDimension::Infinite,
            ] {
                let w = weighted_ricci(&model, &WeightSpec::zero(d), &x, &v)?;
                zero_gap = zero_gap.max((w.value - r).abs());
            }
        }
    }
    let line = gallery::line();
    let psi = parse_expression("x1", 1)?;
    let ric2 = weighted_ricci(
        &line,
        &WeightSpec::new(psi.clone(), EffectiveDimension::Finite(2.0)),
        &[0.0],
        &[1.0],
    )?;
    let ric1 = weighted_ricci(
        &line,
        &WeightSpec::new(psi, EffectiveDimension::Finite(1.0)),
        &[0.0],
        &[1.0],
    )?;
    let weight = parse_expression("x1^2 + sin(x2) * x3", 3)?;
    let inv = weighted_invariance_check(
        &gallery::product_riemannian(),
        &gallery::quartic_product(),
        &WeightSpec::new(weight, EffectiveDimension::Finite(5.0)),
        50,
        SEED,
    )?;
    let ok = zero_gap <= 1e-9 && (ric2.value - 1.0).abs() <= 1e-9 && ric1.value == f64::NEG_INFINITY && inv.pass;
    Ok((
        ok,
        format!(
            "zero weight vs Ric {zero_gap:.2e} (<= 1e-9); line Ric_2 = {}, Ric_1 = {}; invariance gap {:.2e} (<= {:.0e})",
            ric2.value, ric1.value, inv.max_difference, inv.tolerance
        ),
    ))
}

fn criterion_9() -> Outcome {
    let sphere = einstein_check(&gallery::sphere(), 10, SEED)?;
    let flat = einstein_check(&gallery::quartic_minkowski(), 10, SEED)?;
    let product = einstein_check(&gallery::product_riemannian(), 10, SEED)?;
    let sphere_ok = matches!(sphere.verdict, EinsteinVerdict::Einstein { lambda } if (lambda - 1.0).abs() <= 1e-6);
    let mut rigid_violations = 0;
    let mut checked = 0;
    for model in gallery_models() {
        if !ConnectionField::berwald(&model)?.is_berwald()? {
            continue;
        }
        let r = einstein_check(&model, 10, SEED)?;
        checked += 1;
        let nonzero_einstein = matches!(r.verdict, EinsteinVerdict::Einstein { .. });
        if r.rigidity_flag || (nonzero_einstein && !model.is_riemannian()) {
            rigid_violations += 1;
        }
    }
    let ok = sphere_ok
        && flat.verdict == EinsteinVerdict::RicciFlat
        && product.verdict == EinsteinVerdict::NotEinstein
        && rigid_violations == 0;
    Ok((
        ok,
        format!(
            "sphere {:?}, quartic Minkowski {:?}, product {:?}; {rigid_violations} Einstein verdicts with lambda != 0 on non-Riemannian models among {checked} Berwald models",
            sphere.verdict, flat.verdict, product.verdict
        ),
    ))
}

fn criterion_10() -> Outcome {
    let (mut anti, mut bianchi, mut fd) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut rng = stream(SEED, 10);
    for model in gallery_models() {
        let n = model.dim();
        let berwald = ConnectionField::berwald(&model)?;
        let mut connections = Vec::new();
        if berwald.is_berwald()? {
            connections.push(berwald);
        }
        if model.is_riemannian() {
            connections.push(ConnectionField::levi_civita(&model)?);
        }
        let l = model.norm_squared_expression();
        let first: Vec<(usize, Expression)> = (0..n)
            .map(|i| (i, l.differentiate(&Symbol::X(i))))
            .chain((0..n).map(|i| (n + i, l.differentiate(&Symbol::V(i)))))
            .collect();
        for x in points(&model, 20, SEED) {
            let v = unit_vector(&mut rng, n);
            for c in &connections {
                let r = curvature_tensor(c, &x, &v)?;
                anti = anti.max(r.antisymmetry_defect());
                bianchi = bianchi.max(r.bianchi_defect());
            }
            let z: Vec<f64> = x.iter().chain(&v).copied().collect();
            let b = Bindings::new().with_x(&x).with_v(&v);
            let f = |y: &[f64]| l_at(&model, y);
            for (a, e) in &first {
                let exact = e.evaluate(&b).map_err(finslerlab::Error::Eval)?;
                fd = fd.max((exact - d1(&f, &z, *a)).abs() / exact.abs().max(1.0));
                for (k, _) in &first {
                    let exact2 = e
                        .differentiate(&if *k < n { Symbol::X(*k) } else { Symbol::V(*k - n) })
                        .evaluate(&b)
                        .map_err(finslerlab::Error::Eval)?;
                    fd = fd.max((exact2 - d2(&f, &z, *a, *k)).abs() / exact2.abs().max(1.0));
                }
            }
        }
    }
    Ok((
        anti <= 1e-10 && bianchi <= 1e-9 && fd <= 1e-6,
        format!(
            "antisymmetry {anti:.2e} (<= 1e-10), first Bianchi {bianchi:.2e} (<= 1e-9), symbolic vs finite differences {fd:.2e} (<= 1e-6) over the gallery"
        ),
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("Berwald detection", criterion_1),
        ("norm preservation", criterion_2),
        ("Ricci affine invariance", criterion_3),
        ("analytic curvature values", criterion_4),
        ("averaged metric", criterion_5),
        ("de Rham split", criterion_6),
        ("holonomy angle", criterion_7),
        ("weighted Ricci", criterion_8),
        ("Einstein checks", criterion_9),
        ("numerical hygiene", criterion_10),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (ok, detail) = match run() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail} [{:.1}s]",
            k + 1,
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
