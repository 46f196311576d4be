use anyhow::anyhow;
use finslerlab::connection::{
    berwald_test, integrate_geodesic, parallel_transport, ConnectionField, GeodesicOptions, BERWALD_TOLERANCE,
    DEFAULT_PROBE_POINTS, DEFAULT_PROBE_VECTORS, SPEED_DRIFT_TOLERANCE,
};
use finslerlab::curvature::{
    einstein_check, flag_curvature_with, ricci, ricci_invariance_check, weighted_invariance_check, weighted_ricci_with,
    CurvatureSample, EffectiveDimension, EinsteinVerdict, WeightSpec, ANTISYMMETRY_TOLERANCE, BIANCHI_TOLERANCE,
    EINSTEIN_TOLERANCE,
};
use finslerlab::expr::{parse_expression, Expression};
use finslerlab::holonomy::{
    de_rham_split, holonomy_samples, invariant_function_test, norm_preservation, szabo_metrize, HolonomyBundle,
    FLAT_TOLERANCE, FUNCTION_INVARIANCE_TOLERANCE, NORM_PRESERVATION_TOLERANCE, SZABO_TOLERANCE,
};
use finslerlab::norms::{homogeneity_check, product_distance, strong_convexity_check, FinslerModel, NormKind};
use serde_json::json;

use crate::model_file::{self, LoadedModel};
use crate::report::{Check, RunReport};
use crate::{At, Command, Common, Coords, Loops};

/// Tolerance for `--expect` comparisons when `--tol` is absent.
const EXPECT_TOLERANCE: f64 = 1e-7;
const VALIDATE_PROBES: usize = 64;
const TRANSPORT_VECTORS: usize = 50;
const EINSTEIN_PROBES: usize = 8;
const METRIZE_PROBES: usize = 10;
const SPLIT_PROBES: usize = 4;
const INVARIANCE_PROBES: usize = 100;

/// Exit code and cause of a run that produced no report.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

impl From<finslerlab::Error> for Failure {
    fn from(e: finslerlab::Error) -> Self {
        use finslerlab::Error as E;
        let code = match e {
            E::Parse(_) | E::InvalidModel(_) | E::Dimension { .. } => 2,
            _ => 1,
        };
        Failure { code, error: e.into() }
    }
}

fn usage(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

type Outcome = Result<RunReport, Failure>;

/// Run one subcommand to a report.
pub fn run(command: &Command) -> Outcome {
    let common = command.common();
    let loaded = model_file::load(&common.model).map_err(usage)?;
    let mut r = RunReport::new(command_name(command), loaded.model.name(), &loaded.hash, common.seed);
    if let Some(p) = common.probes {
        if p == 0 {
            return Err(usage(anyhow!("--probes must be positive")));
        }
        r.option("probes", p);
    }
    if let Some(t) = common.tol {
        if t.is_nan() || t < 0.0 {
            return Err(usage(anyhow!("--tol must be a non-negative number")));
        }
        r.option("tol", t);
    }
    let m = &loaded.model;
    match command {
        Command::Validate { common } => validate(m, common, r),
        Command::Berwald { common, vectors } => berwald(m, common, *vectors, r),
        Command::Geodesic { common, at, time } => geodesic(m, common, at, *time, r),
        Command::Transport {
            common,
            at,
            time,
            carry,
            loops,
            scale,
        } => match loops {
            Some(count) => transport_loops(m, common, at.point.as_ref(), *count, *scale, r),
            None => transport(m, at, *time, carry.as_ref(), common, r),
        },
        Command::Curvature { common, at } => curvature(m, common, at, r),
        Command::Ricci { common, at, expect } => ricci_value(m, common, at, *expect, r),
        Command::Flag {
            common,
            at,
            edge,
            expect,
        } => flag(m, common, at, edge.as_ref(), *expect, r),
        Command::WeightedRicci {
            common,
            at,
            dimension,
            expect,
        } => weighted(m, common, at, *dimension, *expect, r),
        Command::Einstein { common } => einstein(m, common, r),
        Command::Metrize { common } => metrize(m, common, r),
        Command::Split { common, loops } => split(m, common, loops, r),
        Command::Invariance {
            common,
            against,
            weighted,
            function,
            samples,
            loops,
        } => match (against, function) {
            (Some(path), None) => {
                let other = model_file::load(path).map_err(usage)?;
                affine_invariance(m, &other, *weighted, common, r)
            }
            (None, Some(text)) => function_invariance(m, text, *samples, loops, common, r),
            _ => Err(usage(anyhow!(
                "invariance needs --against <model> or --function <expr>"
            ))),
        },
        Command::Distance {
            common,
            from,
            to,
            factor_distances,
            expect,
        } => distance(m, common, from, to, factor_distances, *expect, r),
    }
}

fn command_name(command: &Command) -> &'static str {
    match command {
        Command::Validate { .. } => "validate",
        Command::Berwald { .. } => "berwald",
        Command::Geodesic { .. } => "geodesic",
        Command::Transport { .. } => "transport",
        Command::Curvature { .. } => "curvature",
        Command::Ricci { .. } => "ricci",
        Command::Flag { .. } => "flag",
        Command::WeightedRicci { .. } => "weighted-ricci",
        Command::Einstein { .. } => "einstein",
        Command::Metrize { .. } => "metrize",
        Command::Split { .. } => "split",
        Command::Invariance { .. } => "invariance",
        Command::Distance { .. } => "distance",
    }
}

fn tol(common: &Common, default: f64) -> f64 {
    common.tol.unwrap_or(default)
}

fn axis(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

fn point(m: &FinslerModel, given: Option<&Coords>, r: &mut RunReport) -> Result<Vec<f64>, Failure> {
    let x = given.map_or_else(|| m.chart().center(), |c| c.0.clone());
    if x.len() != m.dim() {
        return Err(usage(anyhow!(
            "--point has {} coordinates, model dimension is {}",
            x.len(),
            m.dim()
        )));
    }
    if !m.chart().contains(&x) {
        return Err(usage(anyhow!(
            "--point {x:?} lies outside the chart box {:?}",
            m.chart().intervals()
        )));
    }
    r.option("point", &x);
    Ok(x)
}

fn vector(
    m: &FinslerModel,
    given: Option<&Coords>,
    default: usize,
    flag: &str,
    r: &mut RunReport,
) -> Result<Vec<f64>, Failure> {
    let v = given.map_or_else(|| axis(m.dim(), default), |c| c.0.clone());
    if v.len() != m.dim() {
        return Err(usage(anyhow!(
            "--{flag} has {} components, model dimension is {}",
            v.len(),
            m.dim()
        )));
    }
    if v.iter().all(|c| *c == 0.0) {
        return Err(usage(anyhow!("--{flag} must be nonzero")));
    }
    r.option(flag, &v);
    Ok(v)
}

fn at(m: &FinslerModel, at: &At, r: &mut RunReport) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    Ok((
        point(m, at.point.as_ref(), r)?,
        vector(m, at.vector.as_ref(), 0, "vector", r)?,
    ))
}

/// JSON number, or a string for the non-finite values JSON cannot hold.
fn number(x: f64) -> serde_json::Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn expect_check(r: &mut RunReport, common: &Common, name: &str, value: f64, expect: Option<f64>) {
    if let Some(e) = expect {
        r.option("expect", number(e));
        r.check(Check::near(name, value, e, tol(common, EXPECT_TOLERANCE)));
    }
}

fn validate(m: &FinslerModel, common: &Common, mut r: RunReport) -> Outcome {
    let probes = common.probes.unwrap_or(VALIDATE_PROBES);
    let h = homogeneity_check(m, probes, common.seed)?;
    let c = strong_convexity_check(m, probes, common.seed)?;
    r.check(Check::at_most(
        "homogeneity",
        h.max_relative_deviation,
        tol(common, h.tolerance),
    ));
    r.check(Check::above(
        "strong convexity",
        c.min_eigenvalue,
        tol(common, c.tolerance),
    ));
    r.check(Check::above("positivity", c.min_norm, 0.0));
    r.value("kind", m.kind().label());
    r.value("dim", m.dim());
    r.details(json!({ "homogeneity": h, "convexity": c }));
    Ok(r)
}

fn berwald(m: &FinslerModel, common: &Common, vectors: Option<usize>, mut r: RunReport) -> Outcome {
    let vectors = vectors.unwrap_or(DEFAULT_PROBE_VECTORS);
    if vectors < 2 {
        return Err(usage(anyhow!("--vectors must be at least 2")));
    }
    r.option("vectors", vectors);
    let rep = berwald_test(m, common.probes.unwrap_or(DEFAULT_PROBE_POINTS), vectors, common.seed)?
        .with_tolerance(tol(common, BERWALD_TOLERANCE));
    r.note(if rep.is_berwald {
        format!("Berwald, deviation {:.1e}", rep.max_deviation)
    } else {
        format!("not Berwald, deviation {:.1e}", rep.max_deviation)
    });
    r.check(Check::at_most("berwald deviation", rep.max_deviation, rep.tolerance));
    r.value("max_torsion", rep.max_torsion);
    r.details(&rep);
    Ok(r)
}

fn geodesic(m: &FinslerModel, common: &Common, a: &At, time: f64, mut r: RunReport) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    if !(time > 0.0 && time.is_finite()) {
        return Err(usage(anyhow!("--time must be positive")));
    }
    r.option("time", time);
    let c = ConnectionField::berwald(m)?;
    let curve = integrate_geodesic(&c, &x, &v, time, &GeodesicOptions::default())?;
    r.value("end_time", curve.times.last().copied().unwrap_or(0.0));
    r.value("end_position", curve.end_position());
    r.value("end_velocity", curve.end_velocity());
    r.value("exited_chart", curve.exited_chart);
    r.value("steps", curve.stats.steps);
    r.check(Check::at_most(
        "speed drift",
        curve.speed_drift(),
        tol(common, SPEED_DRIFT_TOLERANCE),
    ));
    r.csv = Some(curve.to_csv());
    r.details(&curve);
    Ok(r)
}

fn transport(
    m: &FinslerModel,
    a: &At,
    time: f64,
    carry: Option<&Coords>,
    common: &Common,
    mut r: RunReport,
) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    let w = vector(m, carry, m.dim() - 1, "carry", &mut r)?;
    if !(time > 0.0 && time.is_finite()) {
        return Err(usage(anyhow!("--time must be positive")));
    }
    r.option("time", time);
    let c = ConnectionField::berwald(m)?;
    let curve = integrate_geodesic(&c, &x, &v, time, &GeodesicOptions::default())?;
    let rec = parallel_transport(&c, &curve, &w)?;
    r.value("end_position", curve.end_position());
    r.value("end_vector", rec.end_vector());
    r.check(Check::at_most(
        "norm drift",
        rec.norm_drift(),
        tol(common, NORM_PRESERVATION_TOLERANCE),
    ));
    let n = m.dim();
    let mut csv = String::from("t");
    for i in 1..=n {
        csv.push_str(&format!(",X{i}"));
    }
    csv.push_str(",F\n");
    for k in 0..rec.times.len() {
        csv.push_str(&format!("{:e}", rec.times[k]));
        for c in &rec.vectors[k] {
            csv.push_str(&format!(",{c:e}"));
        }
        csv.push_str(&format!(",{:e}\n", rec.norms[k]));
    }
    r.csv = Some(csv);
    r.details(&rec);
    Ok(r)
}

fn bundle(
    m: &FinslerModel,
    given: Option<&Coords>,
    count: usize,
    scale: f64,
    seed: u64,
    r: &mut RunReport,
) -> Result<HolonomyBundle, Failure> {
    let x = point(m, given, r)?;
    if count == 0 {
        return Err(usage(anyhow!("--loops must be positive")));
    }
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(usage(anyhow!("--scale must lie in (0, 1]")));
    }
    r.option("loops", count);
    r.option("scale", scale);
    let c = ConnectionField::berwald(m)?;
    Ok(holonomy_samples(&c, &x, count, scale, seed)?)
}

fn transport_loops(
    m: &FinslerModel,
    common: &Common,
    given: Option<&Coords>,
    count: usize,
    scale: f64,
    mut r: RunReport,
) -> Outcome {
    let b = bundle(m, given, count, scale, common.seed, &mut r)?;
    let rep = norm_preservation(m, &b, common.probes.unwrap_or(TRANSPORT_VECTORS), common.seed)?;
    r.value("elements", rep.elements);
    r.check(Check::at_most(
        "norm change",
        rep.max_relative_change,
        tol(common, rep.tolerance),
    ));
    r.csv = Some(b.to_csv());
    r.details(json!({ "holonomy": b, "norm_preservation": rep }));
    Ok(r)
}

fn curvature(m: &FinslerModel, common: &Common, a: &At, mut r: RunReport) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    let c = ConnectionField::berwald(m)?;
    let s = CurvatureSample::at(&c, &x, &v)?;
    r.value("ricci", number(s.ricci));
    r.check(Check::at_most(
        "antisymmetry",
        s.antisymmetry_defect,
        tol(common, ANTISYMMETRY_TOLERANCE),
    ));
    r.check(Check::at_most(
        "first bianchi",
        s.bianchi_defect,
        tol(common, BIANCHI_TOLERANCE),
    ));
    let n = m.dim();
    let mut csv = String::from("i,j,k,l,R\n");
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    csv.push_str(&format!(
                        "{},{},{},{},{:e}\n",
                        i + 1,
                        j + 1,
                        k + 1,
                        l + 1,
                        s.tensor.get(i, j, k, l)
                    ));
                }
            }
        }
    }
    r.csv = Some(csv);
    r.details(&s);
    Ok(r)
}

fn ricci_value(m: &FinslerModel, common: &Common, a: &At, expect: Option<f64>, mut r: RunReport) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    let c = ConnectionField::berwald(m)?;
    let value = ricci(&c, &x, &v)?;
    r.value("ricci", number(value));
    expect_check(&mut r, common, "ricci", value, expect);
    r.details(json!({ "ricci": number(value) }));
    Ok(r)
}

fn flag(
    m: &FinslerModel,
    common: &Common,
    a: &At,
    edge: Option<&Coords>,
    expect: Option<f64>,
    mut r: RunReport,
) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    let w = vector(m, edge, m.dim() - 1, "edge", &mut r)?;
    let c = ConnectionField::berwald(m)?;
    let value = flag_curvature_with(&c, &x, &v, &w)?;
    r.value("flag", number(value));
    expect_check(&mut r, common, "flag curvature", value, expect);
    r.details(json!({ "flag": number(value) }));
    Ok(r)
}

fn weighted(
    m: &FinslerModel,
    common: &Common,
    a: &At,
    dimension: EffectiveDimension,
    expect: Option<f64>,
    mut r: RunReport,
) -> Outcome {
    let (x, v) = at(m, a, &mut r)?;
    r.option("dimension", dimension.to_string());
    let psi = match m.weight() {
        Some(psi) => psi.clone(),
        None => {
            r.note("no [measure] section: weight is zero");
            Expression::zero()
        }
    };
    r.value("weight", psi.to_string());
    let c = ConnectionField::berwald(m)?;
    let w = weighted_ricci_with(&c, &WeightSpec::new(psi, dimension), &x, &v)?;
    r.value("weighted_ricci", number(w.value));
    r.value("ricci", number(w.ricci));
    expect_check(&mut r, common, "weighted ricci", w.value, expect);
    r.details(json!({
        "value": number(w.value),
        "ricci": number(w.ricci),
        "first": number(w.first),
        "second": number(w.second),
        "dimension": dimension.to_string(),
    }));
    Ok(r)
}

fn einstein(m: &FinslerModel, common: &Common, mut r: RunReport) -> Outcome {
    let rep = einstein_check(m, common.probes.unwrap_or(EINSTEIN_PROBES), common.seed)?;
    let t = tol(common, EINSTEIN_TOLERANCE);
    match rep.verdict {
        EinsteinVerdict::Einstein { lambda } => {
            r.note(format!("Einstein, lambda = {lambda}"));
            r.value("lambda", number(lambda));
        }
        EinsteinVerdict::RicciFlat => r.note("Ricci-flat"),
        EinsteinVerdict::NotEinstein => r.note("not Einstein"),
    }
    r.check(Check::at_most("einstein residual", rep.max_residual, t));
    r.check(Check::at_most("lambda spread", rep.lambda_spread, t));
    r.check(Check::flag("rigidity", !rep.rigidity_flag));
    r.value("fiber_variation", rep.fiber_variation);
    r.details(&rep);
    Ok(r)
}

fn metrize(m: &FinslerModel, common: &Common, mut r: RunReport) -> Outcome {
    let s = szabo_metrize(m, common.probes.unwrap_or(METRIZE_PROBES), common.seed)?;
    r.value("error_estimate", s.error_estimate);
    r.check(Check::at_most(
        "christoffel deviation",
        s.max_christoffel_deviation,
        tol(common, SZABO_TOLERANCE),
    ));
    r.check(Check::above("min eigenvalue", s.min_eigenvalue, 0.0));
    let n = m.dim();
    let mut csv = String::new();
    let mut head: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
    for i in 1..=n {
        for j in 1..=n {
            head.push(format!("h{i}{j}"));
        }
    }
    head.push("christoffel_deviation".into());
    csv.push_str(&head.join(","));
    csv.push('\n');
    for p in &s.probes {
        let mut cells: Vec<String> = p.point.iter().map(|c| format!("{c:e}")).collect();
        for i in 0..n {
            for j in 0..n {
                cells.push(format!("{:e}", p.metric[(i, j)]));
            }
        }
        cells.push(format!("{:e}", p.christoffel_deviation));
        csv.push_str(&cells.join(","));
        csv.push('\n');
    }
    r.csv = Some(csv);
    r.details(&s);
    Ok(r)
}

fn split(m: &FinslerModel, common: &Common, loops: &Loops, mut r: RunReport) -> Outcome {
    let b = bundle(m, loops.point.as_ref(), loops.loops, loops.scale, common.seed, &mut r)?;
    let h = szabo_metrize(m, common.probes.unwrap_or(SPLIT_PROBES), common.seed)?;
    let s = de_rham_split(&b, &h, common.seed)?;
    r.value("dimensions", s.dimensions());
    r.value("flat_dimension", s.flat_dimension());
    r.value("irreducible", s.is_irreducible());
    r.value("commutant_dimension", s.commutant_dimension);
    let t = tol(common, FLAT_TOLERANCE);
    r.check(Check::at_most("commutant residual", s.residual, t));
    r.check(Check::at_most("block defect", s.block_defect, t));
    r.csv = Some(b.to_csv());
    r.details(json!({ "holonomy": b, "split": s }));
    Ok(r)
}

fn affine_invariance(
    m: &FinslerModel,
    other: &LoadedModel,
    weighted: bool,
    common: &Common,
    mut r: RunReport,
) -> Outcome {
    r.option("against", other.model.name());
    r.option("against_hash", &other.hash);
    r.option("weighted", weighted);
    let probes = common.probes.unwrap_or(INVARIANCE_PROBES);
    let rep = if weighted {
        let psi = m.weight().cloned().unwrap_or_else(Expression::zero);
        r.value("weight", psi.to_string());
        let spec = WeightSpec::new(psi, EffectiveDimension::Infinite);
        weighted_invariance_check(m, &other.model, &spec, probes, common.seed)?
    } else {
        ricci_invariance_check(m, &other.model, probes, common.seed)?
    };
    r.check(Check::at_most(
        "connection agreement",
        rep.agreement.max_deviation,
        tol(common, rep.agreement.tolerance),
    ));
    let name = if weighted {
        "weighted ricci difference"
    } else {
        "ricci difference"
    };
    r.check(Check::at_most(name, rep.max_difference, tol(common, rep.tolerance)));
    r.details(&rep);
    Ok(r)
}

fn function_invariance(
    m: &FinslerModel,
    text: &str,
    samples: usize,
    loops: &Loops,
    common: &Common,
    mut r: RunReport,
) -> Outcome {
    let g = parse_expression(text, m.dim()).map_err(|d| usage(anyhow!("--function: {d}")))?;
    r.option("function", g.to_string());
    r.option("samples", samples);
    let b = bundle(m, loops.point.as_ref(), loops.loops, loops.scale, common.seed, &mut r)?;
    let rep = invariant_function_test(&g, m, &b, samples, common.seed)?;
    r.value("invariant", rep.invariant);
    r.value("radial", rep.radial);
    r.value("indicatrix_spread", rep.indicatrix_spread);
    if rep.invariant && !rep.radial {
        r.note("invariant but not a function of F: the holonomy is reducible or the model is Riemannian");
    }
    r.check(Check::at_most(
        "invariance defect",
        rep.max_defect,
        tol(common, FUNCTION_INVARIANCE_TOLERANCE),
    ));
    r.csv = Some(b.to_csv());
    r.details(&rep);
    Ok(r)
}

fn distance(
    m: &FinslerModel,
    common: &Common,
    from: &Coords,
    to: &Coords,
    factors: &Coords,
    expect: Option<f64>,
    mut r: RunReport,
) -> Outcome {
    if !matches!(m.kind(), NormKind::Product(_)) {
        return Err(usage(anyhow!(
            "distance needs a model of kind `product`, `{}` is {}",
            m.name(),
            m.kind().label()
        )));
    }
    r.option("from", &from.0);
    r.option("to", &to.0);
    r.option("factor_distances", &factors.0);
    for (flag, c) in [("from", from), ("to", to)] {
        if c.0.len() != m.dim() {
            return Err(usage(anyhow!(
                "--{flag} has {} coordinates, model dimension is {}",
                c.0.len(),
                m.dim()
            )));
        }
    }
    // every failure here is about the supplied coordinates or distances
    let d = product_distance(m, &from.0, &to.0, &factors.0).map_err(|e| usage(e.into()))?;
    r.value("distance", number(d));
    expect_check(&mut r, common, "distance", d, expect);
    r.details(json!({ "distance": number(d) }));
    Ok(r)
}
