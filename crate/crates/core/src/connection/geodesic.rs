use serde::Serialize;

use super::ode::{integrate, Control, OdeOptions, OdeStats};
use super::ConnectionField;
use crate::error::{Error, Result};

pub type GeodesicOptions = OdeOptions;

/// Accepted relative drift of `F(γ̇)` along an integrated geodesic.
pub const SPEED_DRIFT_TOLERANCE: f64 = 1e-7;

/// A sampled curve with its velocity at every accepted integrator step.
#[derive(Debug, Clone, Serialize)]
pub struct CurveRecord {
    pub times: Vec<f64>,
    pub positions: Vec<Vec<f64>>,
    pub velocities: Vec<Vec<f64>>,
    /// `F(γ(t), γ̇(t))` at each grid time.
    pub speeds: Vec<f64>,
    pub stats: OdeStats,
    /// The integration stopped early because the next step left the chart.
    pub exited_chart: bool,
}

impl CurveRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_position(&self) -> &[f64] {
        self.positions.last().expect("curve has at least one sample")
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.velocities.last().expect("curve has at least one sample")
    }

    /// `max_t |F(γ̇(t)) − F(γ̇(0))| / F(γ̇(0))`.
    pub fn speed_drift(&self) -> f64 {
        let f0 = self.speeds[0];
        self.speeds.iter().fold(0.0_f64, |m, f| m.max((f - f0).abs())) / f0
    }

    pub fn to_csv(&self) -> String {
        let n = self.positions.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            out.push_str(&format!(",x{i}"));
        }
        for i in 1..=n {
            out.push_str(&format!(",v{i}"));
        }
        out.push_str(",F\n");
        for k in 0..self.times.len() {
            out.push_str(&format!("{:e}", self.times[k]));
            for c in self.positions[k].iter().chain(&self.velocities[k]) {
                out.push_str(&format!(",{c:e}"));
            }
            out.push_str(&format!(",{:e}\n", self.speeds[k]));
        }
        out
    }
}

/// Integrate the geodesic `ẍ = a(x, ẋ)` of `C` from `(x0, v0)` over `[0, T]`.
pub fn integrate_geodesic(
    connection: &ConnectionField,
    x0: &[f64],
    v0: &[f64],
    duration: f64,
    options: &GeodesicOptions,
) -> Result<CurveRecord> {
    let model = connection.model();
    model.check_dims(x0, v0)?;
    let n = model.dim();
    if !model.chart().contains(x0) {
        return Err(Error::OutsideChart { x: x0.to_vec() });
    }
    if v0.iter().all(|c| *c == 0.0) {
        return Err(Error::ZeroVector);
    }
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(v0);
    let mut record = CurveRecord {
        times: Vec::new(),
        positions: Vec::new(),
        velocities: Vec::new(),
        speeds: Vec::new(),
        stats: OdeStats::default(),
        exited_chart: false,
    };
    let mut speed_error = None;
    let (_, _, stats) = integrate(
        |_, y, dy| {
            let (x, v) = y.split_at(n);
            dy[..n].copy_from_slice(v);
            let a = connection.acceleration(x, v)?;
            dy[n..].copy_from_slice(&a);
            Ok(())
        },
        0.0,
        &y0,
        duration,
        options,
        |t, y, _| {
            let (x, v) = y.split_at(n);
            if !model.chart().contains(x) {
                record.exited_chart = true;
                return Control::Stop;
            }
            match model.norm_at(x, v) {
                Ok(f) => record.speeds.push(f),
                Err(e) => {
                    speed_error = Some(e);
                    return Control::Stop;
                }
            }
            record.times.push(t);
            record.positions.push(x.to_vec());
            record.velocities.push(v.to_vec());
            Control::Continue
        },
    )?;
    if let Some(e) = speed_error {
        return Err(e);
    }
    record.stats = stats;
    Ok(record)
}

const SHOOT_TOLERANCE: f64 = 1e-11;
const SHOOT_MAX_ITERATIONS: usize = 40;

fn endpoint(connection: &ConnectionField, from: &[f64], w: &[f64], options: &GeodesicOptions) -> Result<Vec<f64>> {
    let c = integrate_geodesic(connection, from, w, 1.0, options)?;
    if c.exited_chart {
        return Err(Error::OutsideChart {
            x: c.end_position().to_vec(),
        });
    }
    Ok(c.end_position().to_vec())
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
}

/// Geodesic from `from` to `to` on `[0, 1]`, by Newton shooting on the
/// initial velocity with a central-difference Jacobian.
pub fn shoot_geodesic(
    connection: &ConnectionField,
    from: &[f64],
    to: &[f64],
    options: &GeodesicOptions,
) -> Result<CurveRecord> {
    let n = connection.dim();
    connection.model().check_dims(from, to)?;
    let mut w: Vec<f64> = to.iter().zip(from).map(|(b, a)| b - a).collect();
    if max_abs(&w) == 0.0 {
        return Err(Error::Precondition("shooting endpoints coincide".into()));
    }
    let residual = |w: &[f64]| -> Result<Vec<f64>> {
        Ok(endpoint(connection, from, w, options)?
            .iter()
            .zip(to)
            .map(|(a, b)| a - b)
            .collect())
    };
    let mut r = residual(&w)?;
    let scale = 1.0 + max_abs(to);
    for _ in 0..SHOOT_MAX_ITERATIONS {
        if max_abs(&r) <= SHOOT_TOLERANCE * scale {
            return integrate_geodesic(connection, from, &w, 1.0, options);
        }
        let delta = 1e-6 * max_abs(&w).max(1.0);
        let mut jac = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += delta;
            wm[j] -= delta;
            let ep = endpoint(connection, from, &wp, options)?;
            let em = endpoint(connection, from, &wm, options)?;
            for i in 0..n {
                jac[(i, j)] = (ep[i] - em[i]) / (2.0 * delta);
            }
        }
        let rhs = -nalgebra::DVector::from_column_slice(&r);
        let step = jac
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Integration("singular shooting Jacobian (conjugate point?)".into()))?;
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = w.iter().zip(step.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = residual(&trial) {
                if max_abs(&rt) < max_abs(&r) {
                    w = trial;
                    r = rt;
                    break;
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                return Err(Error::Integration(format!(
                    "shooting stalled with residual {:e}",
                    max_abs(&r)
                )));
            }
        }
    }
    Err(Error::Integration(format!(
        "shooting did not converge; residual {:e}",
        max_abs(&r)
    )))
}
