use serde::Serialize;

use super::geodesic::CurveRecord;
use super::ode::{integrate, Control, OdeOptions};
use super::ConnectionField;
use crate::error::{Error, Result};
use crate::expr::{Bindings, Expression, Symbol};
use crate::linalg::Matrix;

/// A `C¹` curve in chart coordinates.
pub trait Curve {
    /// Increasing times; transport restarts the integrator at each one.
    fn breakpoints(&self) -> Vec<f64>;
    /// Position and velocity at `t`.
    fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)>;
}

impl Curve for CurveRecord {
    fn breakpoints(&self) -> Vec<f64> {
        self.times.clone()
    }

    /// Cubic Hermite interpolation on the recorded grid.
    fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let last = self.times.len() - 1;
        if last == 0 {
            return Ok((self.positions[0].clone(), self.velocities[0].clone()));
        }
        let k = match self.times.partition_point(|s| *s <= t) {
            0 => 0,
            p => (p - 1).min(last - 1),
        };
        let (t0, t1) = (self.times[k], self.times[k + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (p0, p1) = (&self.positions[k], &self.positions[k + 1]);
        let (m0, m1) = (&self.velocities[k], &self.velocities[k + 1]);
        let h00 = 2.0 * s.powi(3) - 3.0 * s * s + 1.0;
        let h10 = s.powi(3) - 2.0 * s * s + s;
        let h01 = -2.0 * s.powi(3) + 3.0 * s * s;
        let h11 = s.powi(3) - s * s;
        let d00 = 6.0 * s * s - 6.0 * s;
        let d10 = 3.0 * s * s - 4.0 * s + 1.0;
        let d01 = -6.0 * s * s + 6.0 * s;
        let d11 = 3.0 * s * s - 2.0 * s;
        let n = p0.len();
        let mut x = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            x[i] = h00 * p0[i] + h10 * h * m0[i] + h01 * p1[i] + h11 * h * m1[i];
            v[i] = (d00 * p0[i] + d01 * p1[i]) / h + d10 * m0[i] + d11 * m1[i];
        }
        Ok((x, v))
    }
}

/// `t ↦ (x^1(t), ..., x^n(t))` from expressions in the named symbol `t`.
#[derive(Debug, Clone)]
pub struct ParametricCurve {
    components: Vec<Expression>,
    derivatives: Vec<Expression>,
    start: f64,
    end: f64,
    pieces: usize,
}

impl ParametricCurve {
    pub fn new(components: Vec<Expression>, start: f64, end: f64) -> Result<Self> {
        let t = Symbol::named("t");
        for c in &components {
            if let Some(s) = c.symbols().into_iter().find(|s| *s != t) {
                return Err(Error::InvalidModel(format!(
                    "curve component refers to `{s}`; only `t` is allowed"
                )));
            }
        }
        if !(end > start) {
            return Err(Error::Precondition(format!("curve interval [{start}, {end}] is empty")));
        }
        Ok(Self {
            derivatives: components.iter().map(|c| c.differentiate(&t)).collect(),
            components,
            start,
            end,
            pieces: 16,
        })
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Expression] {
        &self.components
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.start, self.end)
    }
}

impl Serialize for ParametricCurve {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("ParametricCurve", 3)?;
        s.serialize_field("components", &self.components)?;
        s.serialize_field("start", &self.start)?;
        s.serialize_field("end", &self.end)?;
        s.end()
    }
}

impl Curve for ParametricCurve {
    fn breakpoints(&self) -> Vec<f64> {
        let p = self.pieces;
        (0..=p)
            .map(|k| {
                if k == p {
                    self.end
                } else {
                    self.start + (self.end - self.start) * k as f64 / p as f64
                }
            })
            .collect()
    }

    fn eval(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let b = Bindings::new().with("t", t);
        let x = self
            .components
            .iter()
            .map(|c| c.evaluate(&b))
            .collect::<Result<Vec<_>, _>>()?;
        let v = self
            .derivatives
            .iter()
            .map(|c| c.evaluate(&b))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((x, v))
    }
}

/// Result of transporting a vector along a curve.
#[derive(Debug, Clone, Serialize)]
pub struct TransportRecord {
    pub times: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `F(γ(t), X(t))` at each breakpoint.
    pub norms: Vec<f64>,
}

impl TransportRecord {
    pub fn end_vector(&self) -> &[f64] {
        self.vectors.last().expect("at least one sample")
    }

    /// `max_t |F(X(t)) − F(X(0))| / F(X(0))`.
    pub fn norm_drift(&self) -> f64 {
        let f0 = self.norms[0];
        self.norms.iter().fold(0.0_f64, |m, f| m.max((f - f0).abs())) / f0
    }
}

fn transport_options() -> OdeOptions {
    OdeOptions::default()
}

/// Transport `k` vectors at once; the state is `k·n` numbers. The observer
/// receives the state at every breakpoint.
fn transport_state(
    connection: &ConnectionField,
    curve: &dyn Curve,
    initial: Vec<f64>,
    mut at_breakpoint: impl FnMut(f64, &[f64], &[f64]) -> Result<()>,
) -> Result<Vec<f64>> {
    let n = connection.dim();
    let k = initial.len() / n;
    let grid = curve.breakpoints();
    if grid.len() < 2 {
        return Err(Error::Precondition("curve needs at least two breakpoints".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Precondition("curve grid is not strictly increasing".into()));
    }
    let mut state = initial;
    let (x0, _) = curve.eval(grid[0])?;
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: x0.len(),
        });
    }
    at_breakpoint(grid[0], &x0, &state)?;
    let options = transport_options();
    for w in grid.windows(2) {
        let (a, b) = (w[0], w[1]);
        let opts = OdeOptions {
            initial_step: Some(b - a),
            ..options
        };
        let (_, y, _) = integrate(
            |t, y, dy| {
                let (x, v) = curve.eval(t)?;
                let gamma = connection.coefficients(&x, &v)?;
                for c in 0..k {
                    let xv = &y[c * n..(c + 1) * n];
                    let d = gamma.contract(&v, xv);
                    for i in 0..n {
                        dy[c * n + i] = -d[i];
                    }
                }
                Ok(())
            },
            a,
            &state,
            b,
            &opts,
            |_, _, _| Control::Continue,
        )?;
        state = y;
        let (x, _) = curve.eval(b)?;
        at_breakpoint(b, &x, &state)?;
    }
    Ok(state)
}

/// Solve `Ẋ^i + Γ^i_jk(γ, γ̇) γ̇^j X^k = 0` along `curve`.
pub fn parallel_transport(connection: &ConnectionField, curve: &dyn Curve, x0: &[f64]) -> Result<TransportRecord> {
    let n = connection.dim();
    if x0.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: x0.len(),
        });
    }
    let model = connection.model();
    let mut record = TransportRecord {
        times: Vec::new(),
        vectors: Vec::new(),
        norms: Vec::new(),
    };
    transport_state(connection, curve, x0.to_vec(), |t, x, y| {
        record.times.push(t);
        record.vectors.push(y.to_vec());
        record.norms.push(model.norm_at(x, y)?);
        Ok(())
    })?;
    Ok(record)
}

/// Transport of the coordinate frame: column `j` is the image of `e_j`.
pub fn transport_matrix(connection: &ConnectionField, curve: &dyn Curve) -> Result<Matrix> {
    let n = connection.dim();
    let mut frame = vec![0.0; n * n];
    for j in 0..n {
        frame[j * n + j] = 1.0;
    }
    let end = transport_state(connection, curve, frame, |_, _, _| Ok(()))?;
    Ok(Matrix::from_column_slice(n, n, &end))
}
