//! Dormand–Prince 5(4) with adaptive step control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub initial_step: Option<f64>,
    pub max_step: f64,
    pub min_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: None,
            max_step: f64::INFINITY,
            min_step: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct OdeStats {
    pub steps: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// Largest accepted scaled local error estimate (≤ 1 by construction).
    pub max_error_estimate: f64,
}

/// What the observer wants after an accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn error_norm(err: &[f64], y0: &[f64], y1: &[f64], o: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = err
        .iter()
        .zip(y0.iter().zip(y1))
        .map(|(e, (a, b))| {
            let sc = o.atol + o.rtol * a.abs().max(b.abs());
            (e / sc).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (`t1 > t0`). The observer sees
/// `(t, y, y')` at `t0` and after every accepted step and may stop early.
pub fn integrate<F, O>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    options: &OdeOptions,
    mut observe: O,
) -> Result<(f64, Vec<f64>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    O: FnMut(f64, &[f64], &[f64]) -> Control,
{
    if !(t1 > t0) {
        return Err(Error::Precondition(format!(
            "integration interval [{t0}, {t1}] is empty"
        )));
    }
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    f(t, &y, &mut k[0])?;
    stats.evaluations += 1;
    if observe(t, &y, &k[0]) == Control::Stop {
        return Ok((t, y, stats));
    }

    let span = t1 - t0;
    let mut h = match options.initial_step {
        Some(h) => h,
        None => {
            let d0 = error_norm(&y, &y, &y, options).max(1e-5);
            let d1 = error_norm(&k[0], &y, &y, options);
            let h0 = if d1 <= 1e-5 {
                1e-6 * span.max(1.0)
            } else {
                0.01 * d0 / d1
            };
            h0.min(span)
        }
    }
    .min(options.max_step);
    let mut stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];

    while t < t1 {
        if stats.steps + stats.rejected >= options.max_steps {
            return Err(Error::Integration(format!("step budget exhausted at t = {t}")));
        }
        let last = t + h >= t1 - 1e-14 * span;
        if last {
            h = t1 - t;
        }
        let mut failed = None;
        for s in 1..7 {
            for i in 0..n {
                let mut acc = y[i];
                for (r, kr) in k.iter().enumerate().take(s) {
                    acc += h * A[s][r] * kr[i];
                }
                stage[i] = acc;
            }
            if let Err(e) = f(t + C[s] * h, &stage, &mut k[s]) {
                failed = Some(e);
                break;
            }
            stats.evaluations += 1;
        }
        let ratio = if let Some(e) = failed {
            // evaluation failure inside a trial step: shrink and retry
            if h * 0.25 < options.min_step {
                return Err(e);
            }
            f64::INFINITY
        } else {
            y_new.copy_from_slice(&stage);
            for i in 0..n {
                err[i] = h * (0..7).map(|s| E[s] * k[s][i]).sum::<f64>();
            }
            error_norm(&err, &y, &y_new, options)
        };

        if ratio <= 1.0 {
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            k.swap(0, 6);
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(ratio);
            if observe(t, &y, &k[0]) == Control::Stop {
                return Ok((t, y, stats));
            }
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = (h * factor).min(options.max_step);
        } else {
            stats.rejected += 1;
            let factor = if ratio.is_finite() {
                (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= factor;
            if h < options.min_step {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Ok((t, y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let (t, y, stats) = integrate(
            |_, y, dy| {
                dy[0] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            2.0,
            &OdeOptions::default(),
            |_, _, _| Control::Continue,
        )
        .unwrap();
        assert_eq!(t, 2.0);
        assert!((y[0] - (-2.0_f64).exp()).abs() < 1e-11);
        assert!(stats.steps > 5);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let (_, y, _) = integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
                Ok(())
            },
            0.0,
            &[1.0, 0.0],
            2.0 * std::f64::consts::PI,
            &OdeOptions::default(),
            |_, _, _| Control::Continue,
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9);
    }

    #[test]
    fn observer_stops() {
        let mut seen = 0;
        let (t, _, _) = integrate(
            |_, _, dy| {
                dy[0] = 1.0;
                Ok(())
            },
            0.0,
            &[0.0],
            10.0,
            &OdeOptions {
                max_step: 0.5,
                ..Default::default()
            },
            |t, _, _| {
                seen += 1;
                if t >= 2.0 {
                    Control::Stop
                } else {
                    Control::Continue
                }
            },
        )
        .unwrap();
        assert!((2.0..10.0).contains(&t));
        assert!(seen >= 2);
    }

    #[test]
    fn blowup_underflows() {
        let r = integrate(
            |_, y, dy| {
                dy[0] = y[0] * y[0];
                Ok(())
            },
            0.0,
            &[1.0],
            2.0,
            &OdeOptions::default(),
            |_, _, _| Control::Continue,
        );
        assert!(r.is_err());
    }
}
