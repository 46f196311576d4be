use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::FinslerModel;
use crate::error::{Error, Result};
use crate::expr::Tape;
use crate::sampling::{stream, unit_vector};

/// Monte Carlo estimate of the Busemann–Hausdorff density
/// `σ_F(x) = vol(B_euclid) / vol{v : F(x, v) < 1}`.
#[derive(Debug, Clone, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub ball_volume: f64,
    pub ball_volume_std_error: f64,
    pub samples: u64,
    pub hits: u64,
    pub bounding_half_width: f64,
}

pub const DEFAULT_DENSITY_SAMPLES: u64 = 200_000;
const BLOCK: u64 = 8192;

pub fn euclidean_ball_volume(n: usize) -> f64 {
    match n {
        0 => 1.0,
        1 => 2.0,
        _ => 2.0 * std::f64::consts::PI / n as f64 * euclidean_ball_volume(n - 2),
    }
}

pub fn bh_density(model: &FinslerModel, x: &[f64], samples: u64, seed: u64) -> Result<DensityEstimate> {
    let n = model.dim();
    if x.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: x.len(),
        });
    }
    if samples == 0 {
        return Err(Error::Precondition("at least one sample required".into()));
    }
    let tape = Tape::compile(&[model.norm_expression().clone()], n)?;
    let norm = |v: &[f64]| -> Result<f64> { tape.eval(x, v).map(|o| o[0]).map_err(|e| Error::eval_at(e, x, v)) };

    // radius of the unit ball from a direction sweep, with margin
    let mut max_radius = 0.0_f64;
    let mut rng = stream(seed, u64::MAX);
    let mut directions: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut e = vec![0.0; n];
            e[i] = sign;
            directions.push(e);
        }
    }
    directions.extend((0..4096).map(|_| unit_vector(&mut rng, n)));
    for u in &directions {
        let f = norm(u)?;
        if !(f > 0.0) || !f.is_finite() {
            return Err(Error::Degenerate(format!(
                "norm is not positive in direction {u:?}: unit ball unbounded"
            )));
        }
        max_radius = max_radius.max(1.0 / f);
    }
    let half = 1.25 * max_radius;

    let blocks = samples.div_ceil(BLOCK);
    let counts: Vec<Result<(u64, bool)>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream(seed, b);
            let count = BLOCK.min(samples - b * BLOCK);
            let mut hits = 0;
            let mut touches_shell = false;
            let mut p = vec![0.0; n];
            for _ in 0..count {
                for c in p.iter_mut() {
                    *c = half * (2.0 * rng.random::<f64>() - 1.0);
                }
                if norm(&p)? < 1.0 {
                    hits += 1;
                    if p.iter().any(|c| c.abs() > 0.995 * half) {
                        touches_shell = true;
                    }
                }
            }
            Ok((hits, touches_shell))
        })
        .collect();
    let mut hits = 0;
    for c in counts {
        let (h, shell) = c?;
        if shell {
            return Err(Error::Degenerate(
                "unit ball reaches the bounding box; norm may be unbounded below".into(),
            ));
        }
        hits += h;
    }
    if hits == 0 {
        return Err(Error::Degenerate("unit ball volume estimate is zero".into()));
    }
    let box_volume = (2.0 * half).powi(n as i32);
    let p = hits as f64 / samples as f64;
    let ball_volume = p * box_volume;
    let ball_volume_std_error = box_volume * (p * (1.0 - p) / samples as f64).sqrt();
    let value = euclidean_ball_volume(n) / ball_volume;
    Ok(DensityEstimate {
        value,
        std_error: value * ball_volume_std_error / ball_volume,
        ball_volume,
        ball_volume_std_error,
        samples,
        hits,
        bounding_half_width: half,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::gallery;
    use crate::norms::ChartBox;

    #[test]
    fn ball_volumes() {
        assert!((euclidean_ball_volume(2) - std::f64::consts::PI).abs() < 1e-15);
        assert!((euclidean_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn euclidean_density_is_one() {
        let d = bh_density(&gallery::euclidean(2), &[0.0, 0.0], 100_000, 3).unwrap();
        assert!((d.value - 1.0).abs() < 4.0 * d.std_error, "{d:?}");
    }

    #[test]
    fn scaled_norm_density() {
        let m = FinslerModel::minkowski(
            parse_expression("2 * sqrt(v1^2 + v2^2)", 2).unwrap(),
            ChartBox::cube(2, -1.0, 1.0),
        )
        .unwrap();
        let d = bh_density(&m, &[0.0, 0.0], 100_000, 5).unwrap();
        assert!((d.value - 4.0).abs() < 4.0 * d.std_error, "{d:?}");
    }

    #[test]
    fn reproducible() {
        let m = gallery::quartic_minkowski();
        let a = bh_density(&m, &[0.0, 0.0], 20_000, 9).unwrap();
        let b = bh_density(&m, &[0.0, 0.0], 20_000, 9).unwrap();
        assert_eq!(a.hits, b.hits);
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }
}
