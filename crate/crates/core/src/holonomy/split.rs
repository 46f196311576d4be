use serde::Serialize;

use super::{HolonomyBundle, SzaboMetric};
use crate::error::{Error, Result};
use crate::linalg::{serialize_rows, sqrt_and_inverse, Matrix, Vector};
use crate::sampling::{gaussian_vector, stream};

pub const MIN_SPLIT_SAMPLES: usize = 10;
/// Restricted holonomy within this of the identity marks a flat subspace.
pub const FLAT_TOLERANCE: f64 = 1e-6;
/// Singular values below this fraction of the largest span the commutant.
const NULL_TOLERANCE: f64 = 1e-6;
/// Singular values between the two thresholds make the commutant ambiguous.
const GAP_TOLERANCE: f64 = 1e-4;
/// Eigenvalues of a unit-norm commutant element closer than this coincide.
const CLUSTER_TOLERANCE: f64 = 1e-5;
const COMBINATIONS: usize = 8;

#[derive(Debug, Clone, Serialize)]
pub struct Subspace {
    pub dim: usize,
    /// Columns orthonormal with respect to the averaged metric.
    #[serde(serialize_with = "serialize_rows")]
    pub basis: Matrix,
    pub flat: bool,
    /// `max |U^T h P U − I|` over the bundle.
    pub holonomy_defect: f64,
    pub eigenvalue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SplitResult {
    pub base: Vec<f64>,
    #[serde(serialize_with = "serialize_rows")]
    pub metric: Matrix,
    pub samples: usize,
    pub seed: u64,
    /// Flat subspaces first, then by dimension.
    pub subspaces: Vec<Subspace>,
    pub commutant_dimension: usize,
    /// Normalized singular values of the commutation system, largest first.
    pub singular_values: Vec<f64>,
    /// Largest over smallest nonzero singular value.
    pub condition: f64,
    /// `max ‖AP − PA‖` for the unit-norm commutant element used.
    pub residual: f64,
    /// Largest coupling between different subspaces in any element.
    pub block_defect: f64,
}

impl SplitResult {
    pub fn dimensions(&self) -> Vec<usize> {
        self.subspaces.iter().map(|s| s.dim).collect()
    }

    /// Dimension of the maximal flat factor.
    pub fn flat_dimension(&self) -> usize {
        self.subspaces.iter().filter(|s| s.flat).map(|s| s.dim).sum()
    }

    pub fn is_irreducible(&self) -> bool {
        self.subspaces.len() == 1
    }

    /// All bases side by side.
    pub fn basis_matrix(&self) -> Matrix {
        let n = self.base.len();
        let mut m = Matrix::zeros(n, n);
        let mut col = 0;
        for s in &self.subspaces {
            m.columns_mut(col, s.dim).copy_from(&s.basis);
            col += s.dim;
        }
        m
    }
}

/// Orthonormal basis of symmetric `n × n` matrices.
fn symmetric_basis(n: usize) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for i in 0..n {
        for j in i..n {
            let mut e = Matrix::zeros(n, n);
            if i == j {
                e[(i, i)] = 1.0;
            } else {
                e[(i, j)] = r;
                e[(j, i)] = r;
            }
            out.push(e);
        }
    }
    out
}

struct Candidate {
    clusters: Vec<(f64, Matrix)>,
    min_gap: f64,
    element: Matrix,
}

fn cluster(a: &Matrix) -> Candidate {
    let n = a.nrows();
    let eig = a.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut min_gap = f64::INFINITY;
    for (k, &i) in order.iter().enumerate() {
        if k > 0 {
            let gap = eig.eigenvalues[i] - eig.eigenvalues[order[k - 1]];
            if gap <= CLUSTER_TOLERANCE {
                groups.last_mut().expect("nonempty").push(i);
                continue;
            }
            min_gap = min_gap.min(gap);
        }
        groups.push(vec![i]);
    }
    let clusters = groups
        .into_iter()
        .map(|g| {
            let mean = g.iter().map(|&i| eig.eigenvalues[i]).sum::<f64>() / g.len() as f64;
            let cols: Vec<Vector> = g.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();
            (mean, Matrix::from_columns(&cols))
        })
        .collect();
    Candidate {
        clusters,
        min_gap,
        element: a.clone(),
    }
}

/// Split the tangent space at the bundle's base point using the averaged
/// metric at that point.
pub fn de_rham_split(bundle: &HolonomyBundle, metric: &SzaboMetric, seed: u64) -> Result<SplitResult> {
    let h = metric.metric_at(&bundle.base)?;
    de_rham_split_with(bundle, &h, seed)
}

/// Invariant subspaces of the sampled holonomy from the `h`-symmetric
/// commutant `{A : A P = P A}`.
///
/// Everything is done in `h`-orthonormal coordinates `B = h^{1/2} P h^{−1/2}`,
/// where `h`-symmetric operators become symmetric matrices.
pub fn de_rham_split_with(bundle: &HolonomyBundle, h: &Matrix, seed: u64) -> Result<SplitResult> {
    let n = bundle.dim();
    if bundle.len() < MIN_SPLIT_SAMPLES {
        return Err(Error::Precondition(format!(
            "splitting needs at least {MIN_SPLIT_SAMPLES} holonomy matrices, got {}",
            bundle.len()
        )));
    }
    if h.shape() != (n, n) {
        return Err(Error::Dimension {
            expected: n,
            found: h.nrows(),
        });
    }
    let (root, inv_root) = sqrt_and_inverse(h).ok_or_else(|| Error::Singular {
        what: "averaged metric",
        x: bundle.base.clone(),
    })?;
    let transformed: Vec<Matrix> = bundle.matrices().map(|p| &root * p * &inv_root).collect();

    // columns: vec(E B − B E) stacked over the samples, one per basis element E
    let basis = symmetric_basis(n);
    let mut system = Matrix::zeros(n * n * transformed.len(), basis.len());
    for (c, e) in basis.iter().enumerate() {
        let mut row = 0;
        for b in &transformed {
            let d = e * b - b * e;
            for v in d.iter() {
                system[(row, c)] = *v;
                row += 1;
            }
        }
    }
    let svd = system.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..basis.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let scale = svd.singular_values.max().max(1.0);
    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i] / scale).collect();
    if let Some(s) = singular_values
        .iter()
        .find(|s| **s > NULL_TOLERANCE && **s < GAP_TOLERANCE)
    {
        return Err(Error::IllConditioned { condition: 1.0 / s });
    }
    let smallest_nonzero = singular_values
        .iter()
        .cloned()
        .filter(|s| *s > NULL_TOLERANCE)
        .fold(f64::INFINITY, f64::min);
    let condition = if smallest_nonzero.is_finite() {
        singular_values[0] / smallest_nonzero
    } else {
        1.0
    };
    let commutant: Vec<Matrix> = order
        .iter()
        .zip(&singular_values)
        .filter(|(_, s)| **s <= NULL_TOLERANCE)
        .map(|(&i, _)| {
            let mut m = Matrix::zeros(n, n);
            for (c, e) in basis.iter().enumerate() {
                m += e * v_t[(i, c)];
            }
            m
        })
        .collect();
    if commutant.is_empty() {
        // the identity always commutes; reaching this means the samples are not a group
        return Err(Error::IllConditioned {
            condition: 1.0 / singular_values.last().copied().unwrap_or(1.0),
        });
    }

    let mut rng = stream(seed, 0xde_0001);
    let mut best: Option<Candidate> = None;
    for _ in 0..COMBINATIONS {
        let c = gaussian_vector(&mut rng, commutant.len());
        let mut a = Matrix::zeros(n, n);
        for (ci, m) in c.iter().zip(&commutant) {
            a += m * *ci;
        }
        let norm = a.norm();
        if norm == 0.0 {
            continue;
        }
        let cand = cluster(&(a / norm));
        let better = match &best {
            None => true,
            Some(b) => {
                cand.clusters.len() > b.clusters.len()
                    || (cand.clusters.len() == b.clusters.len() && cand.min_gap > b.min_gap)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    let best = best.ok_or_else(|| Error::Degenerate("commutant combinations vanished".into()))?;

    let residual = transformed
        .iter()
        .map(|b| (&best.element * b - b * &best.element).norm())
        .fold(0.0, f64::max);
    let mut block_defect = 0.0_f64;
    for (a, (_, ua)) in best.clusters.iter().enumerate() {
        for (b, (_, ub)) in best.clusters.iter().enumerate() {
            if a != b {
                for m in &transformed {
                    block_defect = block_defect.max((ua.transpose() * m * ub).abs().max());
                }
            }
        }
    }
    let mut subspaces: Vec<Subspace> = best
        .clusters
        .iter()
        .map(|(eigenvalue, u)| {
            let k = u.ncols();
            let identity = Matrix::identity(k, k);
            let holonomy_defect = transformed
                .iter()
                .map(|b| (u.transpose() * b * u - &identity).abs().max())
                .fold(0.0, f64::max);
            Subspace {
                dim: k,
                basis: &inv_root * u,
                flat: holonomy_defect <= FLAT_TOLERANCE,
                holonomy_defect,
                eigenvalue: *eigenvalue,
            }
        })
        .collect();
    subspaces.sort_by(|a, b| {
        b.flat
            .cmp(&a.flat)
            .then(a.dim.cmp(&b.dim))
            .then(a.eigenvalue.total_cmp(&b.eigenvalue))
    });
    Ok(SplitResult {
        base: bundle.base.clone(),
        metric: h.clone(),
        samples: bundle.len(),
        seed,
        subspaces,
        commutant_dimension: commutant.len(),
        singular_values,
        condition,
        residual,
        block_defect,
    })
}

fn orthonormal_columns(m: &Matrix) -> Matrix {
    m.clone().qr().q()
}

/// Principal angles between the column spans of `a` and `b`, ascending,
/// computed from sines for accuracy at small angles.
pub fn principal_angles(a: &Matrix, b: &Matrix) -> Result<Vec<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Dimension {
            expected: a.nrows(),
            found: b.nrows(),
        });
    }
    let (small, large) = if a.ncols() <= b.ncols() { (a, b) } else { (b, a) };
    let qa = orthonormal_columns(small);
    let qb = orthonormal_columns(large);
    let residual = &qa - &qb * (qb.transpose() * &qa);
    let mut angles: Vec<f64> = residual.singular_values().iter().map(|s| s.min(1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    Ok(angles)
}
