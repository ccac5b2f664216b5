//! Dimension reduction and alignment of trajectory point clouds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::subspace::apply_sign_convention;
use crate::trajectory::Trajectory;

/// Affine map `x -> (x - mean) W` from `d` to `k` coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearProjector {
    pub mean: Vec<f64>,
    /// `d x k`, orthonormal columns.
    pub directions: DMatrix<f64>,
    /// Variance captured by each direction, in decreasing order.
    pub variances: Vec<f64>,
}

impl LinearProjector {
    pub fn input_dim(&self) -> usize {
        self.directions.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.directions.ncols()
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(IppError::ShapeMismatch(format!(
                "point has dimension {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok((0..self.output_dim())
            .map(|c| {
                x.iter()
                    .zip(&self.mean)
                    .enumerate()
                    .map(|(r, (v, m))| (v - m) * self.directions[(r, c)])
                    .sum()
            })
            .collect())
    }

    pub fn project_trajectory(&self, traj: &Trajectory) -> Result<Trajectory> {
        let samples = traj
            .samples
            .iter()
            .map(|s| {
                Ok(crate::trajectory::Sample {
                    t: s.t,
                    x: self.project(&s.x)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Trajectory {
            node: traj.node,
            samples,
        })
    }
}

/// PCA over every (node, time) point. One projector is shared by all times,
/// so reduced trajectories stay comparable across time.
pub fn dynamic_pca(trajectories: &[Trajectory], k: usize) -> Result<LinearProjector> {
    let points: Vec<&[f64]> = trajectories
        .iter()
        .flat_map(|t| t.samples.iter().map(|s| s.x.as_slice()))
        .collect();
    pca_points(&points, k)
}

pub fn pca_points(points: &[&[f64]], k: usize) -> Result<LinearProjector> {
    let Some(first) = points.first() else {
        return Err(IppError::InvalidData("no points to reduce".into()));
    };
    let d = first.len();
    if points.iter().any(|p| p.len() != d) {
        return Err(IppError::ShapeMismatch(
            "points have differing dimensions".into(),
        ));
    }
    if k == 0 || k > d {
        return Err(IppError::InvalidParameter(format!(
            "target dimension {k} must be in 1..={d}"
        )));
    }
    let count = points.len() as f64;
    let mut mean = DVector::zeros(d);
    for p in points {
        mean += DVector::from_column_slice(p);
    }
    mean /= count;
    let mut cov = DMatrix::zeros(d, d);
    for p in points {
        let c = DVector::from_column_slice(p) - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= count;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut directions = DMatrix::zeros(d, k);
    for (c, &idx) in order.iter().take(k).enumerate() {
        directions.set_column(c, &eig.eigenvectors.column(idx));
    }
    apply_sign_convention(&mut directions);
    Ok(LinearProjector {
        mean: mean.iter().copied().collect(),
        directions,
        variances: order
            .iter()
            .take(k)
            .map(|&i| eig.eigenvalues[i].max(0.0))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Procrustes {
    /// Orthogonal `d x d` matrix minimizing `|A W - B|_F`.
    pub rotation: DMatrix<f64>,
    pub residual: f64,
    /// `A^T B` vanished; `rotation` is the identity.
    pub degenerate: bool,
}

/// Orthogonal Procrustes: the `W` minimizing `|A W - B|_F` is `P Q^T`
/// where `A^T B = P S Q^T`.
pub fn procrustes(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<Procrustes> {
    if a.shape() != b.shape() {
        return Err(IppError::ShapeMismatch(format!(
            "{:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let d = a.ncols();
    if a == b {
        return Ok(Procrustes {
            rotation: DMatrix::identity(d, d),
            residual: 0.0,
            degenerate: false,
        });
    }
    let cross = a.transpose() * b;
    let scale = a.norm() * b.norm();
    let (rotation, degenerate) = if cross.norm() <= f64::EPSILON * scale || scale == 0.0 {
        (DMatrix::identity(d, d), true)
    } else {
        let svd = cross.svd(true, true);
        let p = svd
            .u
            .ok_or_else(|| IppError::InvalidData("SVD failed".into()))?;
        let qt = svd
            .v_t
            .ok_or_else(|| IppError::InvalidData("SVD failed".into()))?;
        (p * qt, false)
    };
    let residual = (a * &rotation - b).norm();
    Ok(Procrustes {
        rotation,
        residual,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Sample;

    fn rotation2(theta: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()])
    }

    #[test]
    fn procrustes_recovers_rotation() {
        let a = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 2.0, -1.0, 0.5, 0.3, -0.7]);
        let r = rotation2(0.8);
        let b = &a * &r;
        let p = procrustes(&a, &b).unwrap();
        assert!((p.rotation - r).norm() < 1e-12);
        assert!(p.residual < 1e-12);
        assert!(!p.degenerate);
    }

    #[test]
    fn procrustes_handles_reflection() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 2.0, 1.0, 1.0]);
        let r = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let p = procrustes(&a, &(&a * &r)).unwrap();
        assert!((p.rotation - r).norm() < 1e-12);
    }

    #[test]
    fn procrustes_degenerate_is_identity() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let p = procrustes(&a, &b).unwrap();
        assert!(p.degenerate);
        assert_eq!(p.rotation, DMatrix::identity(2, 2));
    }

    #[test]
    fn pca_finds_dominant_axis() {
        let traj = Trajectory {
            node: 0,
            samples: (0..20)
                .map(|k| {
                    let s = k as f64 - 9.5;
                    Sample {
                        t: k as f64 + 1.0,
                        x: vec![1.0 + s, 2.0 - s, 0.01 * (k % 2) as f64],
                    }
                })
                .collect(),
        };
        let proj = dynamic_pca(std::slice::from_ref(&traj), 1).unwrap();
        let dir = proj.directions.column(0);
        let expected = 1.0 / 2f64.sqrt();
        assert!((dir[0].abs() - expected).abs() < 1e-6);
        assert!((dir[1].abs() - expected).abs() < 1e-6);
        assert!((proj.mean[0] - 1.0).abs() < 1e-12);
        let reduced = proj.project_trajectory(&traj).unwrap();
        assert_eq!(reduced.dim(), 1);
        let total: f64 = reduced.samples.iter().map(|s| s.x[0]).sum();
        assert!(total.abs() < 1e-9);
    }

    #[test]
    fn pca_rejects_bad_target() {
        let pts: Vec<&[f64]> = vec![&[1.0, 2.0]];
        assert!(pca_points(&pts, 3).is_err());
        assert!(pca_points(&[], 1).is_err());
    }
}
