//! Discrete-time comparison methods: per-window spectral embeddings chained
//! by Procrustes alignment, and a single embedding of the averaged counts.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;

use crate::error::{IppError, Result};
use crate::events::EventLog;
use crate::intensity::{bin_index, bin_midpoint, SparseSlice};
use crate::reduce::procrustes;
use crate::subspace::{apply_sign_convention, CsrMatrix};
use crate::trajectory::{Sample, Trajectory};

/// Event counts in `M` equal windows partitioning `(0, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSequence {
    n: usize,
    horizon: f64,
    matrices: Vec<CsrMatrix>,
}

impl SnapshotSequence {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn windows(&self) -> usize {
        self.matrices.len()
    }

    pub fn matrices(&self) -> &[CsrMatrix] {
        &self.matrices
    }

    /// `(start, end]` of window `k`.
    pub fn boundaries(&self, k: usize) -> (f64, f64) {
        let w = self.horizon / self.windows() as f64;
        (k as f64 * w, (k + 1) as f64 * w)
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.windows())
            .map(|k| bin_midpoint(k, self.windows(), self.horizon))
            .collect()
    }

    pub fn total(&self) -> DMatrix<f64> {
        let mut total = DMatrix::zeros(self.n, self.n);
        for m in &self.matrices {
            total += m.to_dense();
        }
        total
    }
}

pub fn snapshots(log: &EventLog, windows: usize) -> Result<SnapshotSequence> {
    if windows == 0 {
        return Err(IppError::InvalidParameter(
            "window count must be at least 1".into(),
        ));
    }
    let horizon = log.horizon();
    let mut entries: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); windows];
    for (i, j, times) in log.pairs() {
        let mut counts = vec![0usize; windows];
        for &t in times {
            counts[bin_index(t, windows, horizon)] += 1;
        }
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                entries[k].push((i, j, c as f64));
            }
        }
    }
    let matrices = entries
        .into_iter()
        .enumerate()
        .map(|(k, e)| {
            let slice = SparseSlice::from_upper(bin_midpoint(k, windows, horizon), log.n(), e)?;
            Ok(CsrMatrix::from_slice(&slice))
        })
        .collect::<Result<_>>()?;
    Ok(SnapshotSequence {
        n: log.n(),
        horizon,
        matrices,
    })
}

/// Adjacency spectral embedding `U |S|^{1/2}` of a symmetric matrix, using the
/// `d` eigenpairs of largest magnitude.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    pub positions: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    pub warnings: Vec<String>,
}

pub fn spectral_embedding(a: &DMatrix<f64>, d: usize) -> Result<SpectralEmbedding> {
    let n = a.nrows();
    if d == 0 || d >= n {
        return Err(IppError::InvalidParameter(format!(
            "embedding dimension {d} must be in 1..{n}"
        )));
    }
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        eig.eigenvalues[y]
            .abs()
            .total_cmp(&eig.eigenvalues[x].abs())
            .then(x.cmp(&y))
    });
    let mut u = DMatrix::zeros(n, d);
    for (c, &idx) in order.iter().take(d).enumerate() {
        u.set_column(c, &eig.eigenvectors.column(idx));
    }
    apply_sign_convention(&mut u);
    let eigenvalues: Vec<f64> = order.iter().take(d).map(|&i| eig.eigenvalues[i]).collect();
    let top = eigenvalues[0].abs();
    let tol = n as f64 * f64::EPSILON * top;
    let mut warnings = Vec::new();
    // rows are computed as A_i U, so identical rows of A give identical positions
    let mut positions = a * &u;
    for (c, &lambda) in eigenvalues.iter().enumerate() {
        if top == 0.0 || lambda.abs() <= tol {
            positions.column_mut(c).fill(0.0);
            warnings.push(format!(
                "rank deficient: dimension {} padded with zeros",
                c + 1
            ));
        } else {
            positions
                .column_mut(c)
                .scale_mut(lambda.signum() / lambda.abs().sqrt());
        }
    }
    Ok(SpectralEmbedding {
        positions,
        eigenvalues,
        warnings,
    })
}

/// Positions anchored at window midpoints, linearly interpolated between
/// anchors and held constant beyond the first and last.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedEmbedding {
    pub anchors: Vec<f64>,
    pub positions: Vec<DMatrix<f64>>,
    pub warnings: Vec<String>,
}

impl WindowedEmbedding {
    pub fn n(&self) -> usize {
        self.positions[0].nrows()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].ncols()
    }

    pub fn at(&self, t: f64) -> DMatrix<f64> {
        let k = self.anchors.partition_point(|&a| a <= t);
        if k == 0 {
            return self.positions[0].clone();
        }
        if k == self.anchors.len() {
            return self.positions[k - 1].clone();
        }
        let (a0, a1) = (self.anchors[k - 1], self.anchors[k]);
        let w = (t - a0) / (a1 - a0);
        &self.positions[k - 1] * (1.0 - w) + &self.positions[k] * w
    }

    pub fn trajectory(&self, node: usize, times: &[f64]) -> Result<Trajectory> {
        if node >= self.n() {
            return Err(IppError::InvalidQuery(format!(
                "unknown node {node} (n = {})",
                self.n()
            )));
        }
        Ok(Trajectory {
            node,
            samples: times
                .iter()
                .map(|&t| Sample {
                    t,
                    x: self.at(t).row(node).iter().copied().collect(),
                })
                .collect(),
        })
    }
}

pub fn aligned_embedding(snaps: &SnapshotSequence, d: usize) -> Result<WindowedEmbedding> {
    let embeddings: Vec<SpectralEmbedding> = snaps
        .matrices
        .par_iter()
        .map(|m| spectral_embedding(&m.to_dense(), d))
        .collect::<Result<_>>()?;
    let mut warnings = Vec::new();
    let mut positions: Vec<DMatrix<f64>> = Vec::with_capacity(embeddings.len());
    for (k, emb) in embeddings.into_iter().enumerate() {
        warnings.extend(
            emb.warnings
                .into_iter()
                .map(|w| format!("window {}: {w}", k + 1)),
        );
        let aligned = match positions.last() {
            Some(prev) => {
                let p = procrustes(&emb.positions, prev)?;
                if p.degenerate {
                    warnings.push(format!(
                        "window {}: alignment degenerate, identity used",
                        k + 1
                    ));
                }
                emb.positions * p.rotation
            }
            None => emb.positions,
        };
        positions.push(aligned);
    }
    Ok(WindowedEmbedding {
        anchors: snaps.midpoints(),
        positions,
        warnings,
    })
}

pub fn averaged_embedding(snaps: &SnapshotSequence, d: usize) -> Result<WindowedEmbedding> {
    let mean = snaps.total() / snaps.windows() as f64;
    let emb = spectral_embedding(&mean, d)?;
    Ok(WindowedEmbedding {
        anchors: vec![snaps.horizon / 2.0],
        positions: vec![emb.positions],
        warnings: emb.warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    fn log() -> EventLog {
        let events = vec![
            Event::new(0, 1, 0.1),
            Event::new(0, 1, 0.3),
            Event::new(1, 2, 0.5),
            Event::new(0, 2, 0.5),
            Event::new(2, 3, 0.9),
            Event::new(0, 1, 1.0),
        ];
        EventLog::new(4, 1.0, events).unwrap()
    }

    #[test]
    fn windows_partition_counts() {
        let log = log();
        let one = snapshots(&log, 1).unwrap();
        let total = one.total();
        assert_eq!(total[(0, 1)], 3.0);
        assert_eq!(total[(1, 0)], 3.0);
        for m in [2, 3, 7] {
            assert_eq!(snapshots(&log, m).unwrap().total(), total);
        }
        let two = snapshots(&log, 2).unwrap();
        // 0.5 belongs to the first window
        assert_eq!(two.matrices()[0].to_dense()[(1, 2)], 1.0);
        assert_eq!(two.boundaries(1), (0.5, 1.0));
        assert!(snapshots(&log, 0).is_err());
    }

    #[test]
    fn rank_one_embedding() {
        let u = [0.5, 0.5, 0.5, 0.5];
        let sigma = 6.0;
        let a = DMatrix::from_fn(4, 4, |i, j| sigma * u[i] * u[j]);
        let emb = spectral_embedding(&a, 1).unwrap();
        for i in 0..4 {
            assert!((emb.positions[(i, 0)] - sigma.sqrt() * u[i]).abs() < 1e-12);
        }
        let emb2 = spectral_embedding(&a, 2).unwrap();
        assert_eq!(emb2.warnings.len(), 1);
        assert!(emb2.positions.column(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn twins_get_identical_positions() {
        // nodes 0 and 1 have identical rows
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[
                0., 0., 2., 1., 0., 0., 2., 1., 2., 2., 0., 3., 1., 1., 3., 0.,
            ],
        );
        let emb = spectral_embedding(&a, 2).unwrap();
        assert_eq!(emb.positions.row(0), emb.positions.row(1));
    }

    #[test]
    fn scaling_counts_scales_positions() {
        let a = DMatrix::from_row_slice(3, 3, &[0., 2., 1., 2., 0., 3., 1., 3., 0.]);
        let e1 = spectral_embedding(&a, 2).unwrap();
        let e4 = spectral_embedding(&(&a * 4.0), 2).unwrap();
        assert!((e4.positions - e1.positions * 2.0).norm() < 1e-12);
    }

    #[test]
    fn identical_windows_align_to_same_positions() {
        let mut events = Vec::new();
        for w in 0..4 {
            let base = w as f64 * 0.25;
            for (i, j, k) in [(0, 1, 3), (1, 2, 1), (0, 3, 2), (2, 4, 4), (3, 4, 1)] {
                for r in 0..k {
                    events.push(Event::new(i, j, base + 0.01 + 0.01 * r as f64));
                }
            }
        }
        let log = EventLog::new(5, 1.0, events).unwrap();
        let emb = aligned_embedding(&snapshots(&log, 4).unwrap(), 2).unwrap();
        for p in &emb.positions[1..] {
            assert!((p - &emb.positions[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_between_anchors() {
        let emb = WindowedEmbedding {
            anchors: vec![0.25, 0.75],
            positions: vec![
                DMatrix::from_element(1, 1, 0.0),
                DMatrix::from_element(1, 1, 2.0),
            ],
            warnings: vec![],
        };
        assert_eq!(emb.at(0.1)[(0, 0)], 0.0);
        assert_eq!(emb.at(0.5)[(0, 0)], 1.0);
        assert_eq!(emb.at(1.0)[(0, 0)], 2.0);
        let traj = emb.trajectory(0, &[0.25, 0.625]).unwrap();
        assert_eq!(traj.samples[1].x, vec![1.5]);
    }

    #[test]
    fn averaged_is_constant() {
        let snaps = snapshots(&log(), 3).unwrap();
        let emb = averaged_embedding(&snaps, 2).unwrap();
        assert_eq!(emb.at(0.01), emb.at(0.99));
        let one = averaged_embedding(&snapshots(&log(), 1).unwrap(), 2).unwrap();
        let direct = spectral_embedding(&snapshots(&log(), 1).unwrap().total(), 2).unwrap();
        assert_eq!(one.positions[0], direct.positions);
    }
}
