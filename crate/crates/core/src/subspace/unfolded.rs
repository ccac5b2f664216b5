use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{IppError, Result};
use crate::events::EventLog;
use crate::intensity::{slice_unchecked, EstimatorConfig, SparseSlice};

/// Compressed sparse row storage of a symmetric matrix (both triangles stored).
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_slice(slice: &SparseSlice) -> Self {
        let n = slice.n();
        let mut counts = vec![0usize; n + 1];
        for &(i, j, _) in slice.upper_entries() {
            counts[i + 1] += 1;
            counts[j + 1] += 1;
        }
        for k in 0..n {
            counts[k + 1] += counts[k];
        }
        let indptr = counts.clone();
        let mut cursor = counts;
        let nnz = indptr[n];
        let mut indices = vec![0; nnz];
        let mut values = vec![0.0; nnz];
        // upper entries are sorted by (i, j); emitting the lower triangle first keeps columns sorted
        for &(i, j, v) in slice.upper_entries() {
            let p = cursor[j];
            indices[p] = i;
            values[p] = v;
            cursor[j] += 1;
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in slice.upper_entries() {
            rows[i].push((j, v));
        }
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row {
                let p = cursor[i];
                indices[p] = j;
                values[p] = v;
                cursor[i] += 1;
            }
        }
        CsrMatrix {
            n,
            indptr,
            indices,
            values,
        }
    }

    /// Symmetric nonnegative dense matrix with zero diagonal; exact zeros are dropped.
    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(IppError::ShapeMismatch(format!(
                "block must be square, got {}x{}",
                n,
                m.ncols()
            )));
        }
        let mut entries = Vec::new();
        for i in 0..n {
            if m[(i, i)] != 0.0 {
                return Err(IppError::InvalidData(format!(
                    "block diagonal entry ({i}, {i}) is nonzero"
                )));
            }
            for j in (i + 1)..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(IppError::InvalidData(format!(
                        "block is not symmetric at ({i}, {j})"
                    )));
                }
                entries.push((i, j, m[(i, j)]));
            }
        }
        Ok(Self::from_slice(&SparseSlice::from_upper(0.0, n, entries)?))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.values[a..b].iter().copied())
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// `A V` for a dense `n x k` matrix `V`.
    pub fn mul_dense(&self, v: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, v.ncols());
        for i in 0..self.n {
            for (j, a) in self.row(i) {
                for c in 0..v.ncols() {
                    out[(i, c)] += a * v[(j, c)];
                }
            }
        }
        out
    }
}

/// Row concatenation `[Lambda(t_1) ... Lambda(t_B)]`, an `n x nB` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UnfoldedMatrix {
    n: usize,
    horizon: f64,
    grid: Vec<f64>,
    blocks: Vec<CsrMatrix>,
}

/// Midpoints `(b - 1/2) T / B` of `B` equal intervals of `(0, T]`.
pub fn midpoint_grid(slices: usize, horizon: f64) -> Vec<f64> {
    (0..slices)
        .map(|b| (b as f64 + 0.5) * horizon / slices as f64)
        .collect()
}

impl UnfoldedMatrix {
    /// Assembles an unfolded matrix from prebuilt blocks on an equally spaced grid.
    pub fn from_blocks(horizon: f64, grid: Vec<f64>, blocks: Vec<CsrMatrix>) -> Result<Self> {
        if blocks.is_empty() || grid.len() != blocks.len() {
            return Err(IppError::ShapeMismatch(format!(
                "{} grid points for {} blocks",
                grid.len(),
                blocks.len()
            )));
        }
        let n = blocks[0].n();
        if blocks.iter().any(|b| b.n() != n) {
            return Err(IppError::ShapeMismatch("blocks differ in dimension".into()));
        }
        if grid.iter().any(|&t| !(t > 0.0 && t <= horizon)) {
            return Err(IppError::InvalidData(
                "grid points must lie in (0, T]".into(),
            ));
        }
        if grid.len() > 1 {
            let step = (grid[grid.len() - 1] - grid[0]) / (grid.len() - 1) as f64;
            let equal = grid
                .windows(2)
                .all(|w| (w[1] - w[0] - step).abs() <= 1e-9 * horizon);
            if !(step > 0.0 && equal) {
                return Err(IppError::InvalidData(
                    "grid must be strictly increasing and equally spaced".into(),
                ));
            }
        }
        Ok(UnfoldedMatrix {
            n,
            horizon,
            grid,
            blocks,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn blocks(&self) -> &[CsrMatrix] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn ncols(&self) -> usize {
        self.n * self.blocks.len()
    }

    pub fn nnz(&self) -> usize {
        self.blocks.iter().map(CsrMatrix::nnz).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.nnz() == 0
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.blocks.iter().map(CsrMatrix::frobenius_sq).sum()
    }

    /// `y = A x` with `x` of length `nB`. Block products run in parallel and
    /// are summed in block order.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        let partials: Vec<Vec<f64>> = self
            .blocks
            .par_iter()
            .enumerate()
            .map(|(b, block)| {
                let mut out = vec![0.0; n];
                block.matvec(&x[b * n..(b + 1) * n], &mut out);
                out
            })
            .collect();
        y.iter_mut().for_each(|v| *v = 0.0);
        for p in partials {
            for (yi, pi) in y.iter_mut().zip(p) {
                *yi += pi;
            }
        }
    }

    /// `y = A^T u`; each block is symmetric, so block `b` of the result is `Lambda(t_b) u`.
    pub fn tmatvec(&self, u: &[f64], y: &mut [f64]) {
        let n = self.n;
        y.par_chunks_mut(n)
            .zip(self.blocks.par_iter())
            .for_each(|(out, block)| block.matvec(u, out));
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.ncols());
        for (b, block) in self.blocks.iter().enumerate() {
            m.view_mut((0, b * self.n), (self.n, self.n))
                .copy_from(&block.to_dense());
        }
        m
    }

    /// Dense `(1/B) sum_b Lambda(t_b)^2`. Small instances only.
    pub fn second_moment_dense(&self) -> DMatrix<f64> {
        let mut acc = DMatrix::zeros(self.n, self.n);
        for block in &self.blocks {
            let d = block.to_dense();
            acc += &d * &d;
        }
        acc / self.blocks.len() as f64
    }
}

/// Evaluates `B` slices of the estimated intensity on the midpoint grid.
pub fn build_unfolded(
    log: &EventLog,
    config: &EstimatorConfig,
    slices: usize,
) -> Result<UnfoldedMatrix> {
    config.validate()?;
    if slices == 0 {
        return Err(IppError::InvalidParameter("need at least one slice".into()));
    }
    let grid = midpoint_grid(slices, log.horizon());
    let blocks = grid
        .par_iter()
        .map(|&t| CsrMatrix::from_slice(&slice_unchecked(log, config, t)))
        .collect();
    Ok(UnfoldedMatrix {
        n: log.n(),
        horizon: log.horizon(),
        grid,
        blocks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;

    #[test]
    fn csr_roundtrips_slice() {
        let s =
            SparseSlice::from_upper(0.5, 4, vec![(0, 1, 1.0), (0, 3, 2.0), (2, 3, 5.0)]).unwrap();
        let csr = CsrMatrix::from_slice(&s);
        assert_eq!(csr.nnz(), 6);
        let dense = csr.to_dense();
        let expect = s.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(dense[(i, j)], expect[i][j]);
            }
        }
        for i in 0..4 {
            let cols: Vec<usize> = csr.row(i).map(|(j, _)| j).collect();
            assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
        let mut y = vec![0.0; 4];
        csr.matvec(&[1.0, 2.0, 3.0, 4.0], &mut y);
        assert_eq!(y, vec![2.0 + 8.0, 1.0, 20.0, 2.0 + 15.0]);
    }

    #[test]
    fn from_dense_rejects_asymmetry() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, 0.0]);
        assert!(CsrMatrix::from_dense(&m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 0.0]);
        assert!(CsrMatrix::from_dense(&m).is_err());
    }

    #[test]
    fn single_bin_is_total_count_over_horizon() {
        let log = EventLog::new(
            3,
            2.0,
            vec![
                Event::new(0, 1, 0.5),
                Event::new(0, 1, 1.5),
                Event::new(1, 2, 2.0),
            ],
        )
        .unwrap();
        let a = build_unfolded(&log, &EstimatorConfig::histogram(1), 1).unwrap();
        assert_eq!(a.grid(), &[1.0]);
        let d = a.to_dense();
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(1, 2)], 0.5);
        assert_eq!(d[(0, 2)], 0.0);
    }

    #[test]
    fn empty_log_gives_zero_matrix() {
        let log = EventLog::new(4, 1.0, vec![]).unwrap();
        let a = build_unfolded(&log, &EstimatorConfig::histogram(3), 3).unwrap();
        assert!(a.is_zero());
        assert_eq!(a.ncols(), 12);
    }

    #[test]
    fn matvecs_agree_with_dense() {
        let log = EventLog::new(
            4,
            1.0,
            vec![
                Event::new(0, 1, 0.1),
                Event::new(2, 1, 0.4),
                Event::new(0, 3, 0.45),
                Event::new(2, 3, 0.9),
            ],
        )
        .unwrap();
        let a = build_unfolded(&log, &EstimatorConfig::histogram(2), 2).unwrap();
        let dense = a.to_dense();
        let x: Vec<f64> = (0..8).map(|k| k as f64 - 3.5).collect();
        let mut y = vec![0.0; 4];
        a.matvec(&x, &mut y);
        let expect = &dense * nalgebra::DVector::from_column_slice(&x);
        for i in 0..4 {
            assert!((y[i] - expect[i]).abs() < 1e-12);
        }
        let u = [1.0, -2.0, 0.5, 3.0];
        let mut z = vec![0.0; 8];
        a.tmatvec(&u, &mut z);
        let expect = dense.transpose() * nalgebra::DVector::from_column_slice(&u);
        for k in 0..8 {
            assert!((z[k] - expect[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_validation() {
        let block = CsrMatrix::from_dense(&DMatrix::zeros(2, 2)).unwrap();
        assert!(
            UnfoldedMatrix::from_blocks(1.0, vec![0.2, 0.3, 0.9], vec![block.clone(); 3]).is_err()
        );
        assert!(UnfoldedMatrix::from_blocks(1.0, vec![0.0], vec![block.clone()]).is_err());
        assert!(UnfoldedMatrix::from_blocks(1.0, vec![0.25, 0.75], vec![block; 2]).is_ok());
    }
}
