//! Leading singular triplets by restarted Golub-Kahan-Lanczos bidiagonalization.
//!
//! The Krylov bases are kept fully reorthogonalized (two Gram-Schmidt passes).
//! After each sweep of `work` steps the small projected matrix `B = U^T A V`
//! is decomposed densely; the leading Ritz vectors plus the final residual
//! direction seed the next sweep, which is the augmented (thick) restart.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::subspace::UnfoldedMatrix;

/// Matrix-free access to `A` and `A^T`.
pub trait LinearOperator: Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    /// `y = A x`
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = A^T u`
    fn apply_transpose(&self, u: &[f64], y: &mut [f64]);
    fn frobenius_norm(&self) -> f64;
    fn to_dense(&self) -> DMatrix<f64>;
}

impl LinearOperator for UnfoldedMatrix {
    fn nrows(&self) -> usize {
        self.n()
    }

    fn ncols(&self) -> usize {
        UnfoldedMatrix::ncols(self)
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y)
    }

    fn apply_transpose(&self, u: &[f64], y: &mut [f64]) {
        self.tmatvec(u, y)
    }

    fn frobenius_norm(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        UnfoldedMatrix::to_dense(self)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn nrows(&self) -> usize {
        self.nrows()
    }

    fn ncols(&self) -> usize {
        self.ncols()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let r = self * DVector::from_column_slice(x);
        y.copy_from_slice(r.as_slice());
    }

    fn apply_transpose(&self, u: &[f64], y: &mut [f64]) {
        let r = self.tr_mul(&DVector::from_column_slice(u));
        y.copy_from_slice(r.as_slice());
    }

    fn frobenius_norm(&self) -> f64 {
        self.norm()
    }

    fn to_dense(&self) -> DMatrix<f64> {
        self.clone()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SvdMethod {
    /// Restarted Lanczos bidiagonalization; falls back to dense SVD only for
    /// tiny or non-converging problems with at most 10^4 logical entries.
    #[default]
    Lanczos,
    /// Dense SVD of the materialized matrix.
    Dense,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvdOptions {
    /// Relative residual tolerance: `||A^T u_k - s_k v_k|| <= tol * s_1`.
    pub tol: f64,
    pub seed: u64,
    pub max_restarts: usize,
    pub method: SvdMethod,
}

impl Default for SvdOptions {
    fn default() -> Self {
        SvdOptions {
            tol: 1e-10,
            seed: 0,
            max_restarts: 300,
            method: SvdMethod::Lanczos,
        }
    }
}

/// The leading `d` left singular vectors and `d + 1` singular values.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdResult {
    /// `n x d`, orthonormal columns, largest-magnitude entry of each column positive.
    pub u: DMatrix<f64>,
    /// Non-increasing, length `d + 1`.
    pub singular_values: Vec<f64>,
    /// Residual norms `||A^T u_k - s_k v_k||`, length `d + 1`.
    pub residuals: Vec<f64>,
    pub restarts: usize,
    pub method: SvdMethod,
    pub warnings: Vec<String>,
}

impl SvdResult {
    pub fn max_relative_residual(&self) -> f64 {
        let s1 = self.singular_values[0];
        let d = self.u.ncols();
        if s1 == 0.0 {
            return 0.0;
        }
        self.residuals[..d]
            .iter()
            .fold(0.0f64, |a, &r| a.max(r / s1))
    }
}

/// Computes `d` leading left singular vectors of `op` plus `d + 1` singular values.
pub fn truncated_svd<Op: LinearOperator + ?Sized>(
    op: &Op,
    d: usize,
    options: &SvdOptions,
) -> Result<SvdResult> {
    let (m, ncols) = (op.nrows(), op.ncols());
    let nu = d + 1;
    if d == 0 || nu > m.min(ncols) {
        return Err(IppError::InvalidParameter(format!(
            "need 1 <= d < min(rows, cols) = {}, got d = {d}",
            m.min(ncols)
        )));
    }
    if !(options.tol > 0.0) {
        return Err(IppError::InvalidParameter(format!(
            "tolerance must be positive, got {}",
            options.tol
        )));
    }
    if op.frobenius_norm() == 0.0 {
        return Err(IppError::RankDeficient {
            requested: d,
            rank: 0,
            available: Box::new(None),
        });
    }

    let small = m.saturating_mul(ncols) <= 10_000;
    let work = (2 * d + 4).max(12).min(m.min(ncols));
    let raw = match options.method {
        SvdMethod::Dense => dense_triplets(&op.to_dense(), nu),
        SvdMethod::Lanczos if work < nu + 2 && small => dense_triplets(&op.to_dense(), nu),
        SvdMethod::Lanczos => match lanczos_triplets(op, nu, work, options) {
            Ok(raw) => raw,
            Err(IppError::NonConvergence { restarts, residual }) if small => {
                let mut raw = dense_triplets(&op.to_dense(), nu);
                raw.warnings.push(format!(
                    "Lanczos did not converge after {restarts} restarts (residual {residual:e}); used dense SVD"
                ));
                raw
            }
            Err(e) => return Err(e),
        },
    };
    finish(raw, d, m.max(ncols))
}

struct RawTriplets {
    u: DMatrix<f64>,
    sigma: Vec<f64>,
    residuals: Vec<f64>,
    restarts: usize,
    method: SvdMethod,
    warnings: Vec<String>,
}

fn finish(raw: RawTriplets, d: usize, dim: usize) -> Result<SvdResult> {
    let RawTriplets {
        mut u,
        sigma,
        residuals,
        restarts,
        method,
        mut warnings,
    } = raw;
    apply_sign_convention(&mut u);
    let s1 = sigma[0];
    let rank_tol = dim as f64 * f64::EPSILON * s1;
    let rank = sigma.iter().take_while(|&&s| s > rank_tol).count();
    if sigma[d - 1] - sigma[d] <= 1e-8 * s1 && rank >= d {
        warnings.push(format!(
            "singular values {} and {} are tied within tolerance; the basis is only identified up to rotation",
            d,
            d + 1
        ));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    let result = SvdResult {
        u: u.columns(0, d).into_owned(),
        singular_values: sigma,
        residuals,
        restarts,
        method,
        warnings,
    };
    if rank < d {
        let mut partial = result.clone();
        partial.u = result.u.columns(0, rank).into_owned();
        return Err(IppError::RankDeficient {
            requested: d,
            rank,
            available: Box::new(Some(partial)),
        });
    }
    Ok(result)
}

/// In each column the entry of largest magnitude (first on exact ties) is made positive.
pub fn apply_sign_convention(u: &mut DMatrix<f64>) {
    for mut col in u.column_iter_mut() {
        let mut best = 0;
        for (k, v) in col.iter().enumerate() {
            if v.abs() > col[best].abs() {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Sorted singular values and left vectors via dense SVD.
fn dense_triplets(a: &DMatrix<f64>, nu: usize) -> RawTriplets {
    let svd = a.clone().svd(true, false);
    let u_all = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let mut u = DMatrix::zeros(a.nrows(), nu);
    let mut sigma = Vec::with_capacity(nu);
    for (c, &k) in order.iter().take(nu).enumerate() {
        u.set_column(c, &u_all.column(k));
        sigma.push(svd.singular_values[k]);
    }
    RawTriplets {
        u,
        sigma,
        residuals: vec![0.0; nu],
        restarts: 0,
        method: SvdMethod::Dense,
        warnings: Vec::new(),
    }
}

fn random_unit(len: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let mut v = DVector::from_fn(len, |_, _| StandardNormal.sample(rng));
    let norm = v.norm();
    v /= norm;
    v
}

/// Two passes of classical Gram-Schmidt; returns the accumulated coefficients.
fn orthogonalize(w: &mut DVector<f64>, basis: &[DVector<f64>]) -> Vec<f64> {
    let mut coeffs = vec![0.0; basis.len()];
    for _ in 0..2 {
        let h: Vec<f64> = basis.iter().map(|q| q.dot(w)).collect();
        for (q, &hk) in basis.iter().zip(&h) {
            w.axpy(-hk, q, 1.0);
        }
        for (c, hk) in coeffs.iter_mut().zip(h) {
            *c += hk;
        }
    }
    coeffs
}

/// Replacement direction after a breakdown: random, orthogonal to `basis`.
fn fresh_direction(len: usize, basis: &[DVector<f64>], rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let mut w = random_unit(len, rng);
        orthogonalize(&mut w, basis);
        let norm = w.norm();
        if norm > 1e-8 {
            return w / norm;
        }
    }
}

fn lanczos_triplets<Op: LinearOperator + ?Sized>(
    op: &Op,
    nu: usize,
    work: usize,
    options: &SvdOptions,
) -> Result<RawTriplets> {
    let (m, ncols) = (op.nrows(), op.ncols());
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let breakdown = 1e-12 * op.frobenius_norm();
    let keep = (nu + (work - nu) / 2).min(work - 1);

    let mut v_basis: Vec<DVector<f64>> = vec![random_unit(ncols, &mut rng)];
    let mut u_basis: Vec<DVector<f64>> = Vec::with_capacity(work);
    let mut b = DMatrix::<f64>::zeros(work, work);
    let mut buf_m = vec![0.0; m];
    let mut buf_n = vec![0.0; ncols];
    let mut restarts = 0;

    loop {
        let mut residual_norm = 0.0;
        let mut residual_dir = None;
        for j in u_basis.len()..work {
            op.apply(v_basis[j].as_slice(), &mut buf_m);
            let mut w = DVector::from_column_slice(&buf_m);
            let coeffs = orthogonalize(&mut w, &u_basis);
            for (i, c) in coeffs.into_iter().enumerate() {
                b[(i, j)] = c;
            }
            let alpha = w.norm();
            if alpha > breakdown {
                b[(j, j)] = alpha;
                u_basis.push(w / alpha);
            } else {
                b[(j, j)] = 0.0;
                let fresh = fresh_direction(m, &u_basis, &mut rng);
                u_basis.push(fresh);
            }

            op.apply_transpose(u_basis[j].as_slice(), &mut buf_n);
            let mut r = DVector::from_column_slice(&buf_n);
            orthogonalize(&mut r, &v_basis);
            let beta = r.norm();
            if j + 1 < work {
                if beta > breakdown {
                    v_basis.push(r / beta);
                } else {
                    let fresh = fresh_direction(ncols, &v_basis, &mut rng);
                    v_basis.push(fresh);
                }
            } else {
                residual_norm = if beta > breakdown { beta } else { 0.0 };
                residual_dir = (beta > breakdown).then(|| r / beta);
            }
        }

        let svd = b.clone().svd(true, true);
        let (p, qt) = (svd.u.expect("requested U"), svd.v_t.expect("requested V^T"));
        let mut order: Vec<usize> = (0..work).collect();
        order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
        let sigma: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
        let residuals: Vec<f64> = order
            .iter()
            .map(|&k| residual_norm * p[(work - 1, k)].abs())
            .collect();
        let s1 = sigma[0];
        let worst = residuals[..nu].iter().fold(0.0f64, |a, &r| a.max(r / s1));

        let ritz_u = |k: usize| -> DVector<f64> {
            let mut out = DVector::zeros(m);
            for (i, q) in u_basis.iter().enumerate() {
                out.axpy(p[(i, k)], q, 1.0);
            }
            out
        };

        if worst <= options.tol || residual_dir.is_none() {
            let mut u = DMatrix::zeros(m, nu);
            for c in 0..nu {
                u.set_column(c, &ritz_u(order[c]));
            }
            return Ok(RawTriplets {
                u,
                sigma: sigma[..nu].to_vec(),
                residuals: residuals[..nu].to_vec(),
                restarts,
                method: SvdMethod::Lanczos,
                warnings: Vec::new(),
            });
        }
        if restarts >= options.max_restarts {
            return Err(IppError::NonConvergence {
                restarts,
                residual: worst,
            });
        }
        restarts += 1;

        let new_u: Vec<DVector<f64>> = (0..keep).map(|c| ritz_u(order[c])).collect();
        let new_v: Vec<DVector<f64>> = (0..keep)
            .map(|c| {
                let k = order[c];
                let mut out = DVector::zeros(ncols);
                for (i, q) in v_basis.iter().enumerate() {
                    out.axpy(qt[(k, i)], q, 1.0);
                }
                out
            })
            .collect();
        u_basis = new_u;
        v_basis = new_v;
        v_basis.push(residual_dir.expect("checked above"));
        b.fill(0.0);
        for c in 0..keep {
            b[(c, c)] = sigma[c];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn projector(u: &DMatrix<f64>) -> DMatrix<f64> {
        u * u.transpose()
    }

    fn random_matrix(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn matches_dense_on_random_matrix() {
        let a = random_matrix(40, 300, 1);
        let opts = SvdOptions::default();
        let lanczos = truncated_svd(&a, 3, &opts).unwrap();
        assert_eq!(lanczos.method, SvdMethod::Lanczos);
        let dense = truncated_svd(
            &a,
            3,
            &SvdOptions {
                method: SvdMethod::Dense,
                ..opts
            },
        )
        .unwrap();
        for k in 0..4 {
            assert!(
                (lanczos.singular_values[k] - dense.singular_values[k]).abs()
                    < 1e-9 * dense.singular_values[0]
            );
        }
        assert!((projector(&lanczos.u) - projector(&dense.u)).norm() < 1e-8);
        assert!(lanczos.max_relative_residual() <= 1e-10);
    }

    #[test]
    fn rank_one_constant_block() {
        // c (J - I) with n = 6
        let n = 6;
        let c = 2.5;
        let a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { c });
        let r = truncated_svd(&a, 1, &SvdOptions::default()).unwrap();
        assert!((r.singular_values[0] - c * (n as f64 - 1.0)).abs() < 1e-10);
        for i in 0..n {
            assert!((r.u[(i, 0)] - 1.0 / (n as f64).sqrt()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_matrix_is_rank_deficient() {
        let a = DMatrix::<f64>::zeros(5, 10);
        let err = truncated_svd(&a, 2, &SvdOptions::default()).unwrap_err();
        assert!(matches!(err, IppError::RankDeficient { rank: 0, .. }));
    }

    #[test]
    fn low_rank_reports_available_triplets() {
        let x = random_matrix(30, 1, 4);
        let y = random_matrix(1, 200, 5);
        let a = &x * &y;
        match truncated_svd(&a, 3, &SvdOptions::default()) {
            Err(IppError::RankDeficient {
                rank, available, ..
            }) => {
                assert_eq!(rank, 1);
                let partial = available.expect("partial result");
                assert_eq!(partial.u.ncols(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
        // rank == d is fine: only sigma_{d+1} vanishes
        let r = truncated_svd(&a, 1, &SvdOptions::default()).unwrap();
        assert!(r.singular_values[1] < 1e-10 * r.singular_values[0]);
    }

    #[test]
    fn invalid_dimension() {
        let a = random_matrix(4, 8, 2);
        assert!(truncated_svd(&a, 0, &SvdOptions::default()).is_err());
        assert!(truncated_svd(&a, 4, &SvdOptions::default()).is_err());
    }

    #[test]
    fn deterministic_given_seed() {
        let a = random_matrix(50, 200, 9);
        let opts = SvdOptions {
            seed: 17,
            ..Default::default()
        };
        let r1 = truncated_svd(&a, 2, &opts).unwrap();
        let r2 = truncated_svd(&a, 2, &opts).unwrap();
        assert_eq!(r1.u, r2.u);
        assert_eq!(r1.singular_values, r2.singular_values);
    }

    #[test]
    fn sign_convention() {
        let mut u = DMatrix::from_row_slice(3, 2, &[0.1, 0.5, -0.9, -0.2, 0.3, -0.6]);
        apply_sign_convention(&mut u);
        assert_eq!(u[(1, 0)], 0.9);
        assert_eq!(u[(2, 1)], 0.6);
    }

    #[test]
    fn tall_operator() {
        let a = random_matrix(120, 30, 12);
        let r = truncated_svd(&a, 4, &SvdOptions::default()).unwrap();
        let dense = truncated_svd(
            &a,
            4,
            &SvdOptions {
                method: SvdMethod::Dense,
                ..Default::default()
            },
        )
        .unwrap();
        assert!((projector(&r.u) - projector(&dense.u)).norm() < 1e-8);
    }
}
