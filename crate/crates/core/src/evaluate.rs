//! Evaluation: reconstruction error, population ground truth, aligned
//! trajectory error, coherence scores and the bias/variance sweep over bin counts.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::WindowedEmbedding;
use crate::error::{IppError, Result};
use crate::intensity::{bin_index, EstimatorConfig};
use crate::reduce::procrustes;
use crate::simulate::{simulate_model, IntensityModel};
use crate::subspace::EmbeddingModel;
use crate::subspace::{
    apply_sign_convention, build_unfolded, fit_unfolded, FitOptions, SvdOptions, UnfoldedMatrix,
};
use crate::trajectory::{Projector, Sample, Trajectory};

/// Largest `n` accepted by the dense population computations.
pub const MAX_DENSE_NODES: usize = 500;
pub const DEFAULT_QUAD_POINTS: usize = 512;
/// Relative change of the second moment allowed when the quadrature is doubled.
pub const QUADRATURE_TOLERANCE: f64 = 1e-6;
const ORTHONORMAL_TOLERANCE: f64 = 1e-8;
const DIRECT_RESIDUAL_MAX_N: usize = 2000;

fn check_orthonormal(v: &DMatrix<f64>) -> Result<()> {
    let gram = v.transpose() * v;
    let dev = (gram - DMatrix::identity(v.ncols(), v.ncols())).abs().max();
    if dev > ORTHONORMAL_TOLERANCE {
        return Err(IppError::NotOrthonormal(dev));
    }
    Ok(())
}

/// `(T/B) sum_b |(I - V V^T) Lambda(t_b)|_F^2`.
pub fn integrated_rss(unfolded: &UnfoldedMatrix, v: &DMatrix<f64>) -> Result<f64> {
    if v.nrows() != unfolded.n() {
        return Err(IppError::ShapeMismatch(format!(
            "frame has {} rows, matrix has n = {}",
            v.nrows(),
            unfolded.n()
        )));
    }
    check_orthonormal(v)?;
    let n = unfolded.n();
    let per_block: Vec<f64> = unfolded
        .blocks()
        .par_iter()
        .map(|block| {
            // Lambda V, whose transpose is V^T Lambda by symmetry
            let lv = block.mul_dense(v);
            if n <= DIRECT_RESIDUAL_MAX_N {
                let mut sum = 0.0;
                let mut row = vec![0.0; n];
                for i in 0..n {
                    row.iter_mut().for_each(|x| *x = 0.0);
                    for (j, val) in block.row(i) {
                        row[j] = val;
                    }
                    for (j, r) in row.iter_mut().enumerate() {
                        let mut p = 0.0;
                        for c in 0..v.ncols() {
                            p += v[(i, c)] * lv[(j, c)];
                        }
                        *r -= p;
                    }
                    sum += row.iter().map(|x| x * x).sum::<f64>();
                }
                sum
            } else {
                (block.frobenius_sq() - lv.norm_squared()).max(0.0)
            }
        })
        .collect();
    let width = unfolded.horizon() / unfolded.num_blocks() as f64;
    Ok(width * per_block.iter().sum::<f64>())
}

/// `n x d` frame from the QR factorization of a standard Gaussian matrix.
pub fn random_orthonormal_frame(n: usize, d: usize, seed: u64) -> Result<DMatrix<f64>> {
    if d == 0 || d > n {
        return Err(IppError::InvalidParameter(format!(
            "frame dimension {d} must be in 1..={n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    Ok(g.qr().q())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lemma1Report {
    pub rss_fit: f64,
    pub rss_random: Vec<f64>,
    pub min_random: f64,
    pub holds: bool,
}

/// Compares the fitted basis against `frames` random orthonormal frames.
pub fn lemma1_check(
    unfolded: &UnfoldedMatrix,
    basis: &DMatrix<f64>,
    frames: usize,
    seed: u64,
) -> Result<Lemma1Report> {
    let rss_fit = integrated_rss(unfolded, basis)?;
    let rss_random = (0..frames as u64)
        .map(|k| {
            integrated_rss(
                unfolded,
                &random_orthonormal_frame(unfolded.n(), basis.ncols(), seed.wrapping_add(k))?,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let min_random = rss_random.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(Lemma1Report {
        rss_fit,
        holds: rss_fit <= min_random,
        rss_random,
        min_random,
    })
}

/// Dense `Lambda(t)` of a population model.
pub fn rate_matrix<M: IntensityModel + ?Sized>(model: &M, t: f64) -> DMatrix<f64> {
    let n = model.n();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let v = model.rate(i, j, t);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Mean of `f(t_q)^2` over the midpoint rule with `q` points, accumulated in
/// fixed chunks so the result does not depend on the thread count.
fn mean_square<F>(n: usize, q: usize, f: F) -> DMatrix<f64>
where
    F: Fn(usize) -> DMatrix<f64> + Sync,
{
    const CHUNK: usize = 16;
    let chunks: Vec<DMatrix<f64>> = (0..q.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut acc = DMatrix::zeros(n, n);
            for k in c * CHUNK..((c + 1) * CHUNK).min(q) {
                let l = f(k);
                acc += &l * &l;
            }
            acc
        })
        .collect();
    let mut total = DMatrix::zeros(n, n);
    for c in chunks {
        total += c;
    }
    total / q as f64
}

/// Top-`d` eigenvectors (sign convention applied) and all eigenvalues, descending.
fn top_eigen(sym: DMatrix<f64>, d: usize) -> (DMatrix<f64>, Vec<f64>) {
    let n = sym.nrows();
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .total_cmp(&eig.eigenvalues[a])
            .then(a.cmp(&b))
    });
    let mut u = DMatrix::zeros(n, d);
    for (c, &idx) in order.iter().take(d).enumerate() {
        u.set_column(c, &eig.eigenvectors.column(idx));
    }
    apply_sign_convention(&mut u);
    (u, order.iter().map(|&i| eig.eigenvalues[i]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationOptions {
    pub quad_points: usize,
    /// Recompute with twice the points and report the relative change.
    pub check_quadrature: bool,
}

impl Default for PopulationOptions {
    fn default() -> Self {
        PopulationOptions {
            quad_points: DEFAULT_QUAD_POINTS,
            check_quadrature: false,
        }
    }
}

/// Spectral summary of `Sigma = (1/T) int Lambda(t)^2 dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpectrum {
    pub n: usize,
    pub dim: usize,
    pub horizon: f64,
    pub quad_points: usize,
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    /// Square roots of the eigenvalues of `Sigma`, descending.
    pub singular_values: Vec<f64>,
    pub eigengap: f64,
    pub condition: f64,
    pub coherence: f64,
    pub lambda_max: f64,
    pub lipschitz: Option<f64>,
    pub quadrature_change: Option<f64>,
}

impl PopulationSpectrum {
    pub fn quadrature_converged(&self) -> Option<bool> {
        self.quadrature_change.map(|c| c < QUADRATURE_TOLERANCE)
    }

    /// `n x d` matrix of population positions `X_i(t) = U_d^T Lambda_i(t)`.
    pub fn positions<M: IntensityModel + ?Sized>(&self, model: &M, t: f64) -> DMatrix<f64> {
        rate_matrix(model, t) * &self.basis
    }

    /// Population residual norms `|(I - U U^T) Lambda_i(t)|` per node.
    pub fn residuals<M: IntensityModel + ?Sized>(&self, model: &M, t: f64) -> Vec<f64> {
        let l = rate_matrix(model, t);
        let r = &l - &self.basis * (self.basis.transpose() * &l);
        r.column_iter().map(|c| c.norm()).collect()
    }

    pub fn trajectories<M: IntensityModel + ?Sized>(
        &self,
        model: &M,
        times: &[f64],
    ) -> TrajectorySet {
        let frames = times
            .par_iter()
            .map(|&t| self.positions(model, t))
            .collect();
        TrajectorySet {
            times: times.to_vec(),
            frames,
        }
    }
}

pub fn population_spectrum<M: IntensityModel + ?Sized>(
    model: &M,
    d: usize,
    options: &PopulationOptions,
) -> Result<PopulationSpectrum> {
    let n = model.n();
    if n > MAX_DENSE_NODES {
        return Err(IppError::InvalidParameter(format!(
            "n = {n} exceeds the dense limit {MAX_DENSE_NODES}"
        )));
    }
    if d == 0 || d >= n {
        return Err(IppError::InvalidParameter(format!(
            "dimension {d} must be in 1..{n}"
        )));
    }
    if options.quad_points < 64 {
        return Err(IppError::InvalidParameter(
            "at least 64 quadrature points are required".into(),
        ));
    }
    let horizon = model.horizon();
    let q = options.quad_points;
    let sigma_at = |q: usize| {
        mean_square(n, q, |k| {
            rate_matrix(model, (k as f64 + 0.5) * horizon / q as f64)
        })
    };
    let sigma = sigma_at(q);
    let quadrature_change = options.check_quadrature.then(|| {
        let fine = sigma_at(2 * q);
        (&fine - &sigma).norm() / sigma.norm().max(f64::MIN_POSITIVE)
    });
    let (basis, eigenvalues) = top_eigen(sigma, d);
    let singular_values: Vec<f64> = eigenvalues.iter().map(|&e| e.max(0.0).sqrt()).collect();
    let row_norm_max = basis.row_iter().map(|r| r.norm()).fold(0.0, f64::max);
    let lambda_max = (0..q)
        .map(|k| rate_matrix(model, (k as f64 + 0.5) * horizon / q as f64).max())
        .fold(model.rate_bound(), f64::max);
    Ok(PopulationSpectrum {
        n,
        dim: d,
        horizon,
        quad_points: q,
        eigengap: singular_values[d - 1] - singular_values[d],
        condition: singular_values[0] / singular_values[d - 1],
        coherence: (n as f64 / d as f64).sqrt() * row_norm_max,
        singular_values,
        basis,
        lambda_max,
        lipschitz: model.lipschitz(),
        quadrature_change,
    })
}

/// Positions of every node on a common time grid: one `n x d` frame per time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySet {
    pub times: Vec<f64>,
    pub frames: Vec<DMatrix<f64>>,
}

impl TrajectorySet {
    pub fn n(&self) -> usize {
        self.frames.first().map_or(0, |f| f.nrows())
    }

    pub fn dim(&self) -> usize {
        self.frames.first().map_or(0, |f| f.ncols())
    }

    pub fn from_source<S: PositionSource + ?Sized>(source: &S, times: &[f64]) -> Result<Self> {
        let frames = times
            .par_iter()
            .map(|&t| source.positions_at(t))
            .collect::<Result<_>>()?;
        Ok(TrajectorySet {
            times: times.to_vec(),
            frames,
        })
    }

    /// Requires one trajectory per node `0..n`, all on the same grid.
    pub fn from_trajectories(trajectories: &[Trajectory]) -> Result<Self> {
        let Some(first) = trajectories.first() else {
            return Err(IppError::InvalidData("no trajectories".into()));
        };
        let times = first.times();
        let d = first.dim();
        let n = trajectories.len();
        let mut frames = vec![DMatrix::zeros(n, d); times.len()];
        for traj in trajectories {
            if traj.node >= n || traj.times() != times || traj.dim() != d {
                return Err(IppError::ShapeMismatch(
                    "trajectories must cover nodes 0..n on a common grid".into(),
                ));
            }
            for (frame, s) in frames.iter_mut().zip(&traj.samples) {
                frame.row_mut(traj.node).copy_from_slice(&s.x);
            }
        }
        Ok(TrajectorySet { times, frames })
    }

    pub fn to_trajectories(&self) -> Vec<Trajectory> {
        (0..self.n())
            .map(|i| Trajectory {
                node: i,
                samples: self
                    .times
                    .iter()
                    .zip(&self.frames)
                    .map(|(&t, f)| Sample {
                        t,
                        x: f.row(i).iter().copied().collect(),
                    })
                    .collect(),
            })
            .collect()
    }

    /// All frames stacked vertically, time-major.
    pub fn stacked(&self) -> DMatrix<f64> {
        let (n, d) = (self.n(), self.dim());
        let mut out = DMatrix::zeros(n * self.frames.len(), d);
        for (k, f) in self.frames.iter().enumerate() {
            out.view_mut((k * n, 0), (n, d)).copy_from(f);
        }
        out
    }
}

/// Anything that can report all node positions at a time.
pub trait PositionSource: Sync {
    fn positions_at(&self, t: f64) -> Result<DMatrix<f64>>;
}

impl PositionSource for Projector<'_> {
    fn positions_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.snapshot(t)
    }
}

impl PositionSource for WindowedEmbedding {
    fn positions_at(&self, t: f64) -> Result<DMatrix<f64>> {
        Ok(self.at(t))
    }
}

impl PositionSource for TrajectorySet {
    fn positions_at(&self, t: f64) -> Result<DMatrix<f64>> {
        self.times
            .iter()
            .position(|&s| s == t)
            .map(|k| self.frames[k].clone())
            .ok_or_else(|| {
                IppError::InvalidQuery(format!("time {t} is not on the trajectory grid"))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub metric: String,
    /// Largest aligned error over all nodes and times.
    pub value: f64,
    /// Aligned error averaged over nodes and grid times.
    pub mean: f64,
    /// Rows of the orthogonal `W` applied to the estimate.
    pub alignment: Vec<Vec<f64>>,
    pub degenerate_alignment: bool,
    /// Largest aligned error of each node over time.
    pub per_node: Vec<f64>,
}

/// Error of `est` against `truth` after one orthogonal alignment `W`
/// minimizing `|stack(est) W - stack(truth)|_F`.
pub fn trajectory_error(est: &TrajectorySet, truth: &TrajectorySet) -> Result<ErrorReport> {
    if est.times.len() != truth.times.len()
        || est
            .times
            .iter()
            .zip(&truth.times)
            .any(|(a, b)| (a - b).abs() > 1e-12 * (1.0 + b.abs()))
    {
        return Err(IppError::ShapeMismatch("trajectory grids differ".into()));
    }
    if est.n() != truth.n() || est.dim() != truth.dim() || est.times.is_empty() {
        return Err(IppError::ShapeMismatch(format!(
            "estimate is {}x{}, truth is {}x{}",
            est.n(),
            est.dim(),
            truth.n(),
            truth.dim()
        )));
    }
    let a = est.stacked();
    let b = truth.stacked();
    let p = procrustes(&a, &b)?;
    let diff = a * &p.rotation - b;
    let n = est.n();
    let mut per_node = vec![0.0f64; n];
    let mut sum = 0.0;
    for (r, row) in diff.row_iter().enumerate() {
        let e = row.norm();
        sum += e;
        per_node[r % n] = per_node[r % n].max(e);
    }
    Ok(ErrorReport {
        metric: "aligned max-node sup-time error".into(),
        value: per_node.iter().copied().fold(0.0, f64::max),
        mean: sum / diff.nrows() as f64,
        alignment: p
            .rotation
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect(),
        degenerate_alignment: p.degenerate,
        per_node,
    })
}

/// Node pairs and time pairs declared to be population-identical.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CoherenceSpec {
    pub node_pairs: Vec<(usize, usize)>,
    pub node_pair_times: Vec<f64>,
    pub time_pairs: Vec<(f64, f64)>,
    pub time_pair_nodes: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherenceScores {
    pub structural: Option<f64>,
    pub temporal: Option<f64>,
    /// Median position norm used for normalization.
    pub scale: f64,
}

fn distance(a: &DMatrix<f64>, i: usize, b: &DMatrix<f64>, j: usize) -> f64 {
    (a.row(i) - b.row(j)).norm()
}

/// Maximum distances between positions declared identical, divided by the
/// median norm over every node at every time the spec references.
pub fn coherence_metrics<S: PositionSource + ?Sized>(
    source: &S,
    spec: &CoherenceSpec,
) -> Result<CoherenceScores> {
    let has_structural = !spec.node_pairs.is_empty() && !spec.node_pair_times.is_empty();
    let has_temporal = !spec.time_pairs.is_empty() && !spec.time_pair_nodes.is_empty();
    if !has_structural && !has_temporal {
        return Err(IppError::InvalidParameter(
            "coherence spec declares nothing".into(),
        ));
    }
    let mut times: Vec<f64> = Vec::new();
    if has_structural {
        times.extend(&spec.node_pair_times);
    }
    if has_temporal {
        times.extend(spec.time_pairs.iter().flat_map(|&(s, t)| [s, t]));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    let frames: Vec<DMatrix<f64>> = times
        .par_iter()
        .map(|&t| source.positions_at(t))
        .collect::<Result<_>>()?;
    let frame = |t: f64| &frames[times.partition_point(|&s| s < t)];
    let n = frames[0].nrows();
    let check = |i: usize| {
        if i < n {
            Ok(())
        } else {
            Err(IppError::InvalidQuery(format!(
                "unknown node {i} (n = {n})"
            )))
        }
    };
    let mut norms: Vec<f64> = frames
        .iter()
        .flat_map(|f| f.row_iter().map(|r| r.norm()).collect::<Vec<_>>())
        .collect();
    norms.sort_by(f64::total_cmp);
    let mid = norms.len() / 2;
    let scale = if norms.len() % 2 == 1 {
        norms[mid]
    } else {
        0.5 * (norms[mid - 1] + norms[mid])
    };
    let normalize = |v: f64| if scale > 0.0 { v / scale } else { v };
    let structural = if has_structural {
        let mut worst = 0.0f64;
        for &(i, j) in &spec.node_pairs {
            check(i)?;
            check(j)?;
            for &t in &spec.node_pair_times {
                let f = frame(t);
                worst = worst.max(distance(f, i, f, j));
            }
        }
        Some(normalize(worst))
    } else {
        None
    };
    let temporal = if has_temporal {
        let mut worst = 0.0f64;
        for &i in &spec.time_pair_nodes {
            check(i)?;
            for &(s, t) in &spec.time_pairs {
                worst = worst.max(distance(frame(s), i, frame(t), i));
            }
        }
        Some(normalize(worst))
    } else {
        None
    };
    Ok(CoherenceScores {
        structural,
        temporal,
        scale,
    })
}

fn rates_match(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-9 * scale
}

/// Node pairs whose rates to every other node coincide at each of `times`.
pub fn identical_node_pairs<M: IntensityModel + ?Sized>(
    model: &M,
    times: &[f64],
) -> Vec<(usize, usize)> {
    let n = model.n();
    let mats: Vec<DMatrix<f64>> = times.iter().map(|&t| rate_matrix(model, t)).collect();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let same = mats.iter().all(|m| {
                let scale = m.max().max(f64::MIN_POSITIVE);
                (0..n)
                    .filter(|&k| k != i && k != j)
                    .all(|k| rates_match(m[(i, k)], m[(j, k)], scale))
            });
            if same {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// Pairs `s < t` from `times` with `Lambda(s) = Lambda(t)`.
pub fn identical_time_pairs<M: IntensityModel + ?Sized>(
    model: &M,
    times: &[f64],
) -> Vec<(f64, f64)> {
    let mats: Vec<DMatrix<f64>> = times.iter().map(|&t| rate_matrix(model, t)).collect();
    let mut pairs = Vec::new();
    for a in 0..times.len() {
        for b in a + 1..times.len() {
            let scale = mats[a].max().max(mats[b].max()).max(f64::MIN_POSITIVE);
            if mats[a]
                .iter()
                .zip(mats[b].iter())
                .all(|(x, y)| rates_match(*x, *y, scale))
            {
                pairs.push((times[a], times[b]));
            }
        }
    }
    pairs
}

/// Population histogram approximation: bin-averaged intensities projected on
/// the leading eigenvectors of their second moment.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedPopulation {
    pub bins: usize,
    pub horizon: f64,
    pub basis: DMatrix<f64>,
    /// `Lambda_bar_m U_bar` for each bin.
    pub frames: Vec<DMatrix<f64>>,
}

impl BinnedPopulation {
    pub fn new<M: IntensityModel + ?Sized>(model: &M, bins: usize, d: usize) -> Result<Self> {
        let n = model.n();
        if bins == 0 {
            return Err(IppError::InvalidParameter(
                "bin count must be at least 1".into(),
            ));
        }
        if d == 0 || d >= n || n > MAX_DENSE_NODES {
            return Err(IppError::InvalidParameter(format!(
                "dimension {d} invalid for n = {n}"
            )));
        }
        let horizon = model.horizon();
        let width = horizon / bins as f64;
        let means: Vec<DMatrix<f64>> = (0..bins)
            .into_par_iter()
            .map(|m| {
                let (a, b) = (m as f64 * width, (m + 1) as f64 * width);
                let mut l = DMatrix::zeros(n, n);
                for i in 0..n {
                    for j in i + 1..n {
                        let v = model.mean_rate(i, j, a, b);
                        l[(i, j)] = v;
                        l[(j, i)] = v;
                    }
                }
                l
            })
            .collect();
        let second = mean_square(n, bins, |m| means[m].clone());
        let (basis, _) = top_eigen(second, d);
        let frames = means.iter().map(|l| l * &basis).collect();
        Ok(BinnedPopulation {
            bins,
            horizon,
            basis,
            frames,
        })
    }

    pub fn positions(&self, t: f64) -> &DMatrix<f64> {
        &self.frames[bin_index(t, self.bins, self.horizon)]
    }

    pub fn trajectories(&self, times: &[f64]) -> TrajectorySet {
        TrajectorySet {
            times: times.to_vec(),
            frames: times.iter().map(|&t| self.positions(t).clone()).collect(),
        }
    }
}

/// Bin count balancing bias and variance, `(n rho L^2)^{1/3}` rounded up.
pub fn suggest_bins(n: usize, rho: f64, lipschitz: f64) -> usize {
    ((n as f64 * rho * lipschitz * lipschitz).cbrt().ceil() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub bins: Vec<usize>,
    pub dim: usize,
    pub seeds: Vec<u64>,
    /// Evaluation grid `k T / eval_points`, `k = 1..=eval_points`.
    pub eval_points: usize,
    pub population: PopulationOptions,
    pub svd: SvdOptions,
}

impl SweepOptions {
    pub fn new(bins: Vec<usize>, dim: usize, seeds: Vec<u64>) -> Self {
        SweepOptions {
            bins,
            dim,
            seeds,
            eval_points: 500,
            population: PopulationOptions::default(),
            svd: SvdOptions::default(),
        }
    }

    pub fn grid(&self, horizon: f64) -> Vec<f64> {
        (1..=self.eval_points)
            .map(|k| k as f64 * horizon / self.eval_points as f64)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorPair {
    pub max: f64,
    pub mean: f64,
}

impl ErrorPair {
    fn of(r: &ErrorReport) -> Self {
        ErrorPair {
            max: r.value,
            mean: r.mean,
        }
    }

    fn average(pairs: &[ErrorPair]) -> Self {
        let k = pairs.len() as f64;
        ErrorPair {
            max: pairs.iter().map(|p| p.max).sum::<f64>() / k,
            mean: pairs.iter().map(|p| p.mean).sum::<f64>() / k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub bins: usize,
    pub seed: u64,
    pub variance: ErrorPair,
    pub total: ErrorPair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub bins: usize,
    pub bias: ErrorPair,
    /// Seed averages.
    pub variance: ErrorPair,
    pub total: ErrorPair,
    pub cells: Vec<SweepCell>,
}

/// For each bin count `M`: bias `X_bar` vs `X`, variance `X_hat` vs `X_bar` and
/// total `X_hat` vs `X`, with `X_hat` fitted by an `M`-bin histogram on `M` slices.
pub fn bias_variance_sweep<M: IntensityModel + ?Sized>(
    model: &M,
    options: &SweepOptions,
) -> Result<Vec<SweepRow>> {
    if options.bins.is_empty() || options.seeds.is_empty() || options.eval_points == 0 {
        return Err(IppError::InvalidParameter(
            "sweep needs bin counts, seeds and evaluation points".into(),
        ));
    }
    let grid = options.grid(model.horizon());
    let spectrum = population_spectrum(model, options.dim, &options.population)?;
    let truth = spectrum.trajectories(model, &grid);
    let logs = options
        .seeds
        .par_iter()
        .map(|&s| simulate_model(model, s))
        .collect::<Result<Vec<_>>>()?;
    options
        .bins
        .iter()
        .map(|&bins| {
            let binned = BinnedPopulation::new(model, bins, options.dim)?.trajectories(&grid);
            let bias = ErrorPair::of(&trajectory_error(&binned, &truth)?);
            let estimator = EstimatorConfig::histogram(bins);
            let cells = options
                .seeds
                .par_iter()
                .zip(&logs)
                .map(|(&seed, log)| {
                    let unfolded = build_unfolded(log, &estimator, bins)?;
                    let fitted = fit_unfolded(
                        &unfolded,
                        estimator,
                        log.labels().to_vec(),
                        options.dim,
                        &options.svd,
                    )?;
                    let est = estimate_set(&fitted, log, &grid)?;
                    Ok(SweepCell {
                        bins,
                        seed,
                        variance: ErrorPair::of(&trajectory_error(&est, &binned)?),
                        total: ErrorPair::of(&trajectory_error(&est, &truth)?),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let variance =
                ErrorPair::average(&cells.iter().map(|c| c.variance).collect::<Vec<_>>());
            let total = ErrorPair::average(&cells.iter().map(|c| c.total).collect::<Vec<_>>());
            Ok(SweepRow {
                bins,
                bias,
                variance,
                total,
                cells,
            })
        })
        .collect()
}

/// Fitted trajectories of every node on `times`.
pub fn estimate_set(
    model: &EmbeddingModel,
    log: &crate::events::EventLog,
    times: &[f64],
) -> Result<TrajectorySet> {
    TrajectorySet::from_source(&Projector::new(model, log)?, times)
}

/// Fits a histogram model with `bins` bins on `bins` slices.
pub fn fit_histogram(
    log: &crate::events::EventLog,
    bins: usize,
    dim: usize,
    svd: &SvdOptions,
) -> Result<EmbeddingModel> {
    let mut options = FitOptions::new(bins, dim);
    options.svd = *svd;
    crate::subspace::fit(log, &EstimatorConfig::histogram(bins), &options)
}
