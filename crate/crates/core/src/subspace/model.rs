use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::events::EventLog;
use crate::intensity::EstimatorConfig;
use crate::subspace::{build_unfolded, truncated_svd, SvdMethod, SvdOptions, UnfoldedMatrix};

/// Relative eigengap below which a fitted spectrum is reported as flat.
pub const FLAT_SPECTRUM_RATIO: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Number of grid slices `B`.
    pub slices: usize,
    /// Embedding dimension `d`.
    pub dim: usize,
    pub svd: SvdOptions,
}

impl FitOptions {
    pub fn new(slices: usize, dim: usize) -> Self {
        FitOptions {
            slices,
            dim,
            svd: SvdOptions::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.svd.seed = seed;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub restarts: usize,
    pub max_relative_residual: f64,
    pub method: SvdMethod,
    pub warnings: Vec<String>,
}

/// Learned basis `U_d` together with everything needed to project new profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "ModelFile", try_from = "ModelFile")]
pub struct EmbeddingModel {
    basis: DMatrix<f64>,
    singular_values: Vec<f64>,
    grid: Vec<f64>,
    estimator: EstimatorConfig,
    horizon: f64,
    labels: Vec<String>,
    diagnostics: FitDiagnostics,
}

impl EmbeddingModel {
    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// `n x d` orthonormal basis.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `d + 1` leading singular values of the unfolded matrix.
    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn estimator(&self) -> &EstimatorConfig {
        &self.estimator
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn diagnostics(&self) -> &FitDiagnostics {
        &self.diagnostics
    }

    /// `sigma_d - sigma_{d+1}`.
    pub fn eigengap(&self) -> f64 {
        let d = self.dim();
        self.singular_values[d - 1] - self.singular_values[d]
    }

    pub fn relative_eigengap(&self) -> f64 {
        self.eigengap() / self.singular_values[0]
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

const MODEL_FORMAT: &str = "ipp-model/1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    n: usize,
    dim: usize,
    horizon: f64,
    estimator: EstimatorConfig,
    grid: Vec<f64>,
    singular_values: Vec<f64>,
    eigengap: f64,
    labels: Vec<String>,
    /// Row `i` holds node `i`'s loadings.
    basis: Vec<Vec<f64>>,
    diagnostics: FitDiagnostics,
}

impl From<EmbeddingModel> for ModelFile {
    fn from(m: EmbeddingModel) -> Self {
        let basis = m
            .basis
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        ModelFile {
            format: MODEL_FORMAT.into(),
            n: m.n(),
            dim: m.dim(),
            horizon: m.horizon,
            estimator: m.estimator,
            eigengap: m.eigengap(),
            grid: m.grid,
            singular_values: m.singular_values,
            labels: m.labels,
            basis,
            diagnostics: m.diagnostics,
        }
    }
}

impl TryFrom<ModelFile> for EmbeddingModel {
    type Error = IppError;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.format != MODEL_FORMAT {
            return Err(IppError::InvalidData(format!(
                "unsupported model format `{}`",
                f.format
            )));
        }
        if f.basis.len() != f.n || f.basis.iter().any(|r| r.len() != f.dim) {
            return Err(IppError::ShapeMismatch(format!(
                "basis is not {}x{}",
                f.n, f.dim
            )));
        }
        if f.labels.len() != f.n || f.singular_values.len() != f.dim + 1 || f.dim == 0 {
            return Err(IppError::ShapeMismatch(
                "labels or singular values do not match the basis".into(),
            ));
        }
        f.estimator.validate()?;
        let basis = DMatrix::from_fn(f.n, f.dim, |i, j| f.basis[i][j]);
        Ok(EmbeddingModel {
            basis,
            singular_values: f.singular_values,
            grid: f.grid,
            estimator: f.estimator,
            horizon: f.horizon,
            labels: f.labels,
            diagnostics: f.diagnostics,
        })
    }
}

/// Fits the subspace on a prebuilt unfolded matrix.
pub fn fit_unfolded(
    unfolded: &UnfoldedMatrix,
    estimator: EstimatorConfig,
    labels: Vec<String>,
    dim: usize,
    svd: &SvdOptions,
) -> Result<EmbeddingModel> {
    let n = unfolded.n();
    if dim == 0 || dim >= n {
        return Err(IppError::InvalidParameter(format!(
            "need 1 <= d < n = {n}, got d = {dim}"
        )));
    }
    let result = truncated_svd(unfolded, dim, svd)?;
    let mut warnings = result.warnings.clone();
    let s = &result.singular_values;
    let ratio = (s[dim - 1] - s[dim]) / s[0];
    if ratio < FLAT_SPECTRUM_RATIO {
        let msg = format!("relative eigengap {ratio:e} below {FLAT_SPECTRUM_RATIO:e}: no clear eigengap at d = {dim}");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    Ok(EmbeddingModel {
        diagnostics: FitDiagnostics {
            restarts: result.restarts,
            max_relative_residual: result.max_relative_residual(),
            method: result.method,
            warnings,
        },
        basis: result.u,
        singular_values: result.singular_values,
        grid: unfolded.grid().to_vec(),
        estimator,
        horizon: unfolded.horizon(),
        labels,
    })
}

/// Intensity estimation, unfolding and truncated SVD in one step.
pub fn fit(
    log: &EventLog,
    estimator: &EstimatorConfig,
    options: &FitOptions,
) -> Result<EmbeddingModel> {
    if options.dim == 0 || options.dim >= log.n() {
        return Err(IppError::InvalidParameter(format!(
            "need 1 <= d < n = {}, got d = {}",
            log.n(),
            options.dim
        )));
    }
    let unfolded = build_unfolded(log, estimator, options.slices)?;
    fit_unfolded(
        &unfolded,
        *estimator,
        log.labels().to_vec(),
        options.dim,
        &options.svd,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeEntry {
    pub k: usize,
    pub singular_value: f64,
    /// `sigma_k / sigma_1`
    pub ratio: f64,
    /// `sigma_k - sigma_{k+1}`, absent for the last value.
    pub gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeReport {
    pub dim: usize,
    pub entries: Vec<ScreeEntry>,
    pub eigengap: f64,
    pub relative_eigengap: f64,
}

/// Singular-value summary of a singular spectrum, with the eigengap at `dim`.
pub fn scree_from_values(values: &[f64], dim: usize) -> ScreeReport {
    let s1 = values.first().copied().unwrap_or(0.0);
    let ratio = |s: f64| if s1 > 0.0 { s / s1 } else { 0.0 };
    let entries = values
        .iter()
        .enumerate()
        .map(|(k, &s)| ScreeEntry {
            k: k + 1,
            singular_value: s,
            ratio: ratio(s),
            gap: values.get(k + 1).map(|&t| s - t),
        })
        .collect();
    let eigengap = match (values.get(dim.wrapping_sub(1)), values.get(dim)) {
        (Some(&a), Some(&b)) => a - b,
        _ => 0.0,
    };
    ScreeReport {
        dim,
        entries,
        eigengap,
        relative_eigengap: ratio(eigengap),
    }
}

pub fn scree(model: &EmbeddingModel) -> ScreeReport {
    scree_from_values(model.singular_values(), model.dim())
}

/// The `k` leading singular values of an unfolded matrix, for dimension selection.
/// Values past the numerical rank are reported as zero.
pub fn spectrum(unfolded: &UnfoldedMatrix, k: usize, svd: &SvdOptions) -> Result<Vec<f64>> {
    let max_k = unfolded.n().min(unfolded.ncols());
    if k == 0 || k > max_k {
        return Err(IppError::InvalidParameter(format!(
            "spectrum size must be in 1..={max_k}, got {k}"
        )));
    }
    if unfolded.is_zero() {
        return Ok(vec![0.0; k]);
    }
    let values = if k < max_k {
        match truncated_svd(unfolded, k, svd) {
            Ok(r) => r.singular_values,
            Err(IppError::RankDeficient { available, .. }) => available
                .map(|r| r.singular_values)
                .ok_or_else(|| IppError::InvalidData("empty spectrum".into()))?,
            Err(e) => return Err(e),
        }
    } else {
        let svd = unfolded.to_dense().svd(false, false);
        let mut v: Vec<f64> = svd.singular_values.iter().copied().collect();
        v.sort_by(|a, b| b.total_cmp(a));
        v
    };
    let mut out: Vec<f64> = values.into_iter().take(k).collect();
    out.resize(k, 0.0);
    Ok(out)
}
