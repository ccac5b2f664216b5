//! Pairwise intensity estimation and sparse intensity slices.
//!
//! Two estimators are supported, both with finite support in time so that a
//! slice `Lambda(t)` only touches pairs with events near `t`:
//!
//! * histogram with `M` equal bins `((m-1)T/M, mT/M]`, estimate `(M/T) * count`;
//! * kernel smoother `sum_e K((t - t_e)/h) / h` with a box or Epanechnikov kernel,
//!   optionally dividing each event's contribution by its kernel mass inside `(0, T]`.

use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::events::EventLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelShape {
    Box,
    Epanechnikov,
}

impl KernelShape {
    /// Kernel value; zero outside `[-1, 1]`.
    pub fn value(self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            KernelShape::Box => 0.5,
            KernelShape::Epanechnikov => 0.75 * (1.0 - u * u),
        }
    }

    /// Distribution function `int_{-1}^{u} K`.
    pub fn cdf(self, u: f64) -> f64 {
        let u = u.clamp(-1.0, 1.0);
        match self {
            KernelShape::Box => 0.5 * (u + 1.0),
            KernelShape::Epanechnikov => 0.5 + 0.75 * (u - u * u * u / 3.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EstimatorConfig {
    Histogram {
        bins: usize,
    },
    Kernel {
        kernel: KernelShape,
        bandwidth: f64,
        boundary_correction: bool,
    },
}

impl EstimatorConfig {
    pub fn histogram(bins: usize) -> Self {
        EstimatorConfig::Histogram { bins }
    }

    /// Kernel smoother with boundary correction enabled.
    pub fn kernel(kernel: KernelShape, bandwidth: f64) -> Self {
        EstimatorConfig::Kernel {
            kernel,
            bandwidth,
            boundary_correction: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorConfig::Histogram { bins: 0 } => Err(IppError::InvalidParameter(
                "histogram needs at least one bin".into(),
            )),
            EstimatorConfig::Kernel { bandwidth, .. }
                if !(bandwidth > 0.0 && bandwidth.is_finite()) =>
            {
                Err(IppError::InvalidParameter(format!(
                    "bandwidth must be positive, got {bandwidth}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Half-width of the time window an estimate at `t` depends on.
    pub fn support_radius(&self, horizon: f64) -> f64 {
        match *self {
            EstimatorConfig::Histogram { bins } => horizon / bins as f64,
            EstimatorConfig::Kernel { bandwidth, .. } => bandwidth,
        }
    }
}

/// Index (0-based) of the histogram bin containing `t`; bins are left-open, right-closed.
pub fn bin_index(t: f64, bins: usize, horizon: f64) -> usize {
    let m = (t * bins as f64 / horizon).ceil();
    (m.max(1.0) as usize).min(bins) - 1
}

/// Midpoint of histogram bin `m` (0-based).
pub fn bin_midpoint(m: usize, bins: usize, horizon: f64) -> f64 {
    (m as f64 + 0.5) * horizon / bins as f64
}

/// Estimate of `lambda_ij(t)` from the sorted event times of one pair.
pub fn estimate_edge(times: &[f64], config: &EstimatorConfig, t: f64, horizon: f64) -> Result<f64> {
    config.validate()?;
    if !(t > 0.0 && t <= horizon) {
        return Err(IppError::OutOfDomain { t, upper: horizon });
    }
    Ok(estimate_unchecked(times, config, t, horizon))
}

/// [`estimate_edge`] without domain or config validation. Kernel estimates
/// are well defined for any `t`.
pub(crate) fn estimate_unchecked(
    times: &[f64],
    config: &EstimatorConfig,
    t: f64,
    horizon: f64,
) -> f64 {
    if times.is_empty() {
        return 0.0;
    }
    match *config {
        EstimatorConfig::Histogram { bins } => {
            let m = bin_index(t, bins, horizon);
            let lo = times.partition_point(|&s| bin_index(s, bins, horizon) < m);
            let hi = times.partition_point(|&s| bin_index(s, bins, horizon) <= m);
            (hi - lo) as f64 * bins as f64 / horizon
        }
        EstimatorConfig::Kernel {
            kernel,
            bandwidth: h,
            boundary_correction,
        } => {
            let lo = times.partition_point(|&s| s < t - h);
            let hi = times.partition_point(|&s| s <= t + h);
            times[lo..hi]
                .iter()
                .map(|&s| {
                    let k = kernel.value((t - s) / h) / h;
                    if boundary_correction {
                        k / (kernel.cdf((horizon - s) / h) - kernel.cdf(-s / h))
                    } else {
                        k
                    }
                })
                .sum()
        }
    }
}

/// Symmetric nonnegative `n x n` estimate `Lambda(t)` with zero diagonal,
/// stored as an upper-triangle coordinate list sorted by `(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSlice {
    t: f64,
    n: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl SparseSlice {
    /// Builds a slice from upper-triangle entries. Zero values are dropped.
    pub fn from_upper(t: f64, n: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &entries {
            if i >= j || j >= n {
                return Err(IppError::InvalidData(format!(
                    "slice entry ({i}, {j}) is not strictly upper triangular in n = {n}"
                )));
            }
            if !(v >= 0.0 && v.is_finite()) {
                return Err(IppError::InvalidData(format!(
                    "slice entry ({i}, {j}) = {v} is not a nonnegative number"
                )));
            }
        }
        entries.retain(|e| e.2 > 0.0);
        entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
        if entries
            .windows(2)
            .any(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1)
        {
            return Err(IppError::InvalidData("duplicate slice entry".into()));
        }
        Ok(SparseSlice { t, n, entries })
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Upper-triangle entries `(i, j, value)` with `i < j`.
    pub fn upper_entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Number of stored nonzeros counting both triangles.
    pub fn nnz(&self) -> usize {
        2 * self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return 0.0;
        }
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.entries
            .binary_search_by(|e| e.0.cmp(&a).then(e.1.cmp(&b)))
            .map(|k| self.entries[k].2)
            .unwrap_or(0.0)
    }

    /// Row-major dense copy.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for &(i, j, v) in &self.entries {
            out[i][j] = v;
            out[j][i] = v;
        }
        out
    }
}

/// Materializes `Lambda(t)` for the whole log.
pub fn slice(log: &EventLog, config: &EstimatorConfig, t: f64) -> Result<SparseSlice> {
    config.validate()?;
    let horizon = log.horizon();
    if !(t > 0.0 && t <= horizon) {
        return Err(IppError::OutOfDomain { t, upper: horizon });
    }
    Ok(slice_unchecked(log, config, t))
}

pub(crate) fn slice_unchecked(log: &EventLog, config: &EstimatorConfig, t: f64) -> SparseSlice {
    let horizon = log.horizon();
    let entries = log
        .pairs()
        .filter_map(|(i, j, times)| {
            let v = estimate_unchecked(times, config, t, horizon);
            (v > 0.0).then_some((i, j, v))
        })
        .collect();
    // pairs() is already sorted by (i, j)
    SparseSlice {
        t,
        n: log.n(),
        entries,
    }
}
