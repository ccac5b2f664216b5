//! Subspace learning: the unfolded intensity matrix and its leading left
//! singular vectors.

mod lanczos;
mod model;
mod unfolded;

pub use lanczos::{
    apply_sign_convention, truncated_svd, LinearOperator, SvdMethod, SvdOptions, SvdResult,
};
pub use model::{
    fit, fit_unfolded, scree, scree_from_values, spectrum, EmbeddingModel, FitDiagnostics,
    FitOptions, ScreeEntry, ScreeReport, FLAT_SPECTRUM_RATIO,
};
pub use unfolded::{build_unfolded, midpoint_grid, CsrMatrix, UnfoldedMatrix};
