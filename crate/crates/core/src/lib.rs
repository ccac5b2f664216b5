//! Continuous-time node trajectories for dynamic networks.
//!
//! Pairwise event times are smoothed into intensity estimates, a shared
//! `d`-dimensional subspace is learned from the unfolded matrix of intensity
//! slices by truncated SVD, and each node's intensity profile is projected
//! onto that subspace at any query time.
//!
//! ```no_run
//! use ipp_core::prelude::*;
//!
//! let log = simulate_bbm(&BbmParams::reference(), 7).unwrap();
//! let model = fit(&log, &EstimatorConfig::histogram(20), &FitOptions::new(20, 2)).unwrap();
//! let path = project_node(&model, &log, 0, &[0.1, 0.5, 0.9]).unwrap();
//! println!("{:?}", path.samples);
//! ```

pub mod baselines;
pub mod error;
pub mod evaluate;
pub mod events;
pub mod intensity;
pub mod reduce;
pub mod simulate;
pub mod subspace;
pub mod trajectory;

pub use error::{IppError, Result};

pub mod prelude {
    pub use crate::error::{IppError, Result};
    pub use crate::events::{load_events, read_events, Event, EventLog, LoadOptions};
    pub use crate::intensity::{estimate_edge, slice, EstimatorConfig, KernelShape, SparseSlice};
    pub use crate::simulate::{
        simulate_bbm, simulate_cosine, BbmParams, CosineParams, IntensityModel,
    };
    pub use crate::subspace::{
        build_unfolded, fit, scree, truncated_svd, EmbeddingModel, FitOptions, SvdOptions,
    };
    pub use crate::trajectory::{
        project_node, project_out_of_sample, project_snapshot, Trajectory,
    };
}
