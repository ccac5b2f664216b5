//! Synthetic event logs from inhomogeneous Poisson models.
//!
//! Every pair `i < j` is sampled by thinning from its own ChaCha stream: the
//! master seed fixes the key and the pair's linear index selects the stream,
//! so the output does not depend on how work is split across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{IppError, Result};
use crate::events::{Event, EventLog};

/// A symmetric pairwise intensity `lambda_ij(t)` on `(0, horizon]`.
pub trait IntensityModel: Sync {
    fn n(&self) -> usize;

    fn horizon(&self) -> f64;

    /// `lambda_ij(t)` for `i != j`.
    fn rate(&self, i: usize, j: usize, t: f64) -> f64;

    /// Dominating constant used for thinning.
    fn rate_bound(&self) -> f64;

    /// Average of `lambda_ij` over `(a, b]`. The default uses a 256-point midpoint rule.
    fn mean_rate(&self, i: usize, j: usize, a: f64, b: f64) -> f64 {
        const STEPS: usize = 256;
        let w = (b - a) / STEPS as f64;
        (0..STEPS)
            .map(|k| self.rate(i, j, a + (k as f64 + 0.5) * w))
            .sum::<f64>()
            / STEPS as f64
    }

    /// Lipschitz constant of the intensities in time, when known.
    fn lipschitz(&self) -> Option<f64> {
        None
    }
}

/// Draws one realization of an inhomogeneous Poisson process on `(0, horizon]`.
pub fn sample_inhomogeneous_poisson<F>(
    lambda: F,
    lambda_bound: f64,
    horizon: f64,
    seed: u64,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_thinned(&lambda, lambda_bound, horizon, &mut rng)
}

/// Ogata thinning against a constant dominating rate.
pub fn sample_thinned<F, R>(
    lambda: &F,
    lambda_bound: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: Fn(f64) -> f64 + ?Sized,
    R: Rng + ?Sized,
{
    if !(lambda_bound >= 0.0 && lambda_bound.is_finite()) {
        return Err(IppError::InvalidParameter(format!(
            "dominating bound must be finite and nonnegative, got {lambda_bound}"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(IppError::InvalidParameter(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    if lambda_bound == 0.0 {
        return Ok(Vec::new());
    }
    let gaps = Exp::new(lambda_bound).map_err(|e| IppError::InvalidParameter(e.to_string()))?;
    let mut times = Vec::new();
    let mut t = 0.0;
    loop {
        t += gaps.sample(rng);
        if t > horizon {
            break;
        }
        let value = lambda(t);
        if !(value >= 0.0) || value > lambda_bound {
            return Err(IppError::BoundViolated {
                t,
                value,
                bound: lambda_bound,
            });
        }
        let u: f64 = rng.random();
        if u * lambda_bound < value {
            times.push(t);
        }
    }
    Ok(times)
}

/// Linear index of the pair `i < j` in row-major upper-triangle order.
pub(crate) fn pair_index(n: usize, i: usize, j: usize) -> u64 {
    (i * (2 * n - i - 1) / 2 + (j - i - 1)) as u64
}

/// Simulates every pair of `model` independently.
pub fn simulate_model<M: IntensityModel + ?Sized>(model: &M, seed: u64) -> Result<EventLog> {
    let n = model.n();
    let horizon = model.horizon();
    let bound = model.rate_bound();
    let per_node: Vec<Vec<Event>> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Vec<Event>> {
            let mut out = Vec::new();
            for j in (i + 1)..n {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pair_index(n, i, j));
                let times = sample_thinned(&|t| model.rate(i, j, t), bound, horizon, &mut rng)?;
                out.extend(times.into_iter().map(|t| Event::new(i, j, t)));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    EventLog::new(n, horizon, per_node.into_iter().flatten().collect())
}

/// Two communities whose cross intensity ramps up to the within-community
/// rate, stays merged on `[s1, s2)`, then decays again.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BbmParams {
    /// Community label per node, each 1 or 2.
    pub communities: Vec<u8>,
    pub eta0: f64,
    pub eta1: f64,
    pub s1: f64,
    pub s2: f64,
    pub horizon: f64,
}

impl BbmParams {
    /// First half of the nodes in community 1, second half in community 2.
    pub fn halves(n: usize, eta0: f64, eta1: f64, s1: f64, s2: f64, horizon: f64) -> Self {
        let communities = (0..n).map(|i| if i < n / 2 { 1 } else { 2 }).collect();
        BbmParams {
            communities,
            eta0,
            eta1,
            s1,
            s2,
            horizon,
        }
    }

    /// n = 100, eta0 = 100, eta1 = 10, s1 = 0.3, s2 = 0.7, T = 1.
    pub fn reference() -> Self {
        Self::halves(100, 100.0, 10.0, 0.3, 0.7, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.communities.len() < 2 {
            return Err(IppError::InvalidParameter("need at least two nodes".into()));
        }
        if let Some(z) = self.communities.iter().find(|&&z| z != 1 && z != 2) {
            return Err(IppError::InvalidParameter(format!(
                "community labels must be 1 or 2, got {z}"
            )));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite() && self.eta1 > 0.0 && self.eta1.is_finite()) {
            return Err(IppError::InvalidParameter(
                "eta0 and eta1 must be positive".into(),
            ));
        }
        if !(0.0 < self.s1
            && self.s1 < self.s2
            && self.s2 < self.horizon
            && self.horizon.is_finite())
        {
            return Err(IppError::InvalidParameter(format!(
                "need 0 < s1 < s2 < T, got s1 = {}, s2 = {}, T = {}",
                self.s1, self.s2, self.horizon
            )));
        }
        Ok(())
    }

    /// Intensity between nodes of different communities.
    pub fn cross_rate(&self, t: f64) -> f64 {
        if t < self.s1 {
            self.eta0 * (self.eta1 * (t - self.s1)).exp()
        } else if t < self.s2 {
            self.eta0
        } else {
            self.eta0 * (-self.eta1 * (t - self.s2)).exp()
        }
    }

    fn cross_integral(&self, a: f64, b: f64) -> f64 {
        let (eta0, eta1, s1, s2) = (self.eta0, self.eta1, self.s1, self.s2);
        let mut total = 0.0;
        let (lo, hi) = (a.min(s1), b.min(s1));
        if hi > lo {
            total += eta0 / eta1 * ((eta1 * (hi - s1)).exp() - (eta1 * (lo - s1)).exp());
        }
        let (lo, hi) = (a.max(s1), b.min(s2));
        if hi > lo {
            total += eta0 * (hi - lo);
        }
        let (lo, hi) = (a.max(s2), b.max(s2));
        if hi > lo {
            total += eta0 / eta1 * ((-eta1 * (lo - s2)).exp() - (-eta1 * (hi - s2)).exp());
        }
        total
    }
}

impl IntensityModel for BbmParams {
    fn n(&self) -> usize {
        self.communities.len()
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, i: usize, j: usize, t: f64) -> f64 {
        if self.communities[i] == self.communities[j] {
            self.eta0
        } else {
            self.cross_rate(t)
        }
    }

    // The cross intensity peaks at eta0 on [s1, s2).
    fn rate_bound(&self) -> f64 {
        self.eta0
    }

    fn mean_rate(&self, i: usize, j: usize, a: f64, b: f64) -> f64 {
        if self.communities[i] == self.communities[j] {
            self.eta0
        } else {
            self.cross_integral(a, b) / (b - a)
        }
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.eta0 * self.eta1)
    }
}

pub fn simulate_bbm(params: &BbmParams, seed: u64) -> Result<EventLog> {
    params.validate()?;
    simulate_model(params, seed)
}

/// Common intensity `scale * (2 + cos t)` on every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CosineParams {
    pub n: usize,
    pub scale: f64,
    pub horizon: f64,
}

impl CosineParams {
    /// n = 100, scale = 0.7, T = 4 pi.
    pub fn reference() -> Self {
        CosineParams {
            n: 100,
            scale: 0.7,
            horizon: 4.0 * std::f64::consts::PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(IppError::InvalidParameter("need at least two nodes".into()));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(IppError::InvalidParameter(format!(
                "scale must be positive, got {}",
                self.scale
            )));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(IppError::InvalidParameter(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn common_rate(&self, t: f64) -> f64 {
        self.scale * (2.0 + t.cos())
    }
}

impl IntensityModel for CosineParams {
    fn n(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, _i: usize, _j: usize, t: f64) -> f64 {
        self.common_rate(t)
    }

    fn rate_bound(&self) -> f64 {
        3.0 * self.scale
    }

    fn mean_rate(&self, _i: usize, _j: usize, a: f64, b: f64) -> f64 {
        self.scale * (2.0 + (b.sin() - a.sin()) / (b - a))
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(self.scale)
    }
}

pub fn simulate_cosine(params: &CosineParams, seed: u64) -> Result<EventLog> {
    params.validate()?;
    simulate_model(params, seed)
}

/// Homogeneous intensity `rate` on every pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantParams {
    pub n: usize,
    pub rate: f64,
    pub horizon: f64,
}

impl IntensityModel for ConstantParams {
    fn n(&self) -> usize {
        self.n
    }

    fn horizon(&self) -> f64 {
        self.horizon
    }

    fn rate(&self, _i: usize, _j: usize, _t: f64) -> f64 {
        self.rate
    }

    fn rate_bound(&self) -> f64 {
        self.rate
    }

    fn mean_rate(&self, _i: usize, _j: usize, _a: f64, _b: f64) -> f64 {
        self.rate
    }

    fn lipschitz(&self) -> Option<f64> {
        Some(0.0)
    }
}
