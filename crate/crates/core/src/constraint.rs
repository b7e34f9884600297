//! LPC probability mask over mu-law levels and its fusion with a generator
//! distribution: `out[b] ∝ p[b] * mask[b]^rho`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mulaw_levels, MuLawCode, MULAW_LEVELS};

/// Smallest mask probability.
pub const MASK_FLOOR: f64 = 1e-12;

/// Probability mass over the 256 mu-law levels.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution {
    probs: Vec<f64>,
}

impl CategoricalDistribution {
    /// Normalizes nonnegative weights. Errors if any weight is negative or
    /// non-finite, or if the total is zero.
    pub fn from_weights(mut weights: Vec<f64>) -> Result<Self> {
        if weights.len() != MULAW_LEVELS {
            return Err(Error::LengthMismatch {
                left: weights.len(),
                right: MULAW_LEVELS,
            });
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidParameter(
                "distribution weights must be finite and nonnegative".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::EmptyDistribution);
        }
        for w in &mut weights {
            *w /= total;
        }
        Ok(Self { probs: weights })
    }

    /// Softmax of unnormalized log-probabilities. `-inf` entries get zero mass.
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::EmptyDistribution);
        }
        Self::from_weights(logits.iter().map(|l| (l - max).exp()).collect())
    }

    pub fn uniform() -> Self {
        Self {
            probs: vec![1.0 / MULAW_LEVELS as f64; MULAW_LEVELS],
        }
    }

    pub fn point_mass(code: MuLawCode) -> Self {
        let mut probs = vec![0.0; MULAW_LEVELS];
        probs[code.index()] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Most probable code, lowest index on ties.
    pub fn argmax(&self) -> MuLawCode {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        MuLawCode::from(best as u8)
    }
}

/// Discretized Gaussian centered on the LPC prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMask {
    probs: Vec<f64>,
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianMask {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Gaussian density at each mu-law decode level, floored at [`MASK_FLOOR`]
/// and normalized. `sigma` is a standard deviation.
pub fn gaussian_mask(mu: f64, sigma: f64) -> Result<GaussianMask> {
    gaussian_mask_with_floor(mu, sigma, MASK_FLOOR)
}

/// [`gaussian_mask`] with an explicit probability floor in `[0, 1/256)`.
pub fn gaussian_mask_with_floor(mu: f64, sigma: f64, floor: f64) -> Result<GaussianMask> {
    if !(0.0..1.0 / MULAW_LEVELS as f64).contains(&floor) {
        return Err(Error::InvalidParameter(format!(
            "mask floor {floor} must lie in [0, 1/256)"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "gaussian mask needs finite mu and sigma > 0, got mu = {mu}, sigma = {sigma}"
        )));
    }
    let logp = mask_log_density(mu, sigma);
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p = (*p / total).max(floor);
    }
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(GaussianMask { probs, mu, sigma })
}

/// Unnormalized log-density `-(d(b) - mu)^2 / (2 sigma^2)` before flooring.
pub fn mask_log_density(mu: f64, sigma: f64) -> Vec<f64> {
    let two_var = 2.0 * sigma * sigma;
    mulaw_levels()
        .iter()
        .map(|d| -(d - mu).powi(2) / two_var)
        .collect()
}

/// Fuses a generator distribution with a mask raised to `rho`, in the log domain.
pub fn apply_constraint(
    p: &CategoricalDistribution,
    mask: &GaussianMask,
    rho: f64,
) -> Result<CategoricalDistribution> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "rho must be >= 0, got {rho}"
        )));
    }
    let logits: Vec<f64> = p
        .probs
        .iter()
        .zip(&mask.probs)
        .map(|(&pb, &mb)| {
            if pb > 0.0 && rho == 0.0 {
                pb.ln()
            } else if pb > 0.0 {
                pb.ln() + rho * mb.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    CategoricalDistribution::from_logits(&logits)
}

/// Increasing list of control factors tried in turn on re-detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RhoSchedule(Vec<f64>);

impl RhoSchedule {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidParameter("rho schedule is empty".into()));
        }
        if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::InvalidParameter(
                "rho schedule values must be positive".into(),
            ));
        }
        if values.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "rho schedule must be strictly increasing".into(),
            ));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

impl Default for RhoSchedule {
    fn default() -> Self {
        Self(vec![0.01, 0.1, 1.0])
    }
}

impl TryFrom<Vec<f64>> for RhoSchedule {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<RhoSchedule> for Vec<f64> {
    fn from(s: RhoSchedule) -> Self {
        s.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Random,
    Greedy,
}

/// Inverse-CDF draw, or argmax in greedy mode.
pub fn sample_from<R: Rng + ?Sized>(
    p: &CategoricalDistribution,
    mode: SamplingMode,
    rng: &mut R,
) -> MuLawCode {
    if mode == SamplingMode::Greedy {
        return p.argmax();
    }
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last_nonzero = 0;
    for (i, &pb) in p.probs.iter().enumerate() {
        if pb > 0.0 {
            acc += pb;
            last_nonzero = i;
            if u < acc {
                return MuLawCode::from(i as u8);
            }
        }
    }
    // Only reachable when rounding leaves the cumulative sum just below u.
    MuLawCode::from(last_nonzero as u8)
}
