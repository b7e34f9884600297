//! Autoregressive sample generation over mu-law levels.
//!
//! A [`SampleModel`] maps the generator state (recent history plus a
//! conditioning vector) to a distribution over the next code. Generation
//! draws one code per step, decodes it and pushes it into the history, with
//! an optional LPC mask fused into each step's distribution.

mod fault;
mod guard;
mod toy;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::constraint::{
    apply_constraint, gaussian_mask_with_floor, sample_from, CategoricalDistribution, SamplingMode,
    MASK_FLOOR,
};
use crate::error::{Error, Result};
use crate::lpc::{predict_mean, LpcAnalysis, VARIANCE_FLOOR};
use crate::signal::mulaw_decode;

pub use fault::{
    faulty_generate, impulse_layout, CollapseKind, CollapsePlan, FaultyModel, Impulse,
    ReferenceTracker,
};
pub use guard::{generate_with_guard, Attempt, GuardConfig, GuardReport, SegmentOutcome};
pub use toy::{toy_distribution, ToyCell, ToyCellWeights};

pub const DEFAULT_RECEPTIVE_FIELD: usize = 64;
pub const DEFAULT_CONDITIONING_LEN: usize = 8;

/// Everything a generation stream carries between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorState {
    history: Vec<f64>,
    conditioning: Vec<f64>,
    rng: ChaCha8Rng,
    position: usize,
}

/// Full copy of a [`GeneratorState`], taken at a segment boundary.
pub type Checkpoint = GeneratorState;

impl GeneratorState {
    /// Zero-filled history of `receptive_field` samples at position 0.
    pub fn new(receptive_field: usize, conditioning: Vec<f64>, seed: u64) -> Result<Self> {
        if receptive_field == 0 {
            return Err(Error::InvalidParameter(
                "receptive field must be >= 1".into(),
            ));
        }
        Ok(Self {
            history: vec![0.0; receptive_field],
            conditioning,
            rng: ChaCha8Rng::seed_from_u64(seed),
            position: 0,
        })
    }

    /// Oldest sample first, newest last.
    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn conditioning(&self) -> &[f64] {
        &self.conditioning
    }

    pub fn position(&self) -> usize {
        self.position
    }

    pub fn receptive_field(&self) -> usize {
        self.history.len()
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Appends a decoded sample and advances the position.
    pub fn push(&mut self, sample: f64) {
        self.history.copy_within(1.., 0);
        let last = self.history.len() - 1;
        self.history[last] = sample;
        self.position += 1;
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.clone()
    }

    pub fn restore(&mut self, checkpoint: &Checkpoint) {
        self.clone_from(checkpoint);
    }
}

/// Next-sample distribution given the stream state.
pub trait SampleModel {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution>;
}

impl<M: SampleModel + ?Sized> SampleModel for &M {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution> {
        (**self).distribution(state)
    }
}

impl<M: SampleModel + ?Sized> SampleModel for Box<M> {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution> {
        (**self).distribution(state)
    }
}

/// LPC constraint applied at every step of a generation call.
#[derive(Debug, Clone, Copy)]
pub struct MaskSource<'a> {
    pub analysis: &'a LpcAnalysis,
    pub rho: f64,
    /// Lower bound on the mask standard deviation.
    pub sigma_floor: f64,
    pub mask_floor: f64,
}

impl<'a> MaskSource<'a> {
    pub fn new(analysis: &'a LpcAnalysis, rho: f64) -> Self {
        Self {
            analysis,
            rho,
            sigma_floor: VARIANCE_FLOOR.sqrt(),
            mask_floor: MASK_FLOOR,
        }
    }
}

/// Draws `length` samples, updating `state` in place.
pub fn generate_segment<M: SampleModel + ?Sized>(
    model: &M,
    state: &mut GeneratorState,
    length: usize,
    mask: Option<&MaskSource<'_>>,
    mode: SamplingMode,
) -> Result<Vec<f64>> {
    if length == 0 {
        return Err(Error::InvalidParameter(
            "segment length must be positive".into(),
        ));
    }
    if let Some(m) = mask {
        let end = state.position + length;
        if end > m.analysis.source_len {
            return Err(Error::InvalidParameter(format!(
                "lpc analysis covers {} samples, generation needs {end}",
                m.analysis.source_len
            )));
        }
        if m.analysis.config.order > state.receptive_field() {
            return Err(Error::InvalidParameter(format!(
                "lpc order {} exceeds receptive field {}",
                m.analysis.config.order,
                state.receptive_field()
            )));
        }
    }

    let mut out = Vec::with_capacity(length);
    for _ in 0..length {
        let mut p = model.distribution(state)?;
        if let Some(m) = mask {
            let frame = m.analysis.frame_for_sample(state.position);
            let history = &state.history[state.history.len() - frame.order()..];
            let mu = predict_mean(frame, history)?;
            let sigma = frame.residual_variance.sqrt().max(m.sigma_floor);
            let g = gaussian_mask_with_floor(mu, sigma, m.mask_floor)?;
            p = apply_constraint(&p, &g, m.rho)?;
        }
        let sample = mulaw_decode(sample_from(&p, mode, &mut state.rng));
        state.push(sample);
        out.push(sample);
    }
    Ok(out)
}
