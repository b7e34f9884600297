//! Run configuration shared by the library entry points and the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::constraint::{RhoSchedule, SamplingMode, MASK_FLOOR};
use crate::envelope::EnvelopeParams;
use crate::error::{Error, Result};
use crate::generator::{
    CollapsePlan, FaultyModel, GeneratorState, GuardConfig, ReferenceTracker, ToyCell,
    ToyCellWeights,
};
use crate::lpc::{LpcConfig, WindowKind, VARIANCE_FLOOR};
use crate::signal::{Waveform, DEFAULT_SAMPLE_RATE};

/// Detection threshold at the equal-error point of segment-level envelope
/// excess on `synth_corpus(200, 0.3, 7)`, both collapse kinds pooled.
pub const CALIBRATED_THRESHOLD: f64 = 0.0261;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub sample_rate_hz: u32,
    pub seg_len: usize,
    pub peak_window: usize,
    pub lpf_cutoff_hz: f64,
    pub use_hilbert: bool,
    pub context_pad: usize,
    pub lpc_order: usize,
    pub lpc_frame_len: usize,
    pub lpc_frame_shift: usize,
    pub lpc_window: WindowKind,
    pub rho_schedule: RhoSchedule,
    pub mask_floor: f64,
    pub sigma_floor: f64,
    pub sampling: SamplingMode,
    pub threshold: f64,
    pub seed: u64,
    /// Candidate perturbation relative to reference RMS, in dB.
    pub perturb_db: f64,
    pub receptive_field: usize,
    pub conditioning_len: usize,
    pub hidden: usize,
    /// Weight of the toy cell's logits in the simulated generator.
    pub cell_gain: f64,
    /// Standard deviation of the simulated generator around the reference.
    pub tracker_spread: f64,
}

impl Default for Config {
    fn default() -> Self {
        let env = EnvelopeParams::default();
        let lpc = LpcConfig::default();
        Self {
            sample_rate_hz: DEFAULT_SAMPLE_RATE,
            seg_len: 4000,
            peak_window: env.peak_window,
            lpf_cutoff_hz: env.lpf_cutoff_hz,
            use_hilbert: env.use_hilbert,
            context_pad: env.context_pad,
            lpc_order: lpc.order,
            lpc_frame_len: lpc.frame_len,
            lpc_frame_shift: lpc.frame_shift,
            lpc_window: lpc.window,
            rho_schedule: RhoSchedule::default(),
            mask_floor: MASK_FLOOR,
            sigma_floor: VARIANCE_FLOOR.sqrt(),
            sampling: SamplingMode::Random,
            threshold: CALIBRATED_THRESHOLD,
            seed: 7,
            perturb_db: -30.0,
            receptive_field: 64,
            conditioning_len: 8,
            hidden: 32,
            cell_gain: 0.05,
            tracker_spread: 0.001,
        }
    }
}

impl Config {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Config = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn envelope_params(&self) -> EnvelopeParams {
        EnvelopeParams {
            peak_window: self.peak_window,
            lpf_cutoff_hz: self.lpf_cutoff_hz,
            use_hilbert: self.use_hilbert,
            context_pad: self.context_pad,
        }
    }

    pub fn lpc_config(&self) -> LpcConfig {
        LpcConfig {
            order: self.lpc_order,
            frame_len: self.lpc_frame_len,
            frame_shift: self.lpc_frame_shift,
            window: self.lpc_window,
        }
    }

    pub fn guard_config(&self) -> GuardConfig {
        GuardConfig {
            seg_len: self.seg_len,
            envelope: self.envelope_params(),
            threshold: self.threshold,
            schedule: self.rho_schedule.clone(),
            sigma_floor: self.sigma_floor,
            mask_floor: self.mask_floor,
            mode: self.sampling,
        }
    }

    /// Simulated vocoder: tracks `reference` with the configured spread,
    /// textured by a gated cell drawn from `seed`, with `plans` injected.
    pub fn simulated_vocoder(
        &self,
        reference: &Waveform,
        plans: &[CollapsePlan],
        seed: u64,
    ) -> Result<FaultyModel<ReferenceTracker>> {
        let cell = ToyCell::new(ToyCellWeights::from_seed(
            seed,
            self.receptive_field,
            self.conditioning_len,
            self.hidden,
        ));
        let tracker =
            ReferenceTracker::new(reference, self.tracker_spread)?.with_cell(cell, self.cell_gain);
        FaultyModel::new(tracker, plans, reference)
    }

    /// Fresh generator state with silent history and zero conditioning.
    pub fn generator_state(&self, seed: u64) -> Result<GeneratorState> {
        GeneratorState::new(self.receptive_field, vec![0.0; self.conditioning_len], seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.sample_rate_hz == 0 {
            return bad("sample_rate_hz must be > 0".into());
        }
        if self.seg_len == 0 {
            return bad("seg_len must be > 0".into());
        }
        self.envelope_params().validate(self.sample_rate_hz)?;
        self.lpc_config().validate()?;
        RhoSchedule::new(self.rho_schedule.values().to_vec())?;
        if !(0.0..1.0 / 256.0).contains(&self.mask_floor) {
            return bad(format!(
                "mask_floor {} must lie in [0, 1/256)",
                self.mask_floor
            ));
        }
        if !(self.sigma_floor > 0.0 && self.sigma_floor.is_finite()) {
            return bad(format!("sigma_floor {} must be > 0", self.sigma_floor));
        }
        if self.threshold.is_nan() {
            return bad("threshold is NaN".into());
        }
        if !self.perturb_db.is_finite() {
            return bad("perturb_db must be finite".into());
        }
        if self.receptive_field == 0 || self.hidden == 0 {
            return bad("receptive_field and hidden must be > 0".into());
        }
        if !(self.cell_gain >= 0.0 && self.cell_gain.is_finite()) {
            return bad(format!("cell_gain {} must be >= 0", self.cell_gain));
        }
        if !(self.tracker_spread > 0.0 && self.tracker_spread.is_finite()) {
            return bad(format!(
                "tracker_spread {} must be > 0",
                self.tracker_spread
            ));
        }
        Ok(())
    }
}
