//! Segment-wise generation with collapse detection and constrained retries.

use serde::{Deserialize, Serialize};

use super::{generate_segment, GeneratorState, MaskSource, SampleModel};
use crate::constraint::{RhoSchedule, SamplingMode, MASK_FLOOR};
use crate::detector::{DetectionReport, SegmentVerdict};
use crate::envelope::{envelope_excess, envelope_of_span, extract_envelope, EnvelopeParams};
use crate::error::{Error, Result};
use crate::lpc::{LpcAnalysis, VARIANCE_FLOOR};
use crate::signal::{segments_of, SegmentSpec, Waveform};

#[derive(Debug, Clone, PartialEq)]
pub struct GuardConfig {
    pub seg_len: usize,
    pub envelope: EnvelopeParams,
    /// Segments whose envelope excess is above this are regenerated.
    pub threshold: f64,
    pub schedule: RhoSchedule,
    pub sigma_floor: f64,
    pub mask_floor: f64,
    pub mode: SamplingMode,
}

impl Default for GuardConfig {
    fn default() -> Self {
        Self {
            seg_len: 4000,
            envelope: EnvelopeParams::default(),
            threshold: f64::INFINITY,
            schedule: RhoSchedule::default(),
            sigma_floor: VARIANCE_FLOOR.sqrt(),
            mask_floor: MASK_FLOOR,
            mode: SamplingMode::Random,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub rho: f64,
    pub statistic: f64,
}

/// What happened to one segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentOutcome {
    pub start: usize,
    pub length: usize,
    /// Statistic of the accepted samples.
    pub statistic: f64,
    /// Whether the unconstrained attempt was flagged.
    pub flagged: bool,
    /// Control factor of the accepted attempt, `None` if never regenerated.
    pub rho_used: Option<f64>,
    /// Accepted while still above threshold after the last control factor.
    pub residual: bool,
    pub initial_statistic: f64,
    pub retries: Vec<Attempt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuardReport {
    pub threshold: f64,
    pub segments: Vec<SegmentOutcome>,
}

impl GuardReport {
    pub fn regenerated(&self) -> usize {
        self.segments
            .iter()
            .filter(|s| s.rho_used.is_some())
            .count()
    }

    /// Verdicts on the accepted output.
    pub fn final_detection(&self) -> DetectionReport {
        DetectionReport::from_verdicts(
            self.segments
                .iter()
                .map(|s| {
                    SegmentVerdict::new(
                        SegmentSpec::new(s.start, s.length),
                        s.statistic,
                        self.threshold,
                    )
                })
                .collect(),
        )
    }
}

/// Generates `total_len` samples segment by segment. Each segment is checked
/// against the reference envelope; a flagged segment is rewound to its
/// starting checkpoint and regenerated under the LPC mask with each control
/// factor of the schedule in turn. After the last factor the segment is
/// accepted regardless and marked residual.
pub fn generate_with_guard<M: SampleModel + ?Sized>(
    model: &M,
    state: &mut GeneratorState,
    total_len: usize,
    reference: &Waveform,
    analysis: &LpcAnalysis,
    cfg: &GuardConfig,
) -> Result<(Waveform, GuardReport)> {
    if reference.len() < total_len {
        return Err(Error::InvalidParameter(format!(
            "reference has {} samples, {total_len} requested",
            reference.len()
        )));
    }
    if analysis.source_len < total_len {
        return Err(Error::InvalidParameter(format!(
            "lpc analysis covers {} samples, {total_len} requested",
            analysis.source_len
        )));
    }
    if cfg.threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    cfg.envelope.validate(reference.sample_rate_hz())?;

    if state.position() != 0 {
        return Err(Error::InvalidParameter(format!(
            "guarded generation must start at position 0, state is at {}",
            state.position()
        )));
    }

    let rate = reference.sample_rate_hz();
    let mut out: Vec<f64> = Vec::with_capacity(total_len);
    let mut outcomes = Vec::new();

    for seg in segments_of(total_len, cfg.seg_len)? {
        let ref_env = extract_envelope(reference, seg, &cfg.envelope)?;
        let statistic = |out: &[f64]| -> Result<f64> {
            let env = envelope_of_span(out, rate, seg, &cfg.envelope)?;
            envelope_excess(&env, &ref_env)
        };

        let checkpoint = state.checkpoint();
        let samples = generate_segment(model, state, seg.length, None, cfg.mode)?;
        out.extend_from_slice(&samples);
        let initial = statistic(&out)?;
        let mut outcome = SegmentOutcome {
            start: seg.start,
            length: seg.length,
            statistic: initial,
            flagged: initial > cfg.threshold,
            rho_used: None,
            residual: false,
            initial_statistic: initial,
            retries: Vec::new(),
        };

        if outcome.flagged {
            for &rho in cfg.schedule.values() {
                state.restore(&checkpoint);
                out.truncate(seg.start);
                let mask = MaskSource {
                    analysis,
                    rho,
                    sigma_floor: cfg.sigma_floor,
                    mask_floor: cfg.mask_floor,
                };
                let samples = generate_segment(model, state, seg.length, Some(&mask), cfg.mode)?;
                out.extend_from_slice(&samples);
                let s = statistic(&out)?;
                outcome.retries.push(Attempt { rho, statistic: s });
                outcome.statistic = s;
                outcome.rho_used = Some(rho);
                if s <= cfg.threshold {
                    break;
                }
            }
            outcome.residual = outcome.statistic > cfg.threshold;
        }
        outcomes.push(outcome);
    }

    Ok((
        Waveform::from_clipped(out, rate)?,
        GuardReport {
            threshold: cfg.threshold,
            segments: outcomes,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::super::{CollapseKind, CollapsePlan, FaultyModel, ReferenceTracker};
    use super::*;
    use crate::lpc::{analyze_reference, LpcConfig};
    use std::f64::consts::PI;

    fn reference(len: usize) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| {
                    let t = n as f64 / 22050.0;
                    let am = 0.6 + 0.4 * (2.0 * PI * 3.0 * t).sin();
                    0.3 * am * ((2.0 * PI * 150.0 * t).sin() + 0.4 * (2.0 * PI * 300.0 * t).sin())
                        / 1.4
                })
                .collect(),
            22050,
        )
        .unwrap()
    }

    fn state() -> GeneratorState {
        GeneratorState::new(64, vec![0.0; 8], 17).unwrap()
    }

    #[test]
    fn clean_generator_is_never_rewound() {
        let r = reference(16000);
        let a = analyze_reference(&r, &LpcConfig::default()).unwrap();
        let model = ReferenceTracker::new(&r, 0.001).unwrap();
        let cfg = GuardConfig {
            threshold: 0.08,
            ..Default::default()
        };
        let (out, report) = generate_with_guard(&model, &mut state(), 16000, &r, &a, &cfg).unwrap();
        assert!(report
            .segments
            .iter()
            .all(|s| s.rho_used.is_none() && !s.flagged));
        let mut s = state();
        let plain = generate_segment(&model, &mut s, 16000, None, SamplingMode::Random).unwrap();
        assert_eq!(out.samples(), &plain[..]);
    }

    #[test]
    fn infinite_threshold_is_a_no_op() {
        let r = reference(9000);
        let a = analyze_reference(&r, &LpcConfig::default()).unwrap();
        let plans = [CollapsePlan {
            kind: CollapseKind::TypeI,
            region: SegmentSpec::new(4500, 1500),
            amplitude_factor: 3.0,
            impulse_count: 0,
            seed: 1,
        }];
        let model =
            FaultyModel::new(ReferenceTracker::new(&r, 0.001).unwrap(), &plans, &r).unwrap();
        let (out, report) =
            generate_with_guard(&model, &mut state(), 9000, &r, &a, &GuardConfig::default())
                .unwrap();
        let plain =
            generate_segment(&model, &mut state(), 9000, None, SamplingMode::Random).unwrap();
        assert_eq!(out.samples(), &plain[..]);
        assert_eq!(report.regenerated(), 0);
    }

    #[test]
    fn injected_burst_is_regenerated() {
        let r = reference(16000);
        let a = analyze_reference(&r, &LpcConfig::default()).unwrap();
        let plans = [CollapsePlan {
            kind: CollapseKind::TypeI,
            region: SegmentSpec::new(4500, 2000),
            amplitude_factor: 3.0,
            impulse_count: 0,
            seed: 1,
        }];
        let model =
            FaultyModel::new(ReferenceTracker::new(&r, 0.001).unwrap(), &plans, &r).unwrap();
        let cfg = GuardConfig {
            threshold: 0.08,
            ..Default::default()
        };
        let (_, report) = generate_with_guard(&model, &mut state(), 16000, &r, &a, &cfg).unwrap();
        let seg = &report.segments[1];
        assert!(seg.flagged);
        assert!(seg.rho_used.is_some());
        assert!(!seg.residual, "{seg:?}");
        assert!(seg.statistic <= cfg.threshold);
        for (i, s) in report.segments.iter().enumerate() {
            if i != 1 {
                assert!(s.rho_used.is_none(), "segment {i}: {s:?}");
            }
        }
    }

    #[test]
    fn exhausted_schedule_marks_residual() {
        let r = reference(8000);
        let a = analyze_reference(&r, &LpcConfig::default()).unwrap();
        let model = ReferenceTracker::new(&r, 0.001).unwrap();
        let cfg = GuardConfig {
            threshold: -1.0,
            ..Default::default()
        };
        let (_, report) = generate_with_guard(&model, &mut state(), 8000, &r, &a, &cfg).unwrap();
        for s in &report.segments {
            assert!(s.flagged && s.residual);
            assert_eq!(s.rho_used, Some(1.0));
            assert_eq!(s.retries.len(), 3);
        }
        assert!(report.final_detection().utterance_flagged);
    }

    #[test]
    fn rejects_short_reference() {
        let r = reference(3000);
        let a = analyze_reference(&r, &LpcConfig::default()).unwrap();
        let model = ReferenceTracker::new(&r, 0.001).unwrap();
        assert!(
            generate_with_guard(&model, &mut state(), 4000, &r, &a, &GuardConfig::default())
                .is_err()
        );
    }
}
