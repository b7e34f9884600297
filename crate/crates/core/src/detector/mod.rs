//! Collapse statistics, thresholded verdicts and detection-error-tradeoff
//! evaluation over labeled corpora.

mod corpus;
mod det;

use serde::{Deserialize, Serialize};

use crate::envelope::{envelope_excess, extract_envelope, EnvelopeParams};
use crate::error::{Error, Result};
use crate::signal::{segments_of, SegmentSpec, Waveform};

pub use corpus::{
    random_collapse_plan, read_corpus, synth_corpus, synth_reference, write_corpus, CorpusLabels,
    Label, LabeledPair, RegionLabel, UtteranceLabel, CORPUS_PERTURB_DB, LABELS_FILE,
};
pub use det::{
    det_curve, evaluate_det, score_corpus, DetCurve, DetPoint, Level, ScoredItem, ThresholdGrid,
    TypeFilter,
};

/// Frame length and shift of the max-power baseline.
pub const POWER_FRAME_LEN: usize = 512;
pub const POWER_FRAME_SHIFT: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentVerdict {
    pub start: usize,
    pub length: usize,
    pub statistic: f64,
    pub flagged: bool,
    pub threshold: f64,
}

impl SegmentVerdict {
    pub fn new(segment: SegmentSpec, statistic: f64, threshold: f64) -> Self {
        Self {
            start: segment.start,
            length: segment.length,
            statistic,
            flagged: statistic > threshold,
            threshold,
        }
    }

    pub fn segment(&self) -> SegmentSpec {
        SegmentSpec::new(self.start, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub verdicts: Vec<SegmentVerdict>,
    /// Set when any segment is flagged.
    pub utterance_flagged: bool,
}

impl DetectionReport {
    pub fn from_verdicts(verdicts: Vec<SegmentVerdict>) -> Self {
        let utterance_flagged = verdicts.iter().any(|v| v.flagged);
        Self {
            verdicts,
            utterance_flagged,
        }
    }

    pub fn flagged_count(&self) -> usize {
        self.verdicts.iter().filter(|v| v.flagged).count()
    }
}

/// A per-segment and per-utterance collapse score; larger means more collapsed.
pub trait CollapseStatistic: Sync {
    fn segment_scores(
        &self,
        candidate: &Waveform,
        reference: &Waveform,
    ) -> Result<Vec<(SegmentSpec, f64)>>;

    fn utterance_score(&self, candidate: &Waveform, reference: &Waveform) -> Result<f64>;
}

/// Envelope excess of candidate over reference, per detection segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvStatistic {
    pub seg_len: usize,
    pub params: EnvelopeParams,
}

impl CollapseStatistic for EnvStatistic {
    fn segment_scores(
        &self,
        candidate: &Waveform,
        reference: &Waveform,
    ) -> Result<Vec<(SegmentSpec, f64)>> {
        candidate.ensure_compatible(reference)?;
        segments_of(candidate.len(), self.seg_len)?
            .into_iter()
            .map(|seg| {
                let c = extract_envelope(candidate, seg, &self.params)?;
                let r = extract_envelope(reference, seg, &self.params)?;
                Ok((seg, envelope_excess(&c, &r)?))
            })
            .collect()
    }

    /// Largest segment score, so an utterance is flagged iff any segment is.
    fn utterance_score(&self, candidate: &Waveform, reference: &Waveform) -> Result<f64> {
        let scores = self.segment_scores(candidate, reference)?;
        if scores.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(scores
            .iter()
            .map(|(_, s)| *s)
            .fold(f64::NEG_INFINITY, f64::max))
    }
}

/// Difference of maximum frame powers. Per segment, the same statistic is
/// computed on the segment span alone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPowStatistic {
    pub seg_len: usize,
}

impl CollapseStatistic for MaxPowStatistic {
    fn segment_scores(
        &self,
        candidate: &Waveform,
        reference: &Waveform,
    ) -> Result<Vec<(SegmentSpec, f64)>> {
        candidate.ensure_compatible(reference)?;
        segments_of(candidate.len(), self.seg_len)?
            .into_iter()
            .map(|seg| {
                let s = max_pow_difference(candidate.span(seg)?, reference.span(seg)?)?;
                Ok((seg, s))
            })
            .collect()
    }

    fn utterance_score(&self, candidate: &Waveform, reference: &Waveform) -> Result<f64> {
        max_pow_statistic(candidate, reference)
    }
}

/// Envelope-based verdict for every detection segment.
pub fn detect(
    candidate: &Waveform,
    reference: &Waveform,
    seg_len: usize,
    params: &EnvelopeParams,
    threshold: f64,
) -> Result<DetectionReport> {
    if threshold.is_nan() {
        return Err(Error::InvalidParameter("threshold is NaN".into()));
    }
    let stat = EnvStatistic {
        seg_len,
        params: *params,
    };
    let verdicts = stat
        .segment_scores(candidate, reference)?
        .into_iter()
        .map(|(seg, s)| SegmentVerdict::new(seg, s, threshold))
        .collect();
    Ok(DetectionReport::from_verdicts(verdicts))
}

/// Mean-square power of each 512-sample frame (shift 128). Inputs shorter
/// than one frame form a single frame.
pub fn frame_powers(x: &[f64]) -> Vec<f64> {
    if x.len() <= POWER_FRAME_LEN {
        return vec![x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64];
    }
    let count = (x.len() - POWER_FRAME_LEN) / POWER_FRAME_SHIFT + 1;
    (0..count)
        .map(|k| {
            let frame = &x[k * POWER_FRAME_SHIFT..k * POWER_FRAME_SHIFT + POWER_FRAME_LEN];
            frame.iter().map(|v| v * v).sum::<f64>() / POWER_FRAME_LEN as f64
        })
        .collect()
}

fn max_pow_difference(candidate: &[f64], reference: &[f64]) -> Result<f64> {
    if candidate.len() != reference.len() {
        return Err(Error::LengthMismatch {
            left: candidate.len(),
            right: reference.len(),
        });
    }
    if candidate.is_empty() {
        return Err(Error::EmptyInput);
    }
    let max = |x: &[f64]| {
        frame_powers(x)
            .into_iter()
            .fold(f64::NEG_INFINITY, f64::max)
    };
    Ok(max(candidate) - max(reference))
}

/// Maximum frame power of the candidate minus that of the reference.
pub fn max_pow_statistic(candidate: &Waveform, reference: &Waveform) -> Result<f64> {
    candidate.ensure_compatible(reference)?;
    max_pow_difference(candidate.samples(), reference.samples())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{faulty_generate, CollapseKind, CollapsePlan};
    use std::f64::consts::PI;

    fn tone(len: usize, amp: f64) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| amp * (2.0 * PI * 200.0 * n as f64 / 22050.0).sin())
                .collect(),
            22050,
        )
        .unwrap()
    }

    #[test]
    fn identical_inputs_are_never_flagged() {
        let r = tone(10000, 0.3);
        let report = detect(&r, &r, 4000, &EnvelopeParams::default(), 1e-9).unwrap();
        assert_eq!(report.verdicts.len(), 3);
        assert!(!report.utterance_flagged);
        assert!(report.verdicts.iter().all(|v| v.statistic == 0.0));
    }

    #[test]
    fn type_one_burst_is_flagged() {
        let r = tone(12000, 0.3);
        let plan = CollapsePlan {
            kind: CollapseKind::TypeI,
            region: SegmentSpec::new(5000, 1500),
            amplitude_factor: 3.0,
            impulse_count: 0,
            seed: 2,
        };
        let c = faulty_generate(&r, Some(&plan), -30.0, 5).unwrap();
        let report = detect(&c, &r, 4000, &EnvelopeParams::default(), 0.1).unwrap();
        assert!(report.verdicts[1].flagged);
        assert!(!report.verdicts[0].flagged && !report.verdicts[2].flagged);
        assert!(report.utterance_flagged);

        let none = detect(&c, &r, 4000, &EnvelopeParams::default(), f64::INFINITY).unwrap();
        assert_eq!(none.flagged_count(), 0);
    }

    #[test]
    fn detect_rejects_mismatch() {
        let r = tone(100, 0.3);
        let p = EnvelopeParams::default();
        assert!(detect(&tone(99, 0.3), &r, 4000, &p, 0.1).is_err());
        let other_rate = Waveform::new(r.samples().to_vec(), 16000).unwrap();
        assert!(matches!(
            detect(&other_rate, &r, 4000, &p, 0.1),
            Err(Error::RateMismatch { .. })
        ));
    }

    #[test]
    fn max_pow_basics() {
        let r = tone(5000, 0.3);
        assert_eq!(max_pow_statistic(&r, &r).unwrap(), 0.0);
        let doubled = Waveform::new(r.samples().iter().map(|v| 2.0 * v).collect(), 22050).unwrap();
        let ref_max = frame_powers(r.samples()).into_iter().fold(0.0, f64::max);
        let s = max_pow_statistic(&doubled, &r).unwrap();
        assert!((s - 3.0 * ref_max).abs() < 1e-12);
        assert!(max_pow_statistic(&tone(10, 0.1), &r).is_err());
        assert_eq!(frame_powers(&[0.5; 1000]).len(), (1000 - 512) / 128 + 1);
        assert_eq!(frame_powers(&[0.5; 100]), vec![0.25]);
    }

    #[test]
    fn max_pow_misses_sparse_impulses() {
        // Three one-sample impulses vs a type-I burst of the same peak amplitude.
        let r = tone(8192, 0.3);
        let peak = 0.9;
        let mut impulses = r.samples().to_vec();
        for i in [3000, 3100, 3200] {
            impulses[i] = peak;
        }
        let mut burst = r.samples().to_vec();
        for (k, v) in burst[3000..4500].iter_mut().enumerate() {
            *v = if k % 2 == 0 { peak } else { -peak };
        }
        let w = |x: Vec<f64>| Waveform::new(x, 22050).unwrap();
        let s_imp = max_pow_statistic(&w(impulses), &r).unwrap();
        let s_burst = max_pow_statistic(&w(burst), &r).unwrap();
        // Oracle: the impulses add at most 3 * 0.9^2 / 512 to one frame's power.
        assert!(s_imp <= 3.0 * peak * peak / 512.0 + 1e-12);
        assert!(s_imp < 0.05 * s_burst, "{s_imp} vs {s_burst}");
    }

    #[test]
    fn flagging_is_monotone_in_threshold() {
        let r = tone(12000, 0.3);
        let c = faulty_generate(&r, None, -20.0, 3).unwrap();
        let p = EnvelopeParams::default();
        let lo = detect(&c, &r, 2000, &p, 0.005).unwrap();
        let hi = detect(&c, &r, 2000, &p, 0.02).unwrap();
        for (a, b) in lo.verdicts.iter().zip(&hi.verdicts) {
            assert!(a.flagged || !b.flagged);
        }
    }
}
