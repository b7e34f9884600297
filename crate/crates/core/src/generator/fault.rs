//! Synthetic collapse injection, both on finished waveforms and inside a
//! generation stream, plus a reference-following model standing in for a
//! well-behaved vocoder.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::toy::{toy_logits, ToyCell};
use super::{GeneratorState, SampleModel};
use crate::constraint::CategoricalDistribution;
use crate::error::{Error, Result};
use crate::signal::{mulaw_encode, mulaw_levels, SegmentSpec, Waveform, MULAW_LEVELS};

pub const MAX_IMPULSE_WIDTH: usize = 5;
const MIN_IMPULSE_GAP: usize = 3;
/// Probability left to the underlying model on an impulse sample.
const IMPULSE_LEAK: f64 = 1e-3;
/// Per-sample probability of a broadband sample inside a type-I region
/// before the burst takes hold.
pub const BURST_ONSET_RATE: f64 = 0.01;
/// Deviation from the reference, relative to its peak, that sets off a
/// sustained type-I burst.
pub const BURST_LATCH_DEVIATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CollapseKind {
    /// Sustained broadband noise burst at extreme amplitude.
    #[serde(rename = "typeI")]
    TypeI,
    /// A few large, very short impulses.
    #[serde(rename = "typeII")]
    TypeII,
}

impl std::fmt::Display for CollapseKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CollapseKind::TypeI => "typeI",
            CollapseKind::TypeII => "typeII",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapsePlan {
    pub kind: CollapseKind,
    pub region: SegmentSpec,
    /// Burst amplitude (type I) or impulse height (type II, at least 2),
    /// relative to the reference peak.
    pub amplitude_factor: f64,
    /// Number of impulses; type II only.
    pub impulse_count: usize,
    /// Seeds the impulse layout.
    pub seed: u64,
}

impl CollapsePlan {
    pub fn validate(&self, len: usize) -> Result<()> {
        self.region.check(len)?;
        if !(self.amplitude_factor > 1.0 && self.amplitude_factor <= 10.0) {
            return Err(Error::InvalidParameter(format!(
                "amplitude factor {} must lie in (1, 10]",
                self.amplitude_factor
            )));
        }
        if self.kind == CollapseKind::TypeII {
            if !(3..=20).contains(&self.impulse_count) {
                return Err(Error::InvalidParameter(format!(
                    "impulse count {} must lie in [3, 20]",
                    self.impulse_count
                )));
            }
            let needed = self.impulse_count * (MAX_IMPULSE_WIDTH + MIN_IMPULSE_GAP);
            if self.region.length < needed {
                return Err(Error::InvalidParameter(format!(
                    "region of {} samples cannot hold {} impulses (needs {needed})",
                    self.region.length, self.impulse_count
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Impulse {
    pub start: usize,
    pub width: usize,
    pub value: f64,
}

/// Seeded, non-touching impulse positions inside a type-II region.
pub fn impulse_layout(plan: &CollapsePlan, peak: f64) -> Vec<Impulse> {
    if plan.kind != CollapseKind::TypeII {
        return Vec::new();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    let count = plan.impulse_count;
    let widths: Vec<usize> = (0..count)
        .map(|_| rng.gen_range(1..=MAX_IMPULSE_WIDTH))
        .collect();
    let occupied = widths.iter().sum::<usize>() + (count - 1) * MIN_IMPULSE_GAP;
    let free = plan.region.length.saturating_sub(occupied);
    let mut offsets: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=free)).collect();
    offsets.sort_unstable();

    let height = (plan.amplitude_factor.max(2.0) * peak).min(1.0);
    let mut used = 0;
    widths
        .iter()
        .zip(offsets)
        .map(|(&width, off)| {
            let start = plan.region.start + off + used;
            used += width + MIN_IMPULSE_GAP;
            let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
            Impulse {
                start,
                width,
                value: sign * height,
            }
        })
        .collect()
}

/// Reference plus seeded Gaussian perturbation at `perturb_db` relative to
/// the reference RMS, with an optional collapse injected.
pub fn faulty_generate(
    reference: &Waveform,
    plan: Option<&CollapsePlan>,
    perturb_db: f64,
    seed: u64,
) -> Result<Waveform> {
    if let Some(plan) = plan {
        plan.validate(reference.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = reference.rms() * 10f64.powf(perturb_db / 20.0);
    let mut out = reference.samples().to_vec();
    if sigma > 0.0 {
        let noise = Normal::new(0.0, sigma)
            .map_err(|e| Error::InvalidParameter(format!("perturbation: {e}")))?;
        for v in &mut out {
            *v += noise.sample(&mut rng);
        }
    }

    let peak = reference.peak();
    match plan {
        Some(plan) if plan.kind == CollapseKind::TypeI => {
            let amp = plan.amplitude_factor * peak;
            for v in &mut out[plan.region.start..plan.region.end()] {
                *v = if amp > 0.0 {
                    rng.gen_range(-amp..=amp)
                } else {
                    0.0
                };
            }
        }
        Some(plan) => {
            for imp in impulse_layout(plan, peak) {
                out[imp.start..imp.start + imp.width].fill(imp.value);
            }
        }
        None => {}
    }
    Waveform::from_clipped(out, reference.sample_rate_hz())
}

/// Discretized Gaussian around the reference sample at the current position,
/// optionally textured by a gated cell's logits.
#[derive(Debug, Clone)]
pub struct ReferenceTracker {
    reference: Vec<f64>,
    spread: f64,
    cell: Option<(ToyCell, f64)>,
}

impl ReferenceTracker {
    pub fn new(reference: &Waveform, spread: f64) -> Result<Self> {
        if !(spread > 0.0 && spread.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "spread {spread} must be > 0"
            )));
        }
        Ok(Self {
            reference: reference.samples().to_vec(),
            spread,
            cell: None,
        })
    }

    /// Adds `gain` times the cell's logits to the tracking log-density.
    pub fn with_cell(mut self, cell: ToyCell, gain: f64) -> Self {
        self.cell = Some((cell, gain));
        self
    }
}

impl SampleModel for ReferenceTracker {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution> {
        let target = *self
            .reference
            .get(state.position())
            .ok_or(Error::SegmentOutOfRange {
                start: state.position(),
                length: 1,
                len: self.reference.len(),
            })?;
        let two_var = 2.0 * self.spread * self.spread;
        let mut logits: Vec<f64> = mulaw_levels()
            .iter()
            .map(|d| -(d - target).powi(2) / two_var)
            .collect();
        if let Some((cell, gain)) = &self.cell {
            for (l, c) in logits.iter_mut().zip(toy_logits(&cell.weights, state)?) {
                *l += gain * c;
            }
        }
        CategoricalDistribution::from_logits(&logits)
    }
}

#[derive(Debug, Clone)]
enum Fault {
    Burst {
        region: SegmentSpec,
        dist: CategoricalDistribution,
    },
    Impulses {
        region: SegmentSpec,
        impulses: Vec<Impulse>,
    },
}

/// Wraps a model and overrides its distribution inside planned collapse regions.
///
/// Inside a type I region the model is unstable: each sample has a small
/// chance ([`BURST_ONSET_RATE`]) of coming from an amplitude-uniform
/// distribution over `[-factor * peak, factor * peak]`. Once a sample in the
/// receptive field strays from the reference by more than
/// [`BURST_LATCH_DEVIATION`] times the peak, every further sample in the
/// region comes from that distribution, which sustains the burst. Type II
/// impulse samples put almost all mass on the impulse level; elsewhere the
/// inner model is used.
#[derive(Debug, Clone)]
pub struct FaultyModel<M> {
    inner: M,
    faults: Vec<Fault>,
    reference: Vec<f64>,
    latch_deviation: f64,
}

impl<M: SampleModel> FaultyModel<M> {
    pub fn new(inner: M, plans: &[CollapsePlan], reference: &Waveform) -> Result<Self> {
        let levels = mulaw_levels();
        let peak = reference.peak();
        let faults = plans
            .iter()
            .map(|plan| {
                plan.validate(reference.len())?;
                Ok(match plan.kind {
                    CollapseKind::TypeI => {
                        let amp = (plan.amplitude_factor * peak).min(1.0);
                        let weights = (0..MULAW_LEVELS)
                            .map(|b| {
                                let lo = levels[b.saturating_sub(1)];
                                let hi = levels[(b + 1).min(MULAW_LEVELS - 1)];
                                let inside = levels[b].abs() <= amp || b == 127 || b == 128;
                                if inside {
                                    (hi - lo) / 2.0
                                } else {
                                    0.0
                                }
                            })
                            .collect();
                        Fault::Burst {
                            region: plan.region,
                            dist: CategoricalDistribution::from_weights(weights)?,
                        }
                    }
                    CollapseKind::TypeII => Fault::Impulses {
                        region: plan.region,
                        impulses: impulse_layout(plan, peak),
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            inner,
            faults,
            reference: reference.samples().to_vec(),
            latch_deviation: BURST_LATCH_DEVIATION * peak,
        })
    }

    pub fn inner(&self) -> &M {
        &self.inner
    }

    /// Whether a sample generated inside `region` and still in the history
    /// strays far from the reference.
    fn latched(&self, state: &GeneratorState, region: SegmentSpec) -> bool {
        let n = state.position();
        let history = state.history();
        let depth = history.len().min(n - region.start);
        history[history.len() - depth..]
            .iter()
            .zip(&self.reference[n - depth..n])
            .any(|(x, r)| (x - r).abs() > self.latch_deviation)
    }
}

impl<M: SampleModel> SampleModel for FaultyModel<M> {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution> {
        let n = state.position();
        for fault in &self.faults {
            match fault {
                Fault::Burst { region, dist } if region.start <= n && n < region.end() => {
                    if self.latched(state, *region) {
                        return Ok(dist.clone());
                    }
                    let base = self.inner.distribution(state)?;
                    let weights = base
                        .probs()
                        .iter()
                        .zip(dist.probs())
                        .map(|(p, u)| (1.0 - BURST_ONSET_RATE) * p + BURST_ONSET_RATE * u)
                        .collect();
                    return CategoricalDistribution::from_weights(weights);
                }
                Fault::Impulses { region, impulses } if region.start <= n && n < region.end() => {
                    if let Some(imp) = impulses
                        .iter()
                        .find(|i| i.start <= n && n < i.start + i.width)
                    {
                        let base = self.inner.distribution(state)?;
                        let code = mulaw_encode(imp.value).index();
                        let weights = base
                            .probs()
                            .iter()
                            .enumerate()
                            .map(|(b, p)| {
                                IMPULSE_LEAK * p + if b == code { 1.0 - IMPULSE_LEAK } else { 0.0 }
                            })
                            .collect();
                        return CategoricalDistribution::from_weights(weights);
                    }
                }
                _ => {}
            }
        }
        self.inner.distribution(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn reference(len: usize, amp: f64) -> Waveform {
        Waveform::new(
            (0..len)
                .map(|n| amp * (2.0 * PI * 180.0 * n as f64 / 22050.0).sin())
                .collect(),
            22050,
        )
        .unwrap()
    }

    fn plan(kind: CollapseKind, region: SegmentSpec, factor: f64, count: usize) -> CollapsePlan {
        CollapsePlan {
            kind,
            region,
            amplitude_factor: factor,
            impulse_count: count,
            seed: 31,
        }
    }

    #[test]
    fn perturbation_level() {
        let r = reference(20000, 0.3);
        let c = faulty_generate(&r, None, -30.0, 4).unwrap();
        let diff_rms = (c
            .samples()
            .iter()
            .zip(r.samples())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            / r.len() as f64)
            .sqrt();
        let target = r.rms() * 10f64.powf(-30.0 / 20.0);
        let db = 20.0 * (diff_rms / target).log10();
        assert!(db.abs() <= 3.0, "{db} dB");
        assert_eq!(c, faulty_generate(&r, None, -30.0, 4).unwrap());
    }

    #[test]
    fn type_one_power() {
        let r = reference(12000, 0.3);
        let region = SegmentSpec::new(3000, 2500);
        let c = faulty_generate(
            &r,
            Some(&plan(CollapseKind::TypeI, region, 3.0, 0)),
            -30.0,
            9,
        )
        .unwrap();
        let power = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let inside = power(&c.samples()[region.start..region.end()]);
        let base = power(&r.samples()[region.start..region.end()]);
        assert!(inside >= 4.0 * base, "{inside} vs {base}");
    }

    fn count_runs_above(x: &[f64], level: f64) -> usize {
        let mut runs = 0;
        let mut inside = false;
        for v in x {
            let above = v.abs() > level;
            if above && !inside {
                runs += 1;
            }
            inside = above;
        }
        runs
    }

    #[test]
    fn type_two_impulse_count() {
        let r = reference(12000, 0.3);
        for count in [3, 7, 20] {
            let region = SegmentSpec::new(5000, 600);
            let p = plan(CollapseKind::TypeII, region, 2.0, count);
            let c = faulty_generate(&r, Some(&p), -30.0, 12).unwrap();
            let peaks = count_runs_above(&c.samples()[region.start..region.end()], 1.5 * r.peak());
            assert_eq!(peaks, count);
            assert_eq!(count_runs_above(c.samples(), 1.5 * r.peak()), count);
        }
    }

    #[test]
    fn plan_validation() {
        let r = reference(1000, 0.3);
        let bad_region = plan(CollapseKind::TypeI, SegmentSpec::new(900, 200), 3.0, 0);
        assert!(faulty_generate(&r, Some(&bad_region), -30.0, 1).is_err());
        let bad_factor = plan(CollapseKind::TypeI, SegmentSpec::new(0, 200), 11.0, 0);
        assert!(bad_factor.validate(1000).is_err());
        let few = plan(CollapseKind::TypeII, SegmentSpec::new(0, 500), 2.0, 2);
        assert!(few.validate(1000).is_err());
        let cramped = plan(CollapseKind::TypeII, SegmentSpec::new(0, 50), 2.0, 10);
        assert!(cramped.validate(1000).is_err());
    }

    #[test]
    fn tracker_follows_reference() {
        let r = reference(3000, 0.4);
        let model = ReferenceTracker::new(&r, 0.004).unwrap();
        let mut s = GeneratorState::new(64, vec![0.0; 8], 3).unwrap();
        let out =
            super::super::generate_segment(&model, &mut s, 3000, None, Default::default()).unwrap();
        let err = out
            .iter()
            .zip(r.samples())
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 0.05, "{err}");
        assert!(model.distribution(&s).is_err());
    }

    #[test]
    fn faulty_model_injects_inside_regions_only() {
        let r = reference(8000, 0.3);
        let tracker = ReferenceTracker::new(&r, 0.004).unwrap();
        let region = SegmentSpec::new(2000, 1500);
        let plans = [plan(CollapseKind::TypeI, region, 3.0, 0)];
        let faulty = FaultyModel::new(tracker.clone(), &plans, &r).unwrap();
        let mut a = GeneratorState::new(64, vec![0.0; 8], 3).unwrap();
        let mut b = a.clone();
        let clean =
            super::super::generate_segment(&tracker, &mut a, 2000, None, Default::default())
                .unwrap();
        let bad = super::super::generate_segment(&faulty, &mut b, 2000, None, Default::default())
            .unwrap();
        assert_eq!(clean, bad);
        let burst = super::super::generate_segment(&faulty, &mut b, 1500, None, Default::default())
            .unwrap();
        let power = burst.iter().map(|v| v * v).sum::<f64>() / burst.len() as f64;
        assert!(power > 4.0 * 0.045, "{power}");
    }
}
