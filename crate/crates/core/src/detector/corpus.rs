//! Synthetic labeled corpora of candidate/reference pairs and their on-disk form.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{faulty_generate, CollapseKind, CollapsePlan};
use crate::signal::{segments_of, SegmentSpec, Waveform};
use crate::wav::{read_wav, write_wav};

pub const LABELS_FILE: &str = "labels.json";
/// Candidate perturbation relative to reference RMS.
pub const CORPUS_PERTURB_DB: f64 = -30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "clean")]
    Clean,
    #[serde(rename = "typeI")]
    TypeI,
    #[serde(rename = "typeII")]
    TypeII,
}

impl From<CollapseKind> for Label {
    fn from(kind: CollapseKind) -> Self {
        match kind {
            CollapseKind::TypeI => Label::TypeI,
            CollapseKind::TypeII => Label::TypeII,
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Label::Clean => "clean",
            Label::TypeI => "typeI",
            Label::TypeII => "typeII",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub start: usize,
    pub length: usize,
    pub kind: Label,
}

impl RegionLabel {
    pub fn span(&self) -> SegmentSpec {
        SegmentSpec::new(self.start, self.length)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceLabel {
    pub utterance: String,
    pub kind: Label,
    pub regions: Vec<RegionLabel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLabels {
    pub schema: u32,
    pub sample_rate_hz: u32,
    pub seed: u64,
    pub utterances: Vec<UtteranceLabel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPair {
    pub id: String,
    pub candidate: Waveform,
    pub reference: Waveform,
    pub label: Label,
    pub regions: Vec<RegionLabel>,
}

impl LabeledPair {
    /// A segment takes the kind of the first region it overlaps by more than
    /// 10% of the region or 200 samples, whichever is smaller.
    pub fn segment_label(&self, seg: SegmentSpec) -> Label {
        self.regions
            .iter()
            .find(|r| {
                let needed = (0.1 * r.length as f64).min(200.0);
                seg.overlap(&r.span()) as f64 > needed
            })
            .map_or(Label::Clean, |r| r.kind)
    }

    pub fn segment_labels(&self, seg_len: usize) -> Result<Vec<(SegmentSpec, Label)>> {
        Ok(segments_of(self.candidate.len(), seg_len)?
            .into_iter()
            .map(|s| (s, self.segment_label(s)))
            .collect())
    }

    pub fn to_label(&self) -> UtteranceLabel {
        UtteranceLabel {
            utterance: self.id.clone(),
            kind: self.label,
            regions: self.regions.clone(),
        }
    }
}

/// Harmonic tone with slow amplitude modulation and vibrato, 2 to 4 seconds
/// long, peak-normalized to a value in [0.25, 0.5].
pub fn synth_reference<R: Rng>(rng: &mut R, sample_rate_hz: u32) -> Result<Waveform> {
    if sample_rate_hz < 8000 {
        return Err(Error::InvalidParameter(format!(
            "sample rate {sample_rate_hz} too low for synthetic speech-like tones"
        )));
    }
    let fs = sample_rate_hz as f64;
    let len = rng.gen_range(2 * sample_rate_hz as usize..=4 * sample_rate_hz as usize);
    let f0 = rng.gen_range(90.0..260.0);
    let harmonics = rng.gen_range(3..=6);
    let tilt: f64 = rng.gen_range(0.4..0.8);
    let phases: Vec<f64> = (0..harmonics)
        .map(|_| rng.gen_range(0.0..std::f64::consts::TAU))
        .collect();
    let am_rate = rng.gen_range(1.5..6.0);
    let am_depth = rng.gen_range(0.2..0.7);
    let am_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    let vib_rate = rng.gen_range(3.0..7.0);
    let vib_depth = rng.gen_range(0.0..0.03);
    let target_peak = rng.gen_range(0.25..=0.5);

    let mut phase = 0.0;
    let mut x = Vec::with_capacity(len);
    for n in 0..len {
        let t = n as f64 / fs;
        let f = f0 * (1.0 + vib_depth * (std::f64::consts::TAU * vib_rate * t).sin());
        phase += std::f64::consts::TAU * f / fs;
        let am =
            1.0 - am_depth * 0.5 * (1.0 + (std::f64::consts::TAU * am_rate * t + am_phase).sin());
        let tone: f64 = phases
            .iter()
            .enumerate()
            .filter(|(k, _)| (k + 1) as f64 * f0 < 0.45 * fs)
            .map(|(k, p)| tilt.powi(k as i32) * ((k + 1) as f64 * phase + p).sin())
            .sum();
        x.push(am * tone);
    }
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { target_peak / peak } else { 0.0 };
    Waveform::new(x.into_iter().map(|v| v * gain).collect(), sample_rate_hz)
}

/// A random collapse of the given kind placed inside a waveform of `len`
/// samples. Type-I bursts last 800 to 3000 samples at 2 to 5 times the
/// reference peak; type-II regions last 300 to 1200 samples and hold 3 to 12
/// impulses at 2 to 3 times the peak.
pub fn random_collapse_plan<R: Rng>(
    rng: &mut R,
    kind: CollapseKind,
    len: usize,
) -> Result<CollapsePlan> {
    let (length, amplitude_factor, impulse_count) = match kind {
        CollapseKind::TypeI => (rng.gen_range(800..=3000), rng.gen_range(2.0..=5.0), 0),
        CollapseKind::TypeII => {
            let length = rng.gen_range(300..=1200);
            let max_count = (length / 8).min(12);
            (
                length,
                rng.gen_range(2.0..=3.0),
                rng.gen_range(3..=max_count),
            )
        }
    };
    if len < length {
        return Err(Error::InvalidParameter(format!(
            "waveform of {len} samples is shorter than a {length}-sample collapse"
        )));
    }
    let plan = CollapsePlan {
        kind,
        region: SegmentSpec::new(rng.gen_range(0..=len - length), length),
        amplitude_factor,
        impulse_count,
        seed: rng.gen(),
    };
    plan.validate(len)?;
    Ok(plan)
}

/// `n` labeled pairs. `round(n * fraction)` of them are collapsed; type I
/// takes the larger half when the count is odd. Every utterance draws from
/// its own stream of the seed, so the result does not depend on threading.
pub fn synth_corpus(
    n: usize,
    fraction: f64,
    seed: u64,
    sample_rate_hz: u32,
) -> Result<Vec<LabeledPair>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::InvalidParameter(format!(
            "collapse fraction {fraction} must lie in [0, 1]"
        )));
    }
    let collapsed = ((n as f64) * fraction).round() as usize;
    let type_one = collapsed.div_ceil(2);
    let mut kinds: Vec<Option<CollapseKind>> = (0..n)
        .map(|i| match i {
            i if i < type_one => Some(CollapseKind::TypeI),
            i if i < collapsed => Some(CollapseKind::TypeII),
            _ => None,
        })
        .collect();
    kinds.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    kinds
        .into_par_iter()
        .enumerate()
        .map(|(i, kind)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let reference = synth_reference(&mut rng, sample_rate_hz)?;
            let plan = kind
                .map(|k| random_collapse_plan(&mut rng, k, reference.len()))
                .transpose()?;
            let candidate =
                faulty_generate(&reference, plan.as_ref(), CORPUS_PERTURB_DB, rng.gen())?;
            Ok(LabeledPair {
                id: format!("utt_{i:04}"),
                candidate,
                reference,
                label: kind.map_or(Label::Clean, Label::from),
                regions: plan
                    .iter()
                    .map(|p| RegionLabel {
                        start: p.region.start,
                        length: p.region.length,
                        kind: p.kind.into(),
                    })
                    .collect(),
            })
        })
        .collect()
}

/// Writes `<id>_cand.wav`, `<id>_ref.wav` per pair plus `labels.json`.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    pairs: &[LabeledPair],
    seed: u64,
) -> Result<CorpusLabels> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let sample_rate_hz = pairs
        .first()
        .map_or(crate::signal::DEFAULT_SAMPLE_RATE, |p| {
            p.reference.sample_rate_hz()
        });
    pairs.par_iter().try_for_each(|p| -> Result<()> {
        write_wav(dir.join(format!("{}_cand.wav", p.id)), &p.candidate)?;
        write_wav(dir.join(format!("{}_ref.wav", p.id)), &p.reference)
    })?;
    let labels = CorpusLabels {
        schema: 1,
        sample_rate_hz,
        seed,
        utterances: pairs.iter().map(LabeledPair::to_label).collect(),
    };
    fs::write(
        dir.join(LABELS_FILE),
        serde_json::to_string_pretty(&labels)? + "\n",
    )?;
    Ok(labels)
}

pub fn read_corpus(dir: impl AsRef<Path>) -> Result<(CorpusLabels, Vec<LabeledPair>)> {
    let dir = dir.as_ref();
    let labels: CorpusLabels = serde_json::from_str(&fs::read_to_string(dir.join(LABELS_FILE))?)?;
    if labels.schema != 1 {
        return Err(Error::InvalidParameter(format!(
            "unsupported labels schema {}",
            labels.schema
        )));
    }
    let rate = Some(labels.sample_rate_hz);
    let pairs = labels
        .utterances
        .par_iter()
        .map(|u| {
            let candidate = read_wav(dir.join(format!("{}_cand.wav", u.utterance)), rate)?;
            let reference = read_wav(dir.join(format!("{}_ref.wav", u.utterance)), rate)?;
            candidate.ensure_compatible(&reference)?;
            for r in &u.regions {
                r.span().check(candidate.len())?;
            }
            Ok(LabeledPair {
                id: u.utterance.clone(),
                candidate,
                reference,
                label: u.kind,
                regions: u.regions.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, pairs))
}
