//! Waveform container, 8-bit mu-law companding and segment tiling.
//!
//! The mu-law codec uses the continuous companding curve
//! `F(x) = sign(x) * ln(1 + 255|x|) / ln(256)` with 256 uniform bins over
//! `F(x) in [-1, 1]`. Decoding returns the bin center in the companded
//! domain, so reconstruction levels are antisymmetric about zero.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 22050;

/// Number of mu-law quantization levels.
pub const MULAW_LEVELS: usize = 256;

const MU: f64 = 255.0;

/// Mono amplitude sequence in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl Waveform {
    /// Builds a waveform, rejecting non-finite or out-of-range samples.
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !s.is_finite() || s.abs() > 1.0)
        {
            return Err(Error::InvalidParameter(format!(
                "sample {i} = {s} is outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    /// Builds a waveform, clipping samples to `[-1, 1]`. NaN maps to 0.
    pub fn from_clipped(mut samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        check_rate(sample_rate_hz)?;
        for s in samples.iter_mut() {
            *s = if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) };
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples covered by `span`, after checking it against this waveform.
    pub fn span(&self, span: SegmentSpec) -> Result<&[f64]> {
        span.check(self.len())?;
        Ok(&self.samples[span.start..span.end()])
    }

    /// Largest absolute sample value (0 for an empty waveform).
    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        (self.samples.iter().map(|s| s * s).sum::<f64>() / self.len() as f64).sqrt()
    }

    /// Errors unless both waveforms share length and sample rate.
    pub fn ensure_compatible(&self, other: &Waveform) -> Result<()> {
        if self.sample_rate_hz != other.sample_rate_hz {
            return Err(Error::RateMismatch {
                left: self.sample_rate_hz,
                right: other.sample_rate_hz,
            });
        }
        if self.len() != other.len() {
            return Err(Error::LengthMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(())
    }
}

fn check_rate(rate: u32) -> Result<()> {
    if rate == 0 {
        return Err(Error::InvalidParameter(
            "sample rate must be positive".into(),
        ));
    }
    Ok(())
}

/// One of the 256 mu-law quantization indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct MuLawCode(u8);

impl MuLawCode {
    pub fn new(index: usize) -> Result<Self> {
        u8::try_from(index)
            .map(Self)
            .map_err(|_| Error::InvalidParameter(format!("mu-law index {index} > 255")))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u8> for MuLawCode {
    fn from(v: u8) -> Self {
        Self(v)
    }
}

/// Companding curve F, mapping `[-1, 1]` onto `[-1, 1]`.
fn compand(x: f64) -> f64 {
    x.signum() * (MU * x.abs()).ln_1p() / (MU + 1.0).ln()
}

/// Inverse companding curve.
fn expand(u: f64) -> f64 {
    u.signum() * (u.abs() * (MU + 1.0).ln()).exp_m1() / MU
}

/// Quantizes an amplitude to 8 bits. Inputs outside `[-1, 1]` are clipped.
pub fn mulaw_encode(x: f64) -> MuLawCode {
    let x = if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) };
    let bin = ((compand(x) + 1.0) * 128.0).floor();
    MuLawCode(bin.clamp(0.0, 255.0) as u8)
}

/// Bin-center reconstruction of a code.
pub fn mulaw_decode(code: MuLawCode) -> f64 {
    mulaw_levels()[code.index()]
}

/// The 256 reconstruction levels, strictly increasing.
pub fn mulaw_levels() -> &'static [f64; MULAW_LEVELS] {
    static LEVELS: OnceLock<[f64; MULAW_LEVELS]> = OnceLock::new();
    LEVELS.get_or_init(|| {
        let mut levels = [0.0; MULAW_LEVELS];
        for (i, l) in levels.iter_mut().enumerate() {
            *l = expand((i as f64 + 0.5) / 128.0 - 1.0);
        }
        levels
    })
}

/// Encodes then decodes every sample.
pub fn mulaw_roundtrip(w: &Waveform) -> Waveform {
    Waveform {
        samples: w
            .samples
            .iter()
            .map(|&s| mulaw_decode(mulaw_encode(s)))
            .collect(),
        sample_rate_hz: w.sample_rate_hz,
    }
}

/// Half-open sample range `[start, start + length)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub start: usize,
    pub length: usize,
}

impl SegmentSpec {
    pub fn new(start: usize, length: usize) -> Self {
        Self { start, length }
    }

    pub fn end(&self) -> usize {
        self.start + self.length
    }

    /// Errors if the span is empty or runs past `len`.
    pub fn check(&self, len: usize) -> Result<()> {
        if self.length == 0 || self.end() > len {
            return Err(Error::SegmentOutOfRange {
                start: self.start,
                length: self.length,
                len,
            });
        }
        Ok(())
    }

    pub fn overlap(&self, other: &SegmentSpec) -> usize {
        self.end()
            .min(other.end())
            .saturating_sub(self.start.max(other.start))
    }
}

/// Tiles `[0, len)` into consecutive segments of `seg_len`; the last one may be shorter.
pub fn segments_of(len: usize, seg_len: usize) -> Result<Vec<SegmentSpec>> {
    if seg_len == 0 {
        return Err(Error::InvalidParameter(
            "segment length must be positive".into(),
        ));
    }
    Ok((0..len)
        .step_by(seg_len)
        .map(|start| SegmentSpec::new(start, seg_len.min(len - start)))
        .collect())
}
