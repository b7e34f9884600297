//! 16-bit mono PCM WAV input/output.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{Error, Result};
use crate::signal::Waveform;

/// Reads a mono 16-bit PCM file. Samples are scaled by 1/32768.
///
/// When `expected_rate` is given, files at any other rate are rejected.
pub fn read_wav(path: impl AsRef<Path>, expected_rate: Option<u32>) -> Result<Waveform> {
    let path = path.as_ref();
    let mut reader = hound::WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(Error::UnsupportedWav(format!(
            "{}: {} channels, expected mono",
            path.display(),
            spec.channels
        )));
    }
    if spec.sample_format != SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(Error::UnsupportedWav(format!(
            "{}: {}-bit {:?} samples, expected 16-bit PCM",
            path.display(),
            spec.bits_per_sample,
            spec.sample_format
        )));
    }
    if let Some(rate) = expected_rate {
        if rate != spec.sample_rate {
            return Err(Error::UnsupportedWav(format!(
                "{}: sample rate {} Hz, expected {} Hz",
                path.display(),
                spec.sample_rate,
                rate
            )));
        }
    }
    let samples = reader
        .samples::<i16>()
        .map(|s| s.map(|v| v as f64 / 32768.0))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM file, rounding `s * 32768` and saturating at the i16 range.
pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let spec = WavSpec {
        channels: 1,
        sample_rate: w.sample_rate_hz(),
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec)?;
    for &s in w.samples() {
        writer.write_sample(to_pcm16(s))?;
    }
    writer.finalize()?;
    Ok(())
}

pub fn to_pcm16(s: f64) -> i16 {
    (s * 32768.0)
        .round()
        .clamp(i16::MIN as f64, i16::MAX as f64) as i16
}
