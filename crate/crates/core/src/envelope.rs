//! Three-step amplitude envelope: rectification (or analytic-signal
//! magnitude), slot-wise peak hold, then a causal Butterworth low-pass.

use std::f64::consts::{PI, SQRT_2};

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SegmentSpec, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    /// Peak-hold slot length in samples.
    pub peak_window: usize,
    pub lpf_cutoff_hz: f64,
    /// Analytic-signal magnitude when set, plain rectification otherwise.
    pub use_hilbert: bool,
    /// Look-back samples analyzed before each span and discarded afterwards.
    pub context_pad: usize,
}

impl Default for EnvelopeParams {
    fn default() -> Self {
        Self {
            peak_window: 200,
            lpf_cutoff_hz: 300.0,
            use_hilbert: true,
            context_pad: 400,
        }
    }
}

impl EnvelopeParams {
    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        if self.peak_window == 0 {
            return Err(Error::InvalidParameter("peak_window must be >= 1".into()));
        }
        check_cutoff(self.lpf_cutoff_hz, sample_rate_hz as f64)
    }
}

fn check_cutoff(cutoff_hz: f64, rate_hz: f64) -> Result<()> {
    if !(cutoff_hz > 0.0 && cutoff_hz < rate_hz / 2.0) {
        return Err(Error::InvalidParameter(format!(
            "low-pass cutoff {cutoff_hz} Hz must lie in (0, {}) Hz",
            rate_hz / 2.0
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub values: Vec<f64>,
    pub params: EnvelopeParams,
}

/// Magnitude of the analytic signal, computed with a zero-padded power-of-two FFT.
pub fn analytic_magnitude(x: &[f64]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = x.len().next_power_of_two();
    let mut buf: Vec<Complex64> = x
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(n)
        .collect();

    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut buf);
    if n > 1 {
        // DC and Nyquist keep unit weight.
        for c in &mut buf[1..n / 2] {
            *c *= 2.0;
        }
        for c in &mut buf[n / 2 + 1..] {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);

    let scale = 1.0 / n as f64;
    Ok(buf[..x.len()].iter().map(|c| c.norm() * scale).collect())
}

pub fn rectify(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.abs()).collect()
}

/// Replaces every value in each non-overlapping slot of `window` samples by the slot maximum.
pub fn peak_hold(x: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut out = Vec::with_capacity(x.len());
    for slot in x.chunks(window) {
        let m = slot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.extend(std::iter::repeat_n(m, slot.len()));
    }
    out
}

/// Normalized second-order section, `a0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    /// Second-order Butterworth low-pass via the bilinear transform with prewarping.
    pub fn butterworth_lowpass(cutoff_hz: f64, rate_hz: f64) -> Result<Self> {
        check_cutoff(cutoff_hz, rate_hz)?;
        let k = (PI * cutoff_hz / rate_hz).tan();
        let k2 = k * k;
        let norm = 1.0 / (1.0 + SQRT_2 * k + k2);
        let b0 = k2 * norm;
        Ok(Self {
            b: [b0, 2.0 * b0, b0],
            a: [2.0 * (k2 - 1.0) * norm, (1.0 - SQRT_2 * k + k2) * norm],
        })
    }

    /// Single causal pass from zero state (transposed direct form II).
    pub fn filter(&self, x: &[f64]) -> Vec<f64> {
        let [b0, b1, b2] = self.b;
        let [a1, a2] = self.a;
        let (mut s1, mut s2) = (0.0, 0.0);
        x.iter()
            .map(|&v| {
                let y = b0 * v + s1;
                s1 = b1 * v - a1 * y + s2;
                s2 = b2 * v - a2 * y;
                y
            })
            .collect()
    }
}

pub fn lowpass(x: &[f64], cutoff_hz: f64, rate_hz: f64) -> Result<Vec<f64>> {
    Ok(Biquad::butterworth_lowpass(cutoff_hz, rate_hz)?.filter(x))
}

/// Envelope of `span` within `samples`, using up to `context_pad` preceding
/// samples as look-back (zeros where none exist).
pub fn envelope_of_span(
    samples: &[f64],
    sample_rate_hz: u32,
    span: SegmentSpec,
    params: &EnvelopeParams,
) -> Result<Envelope> {
    span.check(samples.len())?;
    params.validate(sample_rate_hz)?;

    let pad = params.context_pad;
    let available = pad.min(span.start);
    let mut buf = vec![0.0; pad - available];
    buf.extend_from_slice(&samples[span.start - available..span.end()]);

    let detected = if params.use_hilbert {
        analytic_magnitude(&buf)?
    } else {
        rectify(&buf)
    };
    let held = peak_hold(&detected, params.peak_window);
    let mut smoothed = lowpass(&held, params.lpf_cutoff_hz, sample_rate_hz as f64)?;
    smoothed.drain(..pad);
    // Analytic magnitude is nonnegative, but the filter may ring slightly below zero.
    for v in &mut smoothed {
        *v = v.max(0.0);
    }
    Ok(Envelope {
        values: smoothed,
        params: *params,
    })
}

pub fn extract_envelope(
    w: &Waveform,
    span: SegmentSpec,
    params: &EnvelopeParams,
) -> Result<Envelope> {
    envelope_of_span(w.samples(), w.sample_rate_hz(), span, params)
}

/// Largest pointwise excess of `cand` over `reference`. Negative when the
/// candidate is quieter everywhere.
pub fn envelope_excess(cand: &Envelope, reference: &Envelope) -> Result<f64> {
    if cand.values.len() != reference.values.len() {
        return Err(Error::LengthMismatch {
            left: cand.values.len(),
            right: reference.values.len(),
        });
    }
    if cand.values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(cand
        .values
        .iter()
        .zip(&reference.values)
        .map(|(c, r)| c - r)
        .fold(f64::NEG_INFINITY, f64::max))
}
