//! Frame-wise linear prediction of the reference waveform.
//!
//! Coefficients follow the positive-sum predictor convention
//! `y_hat[n] = sum_i a[i] * y[n - i]`, `i = 1..=order`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{mulaw_roundtrip, Waveform};

/// Residual variance floor, in amplitude squared.
pub const VARIANCE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Hamming,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hamming if len == 1 => vec![1.0],
            WindowKind::Hamming => (0..len)
                .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LpcConfig {
    pub order: usize,
    pub frame_len: usize,
    pub frame_shift: usize,
    pub window: WindowKind,
}

impl Default for LpcConfig {
    fn default() -> Self {
        Self {
            order: 16,
            frame_len: 512,
            frame_shift: 128,
            window: WindowKind::Hamming,
        }
    }
}

impl LpcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.order == 0 || self.order >= self.frame_len {
            return Err(Error::InvalidParameter(format!(
                "lpc order {} must satisfy 1 <= order < frame_len ({})",
                self.order, self.frame_len
            )));
        }
        if self.frame_shift == 0 || self.frame_shift > self.frame_len {
            return Err(Error::InvalidParameter(format!(
                "frame shift {} must satisfy 1 <= shift <= frame_len ({})",
                self.frame_shift, self.frame_len
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcFrame {
    pub coeffs: Vec<f64>,
    pub residual_variance: f64,
    pub start: usize,
    pub length: usize,
}

impl LpcFrame {
    /// Center index used for nearest-frame lookup.
    pub fn center(&self) -> usize {
        self.start + self.length / 2
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpcAnalysis {
    pub frames: Vec<LpcFrame>,
    pub config: LpcConfig,
    /// Length of the analyzed waveform.
    pub source_len: usize,
}

/// Biased autocorrelation `r[k] = sum_t x[t] x[t + k]` for `k = 0..=max_lag`.
pub fn autocorrelate(x: &[f64], max_lag: usize) -> Result<Vec<f64>> {
    if max_lag >= x.len() {
        return Err(Error::InvalidParameter(format!(
            "max lag {max_lag} must be below frame length {}",
            x.len()
        )));
    }
    Ok((0..=max_lag)
        .map(|k| x.iter().zip(&x[k..]).map(|(a, b)| a * b).sum())
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpcSolution {
    pub coeffs: Vec<f64>,
    pub reflection: Vec<f64>,
    /// Final prediction-error power, in the units of `r`. When `r` is
    /// normalized per sample this is the per-sample residual variance.
    pub residual_variance: f64,
}

/// Levinson-Durbin solution of the order-`order` normal equations.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<LpcSolution> {
    if order + 1 > r.len() {
        return Err(Error::InvalidParameter(format!(
            "order {order} needs {} autocorrelation lags, got {}",
            order + 1,
            r.len()
        )));
    }
    if r[0].is_nan() || r[0] <= 0.0 {
        return Err(Error::DegenerateFrame(r[0]));
    }

    let mut a = vec![0.0; order];
    let mut prev = vec![0.0; order];
    let mut reflection = Vec::with_capacity(order);
    let mut err = r[0];
    for i in 0..order {
        let acc: f64 = r[i + 1] - (0..i).map(|j| a[j] * r[i - j]).sum::<f64>();
        let k = if err > 0.0 { acc / err } else { 0.0 };
        prev[..i].copy_from_slice(&a[..i]);
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        // Round-off can push the error marginally negative for exactly predictable input.
        err = err.max(0.0);
        reflection.push(k);
    }
    Ok(LpcSolution {
        coeffs: a,
        reflection,
        residual_variance: err,
    })
}

/// Per-frame LPC of the mu-law roundtripped reference.
///
/// Autocorrelations are normalized by the window energy so that residual
/// variances are per-sample amplitude variances. Frames whose power does not
/// exceed [`VARIANCE_FLOOR`] get the zero predictor and the floor variance.
pub fn analyze_reference(reference: &Waveform, cfg: &LpcConfig) -> Result<LpcAnalysis> {
    cfg.validate()?;
    if reference.len() < cfg.frame_len {
        return Err(Error::InvalidParameter(format!(
            "reference of {} samples is shorter than one {}-sample frame",
            reference.len(),
            cfg.frame_len
        )));
    }
    let quantized = mulaw_roundtrip(reference);
    let x = quantized.samples();
    let window = cfg.window.coefficients(cfg.frame_len);
    let window_energy: f64 = window.iter().map(|w| w * w).sum();

    let count = (x.len() - cfg.frame_len) / cfg.frame_shift + 1;
    let mut frames = Vec::with_capacity(count);
    let mut windowed = vec![0.0; cfg.frame_len];
    for k in 0..count {
        let start = k * cfg.frame_shift;
        for ((dst, &s), &w) in windowed
            .iter_mut()
            .zip(&x[start..start + cfg.frame_len])
            .zip(&window)
        {
            *dst = s * w;
        }
        let mut r = autocorrelate(&windowed, cfg.order)?;
        for v in &mut r {
            *v /= window_energy;
        }
        // Frames quieter than the variance floor (including mu-law silence,
        // which decodes to a tiny constant) are treated as degenerate.
        let solved = if r[0] > VARIANCE_FLOOR {
            levinson_durbin(&r, cfg.order)
        } else {
            Err(Error::DegenerateFrame(r[0]))
        };
        let (coeffs, residual_variance) = match solved {
            Ok(sol) if sol.coeffs.iter().all(|c| c.is_finite()) => {
                (sol.coeffs, sol.residual_variance.max(VARIANCE_FLOOR))
            }
            _ => (vec![0.0; cfg.order], VARIANCE_FLOOR),
        };
        frames.push(LpcFrame {
            coeffs,
            residual_variance,
            start,
            length: cfg.frame_len,
        });
    }
    Ok(LpcAnalysis {
        frames,
        config: *cfg,
        source_len: x.len(),
    })
}

impl LpcAnalysis {
    /// Frame whose center is nearest to `n`, ties going to the earlier frame.
    /// Indices past the last center map to the final frame.
    pub fn frame_for_sample(&self, n: usize) -> &LpcFrame {
        let first = self.frames[0].center();
        if n <= first {
            return &self.frames[0];
        }
        let shift = self.config.frame_shift;
        let offset = n - first;
        let mut k = offset / shift;
        if offset % shift * 2 > shift {
            k += 1;
        }
        &self.frames[k.min(self.frames.len() - 1)]
    }
}

/// LPC prediction from `history` (oldest first, newest last), clipped to `[-1, 1]`.
pub fn predict_mean(frame: &LpcFrame, history: &[f64]) -> Result<f64> {
    if history.len() != frame.order() {
        return Err(Error::LengthMismatch {
            left: history.len(),
            right: frame.order(),
        });
    }
    let mu: f64 = frame
        .coeffs
        .iter()
        .zip(history.iter().rev())
        .map(|(a, y)| a * y)
        .sum();
    Ok(mu.clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn noise(len: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn ar_signal(coeffs: &[f64], len: usize, seed: u64) -> Vec<f64> {
        let e = noise(len + 500, seed);
        let mut y = vec![0.0; len + 500];
        for n in 0..y.len() {
            let mut v = e[n];
            for (i, a) in coeffs.iter().enumerate() {
                if n > i {
                    v += a * y[n - 1 - i];
                }
            }
            y[n] = v;
        }
        y.split_off(500)
    }

    /// Dense Gaussian elimination on the Toeplitz normal equations R a = r.
    #[allow(clippy::needless_range_loop)]
    fn oracle_normal_equations(r: &[f64], order: usize) -> Vec<f64> {
        let mut m: Vec<Vec<f64>> = (0..order)
            .map(|i| {
                let mut row: Vec<f64> = (0..order).map(|j| r[i.abs_diff(j)]).collect();
                row.push(r[i + 1]);
                row
            })
            .collect();
        for col in 0..order {
            let pivot = (col..order)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, pivot);
            for row in 0..order {
                if row != col {
                    let f = m[row][col] / m[col][col];
                    for k in col..=order {
                        m[row][k] -= f * m[col][k];
                    }
                }
            }
        }
        (0..order).map(|i| m[i][order] / m[i][i]).collect()
    }

    #[test]
    fn autocorrelation_basics() {
        assert_eq!(autocorrelate(&[0.0; 8], 3).unwrap(), vec![0.0; 4]);
        let mut x = vec![0.0; 8];
        x[3] = 0.7;
        let r = autocorrelate(&x, 4).unwrap();
        assert!((r[0] - 0.49).abs() < 1e-15);
        assert!(r[1..].iter().all(|&v| v == 0.0));
        assert!(autocorrelate(&x, 8).is_err());
    }

    #[test]
    fn autocorrelation_of_white_noise() {
        let x = noise(4096, 3);
        let r = autocorrelate(&x, 10).unwrap();
        assert!((r[0] - 4096.0).abs() <= 409.6);
        for &v in &r[1..] {
            assert!(v.abs() / r[0] <= 0.1);
            assert!(r[0] >= v.abs());
        }
    }

    #[test]
    fn ar1_recovery() {
        let y = ar_signal(&[0.9], 8192, 17);
        let r = autocorrelate(&y, 1).unwrap();
        let sol = levinson_durbin(&r, 1).unwrap();
        assert!((sol.coeffs[0] - r[1] / r[0]).abs() < 1e-14);
        assert!((0.85..=0.95).contains(&sol.coeffs[0]), "{}", sol.coeffs[0]);
    }

    #[test]
    fn sine_is_predictable_at_order_two() {
        let x: Vec<f64> = (0..8192)
            .map(|n| 0.5 * (2.0 * PI * 440.0 * n as f64 / 22050.0).sin())
            .collect();
        let w = WindowKind::Hamming.coefficients(x.len());
        let xw: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        let r = autocorrelate(&xw, 2).unwrap();
        let sol = levinson_durbin(&r, 2).unwrap();
        let oracle = oracle_normal_equations(&r, 2);
        for (a, b) in sol.coeffs.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(
            sol.residual_variance <= 1e-4 * r[0],
            "{} vs {}",
            sol.residual_variance,
            r[0]
        );
    }

    #[test]
    fn white_noise_has_no_structure() {
        let x = noise(8192, 23);
        let r: Vec<f64> = autocorrelate(&x, 8)
            .unwrap()
            .into_iter()
            .map(|v| v / x.len() as f64)
            .collect();
        for order in [1, 4, 8] {
            let sol = levinson_durbin(&r, order).unwrap();
            assert!(sol.coeffs.iter().all(|a| a.abs() <= 0.1));
            assert!((sol.residual_variance - r[0]).abs() <= 0.1 * r[0]);
        }
    }

    #[test]
    fn levinson_errors() {
        assert!(matches!(
            levinson_durbin(&[0.0, 0.0], 1),
            Err(Error::DegenerateFrame(_))
        ));
        assert!(levinson_durbin(&[1.0, 0.5], 2).is_err());
    }

    #[test]
    fn residual_variance_nonincreasing_in_order() {
        let y = ar_signal(&[1.2, -0.6, 0.1], 4096, 5);
        let r = autocorrelate(&y, 12).unwrap();
        let mut last = f64::INFINITY;
        for order in 0..=12 {
            let v = levinson_durbin(&r, order).unwrap().residual_variance;
            assert!(v <= last * (1.0 + 1e-12));
            last = v;
        }
    }

    #[test]
    fn ar_prediction_gain() {
        let coeffs = [1.3, -0.8, 0.2];
        let y = ar_signal(&coeffs, 16384, 77);
        let r: Vec<f64> = autocorrelate(&y, 6)
            .unwrap()
            .into_iter()
            .map(|v| v / y.len() as f64)
            .collect();
        for order in 3..=6 {
            let v = levinson_durbin(&r, order).unwrap().residual_variance;
            assert!(v <= 1.2, "order {order}: {v}");
        }
    }

    fn wave(x: Vec<f64>) -> Waveform {
        Waveform::new(x, 22050).unwrap()
    }

    #[test]
    fn analysis_of_silence() {
        let a = analyze_reference(&wave(vec![0.0; 2048]), &LpcConfig::default()).unwrap();
        assert_eq!(a.frames.len(), (2048 - 512) / 128 + 1);
        for f in &a.frames {
            assert_eq!(f.coeffs, vec![0.0; 16]);
            assert_eq!(f.residual_variance, VARIANCE_FLOOR);
        }
        let a = analyze_reference(&wave(vec![0.0; 600]), &LpcConfig::default()).unwrap();
        assert_eq!(a.frames.len(), 1);
    }

    #[test]
    fn analysis_of_sine() {
        let x: Vec<f64> = (0..6000)
            .map(|n| 0.5 * (2.0 * PI * 440.0 * n as f64 / 22050.0).sin())
            .collect();
        let cfg = LpcConfig::default();
        let a = analyze_reference(&wave(x), &cfg).unwrap();
        assert_eq!(a.frames.len(), (6000 - 512) / 128 + 1);
        let mut ratios: Vec<f64> = a
            .frames
            .iter()
            .map(|f| f.residual_variance / 0.125)
            .collect();
        ratios.sort_by(f64::total_cmp);
        assert!(
            ratios[ratios.len() / 2] <= 1e-3,
            "{}",
            ratios[ratios.len() / 2]
        );
    }

    #[test]
    fn analysis_rejects_short_reference_and_bad_config() {
        assert!(analyze_reference(&wave(vec![0.1; 100]), &LpcConfig::default()).is_err());
        let bad = LpcConfig {
            order: 512,
            ..Default::default()
        };
        assert!(analyze_reference(&wave(vec![0.1; 1000]), &bad).is_err());
        let bad = LpcConfig {
            frame_shift: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frame_lookup() {
        let a = analyze_reference(&wave(vec![0.0; 2048]), &LpcConfig::default()).unwrap();
        assert_eq!(a.frame_for_sample(0).start, 0);
        for (k, f) in a.frames.iter().enumerate() {
            assert_eq!(a.frame_for_sample(f.center()).start, k * 128);
        }
        // Midway between centers 256 and 384.
        assert_eq!(a.frame_for_sample(320).start, 0);
        assert_eq!(a.frame_for_sample(321).start, 128);
        assert_eq!(
            a.frame_for_sample(100_000).start,
            a.frames.last().unwrap().start
        );
    }

    #[test]
    fn prediction() {
        let frame = |coeffs: Vec<f64>| LpcFrame {
            residual_variance: 1.0,
            start: 0,
            length: 512,
            coeffs,
        };
        assert_eq!(
            predict_mean(&frame(vec![0.0; 3]), &[0.3, -0.2, 0.9]).unwrap(),
            0.0
        );
        assert!((predict_mean(&frame(vec![0.9]), &[0.5]).unwrap() - 0.45).abs() < 1e-15);
        assert_eq!(
            predict_mean(&frame(vec![0.4, 0.1]), &[0.0, 0.0]).unwrap(),
            0.0
        );
        // Newest sample pairs with a_1.
        assert!((predict_mean(&frame(vec![1.0, 0.0]), &[0.2, 0.7]).unwrap() - 0.7).abs() < 1e-15);
        assert!(predict_mean(&frame(vec![0.9]), &[0.5, 0.1]).is_err());
        assert_eq!(predict_mean(&frame(vec![3.0]), &[0.9]).unwrap(), 1.0);
    }

    fn stable_ar(order: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        use rand::Rng;
        // Step-up from reflection coefficients in (-0.9, 0.9) guarantees stability.
        let mut a: Vec<f64> = Vec::new();
        for _ in 0..order {
            let k: f64 = rng.gen_range(-0.9..0.9);
            let prev = a.clone();
            a.push(k);
            for j in 0..prev.len() {
                a[j] = prev[j] - k * prev[prev.len() - 1 - j];
            }
        }
        a
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn levinson_matches_direct_solve(seed in 0u64..10_000, order in 1usize..=8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let coeffs = stable_ar(order, &mut rng);
            let y = ar_signal(&coeffs, 2048, seed);
            let r = autocorrelate(&y, order).unwrap();
            let sol = levinson_durbin(&r, order).unwrap();
            let direct = oracle_normal_equations(&r, order);
            for (a, b) in sol.coeffs.iter().zip(&direct) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1.0));
            }
            prop_assert!(sol.reflection.iter().all(|k| k.abs() <= 1.0));
        }

        #[test]
        fn prediction_is_linear(
            h1 in proptest::collection::vec(-1.0f64..1.0, 4),
            h2 in proptest::collection::vec(-1.0f64..1.0, 4),
            s in -1.0f64..1.0,
        ) {
            let f = LpcFrame { coeffs: vec![0.1, -0.05, 0.02, 0.01], residual_variance: 1.0, start: 0, length: 8 };
            let combo: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a + s * b).collect();
            let lhs = predict_mean(&f, &combo).unwrap();
            let rhs = predict_mean(&f, &h1).unwrap() + s * predict_mean(&f, &h2).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-12);
        }
    }
}
