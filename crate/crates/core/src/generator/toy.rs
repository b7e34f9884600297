//! Fixed-weight single-layer gated cell:
//! `z = tanh(h W_f + c V_f) * sigmoid(h W_g + c V_g)`, `logits = z U`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{GeneratorState, SampleModel};
use crate::constraint::CategoricalDistribution;
use crate::error::{Error, Result};
use crate::signal::MULAW_LEVELS;

/// Row-major weight matrices of the gated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCellWeights {
    pub receptive_field: usize,
    pub conditioning_len: usize,
    pub hidden: usize,
    /// `receptive_field x hidden`
    pub filter_input: Vec<f64>,
    /// `receptive_field x hidden`
    pub gate_input: Vec<f64>,
    /// `conditioning_len x hidden`
    pub filter_cond: Vec<f64>,
    /// `conditioning_len x hidden`
    pub gate_cond: Vec<f64>,
    /// `hidden x 256`
    pub output: Vec<f64>,
}

impl ToyCellWeights {
    pub fn zeros(receptive_field: usize, conditioning_len: usize, hidden: usize) -> Self {
        Self {
            receptive_field,
            conditioning_len,
            hidden,
            filter_input: vec![0.0; receptive_field * hidden],
            gate_input: vec![0.0; receptive_field * hidden],
            filter_cond: vec![0.0; conditioning_len * hidden],
            gate_cond: vec![0.0; conditioning_len * hidden],
            output: vec![0.0; hidden * MULAW_LEVELS],
        }
    }

    /// Gaussian entries scaled by `1/sqrt(fan_in)`, reproducible from the seed.
    pub fn from_seed(
        seed: u64,
        receptive_field: usize,
        conditioning_len: usize,
        hidden: usize,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| -> Vec<f64> {
            let scale = 1.0 / (rows.max(1) as f64).sqrt();
            (0..rows * cols)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        };
        Self {
            receptive_field,
            conditioning_len,
            hidden,
            filter_input: draw(receptive_field, hidden),
            gate_input: draw(receptive_field, hidden),
            filter_cond: draw(conditioning_len, hidden),
            gate_cond: draw(conditioning_len, hidden),
            output: draw(hidden, MULAW_LEVELS),
        }
    }
}

fn accumulate(acc: &mut [f64], x: &[f64], w: &[f64]) {
    let cols = acc.len();
    for (row, &v) in x.iter().enumerate() {
        if v != 0.0 {
            for (a, wv) in acc.iter_mut().zip(&w[row * cols..(row + 1) * cols]) {
                *a += v * wv;
            }
        }
    }
}

/// Raw output logits of the cell.
pub fn toy_logits(w: &ToyCellWeights, state: &GeneratorState) -> Result<Vec<f64>> {
    if state.history().len() != w.receptive_field {
        return Err(Error::LengthMismatch {
            left: state.history().len(),
            right: w.receptive_field,
        });
    }
    if state.conditioning().len() != w.conditioning_len {
        return Err(Error::LengthMismatch {
            left: state.conditioning().len(),
            right: w.conditioning_len,
        });
    }
    let mut filter = vec![0.0; w.hidden];
    let mut gate = vec![0.0; w.hidden];
    accumulate(&mut filter, state.history(), &w.filter_input);
    accumulate(&mut filter, state.conditioning(), &w.filter_cond);
    accumulate(&mut gate, state.history(), &w.gate_input);
    accumulate(&mut gate, state.conditioning(), &w.gate_cond);
    let z: Vec<f64> = filter
        .iter()
        .zip(&gate)
        .map(|(f, g)| f.tanh() / (1.0 + (-g).exp()))
        .collect();
    let mut logits = vec![0.0; MULAW_LEVELS];
    accumulate(&mut logits, &z, &w.output);
    Ok(logits)
}

pub fn toy_distribution(
    w: &ToyCellWeights,
    state: &GeneratorState,
) -> Result<CategoricalDistribution> {
    CategoricalDistribution::from_logits(&toy_logits(w, state)?)
}

/// [`SampleModel`] backed by a gated cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyCell {
    pub weights: ToyCellWeights,
}

impl ToyCell {
    pub fn new(weights: ToyCellWeights) -> Self {
        Self { weights }
    }
}

impl SampleModel for ToyCell {
    fn distribution(&self, state: &GeneratorState) -> Result<CategoricalDistribution> {
        toy_distribution(&self.weights, state)
    }
}
