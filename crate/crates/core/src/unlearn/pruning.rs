//! Neuron importance statistics for structured pruning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::UnlearnError;
use crate::dataset::Split;

pub const DEFAULT_EPSILON: f64 = 1e-6;

/// MLP activations of one datapoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivationSample {
    pub activations: Vec<f64>,
    pub tag: Split,
}

impl ActivationSample {
    pub fn new(activations: Vec<f64>, tag: Split) -> Result<Self, UnlearnError> {
        let s = Self { activations, tag };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), UnlearnError> {
        match self.activations.iter().find(|v| !v.is_finite()) {
            Some(v) => Err(UnlearnError::NonFinite(*v)),
            None => Ok(()),
        }
    }
}

/// Per-neuron statistics, one entry per neuron in each vector.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NeuronStats {
    /// Population standard deviation.
    pub std: Vec<f64>,
    /// Mean absolute activation.
    pub abs: Vec<f64>,
    /// Fraction of samples with a positive activation.
    pub freq: Vec<f64>,
    /// Root mean square activation.
    pub rms: Vec<f64>,
}

impl NeuronStats {
    pub fn n_neurons(&self) -> usize {
        self.std.len()
    }

    pub fn columns(&self) -> [&[f64]; 4] {
        [&self.std, &self.abs, &self.freq, &self.rms]
    }
}

/// `(v − min) / (max − min)`; a constant vector maps to zeros.
pub fn minmax_normalize(values: &[f64]) -> Result<Vec<f64>, UnlearnError> {
    if values.is_empty() {
        return Err(UnlearnError::EmptyInput);
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = max - min;
    if range == 0.0 {
        return Ok(vec![0.0; values.len()]);
    }
    Ok(values
        .iter()
        .map(|v| ((v - min) / range).clamp(0.0, 1.0))
        .collect())
}

fn column_stats(samples: &[&ActivationSample], j: usize) -> (f64, f64, f64, f64) {
    let n = samples.len() as f64;
    let (mut sum, mut abs, mut pos, mut sq) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        let z = s.activations[j];
        sum += z;
        abs += z.abs();
        sq += z * z;
        if z > 0.0 {
            pos += 1.0;
        }
    }
    let mean = sum / n;
    let var = samples
        .iter()
        .map(|s| (s.activations[j] - mean).powi(2))
        .sum::<f64>()
        / n;
    (var.sqrt(), abs / n, pos / n, (sq / n).sqrt())
}

fn stats_of(samples: &[&ActivationSample]) -> Result<NeuronStats, UnlearnError> {
    let first = samples.first().ok_or(UnlearnError::EmptyInput)?;
    let width = first.activations.len();
    for s in samples {
        s.validate()?;
        if s.activations.len() != width {
            return Err(UnlearnError::DimensionMismatch {
                expected: width,
                found: s.activations.len(),
            });
        }
    }
    let per: Vec<_> = (0..width)
        .into_par_iter()
        .map(|j| column_stats(samples, j))
        .collect();
    let mut out = NeuronStats::default();
    for (std, abs, freq, rms) in per {
        out.std.push(std);
        out.abs.push(abs);
        out.freq.push(freq);
        out.rms.push(rms);
    }
    Ok(out)
}

/// Statistics over every sample regardless of tag.
pub fn importance_scores(samples: &[ActivationSample]) -> Result<NeuronStats, UnlearnError> {
    let refs: Vec<&ActivationSample> = samples.iter().collect();
    stats_of(&refs)
}

/// `(forget stats, retain stats)`, partitioning samples by tag.
pub fn importance_by_dataset(
    samples: &[ActivationSample],
) -> Result<(NeuronStats, NeuronStats), UnlearnError> {
    let pick = |tag: Split| -> Result<NeuronStats, UnlearnError> {
        let part: Vec<&ActivationSample> = samples.iter().filter(|s| s.tag == tag).collect();
        if part.is_empty() {
            return Err(UnlearnError::EmptyDataset(tag));
        }
        stats_of(&part)
    };
    let forget = pick(Split::Forget)?;
    let retain = pick(Split::Retain)?;
    if forget.n_neurons() != retain.n_neurons() {
        return Err(UnlearnError::DimensionMismatch {
            expected: forget.n_neurons(),
            found: retain.n_neurons(),
        });
    }
    Ok((forget, retain))
}

/// `Σ_k MinMax(I_k)` per neuron over the four statistics.
pub fn normalized_sum(stats: &NeuronStats) -> Result<Vec<f64>, UnlearnError> {
    let mut total = vec![0.0; stats.n_neurons()];
    for col in stats.columns() {
        if col.len() != total.len() {
            return Err(UnlearnError::DimensionMismatch {
                expected: total.len(),
                found: col.len(),
            });
        }
        for (t, v) in total.iter_mut().zip(minmax_normalize(col)?) {
            *t += v;
        }
    }
    Ok(total)
}

/// Elementwise `forget / (retain + ε)`.
pub fn agnostic_from_sums(
    forget_sum: &[f64],
    retain_sum: &[f64],
    epsilon: f64,
) -> Result<Vec<f64>, UnlearnError> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(UnlearnError::InvalidEpsilon(epsilon));
    }
    if forget_sum.len() != retain_sum.len() {
        return Err(UnlearnError::DimensionMismatch {
            expected: forget_sum.len(),
            found: retain_sum.len(),
        });
    }
    Ok(forget_sum
        .iter()
        .zip(retain_sum)
        .map(|(f, r)| f / (r + epsilon))
        .collect())
}

/// Language-agnostic pruning score per neuron: normalised forget importance
/// over normalised retain importance. Higher means more forget-specific.
pub fn agnostic_importance(
    forget: &NeuronStats,
    retain: &NeuronStats,
    epsilon: f64,
) -> Result<Vec<f64>, UnlearnError> {
    if forget.n_neurons() != retain.n_neurons() {
        return Err(UnlearnError::DimensionMismatch {
            expected: forget.n_neurons(),
            found: retain.n_neurons(),
        });
    }
    agnostic_from_sums(&normalized_sum(forget)?, &normalized_sum(retain)?, epsilon)
}
