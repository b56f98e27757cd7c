//! Value calculators for unlearning objectives and pruning importance.
//!
//! Nothing here trains or differentiates anything. The functions evaluate
//! the objectives on supplied log-probabilities so a training stack can
//! check its own implementation against them.
//!
//! Sign convention: [`ga_loss`] returns the expected log-likelihood
//! `E[log F(a|q)]` (always ≤ 0), which unlearning drives down.
//! Callers that minimise should negate it.

mod io;
mod pruning;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Split;

pub use io::{
    read_activations_binary, read_activations_jsonl, read_distributions_jsonl,
    read_sequences_jsonl, write_activations_binary, ACTIVATION_MAGIC,
};
pub use pruning::{
    agnostic_from_sums, agnostic_importance, importance_by_dataset, importance_scores,
    minmax_normalize, normalized_sum, ActivationSample, NeuronStats, DEFAULT_EPSILON,
};

/// Default NPO inverse temperature.
pub const DEFAULT_BETA: f64 = 0.1;

/// Tolerance on `Σ p = 1` for probability vectors.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum UnlearnError {
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty input")]
    EmptyInput,
    #[error("no {0} samples")]
    EmptyDataset(Split),
    #[error("log-probability {0} is not a finite value ≤ 0")]
    InvalidLogProb(f64),
    #[error("current and reference sequences differ in length ({current} vs {reference})")]
    LengthMismatch { current: usize, reference: usize },
    #[error("sequence has no reference log-probabilities")]
    MissingReference,
    #[error("beta must be a positive finite number, got {0}")]
    InvalidBeta(f64),
    #[error("epsilon must be a positive finite number, got {0}")]
    InvalidEpsilon(f64),
    #[error("distribution sums to {0}, not 1")]
    UnnormalizedDistribution(f64),
    #[error("distribution entry {0} is negative or not finite")]
    InvalidProbability(f64),
    #[error("current distribution has mass at index {0} where the reference has none")]
    SupportMismatch(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("activation value {0} is not finite")]
    NonFinite(f64),
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("binary activation file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Per-token log-probabilities of one answer under the model being
/// unlearned and, optionally, under the frozen reference model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceLogProb {
    pub current: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

fn check_logps(values: &[f64]) -> Result<(), UnlearnError> {
    match values.iter().find(|v| !(v.is_finite() && **v <= 0.0)) {
        Some(v) => Err(UnlearnError::InvalidLogProb(*v)),
        None => Ok(()),
    }
}

impl SequenceLogProb {
    pub fn new(current: Vec<f64>) -> Result<Self, UnlearnError> {
        check_logps(&current)?;
        Ok(Self {
            current,
            reference: None,
        })
    }

    pub fn with_reference(current: Vec<f64>, reference: Vec<f64>) -> Result<Self, UnlearnError> {
        let s = Self {
            current,
            reference: Some(reference),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), UnlearnError> {
        check_logps(&self.current)?;
        if let Some(r) = &self.reference {
            check_logps(r)?;
            if r.len() != self.current.len() {
                return Err(UnlearnError::LengthMismatch {
                    current: self.current.len(),
                    reference: r.len(),
                });
            }
        }
        Ok(())
    }

    /// `log F(a|q)` under the current model.
    pub fn log_likelihood(&self) -> f64 {
        self.current.iter().sum()
    }

    /// `log F(a|q) − log F_ref(a|q)`.
    pub fn log_ratio(&self) -> Result<f64, UnlearnError> {
        let r = self
            .reference
            .as_ref()
            .ok_or(UnlearnError::MissingReference)?;
        Ok(self.log_likelihood() - r.iter().sum::<f64>())
    }
}

/// Mean sequence log-likelihood over the batch.
pub fn ga_loss(batch: &[SequenceLogProb]) -> Result<f64, UnlearnError> {
    if batch.is_empty() {
        return Err(UnlearnError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        s.validate()?;
        total += s.log_likelihood();
    }
    Ok(total / batch.len() as f64)
}

pub fn gagdr_loss(
    forget: &[SequenceLogProb],
    retain: &[SequenceLogProb],
) -> Result<f64, UnlearnError> {
    Ok(ga_loss(forget)? - ga_loss(retain)?)
}

/// A pair of next-token distributions on one retain example.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistributionPair {
    pub current: Vec<f64>,
    pub reference: Vec<f64>,
}

fn check_simplex(p: &[f64]) -> Result<(), UnlearnError> {
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(UnlearnError::InvalidProbability(*v));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
        return Err(UnlearnError::UnnormalizedDistribution(sum));
    }
    Ok(())
}

/// `KL(current ‖ reference) = Σ p log(p / q)`, with `0 log 0 = 0`.
pub fn kl_divergence(current: &[f64], reference: &[f64]) -> Result<f64, UnlearnError> {
    if current.len() != reference.len() {
        return Err(UnlearnError::DimensionMismatch {
            expected: reference.len(),
            found: current.len(),
        });
    }
    if current.is_empty() {
        return Err(UnlearnError::EmptyInput);
    }
    check_simplex(current)?;
    check_simplex(reference)?;
    let mut kl = 0.0;
    for (idx, (&p, &q)) in current.iter().zip(reference).enumerate() {
        if p == 0.0 {
            continue;
        }
        if q == 0.0 {
            return Err(UnlearnError::SupportMismatch(idx));
        }
        kl += p * (p / q).ln();
    }
    // Rounding can leave a tiny negative sum for near-identical inputs.
    Ok(kl.max(0.0))
}

/// `ga_loss(forget) + mean KL` over the retain distributions.
pub fn gaklr_loss(
    forget: &[SequenceLogProb],
    retain: &[DistributionPair],
) -> Result<f64, UnlearnError> {
    let ga = ga_loss(forget)?;
    if retain.is_empty() {
        return Err(UnlearnError::EmptyBatch);
    }
    let mut kl = 0.0;
    for pair in retain {
        kl += kl_divergence(&pair.current, &pair.reference)?;
    }
    Ok(ga + kl / retain.len() as f64)
}

/// `ln(1 + e^x)` without overflow or loss of precision for large |x|.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Mean of `−log(1 − σ(β·log_ratio))` over the batch.
///
/// Since `1 − σ(x) = σ(−x)`, each term is `softplus(β·log_ratio)`.
pub fn npo_loss(batch: &[SequenceLogProb], beta: f64) -> Result<f64, UnlearnError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(UnlearnError::InvalidBeta(beta));
    }
    if batch.is_empty() {
        return Err(UnlearnError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        s.validate()?;
        total += softplus(beta * s.log_ratio()?);
    }
    Ok(total / batch.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(v: &[f64]) -> SequenceLogProb {
        SequenceLogProb::new(v.to_vec()).unwrap()
    }

    fn with_ref(cur: &[f64], r: &[f64]) -> SequenceLogProb {
        SequenceLogProb::with_reference(cur.to_vec(), r.to_vec()).unwrap()
    }

    #[test]
    fn ga_examples() {
        assert_eq!(ga_loss(&[seq(&[0.0, 0.0, 0.0])]).unwrap(), 0.0);
        assert_eq!(ga_loss(&[seq(&[0.5f64.ln()])]).unwrap(), 0.5f64.ln());
        assert_eq!(ga_loss(&[seq(&[-1.0]), seq(&[-1.0, -2.0])]).unwrap(), -2.0);
        assert!(matches!(ga_loss(&[]), Err(UnlearnError::EmptyBatch)));
    }

    #[test]
    fn gagdr_examples() {
        assert_eq!(
            gagdr_loss(&[seq(&[-2.0])], &[seq(&[-1.0, -1.0])]).unwrap(),
            0.0
        );
        assert_eq!(gagdr_loss(&[seq(&[-1.0])], &[seq(&[-3.0])]).unwrap(), 2.0);
        assert_eq!(
            gagdr_loss(&[seq(&[0.0])], &[seq(&[0.0, 0.0])]).unwrap(),
            0.0
        );
        assert!(matches!(
            gagdr_loss(&[seq(&[0.0])], &[]),
            Err(UnlearnError::EmptyBatch)
        ));
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.2, 0.8], &[0.2, 0.8]).unwrap(), 0.0);
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        let hand = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((kl - hand).abs() < 1e-15);
        assert!((kl - 0.1438).abs() < 1e-4);
        assert!(matches!(
            kl_divergence(&[0.5, 0.6], &[0.5, 0.5]),
            Err(UnlearnError::UnnormalizedDistribution(_))
        ));
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0, 0.0]),
            Err(UnlearnError::SupportMismatch(1))
        ));
        assert_eq!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).unwrap(), 2f64.ln());
    }

    #[test]
    fn gaklr_requires_forget() {
        let pair = DistributionPair {
            current: vec![0.5, 0.5],
            reference: vec![0.5, 0.5],
        };
        assert!(matches!(
            gaklr_loss(&[], std::slice::from_ref(&pair)),
            Err(UnlearnError::EmptyBatch)
        ));
        assert_eq!(gaklr_loss(&[seq(&[-1.0])], &[pair]).unwrap(), -1.0);
    }

    #[test]
    fn npo_examples() {
        let ln2 = 2f64.ln();
        for beta in [0.1, 1.0, 7.5] {
            assert!(
                (npo_loss(&[with_ref(&[-1.0, -2.0], &[-3.0, 0.0])], beta).unwrap() - ln2).abs()
                    < 1e-15
            );
        }
        let tiny = npo_loss(&[with_ref(&[-50.0], &[0.0])], 1.0).unwrap();
        assert!(tiny > 0.0 && tiny < 1e-20);
        let one = npo_loss(&[with_ref(&[-1.0], &[-2.0])], 1.0).unwrap();
        let sigma = 1.0 / (1.0 + (-1.0f64).exp());
        assert!((one + (1.0 - sigma).ln()).abs() < 1e-12);
        assert!((one - 1.3133).abs() < 1e-4);
        assert!(matches!(
            npo_loss(&[seq(&[-1.0])], 0.1),
            Err(UnlearnError::MissingReference)
        ));
        assert!(matches!(
            npo_loss(&[with_ref(&[-1.0], &[-1.0])], 0.0),
            Err(UnlearnError::InvalidBeta(_))
        ));
    }

    #[test]
    fn invalid_sequences() {
        assert!(matches!(
            SequenceLogProb::new(vec![0.1]),
            Err(UnlearnError::InvalidLogProb(_))
        ));
        assert!(SequenceLogProb::new(vec![f64::NAN]).is_err());
        assert!(matches!(
            SequenceLogProb::with_reference(vec![-1.0], vec![-1.0, -1.0]),
            Err(UnlearnError::LengthMismatch { .. })
        ));
    }

    fn simplex(n: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
            let s: f64 = w.iter().sum();
            w.iter().map(|x| x / s).collect()
        })
    }

    fn logps() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-20.0f64..=0.0, 1..8)
    }

    proptest! {
        #[test]
        fn ga_is_non_positive(batch in prop::collection::vec(logps(), 1..6)) {
            let batch: Vec<_> = batch.into_iter().map(|v| SequenceLogProb::new(v).unwrap()).collect();
            prop_assert!(ga_loss(&batch).unwrap() <= 0.0);
            prop_assert_eq!(gagdr_loss(&batch, &batch).unwrap(), 0.0);
        }

        #[test]
        fn kl_non_negative((p, q) in (2usize..6).prop_flat_map(|n| (simplex(n), simplex(n)))) {
            let kl = kl_divergence(&p, &q).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            if p.iter().zip(&q).any(|(a, b)| (a - b).abs() > 1e-6) {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn npo_positive_and_increasing(c in -40.0f64..-1.0, d in 0.001f64..1.0, beta in 0.01f64..5.0) {
            let lo = npo_loss(&[with_ref(&[c], &[-20.0])], beta).unwrap();
            let hi = npo_loss(&[with_ref(&[c + d], &[-20.0])], beta).unwrap();
            prop_assert!(lo > 0.0);
            prop_assert!(hi > lo);
        }
    }
}
