use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{MetricError, ScoreMode};
use crate::dataset::EvalMatrix;

/// `P(a|q)^(1/|a|)` from the summed per-token log-probabilities.
pub fn norm_probability(prob_product_log: f64, token_count: u32) -> Result<f64, MetricError> {
    if token_count == 0 {
        return Err(MetricError::ZeroLengthAnswer);
    }
    if !prob_product_log.is_finite() || prob_product_log > 0.0 {
        return Err(MetricError::InvalidLogProb(prob_product_log));
    }
    Ok((prob_product_log / f64::from(token_count)).exp())
}

/// Per-instance forgetting scores over one language subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgettingScores {
    pub mode: ScoreMode,
    pub langs: Vec<String>,
    pub forget: BTreeMap<String, f64>,
    pub retain: BTreeMap<String, f64>,
}

fn check_score(s: f64) -> Result<f64, MetricError> {
    if s.is_finite() && (0.0..=1.0).contains(&s) {
        Ok(s)
    } else {
        Err(MetricError::InvalidScore(s))
    }
}

impl ForgettingScores {
    /// Builds scores from bare values; ids are generated as `f{n}` / `r{n}`.
    pub fn from_values(
        mode: ScoreMode,
        forget: &[f64],
        retain: &[f64],
    ) -> Result<Self, MetricError> {
        let label = |prefix: char, values: &[f64]| -> Result<BTreeMap<String, f64>, MetricError> {
            values
                .iter()
                .enumerate()
                .map(|(i, &v)| Ok((format!("{prefix}{i:06}"), check_score(v)?)))
                .collect()
        };
        Ok(Self {
            mode,
            langs: Vec::new(),
            forget: label('f', forget)?,
            retain: label('r', retain)?,
        })
    }

    pub fn forget_values(&self) -> Vec<f64> {
        self.forget.values().copied().collect()
    }

    pub fn retain_values(&self) -> Vec<f64> {
        self.retain.values().copied().collect()
    }

    pub fn n_forget(&self) -> usize {
        self.forget.len()
    }

    pub fn n_retain(&self) -> usize {
        self.retain.len()
    }
}

/// Gen: `1 - mean_l SE(i,l)`. Prob: `1 - mean_l prob(i,l)`.
pub fn forgetting_scores<S: AsRef<str>>(
    matrix: &EvalMatrix,
    mode: ScoreMode,
    langs: &[S],
) -> Result<ForgettingScores, MetricError> {
    if langs.is_empty() {
        return Err(MetricError::EmptyLanguageSet);
    }
    let spec = matrix.spec();
    for l in langs {
        spec.require_language(l.as_ref())?;
    }
    let n = langs.len();

    let score_of = |id: &str| -> Result<f64, MetricError> {
        match mode {
            ScoreMode::Gen => {
                let mut correct = 0usize;
                for l in langs {
                    let rec = matrix.cell(id, l.as_ref())?;
                    match rec.se {
                        Some(true) => correct += 1,
                        Some(false) => {}
                        None => {
                            return Err(MetricError::MissingField {
                                field: "se",
                                instance: id.to_string(),
                                language: l.as_ref().to_string(),
                            })
                        }
                    }
                }
                // (n - k) / n keeps the score exactly on the k/n lattice.
                Ok((n - correct) as f64 / n as f64)
            }
            ScoreMode::Prob => {
                let mut total = 0.0;
                for l in langs {
                    let rec = matrix.cell(id, l.as_ref())?;
                    total += rec.prob.ok_or_else(|| MetricError::MissingField {
                        field: "prob",
                        instance: id.to_string(),
                        language: l.as_ref().to_string(),
                    })?;
                }
                Ok((1.0 - total / n as f64).clamp(0.0, 1.0))
            }
        }
    };

    let collect =
        |ids: &std::collections::BTreeSet<String>| -> Result<BTreeMap<String, f64>, MetricError> {
            ids.iter()
                .map(|id| Ok((id.clone(), score_of(id)?)))
                .collect()
        };

    Ok(ForgettingScores {
        mode,
        langs: langs.iter().map(|l| l.as_ref().to_string()).collect(),
        forget: collect(spec.forget_ids())?,
        retain: collect(spec.retain_ids())?,
    })
}
