//! Knowledge-wise metrics.
//!
//! Forgetting scores aggregate each instance over a language set; the
//! separability scores (ROC and PR area) measure how well those scores
//! rank forget instances above retain instances; persistence scores
//! measure how often an instance forgotten in one language is still
//! answered correctly in another.

mod auc;
mod persistence;
mod scores;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataError, DatasetSpec, EvalMatrix};

pub use auc::{
    average_precision, confusion_counts_for, pr_curve, roc_auc, roc_curve, ConfusionCounts,
    PrPoint, RocPoint,
};
pub use persistence::{
    kps, pairwise_counts, pairwise_persistence, persistence_report, BaseKps, ComparisonLabel,
    ComparisonSet, KpsValue, PairCounts, PairwiseEntry, PersistenceReport,
};
pub use scores::{forgetting_scores, norm_probability, ForgettingScores};

#[derive(Debug, Error)]
pub enum MetricError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("answer has zero tokens")]
    ZeroLengthAnswer,
    #[error("summed log-probability must be finite and <= 0, got {0}")]
    InvalidLogProb(f64),
    #[error("cell ({instance}, {language}) has no `{field}` value")]
    MissingField {
        field: &'static str,
        instance: String,
        language: String,
    },
    #[error("language set is empty")]
    EmptyLanguageSet,
    #[error("no {0} scores")]
    EmptyClass(&'static str),
    #[error("score {0} is not a finite value in [0, 1]")]
    InvalidScore(f64),
    #[error("base and comparison language are both `{0}`")]
    SameLanguage(String),
    #[error("base language `{0}` is part of its own comparison set")]
    BaseInComparison(String),
    #[error("comparison language set is empty")]
    EmptyComparison,
    #[error("baseline value is zero")]
    ZeroBaseline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMode {
    /// Semantic-equivalence based.
    Gen,
    /// Length-normalised probability based.
    Prob,
}

impl ScoreMode {
    pub const ALL: [ScoreMode; 2] = [ScoreMode::Prob, ScoreMode::Gen];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreMode::Gen => "gen",
            ScoreMode::Prob => "prob",
        }
    }

    /// Column label used in rendered tables.
    pub fn title(self) -> &'static str {
        match self {
            ScoreMode::Gen => "Gen",
            ScoreMode::Prob => "Prob",
        }
    }
}

impl fmt::Display for ScoreMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScoreMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gen" | "generation" | "se" => Ok(ScoreMode::Gen),
            "prob" | "probability" => Ok(ScoreMode::Prob),
            other => Err(format!(
                "unknown score mode `{other}` (expected gen or prob)"
            )),
        }
    }
}

/// Which language subset a knowledge-wise metric is computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Case {
    /// Hold-out languages only.
    Case1,
    /// Training languages only.
    Case2,
    /// Every language.
    All,
}

impl Case {
    pub fn languages(self, spec: &DatasetSpec) -> Vec<String> {
        match self {
            Case::Case1 => spec.holdout_codes(),
            Case::Case2 => spec.training_codes(),
            Case::All => spec.codes(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::All => "all",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Case::Case1 => "Case 1",
            Case::Case2 => "Case 2",
            Case::All => "All",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "1" | "case1" | "holdout" => Ok(Case::Case1),
            "2" | "case2" | "training" => Ok(Case::Case2),
            "all" => Ok(Case::All),
            other => Err(format!("unknown case `{other}` (expected 1, 2 or all)")),
        }
    }
}

/// ROC area of forget (positive) against retain (negative) scores.
pub fn kss_roc(scores: &ForgettingScores) -> Result<f64, MetricError> {
    roc_auc(&scores.forget_values(), &scores.retain_values())
}

/// Step-wise average precision with forget instances as positives.
pub fn kss_pr(scores: &ForgettingScores) -> Result<f64, MetricError> {
    average_precision(&scores.forget_values(), &scores.retain_values())
}

/// Confusion counts when an instance is predicted forgotten iff its score
/// is at least `threshold`.
pub fn confusion_counts(scores: &ForgettingScores, threshold: f64) -> ConfusionCounts {
    confusion_counts_for(&scores.forget_values(), &scores.retain_values(), threshold)
}

/// `(method - baseline) / baseline * 100`, rounded half away from zero.
pub fn relative_increase(method_value: f64, baseline_value: f64) -> Result<i64, MetricError> {
    if baseline_value == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    let raw = (method_value - baseline_value) / baseline_value * 100.0;
    // Snap representation error (e.g. 19.999999999999996) before rounding.
    let snapped = (raw * 1e9).round() / 1e9;
    Ok(snapped.round() as i64)
}

/// One serialized metric value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: String,
    pub mode: ScoreMode,
    pub case: Case,
    pub value: f64,
    pub n_forget: usize,
    pub n_retain: usize,
}

/// KSS-ROC and KSS-PR for every requested (mode, case) pair. Cases whose
/// language set is empty are skipped.
pub fn evaluate_kss(
    matrix: &EvalMatrix,
    modes: &[ScoreMode],
    cases: &[Case],
) -> Result<Vec<MetricResult>, MetricError> {
    let grid: Vec<(ScoreMode, Case, Vec<String>)> = modes
        .iter()
        .flat_map(|&mode| cases.iter().map(move |&case| (mode, case)))
        .map(|(mode, case)| (mode, case, case.languages(matrix.spec())))
        .filter(|(_, _, langs)| !langs.is_empty())
        .collect();

    let per_cell: Vec<Vec<MetricResult>> = grid
        .par_iter()
        .map(|(mode, case, langs)| {
            let scores = forgetting_scores(matrix, *mode, langs)?;
            let (nf, nr) = (scores.n_forget(), scores.n_retain());
            let make = |metric: &str, value: f64| MetricResult {
                metric: metric.to_string(),
                mode: *mode,
                case: *case,
                value,
                n_forget: nf,
                n_retain: nr,
            };
            Ok(vec![
                make("kss_roc", kss_roc(&scores)?),
                make("kss_pr", kss_pr(&scores)?),
            ])
        })
        .collect::<Result<_, MetricError>>()?;
    Ok(per_cell.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scores(forget: &[f64], retain: &[f64]) -> ForgettingScores {
        ForgettingScores::from_values(ScoreMode::Prob, forget, retain).unwrap()
    }

    #[test]
    fn kss_roc_examples() {
        assert_eq!(kss_roc(&scores(&[0.9, 0.8], &[0.1, 0.2])).unwrap(), 1.0);
        assert_eq!(kss_roc(&scores(&[0.5], &[0.5])).unwrap(), 0.5);
        // Pairs: (0.8,0.5) (0.8,0.2) (0.3,0.2) win, (0.3,0.5) loses.
        assert_eq!(kss_roc(&scores(&[0.8, 0.3], &[0.5, 0.2])).unwrap(), 0.75);
    }

    #[test]
    fn kss_pr_examples() {
        assert_eq!(kss_pr(&scores(&[1.0], &[0.0])).unwrap(), 1.0);
        assert_eq!(kss_pr(&scores(&[0.5], &[0.5, 0.5, 0.5])).unwrap(), 0.25);
        assert_eq!(kss_pr(&scores(&[0.9], &[0.95, 0.1])).unwrap(), 0.5);
    }

    #[test]
    fn empty_class_is_an_error() {
        let s = scores(&[0.3], &[]);
        assert!(matches!(
            kss_roc(&s),
            Err(MetricError::EmptyClass("retain"))
        ));
        assert!(matches!(kss_pr(&s), Err(MetricError::EmptyClass("retain"))));
    }

    #[test]
    fn confusion_examples() {
        let s = scores(&[0.8, 0.3], &[0.5, 0.2]);
        let c = confusion_counts(&s, 0.5);
        assert_eq!((c.tp, c.fn_, c.fp, c.tn), (1, 1, 1, 1));

        let all = confusion_counts(&s, 0.0);
        assert_eq!((all.fn_, all.tn), (0, 0));

        let none = confusion_counts(&s, 0.8 + 1e-9);
        assert_eq!((none.tp, none.fp), (0, 0));
    }

    #[test]
    fn relative_increase_examples() {
        assert_eq!(relative_increase(0.57, 0.52).unwrap(), 10);
        assert_eq!(relative_increase(0.52, 0.52).unwrap(), 0);
        assert_eq!(relative_increase(0.88, 0.01).unwrap(), 8700);
        assert_eq!(relative_increase(0.06, 0.05).unwrap(), 20);
        assert_eq!(relative_increase(0.40, 0.50).unwrap(), -20);
        assert_eq!(relative_increase(0.5, 0.2).unwrap(), 150);
        assert!(matches!(
            relative_increase(0.3, 0.0),
            Err(MetricError::ZeroBaseline)
        ));
    }

    #[test]
    fn relative_increase_rounds_half_away_from_zero() {
        // 0.03125 / 0.25 = 12.5 %
        assert_eq!(relative_increase(0.28125, 0.25).unwrap(), 13);
        assert_eq!(relative_increase(0.21875, 0.25).unwrap(), -13);
    }

    #[test]
    fn parse_mode_and_case() {
        assert_eq!("gen".parse::<ScoreMode>().unwrap(), ScoreMode::Gen);
        assert_eq!("PROB".parse::<ScoreMode>().unwrap(), ScoreMode::Prob);
        assert!("x".parse::<ScoreMode>().is_err());
        assert_eq!("1".parse::<Case>().unwrap(), Case::Case1);
        assert_eq!("case2".parse::<Case>().unwrap(), Case::Case2);
    }

    #[test]
    fn metric_result_json_shape() {
        let r = MetricResult {
            metric: "kss_roc".into(),
            mode: ScoreMode::Prob,
            case: Case::Case1,
            value: 0.72,
            n_forget: 3,
            n_retain: 7,
        };
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"metric":"kss_roc","mode":"prob","case":"case1","value":0.72,"n_forget":3,"n_retain":7})
        );
    }
}
