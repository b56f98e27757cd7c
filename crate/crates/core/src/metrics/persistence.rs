//! Cross-lingual persistence: among forget instances judged forgotten in a
//! base language, the fraction still answered correctly in another.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::dataset::{DatasetSpec, EvalMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    /// Forget instances with SE = 0 in the base language.
    pub forgotten_in_base: usize,
    /// Of those, the ones with SE = 1 in the comparison language.
    pub retained_in_other: usize,
}

impl PairCounts {
    /// `None` when nothing was forgotten in the base language.
    pub fn value(&self) -> Option<f64> {
        (self.forgotten_in_base > 0)
            .then(|| self.retained_in_other as f64 / self.forgotten_in_base as f64)
    }
}

fn se_bit(matrix: &EvalMatrix, id: &str, lang: &str) -> Result<bool, MetricError> {
    matrix
        .cell(id, lang)?
        .se
        .ok_or_else(|| MetricError::MissingField {
            field: "se",
            instance: id.to_string(),
            language: lang.to_string(),
        })
}

pub fn pairwise_counts(
    matrix: &EvalMatrix,
    base: &str,
    other: &str,
) -> Result<PairCounts, MetricError> {
    if base == other {
        return Err(MetricError::SameLanguage(base.to_string()));
    }
    let spec = matrix.spec();
    spec.require_language(base)?;
    spec.require_language(other)?;

    let mut counts = PairCounts {
        forgotten_in_base: 0,
        retained_in_other: 0,
    };
    for id in spec.forget_ids() {
        if !se_bit(matrix, id, base)? {
            counts.forgotten_in_base += 1;
            if se_bit(matrix, id, other)? {
                counts.retained_in_other += 1;
            }
        }
    }
    Ok(counts)
}

/// `ps(base, other)`; `None` when the conditioning set is empty.
pub fn pairwise_persistence(
    matrix: &EvalMatrix,
    base: &str,
    other: &str,
) -> Result<Option<f64>, MetricError> {
    Ok(pairwise_counts(matrix, base, other)?.value())
}

/// KPS for one base language: the mean over defined pairwise scores.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpsValue {
    pub value: Option<f64>,
    pub defined_pairs: usize,
    pub total_pairs: usize,
}

impl KpsValue {
    /// Fraction of comparison languages with a defined pairwise score.
    pub fn coverage(&self) -> f64 {
        if self.total_pairs == 0 {
            0.0
        } else {
            self.defined_pairs as f64 / self.total_pairs as f64
        }
    }

    /// Mean of the defined entries in `values`; coverage counts every entry.
    pub fn from_pairs(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let mut total = 0;
        let defined: Vec<f64> = values
            .into_iter()
            .inspect(|_| total += 1)
            .flatten()
            .collect();
        let value =
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        Self {
            value,
            defined_pairs: defined.len(),
            total_pairs: total,
        }
    }
}

pub fn kps<S: AsRef<str>>(
    matrix: &EvalMatrix,
    base: &str,
    comparison: &[S],
) -> Result<KpsValue, MetricError> {
    if comparison.is_empty() {
        return Err(MetricError::EmptyComparison);
    }
    if comparison.iter().any(|l| l.as_ref() == base) {
        return Err(MetricError::BaseInComparison(base.to_string()));
    }
    let values = comparison
        .iter()
        .map(|l| pairwise_persistence(matrix, base, l.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(KpsValue::from_pairs(values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonLabel {
    Case1HoldOut,
    Case2TrainMinusBase,
    Custom,
}

/// How the comparison languages are chosen for each base language.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ComparisonSet {
    /// All hold-out languages.
    Case1HoldOut,
    /// Training languages other than the base.
    Case2TrainMinusBase,
    /// A fixed list; the base language is removed if present.
    Custom(Vec<String>),
}

impl ComparisonSet {
    pub fn label(&self) -> ComparisonLabel {
        match self {
            ComparisonSet::Case1HoldOut => ComparisonLabel::Case1HoldOut,
            ComparisonSet::Case2TrainMinusBase => ComparisonLabel::Case2TrainMinusBase,
            ComparisonSet::Custom(_) => ComparisonLabel::Custom,
        }
    }

    pub fn resolve(&self, spec: &DatasetSpec, base: &str) -> Vec<String> {
        let mut langs = match self {
            ComparisonSet::Case1HoldOut => spec.holdout_codes(),
            ComparisonSet::Case2TrainMinusBase => spec.training_codes(),
            ComparisonSet::Custom(list) => list.clone(),
        };
        langs.retain(|l| l != base);
        langs
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairwiseEntry {
    pub base: String,
    pub other: String,
    pub value: Option<f64>,
    pub forgotten_in_base: usize,
    pub retained_in_other: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseKps {
    pub base: String,
    pub value: Option<f64>,
    pub defined_pairs: usize,
    pub total_pairs: usize,
    pub coverage: f64,
}

/// Pairwise scores and per-base KPS for a set of base languages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PersistenceReport {
    pub comparison_set_label: ComparisonLabel,
    pub pairwise: Vec<PairwiseEntry>,
    pub kps_by_base: Vec<BaseKps>,
}

impl PersistenceReport {
    pub fn kps_for(&self, base: &str) -> Option<&BaseKps> {
        self.kps_by_base.iter().find(|b| b.base == base)
    }

    pub fn pair(&self, base: &str, other: &str) -> Option<&PairwiseEntry> {
        self.pairwise
            .iter()
            .find(|p| p.base == base && p.other == other)
    }

    /// Mean of the defined per-base values.
    pub fn average(&self) -> Option<f64> {
        let defined: Vec<f64> = self.kps_by_base.iter().filter_map(|b| b.value).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Builds the report for every base in `bases`. A base whose resolved
/// comparison set is empty yields an undefined entry with zero pairs.
pub fn persistence_report<S: AsRef<str>>(
    matrix: &EvalMatrix,
    bases: &[S],
    comparison: &ComparisonSet,
) -> Result<PersistenceReport, MetricError> {
    let mut seen = BTreeSet::new();
    let mut pairwise = Vec::new();
    let mut kps_by_base = Vec::new();
    for base in bases {
        let base = base.as_ref();
        matrix.spec().require_language(base)?;
        if !seen.insert(base.to_string()) {
            continue;
        }
        let others = comparison.resolve(matrix.spec(), base);
        let mut values = Vec::with_capacity(others.len());
        for other in &others {
            let counts = pairwise_counts(matrix, base, other)?;
            values.push(counts.value());
            pairwise.push(PairwiseEntry {
                base: base.to_string(),
                other: other.clone(),
                value: counts.value(),
                forgotten_in_base: counts.forgotten_in_base,
                retained_in_other: counts.retained_in_other,
            });
        }
        let k = KpsValue::from_pairs(values);
        kps_by_base.push(BaseKps {
            base: base.to_string(),
            value: k.value,
            defined_pairs: k.defined_pairs,
            total_pairs: k.total_pairs,
            coverage: k.coverage(),
        });
    }
    Ok(PersistenceReport {
        comparison_set_label: comparison.label(),
        pairwise,
        kps_by_base,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EvalRecord, Language};

    /// Builds a forget-only matrix from per-language SE columns.
    fn matrix(columns: &[(&str, bool, &[u8])]) -> EvalMatrix {
        let n = columns[0].2.len();
        let ids: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let langs = columns
            .iter()
            .map(|(c, train, _)| {
                if *train {
                    Language::training(*c)
                } else {
                    Language::holdout(*c)
                }
            })
            .collect();
        let spec = DatasetSpec::new(langs, ids.clone(), ["r0"]).unwrap();
        let mut recs = Vec::new();
        for (code, _, col) in columns {
            for (i, &b) in col.iter().enumerate() {
                recs.push(EvalRecord::new(&ids[i], *code).with_se(b == 1));
            }
            recs.push(EvalRecord::new("r0", *code).with_se(true));
        }
        EvalMatrix::from_records(spec, recs).unwrap()
    }

    #[test]
    fn pairwise_examples() {
        let m = matrix(&[("l1", true, &[0, 0]), ("l2", true, &[1, 0])]);
        assert_eq!(pairwise_persistence(&m, "l1", "l2").unwrap(), Some(0.5));

        let m = matrix(&[("l1", true, &[1, 1]), ("l2", true, &[1, 0])]);
        assert_eq!(pairwise_persistence(&m, "l1", "l2").unwrap(), None);

        let m = matrix(&[("l1", true, &[0, 1, 0]), ("l2", true, &[0, 0, 0])]);
        assert_eq!(pairwise_persistence(&m, "l1", "l2").unwrap(), Some(0.0));

        assert!(matches!(
            pairwise_persistence(&m, "l1", "l1"),
            Err(MetricError::SameLanguage(_))
        ));
    }

    #[test]
    fn kps_examples() {
        // ps(b, x) = 0.2 and ps(b, y) = 0.4
        let m = matrix(&[
            ("b", true, &[0, 0, 0, 0, 0]),
            ("x", false, &[1, 0, 0, 0, 0]),
            ("y", false, &[1, 1, 0, 0, 0]),
        ]);
        let k = kps(&m, "b", &["x", "y"]).unwrap();
        assert!((k.value.unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(k.coverage(), 1.0);

        let all_known = matrix(&[
            ("b", true, &[1, 1]),
            ("x", false, &[1, 0]),
            ("y", false, &[0, 0]),
        ]);
        let k = kps(&all_known, "b", &["x", "y"]).unwrap();
        assert_eq!(k.value, None);
        assert_eq!(k.defined_pairs, 0);

        assert!(matches!(
            kps(&m, "b", &["b", "x"]),
            Err(MetricError::BaseInComparison(_))
        ));
        assert!(matches!(
            kps(&m, "b", &Vec::<String>::new()),
            Err(MetricError::EmptyComparison)
        ));
    }

    #[test]
    fn kps_skips_undefined_pairs() {
        // ps(b, x) = 0.5; c forgets nothing so ps(c, x) is undefined.
        let m = matrix(&[
            ("b", true, &[0, 0]),
            ("c", true, &[1, 1]),
            ("x", false, &[1, 0]),
        ]);
        let report = persistence_report(&m, &["b", "c"], &ComparisonSet::Case1HoldOut).unwrap();
        assert_eq!(report.kps_for("b").unwrap().value, Some(0.5));
        assert_eq!(report.kps_for("c").unwrap().value, None);
        assert_eq!(report.average(), Some(0.5));

        // Undefinedness depends only on the base, so a mixed pair list
        // cannot come from one matrix; exercise the aggregation directly.
        let k = KpsValue::from_pairs([Some(0.5), None]);
        assert_eq!(k.value, Some(0.5));
        assert_eq!(k.coverage(), 0.5);
        assert_eq!(KpsValue::from_pairs([None, None]).value, None);
    }

    #[test]
    fn comparison_sets() {
        let m = matrix(&[("en", true, &[0]), ("de", true, &[1]), ("af", false, &[1])]);
        let spec = m.spec();
        assert_eq!(ComparisonSet::Case1HoldOut.resolve(spec, "en"), vec!["af"]);
        assert_eq!(
            ComparisonSet::Case2TrainMinusBase.resolve(spec, "en"),
            vec!["de"]
        );
        let r = persistence_report(
            &m,
            &spec.training_codes(),
            &ComparisonSet::Case2TrainMinusBase,
        )
        .unwrap();
        assert_eq!(r.pair("en", "de").unwrap().value, Some(1.0));
        assert_eq!(r.pair("de", "en").unwrap().value, None);
        assert_eq!(r.comparison_set_label, ComparisonLabel::Case2TrainMinusBase);
    }
}
