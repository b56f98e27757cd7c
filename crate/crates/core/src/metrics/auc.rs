//! Threshold-sweep statistics over positive/negative score sets.

use serde::{Deserialize, Serialize};

use super::MetricError;

fn validate(pos: &[f64], neg: &[f64]) -> Result<(), MetricError> {
    if pos.is_empty() {
        return Err(MetricError::EmptyClass("forget"));
    }
    if neg.is_empty() {
        return Err(MetricError::EmptyClass("retain"));
    }
    if let Some(&bad) = pos.iter().chain(neg).find(|v| !v.is_finite()) {
        return Err(MetricError::InvalidScore(bad));
    }
    Ok(())
}

/// ROC area as the Mann-Whitney statistic with half credit for ties:
/// `[#(p > n) + 0.5 #(p = n)] / (|P| |N|)`.
///
/// The numerator is accumulated as an integer (doubled) so the result is
/// the exact ratio, rounded once.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<f64, MetricError> {
    validate(pos, neg)?;
    let mut sorted = neg.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut doubled_wins: u128 = 0;
    for &p in pos {
        let below = sorted.partition_point(|&n| n < p);
        let at_or_below = sorted.partition_point(|&n| n <= p);
        doubled_wins += 2 * below as u128 + (at_or_below - below) as u128;
    }
    let denom = 2 * pos.len() as u128 * neg.len() as u128;
    Ok(doubled_wins as f64 / denom as f64)
}

/// Positives and negatives at or above each distinct threshold, from the
/// highest threshold down.
fn cumulative_counts(pos: &[f64], neg: &[f64]) -> Vec<(f64, usize, usize)> {
    let mut items: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    items.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut out = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < items.len() {
        let threshold = items[i].0;
        while i < items.len() && items[i].0 == threshold {
            if items[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        out.push((threshold, tp, fp));
    }
    out
}

/// Average precision `sum_n (R_n - R_{n-1}) P_n` over descending distinct
/// thresholds, tied scores entering together.
pub fn average_precision(pos: &[f64], neg: &[f64]) -> Result<f64, MetricError> {
    validate(pos, neg)?;
    let n_pos = pos.len() as f64;
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (_, tp, fp) in cumulative_counts(pos, neg) {
        let recall = tp as f64 / n_pos;
        let precision = tp as f64 / (tp + fp) as f64;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
    }
    Ok(ap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve from (0, 0) to (1, 1); the first point has an infinite
/// threshold.
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<RocPoint>, MetricError> {
    validate(pos, neg)?;
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    points.extend(
        cumulative_counts(pos, neg)
            .into_iter()
            .map(|(threshold, tp, fp)| RocPoint {
                threshold,
                fpr: fp as f64 / nn,
                tpr: tp as f64 / np,
            }),
    );
    Ok(points)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

pub fn pr_curve(pos: &[f64], neg: &[f64]) -> Result<Vec<PrPoint>, MetricError> {
    validate(pos, neg)?;
    let np = pos.len() as f64;
    Ok(cumulative_counts(pos, neg)
        .into_iter()
        .map(|(threshold, tp, fp)| PrPoint {
            threshold,
            recall: tp as f64 / np,
            precision: tp as f64 / (tp + fp) as f64,
        })
        .collect())
}

/// Confusion matrix at one threshold. Forget instances are the positive
/// class; an instance is predicted forgotten iff its score is `>= threshold`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    /// Forget instance predicted forgotten.
    pub tp: usize,
    /// Forget instance predicted retained.
    #[serde(rename = "fn")]
    pub fn_: usize,
    /// Retain instance predicted forgotten.
    pub fp: usize,
    /// Retain instance predicted retained.
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn tpr(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn fpr(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn confusion_counts_for(pos: &[f64], neg: &[f64], threshold: f64) -> ConfusionCounts {
    let predicted = |s: &&f64| **s >= threshold;
    let tp = pos.iter().filter(predicted).count();
    let fp = neg.iter().filter(predicted).count();
    ConfusionCounts {
        tp,
        fn_: pos.len() - tp,
        fp,
        tn: neg.len() - fp,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn trapezoid(points: &[RocPoint]) -> f64 {
        points
            .windows(2)
            .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
            .sum()
    }

    #[test]
    fn curves_have_expected_endpoints() {
        let roc = roc_curve(&[0.8, 0.3], &[0.5, 0.2]).unwrap();
        assert_eq!(roc.first().map(|p| (p.fpr, p.tpr)), Some((0.0, 0.0)));
        assert_eq!(roc.last().map(|p| (p.fpr, p.tpr)), Some((1.0, 1.0)));
        assert!((trapezoid(&roc) - 0.75).abs() < 1e-12);

        let pr = pr_curve(&[0.9], &[0.95, 0.1]).unwrap();
        assert_eq!(pr.len(), 3);
        assert_eq!((pr[0].recall, pr[0].precision), (0.0, 0.0));
        assert_eq!((pr[1].recall, pr[1].precision), (1.0, 0.5));
    }

    #[test]
    fn rejects_nan() {
        assert!(matches!(
            roc_auc(&[f64::NAN], &[0.1]),
            Err(MetricError::InvalidScore(_))
        ));
    }

    #[test]
    fn confusion_rates() {
        let c = confusion_counts_for(&[0.8, 0.3], &[0.5, 0.2], 0.5);
        assert_eq!(c.tpr(), Some(0.5));
        assert_eq!(c.fpr(), Some(0.5));
        assert_eq!(c.precision(), Some(0.5));
        let none = confusion_counts_for(&[0.1], &[0.1], 0.9);
        assert_eq!(none.precision(), None);
    }

    fn lattice_scores() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec((0u32..=20).prop_map(|k| k as f64 / 20.0), 1..40)
    }

    proptest! {
        #[test]
        fn rank_statistic_matches_trapezoid_area(pos in lattice_scores(), neg in lattice_scores()) {
            let exact = roc_auc(&pos, &neg).unwrap();
            let area = trapezoid(&roc_curve(&pos, &neg).unwrap());
            prop_assert!((exact - area).abs() < 1e-12);
        }

        #[test]
        fn roc_invariant_under_increasing_transform(pos in lattice_scores(), neg in lattice_scores()) {
            let a = roc_auc(&pos, &neg).unwrap();
            let f = |v: &Vec<f64>| v.iter().map(|x| (3.0 * x).exp() - 7.0).collect::<Vec<_>>();
            prop_assert_eq!(a, roc_auc(&f(&pos), &f(&neg)).unwrap());
        }

        #[test]
        fn swapping_classes_complements_roc(pos in lattice_scores(), neg in lattice_scores()) {
            let a = roc_auc(&pos, &neg).unwrap();
            let b = roc_auc(&neg, &pos).unwrap();
            prop_assert!((a + b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn confusion_rates_monotone(pos in lattice_scores(), neg in lattice_scores()) {
            let mut prev: Option<ConfusionCounts> = None;
            for k in 0..=21 {
                let c = confusion_counts_for(&pos, &neg, k as f64 / 20.0);
                prop_assert_eq!(c.tp + c.fn_, pos.len());
                prop_assert_eq!(c.fp + c.tn, neg.len());
                if let Some(p) = prev {
                    prop_assert!(c.tp <= p.tp && c.fp <= p.fp);
                }
                prev = Some(c);
            }
        }

        #[test]
        fn ap_in_unit_interval(pos in lattice_scores(), neg in lattice_scores()) {
            let ap = average_precision(&pos, &neg).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&ap));
        }
    }
}
