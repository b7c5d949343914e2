//! Confusion-matrix metrics and rank-based AUC.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, tn: usize, fp: usize, fn_: usize) -> Self {
        Self { tp, tn, fp, fn_ }
    }

    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> usize {
        self.tn + self.fp
    }
}

/// Count outcomes with `+1` as the positive class.
pub fn confusion_matrix(predictions: &[Label], truths: &[Label]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions but {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("confusion matrix needs at least one sample".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (Label::Positive, Label::Positive) => cm.tp += 1,
            (Label::Negative, Label::Negative) => cm.tn += 1,
            (Label::Positive, Label::Negative) => cm.fp += 1,
            (Label::Negative, Label::Positive) => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Metrics in `[0, 1]`; `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub auc: Option<f64>,
    pub counts: ConfusionMatrix,
    pub n: usize,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Accuracy, sensitivity, specificity, F1, PPV and NPV; AUC is left unset.
pub fn derive_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::InvalidArgument("metrics need a non-empty confusion matrix".into()));
    }
    // F1 = TP / (TP + (FP + FN) / 2), written with integer denominators
    let f1 = (2 * cm.tp + cm.fp + cm.fn_ > 0).then(|| 2.0 * cm.tp as f64 / (2 * cm.tp + cm.fp + cm.fn_) as f64);
    Ok(MetricsReport {
        accuracy: ratio(cm.tp + cm.tn, total),
        sensitivity: ratio(cm.tp, cm.tp + cm.fn_),
        specificity: ratio(cm.tn, cm.tn + cm.fp),
        f1,
        ppv: ratio(cm.tp, cm.tp + cm.fp),
        npv: ratio(cm.tn, cm.tn + cm.fn_),
        auc: None,
        counts: *cm,
        n: total,
    })
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half (Mann-Whitney U over midranks).
pub fn auc(scores: &[f64], truths: &[Label]) -> Result<f64> {
    if scores.len() != truths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} truths",
            scores.len(),
            truths.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Numeric(format!("non-finite score {s}")));
    }
    let positives = truths.iter().filter(|&&t| t == Label::Positive).count();
    let negatives = truths.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc(format!(
            "need both classes, got {positives} positive and {negatives} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // 1-based midrank of the tie group i..=j
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * order[i..=j].iter().filter(|&&k| truths[k] == Label::Positive).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Label::{Negative as N, Positive as P};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion_matrix(&[P, N], &[P, N]).unwrap(), ConfusionMatrix::new(1, 1, 0, 0));
        assert_eq!(confusion_matrix(&[P, P], &[N, N]).unwrap(), ConfusionMatrix::new(0, 0, 2, 0));
        assert_eq!(
            confusion_matrix(&[P, N, P, N], &[P, P, N, N]).unwrap(),
            ConfusionMatrix::new(1, 1, 1, 1)
        );
        assert!(confusion_matrix(&[P], &[P, N]).is_err());
    }

    #[test]
    fn hand_computed_metrics() {
        let m = derive_metrics(&ConfusionMatrix::new(10, 5, 3, 2)).unwrap();
        let close = |a: Option<f64>, b: f64| (a.unwrap() - b).abs() < 1e-12;
        assert!(close(m.accuracy, 15.0 / 20.0));
        assert!(close(m.sensitivity, 10.0 / 12.0));
        assert!(close(m.specificity, 5.0 / 8.0));
        assert!(close(m.f1, 10.0 / 12.5));
        assert!(close(m.ppv, 10.0 / 13.0));
        assert!(close(m.npv, 5.0 / 7.0));
        // rounded forms
        assert!((m.sensitivity.unwrap() - 0.8333).abs() < 1e-4);
        assert!((m.ppv.unwrap() - 0.7692).abs() < 1e-4);
        assert!((m.npv.unwrap() - 0.7143).abs() < 1e-4);
    }

    #[test]
    fn all_positive_leaves_negative_metrics_undefined() {
        let m = derive_metrics(&ConfusionMatrix::new(7, 0, 0, 0)).unwrap();
        assert_eq!(m.accuracy, Some(1.0));
        assert_eq!(m.sensitivity, Some(1.0));
        assert_eq!(m.f1, Some(1.0));
        assert_eq!(m.ppv, Some(1.0));
        assert_eq!(m.specificity, None);
        assert_eq!(m.npv, None);
        assert!(derive_metrics(&ConfusionMatrix::default()).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.2, 0.1], &[P, P, N, N]).unwrap(), 1.0);
        assert_eq!(auc(&[0.3; 6], &[P, N, P, N, N, P]).unwrap(), 0.5);
        assert_eq!(auc(&[0.9, 0.4, 0.6, 0.1], &[P, P, N, N]).unwrap(), 0.75);
        assert!(matches!(auc(&[0.1, 0.2], &[P, P]), Err(Error::UndefinedAuc(_))));
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_transform(
            data in proptest::collection::vec((0u8..20, any::<bool>()), 2..40)
        ) {
            let scores: Vec<f64> = data.iter().map(|&(s, _)| s as f64 / 20.0).collect();
            let truths: Vec<Label> = data.iter().map(|&(_, t)| if t { P } else { N }).collect();
            prop_assume!(truths.contains(&P) && truths.contains(&N));
            let base = auc(&scores, &truths).unwrap();
            let warped: Vec<f64> = scores.iter().map(|&s| (3.0 * s).exp() - 7.0).collect();
            prop_assert!((auc(&warped, &truths).unwrap() - base).abs() < 1e-12);
        }

        #[test]
        fn accuracy_is_prevalence_weighted_mean(tp in 1usize..50, tn in 1usize..50, fp in 0usize..50, fn_ in 0usize..50) {
            let m = derive_metrics(&ConfusionMatrix::new(tp, tn, fp, fn_)).unwrap();
            let (p, n) = ((tp + fn_) as f64, (tn + fp) as f64);
            let weighted = (m.sensitivity.unwrap() * p + m.specificity.unwrap() * n) / (p + n);
            prop_assert!((weighted - m.accuracy.unwrap()).abs() < 1e-12);
        }
    }
}
