//! Classification metrics over verdicts: binary (FAKE as the positive
//! class) and macro-averaged, both recomputable from the emitted confusion
//! matrices. Zero divisions resolve to 0.0 and raise a flag in the report.

use serde::{Deserialize, Serialize};

use crate::model::{verdict_to_binary, BinaryLabel, VerdictLabel};
use crate::{Real, Score};

use super::HarnessError;

/// Binary metric kernel, generic over the scalar type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryMetrics<F> {
    pub accuracy: F,
    pub precision: F,
    pub recall: F,
    pub f1: F,
    pub zero_division: bool,
}

fn ratio<F: Real>(num: u64, den: u64, zero_division: &mut bool) -> F {
    if den == 0 {
        *zero_division = true;
        F::zero()
    } else {
        F::from_u64(num).unwrap() / F::from_u64(den).unwrap()
    }
}

/// Accuracy, precision, recall, F1 from raw counts with the positive class
/// supplying tp/fp/fn.
pub fn binary_metrics<F: Real>(tp: u64, fp: u64, fn_: u64, tn: u64) -> BinaryMetrics<F> {
    let mut zero_division = false;
    let accuracy = ratio(tp + tn, tp + fp + fn_ + tn, &mut zero_division);
    let precision = ratio(tp, tp + fp, &mut zero_division);
    let recall = ratio(tp, tp + fn_, &mut zero_division);
    let two = F::from_f64(2.0).unwrap();
    let f1 = if precision + recall == F::zero() {
        zero_division = true;
        F::zero()
    } else {
        two * precision * recall / (precision + recall)
    };
    BinaryMetrics {
        accuracy,
        precision,
        recall,
        f1,
        zero_division,
    }
}

/// Metrics plus the confusion matrices they are derived from.
///
/// `confusion` rows are gold, columns predicted, in [REAL, FAKE] order;
/// `per_class_confusion` uses the four-way label order
/// [REAL, TEXT_FAKE, IMAGE_FAKE, BOTH_FAKE].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    /// Binary metrics with FAKE as the positive class.
    pub accuracy: Score,
    pub precision: Score,
    pub recall: Score,
    pub f1: Score,
    /// Macro average over the two binary classes, labeled separately
    /// because published comparisons differ on the convention.
    pub macro_precision: Score,
    pub macro_recall: Score,
    pub macro_f1: Score,
    pub zero_division: bool,
    pub confusion: [[u64; 2]; 2],
    pub per_class_confusion: [[u64; 4]; 4],
}

fn binary_index(label: BinaryLabel) -> usize {
    match label {
        BinaryLabel::Real => 0,
        BinaryLabel::Fake => 1,
    }
}

fn label_index(label: VerdictLabel) -> usize {
    VerdictLabel::ALL
        .iter()
        .position(|l| *l == label)
        .expect("label is in the four-way space")
}

/// Score (gold, predicted) pairs. Binary metrics collapse both sides via
/// `verdict_to_binary` with FAKE positive.
pub fn evaluate(pairs: &[(VerdictLabel, VerdictLabel)]) -> Result<MetricsReport, HarnessError> {
    if pairs.is_empty() {
        return Err(HarnessError::EmptyEvaluation);
    }
    let mut confusion = [[0u64; 2]; 2];
    let mut per_class = [[0u64; 4]; 4];
    for (gold, predicted) in pairs {
        confusion[binary_index(verdict_to_binary(*gold))]
            [binary_index(verdict_to_binary(*predicted))] += 1;
        per_class[label_index(*gold)][label_index(*predicted)] += 1;
    }
    Ok(report_from_confusion(confusion, per_class, pairs.len()))
}

/// Build the report purely from the confusion matrix, so consistency is
/// checkable by recomputation.
pub fn report_from_confusion(
    confusion: [[u64; 2]; 2],
    per_class_confusion: [[u64; 4]; 4],
    n: usize,
) -> MetricsReport {
    let tn = confusion[0][0];
    let fp = confusion[0][1];
    let fn_ = confusion[1][0];
    let tp = confusion[1][1];
    let fake_positive: BinaryMetrics<Score> = binary_metrics(tp, fp, fn_, tn);
    // REAL treated as positive for the other half of the macro average
    let real_positive: BinaryMetrics<Score> = binary_metrics(tn, fn_, fp, tp);
    let zero_division = fake_positive.zero_division || real_positive.zero_division;
    MetricsReport {
        n,
        accuracy: fake_positive.accuracy,
        precision: fake_positive.precision,
        recall: fake_positive.recall,
        f1: fake_positive.f1,
        macro_precision: (fake_positive.precision + real_positive.precision) / 2.0,
        macro_recall: (fake_positive.recall + real_positive.recall) / 2.0,
        macro_f1: (fake_positive.f1 + real_positive.f1) / 2.0,
        zero_division,
        confusion,
        per_class_confusion,
    }
}
