//! Classification metrics for imbalanced problems: confusion matrices,
//! ROC-AUC, PR-AUC, macro-F1, MCC, Brier score, and threshold selection.
//! Class 1 (backorder) is the positive class throughout.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Tallies a confusion matrix; a row is predicted positive iff its
/// probability is >= `threshold`.
pub fn confusion(y_true: &[u8], y_prob: &[f64], threshold: f64) -> Result<ConfusionMatrix> {
    check_lengths(y_true, y_prob)?;
    for &p in y_prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("probability {p} outside [0,1]")));
        }
    }
    let mut cm = ConfusionMatrix::new(0, 0, 0, 0);
    for (&y, &p) in y_true.iter().zip(y_prob) {
        let pred = p >= threshold;
        match (y == 1, pred) {
            (true, true) => cm.tp += 1,
            (false, true) => cm.fp += 1,
            (true, false) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// ROC-AUC via the rank statistic: with midranks for ties, the area equals
/// the probability that a random positive outranks a random negative, ties
/// counted one half.
pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    check_lengths(y_true, scores)?;
    check_finite(scores)?;
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    let n_neg = y_true.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(
            "roc_auc needs both classes present".into(),
        ));
    }
    let ranks = midranks(scores);
    let rank_sum_pos: f64 = y_true
        .iter()
        .zip(&ranks)
        .filter(|(&y, _)| y == 1)
        .map(|(_, &r)| r)
        .sum();
    let n_pos_f = n_pos as f64;
    Ok((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Midranks (1-based, ties averaged) of a score vector.
pub(crate) fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mid = (i + j + 2) as f64 / 2.0; // average of ranks i+1 ..= j+1
        for &idx in &order[i..=j] {
            ranks[idx] = mid;
        }
        i = j + 1;
    }
    ranks
}

/// One point of a ROC curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

/// ROC curve traced over all distinct score thresholds, highest first.
pub fn roc_curve(y_true: &[u8], scores: &[f64]) -> Result<Vec<RocPoint>> {
    let (groups, n_pos, n_neg) = score_groups(y_true, scores)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(
            "roc_curve needs both classes present".into(),
        ));
    }
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    for (score, pos, neg) in groups {
        tp += pos;
        fp += neg;
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
    }
    Ok(points)
}

/// One point of a precision-recall curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve over all distinct score thresholds, highest first.
pub fn pr_curve(y_true: &[u8], scores: &[f64]) -> Result<Vec<PrPoint>> {
    let (groups, n_pos, _) = score_groups(y_true, scores)?;
    if n_pos == 0 {
        return Err(Error::Degenerate(
            "pr_curve needs at least one positive".into(),
        ));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut points = Vec::with_capacity(groups.len());
    for (score, pos, neg) in groups {
        tp += pos;
        fp += neg;
        points.push(PrPoint {
            threshold: score,
            recall: tp as f64 / n_pos as f64,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(points)
}

/// Area under the precision-recall curve by step-wise summation of
/// precision * delta-recall (no interpolation).
pub fn pr_auc(y_true: &[u8], scores: &[f64]) -> Result<f64> {
    let points = pr_curve(y_true, scores)?;
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for p in points {
        area += (p.recall - prev_recall) * p.precision;
        prev_recall = p.recall;
    }
    Ok(area)
}

/// (score, positives, negatives) per distinct score, descending.
type ScoreGroups = Vec<(f64, usize, usize)>;

/// Distinct scores in descending order with per-score positive/negative
/// counts; also returns the class totals.
fn score_groups(y_true: &[u8], scores: &[f64]) -> Result<(ScoreGroups, usize, usize)> {
    check_lengths(y_true, scores)?;
    check_finite(scores)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &idx in &order {
        let s = scores[idx];
        let is_pos = y_true[idx] == 1;
        match groups.last_mut() {
            Some((gs, pos, neg)) if *gs == s => {
                if is_pos {
                    *pos += 1;
                } else {
                    *neg += 1;
                }
            }
            _ => groups.push((s, usize::from(is_pos), usize::from(!is_pos))),
        }
    }
    let n_pos = y_true.iter().filter(|&&y| y == 1).count();
    Ok((groups, n_pos, y_true.len() - n_pos))
}

/// The full metric bundle for one classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub roc_auc: f64,
    pub pr_auc: f64,
    pub macro_f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub mcc: f64,
    pub brier: f64,
    pub confusion: ConfusionMatrix,
    pub threshold: f64,
    /// Metrics whose denominator was zero and were reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate: Vec<String>,
}

/// Computes the full metric bundle from a confusion matrix plus the
/// underlying labels and probabilities. Zero-denominator metrics come back
/// as 0 with the metric name recorded in `degenerate`.
pub fn summary_metrics(
    cm: ConfusionMatrix,
    y_true: &[u8],
    y_prob: &[f64],
    threshold: f64,
) -> Result<MetricsReport> {
    check_lengths(y_true, y_prob)?;
    let mut degenerate = Vec::new();
    let mut ratio = |name: &str, num: f64, den: f64| {
        if den == 0.0 {
            degenerate.push(name.to_string());
            0.0
        } else {
            num / den
        }
    };
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let precision = ratio("precision", tp, tp + fp);
    let recall = ratio("recall", tp, tp + fn_);
    let f1_pos = ratio("f1_pos", 2.0 * tp, 2.0 * tp + fp + fn_);
    let f1_neg = ratio("f1_neg", 2.0 * tn, 2.0 * tn + fn_ + fp);
    let macro_f1 = (f1_pos + f1_neg) / 2.0;
    let mcc_den = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    let mcc = ratio("mcc", tp * tn - fp * fn_, mcc_den);
    let brier = y_true
        .iter()
        .zip(y_prob)
        .map(|(&y, &p)| (p - f64::from(y)).powi(2))
        .sum::<f64>()
        / y_true.len() as f64;
    Ok(MetricsReport {
        roc_auc: roc_auc(y_true, y_prob)?,
        pr_auc: pr_auc(y_true, y_prob)?,
        macro_f1,
        precision,
        recall,
        mcc,
        brier,
        confusion: cm,
        threshold,
        degenerate,
    })
}

/// What `optimize_threshold` optimises.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "objective", rename_all = "kebab-case")]
pub enum ThresholdObjective {
    /// Minimise fp * fp_cost + fn * fn_cost.
    MinCost { fp_cost: f64, fn_cost: f64 },
    MaxMacroF1,
}

/// Sweeps every distinct predicted probability (plus 0 and 1) and returns
/// the threshold optimising the objective, ties broken toward the higher
/// threshold (fewer positive predictions). Returns (threshold, objective).
pub fn optimize_threshold(
    y_true: &[u8],
    y_prob: &[f64],
    objective: ThresholdObjective,
) -> Result<(f64, f64)> {
    for &p in y_prob {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Argument(format!("probability {p} outside [0,1]")));
        }
    }
    let (groups, n_pos, n_neg) = score_groups(y_true, y_prob)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Degenerate(
            "optimize_threshold needs both classes present".into(),
        ));
    }
    let evaluate = |tp: usize, fp: usize| -> f64 {
        let fn_ = n_pos - tp;
        let tn = n_neg - fp;
        match objective {
            ThresholdObjective::MinCost { fp_cost, fn_cost } => {
                -(fp as f64 * fp_cost + fn_ as f64 * fn_cost)
            }
            ThresholdObjective::MaxMacroF1 => {
                let (tp, fp, fn_, tn) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
                let f1_pos = if 2.0 * tp + fp + fn_ == 0.0 {
                    0.0
                } else {
                    2.0 * tp / (2.0 * tp + fp + fn_)
                };
                let f1_neg = if 2.0 * tn + fn_ + fp == 0.0 {
                    0.0
                } else {
                    2.0 * tn / (2.0 * tn + fn_ + fp)
                };
                (f1_pos + f1_neg) / 2.0
            }
        }
    };
    // Walk thresholds from high to low; strict improvement keeps the highest
    // optimal threshold. Threshold 1 predicts positive only scores >= 1;
    // threshold 0 predicts everything positive (same counts as the lowest
    // distinct score, so the sweep already covers it).
    let (mut tp1, mut fp1) = (0usize, 0usize);
    for &(s, pos, neg) in groups.iter().take_while(|&&(s, _, _)| s >= 1.0) {
        let _ = s;
        tp1 += pos;
        fp1 += neg;
    }
    let mut best_threshold = 1.0;
    let mut best_value = evaluate(tp1, fp1);
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(score, pos, neg) in &groups {
        tp += pos;
        fp += neg;
        if score >= 1.0 {
            continue; // already accounted for by threshold 1
        }
        let value = evaluate(tp, fp);
        if value > best_value {
            best_value = value;
            best_threshold = score;
        }
    }
    let objective_value = match objective {
        ThresholdObjective::MinCost { .. } => -best_value,
        ThresholdObjective::MaxMacroF1 => best_value,
    };
    Ok((best_threshold, objective_value))
}

fn check_lengths<T>(y_true: &[u8], other: &[T]) -> Result<()> {
    if y_true.len() != other.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            actual: other.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Argument("empty input".into()));
    }
    if let Some(&y) = y_true.iter().find(|&&y| y > 1) {
        return Err(Error::Argument(format!("label {y} is not 0/1")));
    }
    Ok(())
}

fn check_finite(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Argument("non-finite score".into()));
    }
    Ok(())
}
