use std::collections::BTreeSet;

use crate::error::{Error, Result};

fn check_tables(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<usize> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predicted rows for {} truth rows",
            pred.len(),
            truth.len()
        )));
    }
    let k = truth.first().map_or(0, Vec::len);
    if pred.iter().chain(truth).any(|r| r.len() != k) {
        return Err(Error::shape("prediction and truth rows differ in class count"));
    }
    Ok(k)
}

fn f1(tp: usize, fp: usize, fn_: usize) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// C-F1: macro average of per-class F1. A class with neither positives nor
/// predictions scores 0.
pub fn f1_label_based(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    let k = check_tables(pred, truth)?;
    if k == 0 {
        return Err(Error::UndefinedMetric("F1 over zero classes".into()));
    }
    let mut total = 0.0;
    for c in 0..k {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for (p, t) in pred.iter().zip(truth) {
            match (p[c], t[c]) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        total += f1(tp, fp, fn_);
    }
    Ok(total / k as f64)
}

/// O-F1: micro F1 pooling every (sample, class) decision.
pub fn f1_sample_based(pred: &[Vec<bool>], truth: &[Vec<bool>]) -> Result<f64> {
    let k = check_tables(pred, truth)?;
    if k == 0 {
        return Err(Error::UndefinedMetric("F1 over zero classes".into()));
    }
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (p, t) in pred.iter().zip(truth) {
        for (&a, &b) in p.iter().zip(t) {
            match (a, b) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
    }
    Ok(f1(tp, fp, fn_))
}

/// Mean absolute error per valence/arousal/dominance dimension.
pub fn aae(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<[f64; 3]> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::UndefinedMetric("AAE over zero samples".into()));
    }
    let mut sum = [0.0; 3];
    for (p, t) in pred.iter().zip(truth) {
        for d in 0..3 {
            sum[d] += (p[d] - t[d]).abs();
        }
    }
    let n = pred.len() as f64;
    Ok(sum.map(|s| s / n))
}

/// `|pred ∩ truth| / |pred ∪ truth|`.
pub fn jaccard_coefficient<T: Ord>(pred: &BTreeSet<T>, truth: &BTreeSet<T>) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("Jaccard coefficient with empty ground truth".into()));
    }
    let inter = pred.intersection(truth).count();
    let union = pred.union(truth).count();
    Ok(inter as f64 / union as f64)
}
