use crate::error::{Error, Result};

fn check_lengths(scores: &[f64], truth: &[bool]) -> Result<()> {
    if scores.len() != truth.len() {
        return Err(Error::shape(format!(
            "{} scores for {} labels",
            scores.len(),
            truth.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Numeric("non-finite score".into()));
    }
    Ok(())
}

/// Indices sorted by descending score; ties keep input order.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

/// Rank-based average precision: the mean, over positives, of precision at
/// each positive's rank.
pub fn average_precision(scores: &[f64], truth: &[bool]) -> Result<f64> {
    check_lengths(scores, truth)?;
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 {
        return Err(Error::UndefinedMetric("average precision with no positives".into()));
    }
    let mut hits = 0usize;
    let mut total = 0.0;
    for (rank, &i) in ranked(scores).iter().enumerate() {
        if truth[i] {
            hits += 1;
            total += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(total / positives as f64)
}

/// Per-class AP over sample-major score/truth tables. Classes without a
/// positive get `None`.
pub fn per_class_average_precision(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<Vec<Option<f64>>> {
    if scores.len() != truth.len() {
        return Err(Error::shape("score and truth tables differ in sample count"));
    }
    let k = scores.first().map_or(0, Vec::len);
    if scores.iter().any(|r| r.len() != k) || truth.iter().any(|r| r.len() != k) {
        return Err(Error::shape("ragged score or truth table"));
    }
    (0..k)
        .map(|c| {
            let s: Vec<f64> = scores.iter().map(|r| r[c]).collect();
            let t: Vec<bool> = truth.iter().map(|r| r[c]).collect();
            if t.iter().any(|&b| b) {
                average_precision(&s, &t).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Mean of the defined per-class APs.
pub fn mean_average_precision(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<f64> {
    let aps: Vec<f64> = per_class_average_precision(scores, truth)?.into_iter().flatten().collect();
    if aps.is_empty() {
        return Err(Error::UndefinedMetric("mAP with no class having a positive".into()));
    }
    Ok(aps.iter().sum::<f64>() / aps.len() as f64)
}

/// Threshold where precision and recall are closest, predicting positive for
/// `score >= threshold`.
///
/// Candidates are the distinct scores; ties in `|P − R|` go to the higher
/// candidate. The returned value is the midpoint between the winning score
/// and the next lower distinct score (or the winning score itself if it is
/// the lowest), which yields the same predictions.
pub fn pr_equal_threshold(scores: &[f64], truth: &[bool]) -> Result<f64> {
    check_lengths(scores, truth)?;
    let positives = truth.iter().filter(|&&t| t).count();
    if positives == 0 || positives == truth.len() {
        return Err(Error::UndefinedMetric(
            "precision/recall threshold needs both positives and negatives".into(),
        ));
    }
    let order = ranked(scores);
    let mut best: Option<(f64, usize)> = None;
    let mut tp = 0usize;
    let mut i = 0;
    let mut distinct = Vec::new();
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += truth[order[i]] as usize;
            i += 1;
        }
        let precision = tp as f64 / i as f64;
        let recall = tp as f64 / positives as f64;
        let gap = (precision - recall).abs();
        distinct.push(s);
        if best.is_none_or(|(g, _)| gap < g) {
            best = Some((gap, distinct.len() - 1));
        }
    }
    let (_, k) = best.expect("non-empty input");
    Ok(match distinct.get(k + 1) {
        Some(&lower) => distinct[k] + (lower - distinct[k]) / 2.0,
        None => distinct[k],
    })
}
