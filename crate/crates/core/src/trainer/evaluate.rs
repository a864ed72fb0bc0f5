//! Scoring a dataset and summarizing it as a [`MetricReport`].

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Axis};

use super::data::{Targets, TrainData};
use super::model::BaselineModel;
use super::train::{argmax_rows, link, LossMode, EVAL_CHUNK};
use crate::error::{Error, Result};
use crate::metrics::{
    aae, f1_label_based, f1_sample_based, jaccard_coefficient, per_class_average_precision,
    pr_equal_threshold, MetricReport,
};
use crate::types::LabelMode;

/// Anything that maps a dataset to per-sample, per-output scores:
/// class probabilities, label probabilities, or VAD estimates.
pub trait Scorer {
    fn label_mode(&self) -> LabelMode;
    fn n_outputs(&self) -> usize;
    fn score(&self, data: &TrainData) -> Result<Array2<f64>>;
}

impl Scorer for BaselineModel {
    fn label_mode(&self) -> LabelMode {
        self.label_mode
    }

    fn n_outputs(&self) -> usize {
        BaselineModel::n_outputs(self)
    }

    fn score(&self, data: &TrainData) -> Result<Array2<f64>> {
        let mode = LossMode::for_label_mode(self.label_mode);
        let mut out = Array2::zeros((data.len(), self.n_outputs()));
        let idx: Vec<usize> = (0..data.len()).collect();
        for chunk in idx.chunks(EVAL_CHUNK) {
            let xs = data.subject.select(Axis(0), chunk);
            let xc = data.context.select(Axis(0), chunk);
            let scores = link(mode, &self.logits(&xs, &xc)?);
            for (row, &i) in scores.rows().into_iter().zip(chunk) {
                out.row_mut(i).assign(&row);
            }
        }
        Ok(out)
    }
}

/// Decision threshold for multi-label predictions when a class has no
/// precision = recall threshold (no positives or no negatives).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn table_rows(m: &Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Scores `data` and computes every metric that applies to its label mode.
pub fn evaluate(scorer: &dyn Scorer, data: &TrainData) -> Result<MetricReport> {
    if data.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty dataset".into()));
    }
    if scorer.label_mode() != data.label_mode() || scorer.n_outputs() != data.targets.n_outputs() {
        return Err(Error::Config(format!(
            "scorer label mode {:?} with {} outputs does not match data label mode {:?} with {}",
            scorer.label_mode(),
            scorer.n_outputs(),
            data.label_mode(),
            data.targets.n_outputs()
        )));
    }
    let scores = scorer.score(data)?;
    if scores.dim() != (data.len(), scorer.n_outputs()) {
        return Err(Error::shape("scorer returned a table of the wrong size"));
    }
    let mut report = MetricReport {
        samples: data.len(),
        notes: data.tag.clone(),
        ..MetricReport::default()
    };
    match &data.targets {
        Targets::Single { classes, n_classes } => {
            let pred = argmax_rows(&scores);
            let correct = pred.iter().zip(classes).filter(|(a, b)| a == b).count();
            report.accuracy = Some(correct as f64 / data.len() as f64);
            let truth: Vec<Vec<bool>> = classes.iter().map(|&y| (0..*n_classes).map(|k| k == y).collect()).collect();
            let pred_bits: Vec<Vec<bool>> = pred.iter().map(|&p| (0..*n_classes).map(|k| k == p).collect()).collect();
            fill_ranking(&mut report, &table_rows(&scores), &truth)?;
            report.c_f1 = Some(f1_label_based(&pred_bits, &truth)?);
            report.o_f1 = Some(f1_sample_based(&pred_bits, &truth)?);
        }
        Targets::Multi(t) => {
            let truth: Vec<Vec<bool>> = t.rows().into_iter().map(|r| r.iter().map(|&v| v > 0.5).collect()).collect();
            let rows = table_rows(&scores);
            fill_ranking(&mut report, &rows, &truth)?;
            let k = t.ncols();
            let pred_bits: Vec<Vec<bool>> = rows
                .iter()
                .map(|r| r.iter().map(|&s| s >= DEFAULT_THRESHOLD).collect())
                .collect();
            report.c_f1 = Some(f1_label_based(&pred_bits, &truth)?);
            report.o_f1 = Some(f1_sample_based(&pred_bits, &truth)?);
            for c in 0..k {
                let s: Vec<f64> = rows.iter().map(|r| r[c]).collect();
                let tc: Vec<bool> = truth.iter().map(|r| r[c]).collect();
                if let Ok(th) = pr_equal_threshold(&s, &tc) {
                    report.thresholds.insert(c, th);
                }
            }
            let mut jc_sum = 0.0;
            let mut jc_n = 0usize;
            for (r, tr) in rows.iter().zip(&truth) {
                let truth_set: BTreeSet<usize> = (0..k).filter(|&c| tr[c]).collect();
                if truth_set.is_empty() {
                    continue;
                }
                let pred_set: BTreeSet<usize> = (0..k)
                    .filter(|&c| r[c] >= *report.thresholds.get(&c).unwrap_or(&DEFAULT_THRESHOLD))
                    .collect();
                jc_sum += jaccard_coefficient(&pred_set, &truth_set)?;
                jc_n += 1;
            }
            report.mean_jc = (jc_n > 0).then(|| jc_sum / jc_n as f64);
        }
        Targets::Continuous(t) => {
            let to_triples = |m: &Array2<f64>| -> Vec<[f64; 3]> {
                m.rows().into_iter().map(|r| [r[0], r[1], r[2]]).collect()
            };
            report.aae = Some(aae(&to_triples(&scores), &to_triples(t))?);
        }
    }
    Ok(report)
}

fn fill_ranking(report: &mut MetricReport, scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<()> {
    let aps = per_class_average_precision(scores, truth)?;
    report.per_class_ap = aps
        .iter()
        .enumerate()
        .filter_map(|(c, ap)| ap.map(|v| (c, v)))
        .collect::<BTreeMap<_, _>>();
    if !report.per_class_ap.is_empty() {
        report.map = Some(report.per_class_ap.values().sum::<f64>() / report.per_class_ap.len() as f64);
    }
    Ok(())
}
