use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Everything `evaluate` computes for one dataset. Metrics that do not apply
/// to the label mode are `None`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub samples: usize,
    pub per_class_ap: BTreeMap<usize, f64>,
    pub map: Option<f64>,
    pub accuracy: Option<f64>,
    pub c_f1: Option<f64>,
    pub o_f1: Option<f64>,
    pub aae: Option<[f64; 3]>,
    pub mean_jc: Option<f64>,
    /// Per-class precision = recall thresholds used for the Jaccard score.
    pub thresholds: BTreeMap<usize, f64>,
    /// Regime/split tag.
    pub notes: String,
}

impl MetricReport {
    /// Per-class AP table as CSV (`class,ap`).
    pub fn per_class_ap_csv(&self) -> String {
        let mut out = String::from("class,ap\n");
        for (c, ap) in &self.per_class_ap {
            out.push_str(&format!("{c},{ap}\n"));
        }
        out
    }
}
