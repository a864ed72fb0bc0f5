//! Mini-batch gradient descent over [`TrainData`].

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::data::{TrainData, Targets};
use super::model::{BaselineModel, CcimHead, DEFAULT_HIDDEN};
use crate::ccim::{AttentionVariant, CcimFlags, ScoreScale, DEFAULT_D_M, DEFAULT_D_N};
use crate::confounder::{
    build_dictionary, extract_context_features, random_dictionary, ConfounderDictionary,
    RandomProjectionEncoder,
};
use crate::error::{Error, Result};
use crate::rng::{stage_rng, stage_seed, Stage};
use crate::types::LabelMode;

/// Rows per forward pass when only scoring.
pub(crate) const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossMode {
    SoftmaxCe,
    BinaryCe,
    SquaredError,
}

impl LossMode {
    pub fn for_label_mode(mode: LabelMode) -> Self {
        match mode {
            LabelMode::SingleLabel => LossMode::SoftmaxCe,
            LabelMode::MultiLabel(_) => LossMode::BinaryCe,
            LabelMode::Continuous => LossMode::SquaredError,
        }
    }
}

impl std::str::FromStr for LossMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "softmax-ce" => Ok(LossMode::SoftmaxCe),
            "binary-ce" => Ok(LossMode::BinaryCe),
            "squared-error" => Ok(LossMode::SquaredError),
            other => Err(format!("unknown loss `{other}` (softmax-ce | binary-ce | squared-error)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    /// `None` picks the loss matching the label mode.
    pub loss: Option<LossMode>,
    pub hidden: usize,
    pub ccim: bool,
    pub variant: AttentionVariant,
    pub use_lambda: bool,
    pub use_prior: bool,
    pub random_dictionary: bool,
    pub n_clusters: usize,
    /// Width of the context features the dictionary is built from.
    pub feature_dim: usize,
    pub d_m: usize,
    pub d_n: usize,
    pub score_scale: ScoreScale,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 128,
            learning_rate: 0.05,
            seed: 0,
            loss: None,
            hidden: DEFAULT_HIDDEN,
            ccim: false,
            variant: AttentionVariant::DotProduct,
            use_lambda: true,
            use_prior: true,
            random_dictionary: false,
            n_clusters: crate::confounder::defaults::N_SYNTHETIC,
            feature_dim: crate::confounder::defaults::FEATURE_DIM,
            d_m: DEFAULT_D_M,
            d_n: DEFAULT_D_N,
            score_scale: ScoreScale::PrototypeDim,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.feature_dim == 0 || self.n_clusters == 0 {
            return Err(Error::Config("feature width and cluster count must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }

    pub fn flags(&self) -> CcimFlags {
        CcimFlags {
            use_lambda: self.use_lambda,
            use_prior: self.use_prior,
        }
    }

    /// Loss for `mode`, rejecting an explicit loss that does not fit it.
    pub fn loss_for(&self, mode: LabelMode) -> Result<LossMode> {
        let natural = LossMode::for_label_mode(mode);
        match self.loss {
            Some(l) if l != natural => Err(Error::Config(format!(
                "loss {l:?} does not fit label mode {mode:?}"
            ))),
            _ => Ok(natural),
        }
    }
}

/// The frozen context encoder used for dictionaries built during training.
pub fn context_encoder(data: &TrainData, cfg: &TrainConfig) -> Result<RandomProjectionEncoder> {
    RandomProjectionEncoder::new(
        data.context.ncols(),
        cfg.feature_dim,
        stage_seed(cfg.seed, Stage::Encoder),
    )
}

/// Dictionary for a CCIM run: `override_dict` if given, else a random
/// dictionary if requested, else K-Means++ over the encoded training
/// context inputs.
pub fn dictionary_for(data: &TrainData, cfg: &TrainConfig, override_dict: Option<ConfounderDictionary>) -> Result<ConfounderDictionary> {
    if let Some(d) = override_dict {
        return Ok(d);
    }
    if cfg.random_dictionary {
        return random_dictionary(
            cfg.n_clusters,
            cfg.feature_dim,
            stage_seed(cfg.seed, Stage::RandomDictionary),
        );
    }
    let encoder = context_encoder(data, cfg)?;
    let contexts = data.context_images()?;
    let features = extract_context_features(&contexts, &encoder)?;
    build_dictionary(
        &features,
        cfg.n_clusters,
        stage_seed(cfg.seed, Stage::Cluster),
        RandomProjectionEncoder::NAME,
    )
}

/// Fresh model shaped for `data` under `cfg`.
pub fn build_model(data: &TrainData, cfg: &TrainConfig, override_dict: Option<ConfounderDictionary>) -> Result<BaselineModel> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    let ccim = if cfg.ccim {
        Some(CcimHead {
            dict: dictionary_for(data, cfg, override_dict)?,
            variant: cfg.variant,
            flags: cfg.flags(),
            scale: cfg.score_scale,
            d_m: cfg.d_m,
            d_n: cfg.d_n,
        })
    } else {
        None
    };
    let mut rng = stage_rng(cfg.seed, Stage::Init);
    BaselineModel::new(
        data.subject.ncols(),
        data.context.ncols(),
        cfg.hidden,
        data.label_mode(),
        data.targets.n_outputs(),
        ccim,
        &mut rng,
    )
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        row.mapv_inplace(|v| v / z);
    }
    p
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Link function applied to logits to produce scores.
pub(crate) fn link(mode: LossMode, logits: &Array2<f64>) -> Array2<f64> {
    match mode {
        LossMode::SoftmaxCe => softmax_rows(logits),
        LossMode::BinaryCe => logits.mapv(sigmoid),
        LossMode::SquaredError => logits.clone(),
    }
}

/// Batch-mean loss and its gradient w.r.t. the logits.
pub fn loss_and_grad(mode: LossMode, logits: &Array2<f64>, targets: &Targets) -> Result<(f64, Array2<f64>)> {
    let b = logits.nrows() as f64;
    match (mode, targets) {
        (LossMode::SoftmaxCe, Targets::Single { classes, .. }) => {
            let mut p = softmax_rows(logits);
            let mut loss = 0.0;
            for (mut row, (&y, lrow)) in p.rows_mut().into_iter().zip(classes.iter().zip(logits.rows())) {
                let m = lrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + lrow.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                loss += lse - lrow[y];
                row[y] -= 1.0;
            }
            Ok((loss / b, p / b))
        }
        (LossMode::BinaryCe, Targets::Multi(t)) => {
            let loss = logits
                .iter()
                .zip(t.iter())
                .map(|(&l, &y)| l.max(0.0) - l * y + (-l.abs()).exp().ln_1p())
                .sum::<f64>();
            let grad = (logits.mapv(sigmoid) - t) / b;
            Ok((loss / b, grad))
        }
        (LossMode::SquaredError, Targets::Continuous(t)) => {
            let diff = logits - t;
            let loss = diff.mapv(|v| v * v).sum();
            Ok((loss / b, diff * (2.0 / b)))
        }
        (mode, t) => Err(Error::Config(format!(
            "loss {mode:?} cannot train targets of label mode {:?}",
            t.label_mode()
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: BaselineModel,
    /// Mean loss over the training data before the first update (reported
    /// as epoch 0 if it is already non-finite).
    pub initial_loss: f64,
    pub trace: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.trace.last().map_or(self.initial_loss, |r| r.train_loss)
    }

    /// `epoch,train_loss,val_loss,val_accuracy` rows.
    pub fn trace_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        let mut out = String::from("epoch,train_loss,val_loss,val_accuracy\n");
        for r in &self.trace {
            out.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch,
                r.train_loss,
                opt(r.val_loss),
                opt(r.val_accuracy)
            ));
        }
        out
    }
}

fn check_compatible(model: &BaselineModel, data: &TrainData) -> Result<()> {
    if model.label_mode != data.label_mode() {
        return Err(Error::Config(format!(
            "model label mode {:?} does not match data label mode {:?}",
            model.label_mode,
            data.label_mode()
        )));
    }
    if model.n_outputs() != data.targets.n_outputs() {
        return Err(Error::Config(format!(
            "model has {} outputs, data needs {}",
            model.n_outputs(),
            data.targets.n_outputs()
        )));
    }
    Ok(())
}

/// Mean loss and (single-label only) accuracy over `data` without updating.
pub fn dataset_loss(model: &BaselineModel, data: &TrainData, loss: LossMode) -> Result<(f64, Option<f64>)> {
    check_compatible(model, data)?;
    let mut total = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let xs = data.subject.select(Axis(0), chunk);
        let xc = data.context.select(Axis(0), chunk);
        let t = data.targets.select(chunk);
        let logits = model.logits(&xs, &xc)?;
        let (l, _) = loss_and_grad(loss, &logits, &t)?;
        total += l * chunk.len() as f64;
        if let Targets::Single { classes, .. } = &t {
            correct += argmax_rows(&logits).iter().zip(classes).filter(|(a, b)| a == b).count();
        }
    }
    let n = data.len() as f64;
    let acc = matches!(data.targets, Targets::Single { .. }).then(|| correct as f64 / n);
    Ok((total / n, acc))
}

/// Index of each row's maximum; the first index wins ties.
pub(crate) fn argmax_rows(m: &Array2<f64>) -> Vec<usize> {
    m.rows()
        .into_iter()
        .map(|r| {
            let mut best = 0;
            for (i, &v) in r.iter().enumerate() {
                if v > r[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// Trains `model` and returns it together with the loss trace.
///
/// Batches are drawn from a fresh permutation each epoch; the permutation
/// stream depends only on `cfg.seed`. With a learning rate of zero the
/// parameters come back unchanged.
pub fn train(mut model: BaselineModel, data: &TrainData, val: Option<&TrainData>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training data is empty".into()));
    }
    check_compatible(&model, data)?;
    if let Some(v) = val {
        check_compatible(&model, v)?;
    }
    let loss_mode = cfg.loss_for(data.label_mode())?;
    let (initial_loss, _) = dataset_loss(&model, data, loss_mode)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            loss: initial_loss,
        });
    }
    let mut rng = stage_rng(cfg.seed, Stage::Shuffle);
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs = data.subject.select(Axis(0), batch);
            let xc = data.context.select(Axis(0), batch);
            let t = data.targets.select(batch);
            let pass = model.pass(&xs, &xc)?;
            let (loss, dlogits) = loss_and_grad(loss_mode, &pass.logits, &t)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            epoch_loss += loss * batch.len() as f64;
            if cfg.learning_rate > 0.0 {
                let grads = model.backward(&pass, &dlogits);
                model.step(&grads, cfg.learning_rate);
            }
        }
        let train_loss = epoch_loss / data.len() as f64;
        if !model.is_finite() {
            return Err(Error::Divergence {
                epoch,
                loss: f64::NAN,
            });
        }
        let (val_loss, val_accuracy) = match val {
            Some(v) => {
                let (l, a) = dataset_loss(&model, v, loss_mode)?;
                (Some(l), a)
            }
            None => (None, None),
        };
        trace.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        });
    }
    Ok(TrainOutcome {
        model,
        initial_loss,
        trace,
    })
}
