//! The two-branch recognition model: subject encoder, context encoder,
//! concatenation fusion and a vanilla or CCIM-intervened head.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;

use crate::binio::{Reader, Writer};
use crate::ccim::{
    backward_batch, forward_batch, AttentionVariant, BatchForward, CcimDims, CcimFlags, CcimGrads,
    CcimParams, ScoreScale,
};
use crate::confounder::ConfounderDictionary;
use crate::error::{Error, Result};
use crate::types::LabelMode;

pub const MODEL_MAGIC: &[u8; 8] = b"CCIMMDL1";

/// Hidden width of each branch.
pub const DEFAULT_HIDDEN: usize = 32;

/// Affine layer `y = W x + b` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    /// Uniform(±1/sqrt(fan_in)) weights, zero bias.
    pub fn init(out: usize, input: usize, rng: &mut impl Rng) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Dense {
            w: Array2::from_shape_simple_fn((out, input), || rng.random_range(-bound..=bound)),
            b: Array1::zeros(out),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.nrows()
    }

    /// Row-batched `X Wᵀ + b`.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.t()) + &self.b
    }

    fn write_to(&self, w: &mut Writer) {
        w.u64(self.w.nrows() as u64);
        w.u64(self.w.ncols() as u64);
        w.f64s(self.w.iter());
        w.f64s(self.b.iter());
    }

    fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        let out = r.usize()?;
        let input = r.usize()?;
        let len = out.checked_mul(input).ok_or_else(|| r.corrupt("layer size overflow"))?;
        let w = Array2::from_shape_vec((out, input), r.f64s(len)?).map_err(|e| r.corrupt(e))?;
        let b = Array1::from(r.f64s(out)?);
        Ok(Dense { w, b })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrads {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn grads(&self, x: &Array2<f64>, dy: &Array2<f64>) -> DenseGrads {
        DenseGrads {
            w: dy.t().dot(x),
            b: dy.sum_axis(Axis(0)),
        }
    }

    fn step(&mut self, g: &DenseGrads, lr: f64) {
        self.w.scaled_add(-lr, &g.w);
        self.b.scaled_add(-lr, &g.b);
    }
}

/// What sits between the fused representation `h` and the classifier.
#[derive(Debug, Clone, PartialEq)]
pub enum Head {
    Vanilla,
    /// CCIM with a frozen confounder dictionary.
    Ccim {
        params: Box<CcimParams>,
        dict: ConfounderDictionary,
    },
}

impl Head {
    pub fn is_ccim(&self) -> bool {
        matches!(self, Head::Ccim { .. })
    }
}

/// Everything needed to insert CCIM in front of the classifier.
#[derive(Debug, Clone)]
pub struct CcimHead {
    pub dict: ConfounderDictionary,
    pub variant: AttentionVariant,
    pub flags: CcimFlags,
    pub scale: ScoreScale,
    pub d_m: usize,
    pub d_n: usize,
}

/// `h = [s ; c]`.
pub fn fuse(s: ArrayView1<f64>, c: ArrayView1<f64>) -> Array1<f64> {
    concatenate(Axis(0), &[s, c]).expect("1-D concatenation")
}

fn fuse_batch(s: &Array2<f64>, c: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[s.view(), c.view()]).expect("batch sizes match")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub f_s: Dense,
    pub f_c: Dense,
    pub head: Head,
    pub classifier: Dense,
    pub label_mode: LabelMode,
}

/// Intermediates of one forward pass.
pub(crate) struct Pass {
    xs: Array2<f64>,
    xc: Array2<f64>,
    hs: Array2<f64>,
    hc: Array2<f64>,
    ccim: Option<BatchForward>,
    feat: Array2<f64>,
    pub logits: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelGrads {
    pub f_s: DenseGrads,
    pub f_c: DenseGrads,
    pub ccim: Option<CcimGrads>,
    pub classifier: DenseGrads,
}

fn label_mode_tag(mode: LabelMode) -> (u8, u64) {
    match mode {
        LabelMode::SingleLabel => (0, 0),
        LabelMode::MultiLabel(k) => (1, k as u64),
        LabelMode::Continuous => (2, 0),
    }
}

impl BaselineModel {
    /// Builds the branches first so that their weights depend only on the
    /// seed stream, never on the head; then the CCIM parameters (if any) and
    /// the classifier.
    pub fn new(
        subject_dim: usize,
        context_dim: usize,
        hidden: usize,
        label_mode: LabelMode,
        n_outputs: usize,
        ccim: Option<CcimHead>,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if subject_dim == 0 || context_dim == 0 || hidden == 0 {
            return Err(Error::Config(
                "subject input, context input and hidden width must all be nonempty".into(),
            ));
        }
        if n_outputs == 0 {
            return Err(Error::Config("classifier needs at least one output".into()));
        }
        let f_s = Dense::init(hidden, subject_dim, rng);
        let f_c = Dense::init(hidden, context_dim, rng);
        let d_h = 2 * hidden;
        let (head, feat_dim) = match ccim {
            None => (Head::Vanilla, d_h),
            Some(CcimHead { dict, variant, flags, scale, d_m, d_n }) => {
                dict.validate()?;
                if d_m == 0 || d_n == 0 {
                    return Err(Error::Config("CCIM dimensions must be positive".into()));
                }
                let dims = CcimDims {
                    d_h,
                    d: dict.dim(),
                    d_m,
                    d_n,
                };
                let mut params = CcimParams::init(dims, variant, flags, rng);
                params.scale = scale;
                (Head::Ccim { params: Box::new(params), dict }, d_m)
            }
        };
        let classifier = Dense::init(n_outputs, feat_dim, rng);
        Ok(BaselineModel {
            f_s,
            f_c,
            head,
            classifier,
            label_mode,
        })
    }

    pub fn d_h(&self) -> usize {
        self.f_s.output_dim() + self.f_c.output_dim()
    }

    pub fn n_outputs(&self) -> usize {
        self.classifier.output_dim()
    }

    pub fn check_inputs(&self, xs: &Array2<f64>, xc: &Array2<f64>) -> Result<()> {
        if xs.ncols() != self.f_s.input_dim() || xc.ncols() != self.f_c.input_dim() {
            return Err(Error::shape(format!(
                "inputs are {}+{} wide, model expects {}+{}",
                xs.ncols(),
                xc.ncols(),
                self.f_s.input_dim(),
                self.f_c.input_dim()
            )));
        }
        if xs.nrows() != xc.nrows() {
            return Err(Error::shape("subject and context batches differ in size"));
        }
        Ok(())
    }

    /// Branch encoders and fusion; shared verbatim by both heads.
    pub fn encode(&self, xs: &Array2<f64>, xc: &Array2<f64>) -> (Array2<f64>, Array2<f64>, Array2<f64>) {
        let hs = self.f_s.apply(xs).mapv(f64::tanh);
        let hc = self.f_c.apply(xc).mapv(f64::tanh);
        let h = fuse_batch(&hs, &hc);
        (hs, hc, h)
    }

    pub(crate) fn pass(&self, xs: &Array2<f64>, xc: &Array2<f64>) -> Result<Pass> {
        self.check_inputs(xs, xc)?;
        let (hs, hc, h) = self.encode(xs, xc);
        let (ccim, feat) = match &self.head {
            Head::Vanilla => (None, h),
            Head::Ccim { params, dict } => {
                let fwd = forward_batch(&h, dict, params)?;
                let out = fwd.output.clone();
                (Some(fwd), out)
            }
        };
        let logits = self.classifier.apply(&feat);
        Ok(Pass {
            xs: xs.clone(),
            xc: xc.clone(),
            hs,
            hc,
            ccim,
            feat,
            logits,
        })
    }

    /// Classifier outputs before any link function.
    pub fn logits(&self, xs: &Array2<f64>, xc: &Array2<f64>) -> Result<Array2<f64>> {
        Ok(self.pass(xs, xc)?.logits)
    }

    pub(crate) fn backward(&self, pass: &Pass, dlogits: &Array2<f64>) -> ModelGrads {
        let classifier = self.classifier.grads(&pass.feat, dlogits);
        let dfeat = dlogits.dot(&self.classifier.w);
        let (ccim, dh) = match (&self.head, &pass.ccim) {
            (Head::Ccim { params, .. }, Some(fwd)) => {
                let (g, dh) = backward_batch(fwd, params, &dfeat);
                (Some(g), dh)
            }
            _ => (None, dfeat),
        };
        let k = pass.hs.ncols();
        let das = &dh.slice(s![.., ..k]) * &pass.hs.mapv(|v| 1.0 - v * v);
        let dac = &dh.slice(s![.., k..]) * &pass.hc.mapv(|v| 1.0 - v * v);
        ModelGrads {
            f_s: self.f_s.grads(&pass.xs, &das),
            f_c: self.f_c.grads(&pass.xc, &dac),
            ccim,
            classifier,
        }
    }

    pub fn step(&mut self, g: &ModelGrads, lr: f64) {
        self.f_s.step(&g.f_s, lr);
        self.f_c.step(&g.f_c, lr);
        self.classifier.step(&g.classifier, lr);
        if let (Head::Ccim { params, .. }, Some(cg)) = (&mut self.head, &g.ccim) {
            params.apply(cg, lr);
        }
    }

    pub fn is_finite(&self) -> bool {
        let dense_ok = |d: &Dense| d.w.iter().chain(d.b.iter()).all(|v| v.is_finite());
        let head_ok = match &self.head {
            Head::Vanilla => true,
            Head::Ccim { params, .. } => params.is_finite(),
        };
        dense_ok(&self.f_s) && dense_ok(&self.f_c) && dense_ok(&self.classifier) && head_ok
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.magic(MODEL_MAGIC);
        let (tag, k) = label_mode_tag(self.label_mode);
        w.u8(tag);
        w.u64(k);
        self.f_s.write_to(&mut w);
        self.f_c.write_to(&mut w);
        self.classifier.write_to(&mut w);
        match &self.head {
            Head::Vanilla => w.u8(0),
            Head::Ccim { params, dict } => {
                w.u8(1);
                w.bytes(&params.to_bytes());
                w.bytes(&dict.to_bytes());
            }
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "model checkpoint");
        r.expect_magic(MODEL_MAGIC)?;
        let tag = r.u8()?;
        let k = r.usize()?;
        let label_mode = match tag {
            0 => LabelMode::SingleLabel,
            1 => LabelMode::MultiLabel(k),
            2 => LabelMode::Continuous,
            t => return Err(r.corrupt(format!("unknown label mode tag {t}"))),
        };
        let f_s = Dense::read_from(&mut r)?;
        let f_c = Dense::read_from(&mut r)?;
        let classifier = Dense::read_from(&mut r)?;
        let head = match r.u8()? {
            0 => Head::Vanilla,
            1 => {
                let params = CcimParams::read_from(&mut r)?;
                let dict = ConfounderDictionary::read_from(&mut r)?;
                Head::Ccim { params: Box::new(params), dict }
            }
            t => return Err(r.corrupt(format!("unknown head tag {t}"))),
        };
        r.finish()?;
        let model = BaselineModel {
            f_s,
            f_c,
            head,
            classifier,
            label_mode,
        };
        model.check_consistency().map_err(|e| Error::Corruption(format!("model checkpoint: {e}")))?;
        Ok(model)
    }

    fn check_consistency(&self) -> std::result::Result<(), String> {
        let d_h = self.d_h();
        let feat = match &self.head {
            Head::Vanilla => d_h,
            Head::Ccim { params, dict } => {
                params.check(d_h, dict).map_err(|e| e.to_string())?;
                params.dims().d_m
            }
        };
        if self.classifier.input_dim() != feat {
            return Err(format!(
                "classifier takes {} inputs, head produces {feat}",
                self.classifier.input_dim()
            ));
        }
        Ok(())
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}
