use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::confounder::ConfounderDictionary;
use crate::error::{Error, Result};

pub const PARAMS_MAGIC: &[u8; 8] = b"CCIMPAR1";

/// Defaults for the intervention layer's hidden sizes.
pub const DEFAULT_D_M: usize = 128;
pub const DEFAULT_D_N: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    #[default]
    DotProduct,
    Additive,
}

impl std::str::FromStr for AttentionVariant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dot" | "dot-product" => Ok(AttentionVariant::DotProduct),
            "additive" => Ok(AttentionVariant::Additive),
            other => Err(format!("unknown attention variant `{other}` (dot | additive)")),
        }
    }
}

/// Denominator of the dot-product score: `sqrt(d)` with `d` the prototype
/// width, or `sqrt(d_n)` with `d_n` the attention width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreScale {
    #[default]
    PrototypeDim,
    AttentionDim,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcimFlags {
    /// Weight prototypes by attention; off treats every `λ_i` as 1.
    pub use_lambda: bool,
    /// Weight prototypes by `P(z_i)`; off treats every prior as 1.
    pub use_prior: bool,
}

impl Default for CcimFlags {
    fn default() -> Self {
        CcimFlags {
            use_lambda: true,
            use_prior: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CcimDims {
    /// Width of the fused representation `h`.
    pub d_h: usize,
    /// Prototype width.
    pub d: usize,
    /// Output width.
    pub d_m: usize,
    /// Attention width.
    pub d_n: usize,
}

/// Learnable weights of the intervention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CcimParams {
    pub w_h: Array2<f64>,
    pub w_g: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    /// Only read by the additive variant.
    pub w_t: Array1<f64>,
    pub variant: AttentionVariant,
    pub flags: CcimFlags,
    pub scale: ScoreScale,
}

fn uniform(rows: usize, cols: usize, fan_in: usize, rng: &mut impl Rng) -> Array2<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
}

impl CcimParams {
    /// Uniform(±1/sqrt(fan_in)) initialization.
    pub fn init(dims: CcimDims, variant: AttentionVariant, flags: CcimFlags, rng: &mut impl Rng) -> Self {
        let CcimDims { d_h, d, d_m, d_n } = dims;
        let w_h = uniform(d_m, d_h, d_h, rng);
        let w_g = uniform(d_m, d, d, rng);
        let w_q = uniform(d_n, d_h, d_h, rng);
        let w_k = uniform(d_n, d, d, rng);
        let w_t = uniform(1, d_n, d_n, rng).into_shape_with_order(d_n).unwrap();
        CcimParams {
            w_h,
            w_g,
            w_q,
            w_k,
            w_t,
            variant,
            flags,
            scale: ScoreScale::default(),
        }
    }

    pub fn zeros(dims: CcimDims, variant: AttentionVariant, flags: CcimFlags) -> Self {
        let CcimDims { d_h, d, d_m, d_n } = dims;
        CcimParams {
            w_h: Array2::zeros((d_m, d_h)),
            w_g: Array2::zeros((d_m, d)),
            w_q: Array2::zeros((d_n, d_h)),
            w_k: Array2::zeros((d_n, d)),
            w_t: Array1::zeros(d_n),
            variant,
            flags,
            scale: ScoreScale::default(),
        }
    }

    pub fn dims(&self) -> CcimDims {
        CcimDims {
            d_h: self.w_h.ncols(),
            d: self.w_g.ncols(),
            d_m: self.w_h.nrows(),
            d_n: self.w_q.nrows(),
        }
    }

    /// Checks internal consistency and agreement with `dict` and `d_h`.
    pub fn check(&self, d_h: usize, dict: &ConfounderDictionary) -> Result<()> {
        let dims = self.dims();
        let ok = self.w_g.nrows() == dims.d_m
            && self.w_k.nrows() == dims.d_n
            && self.w_q.ncols() == dims.d_h
            && self.w_k.ncols() == dims.d
            && self.w_t.len() == dims.d_n;
        if !ok {
            return Err(Error::shape(format!("inconsistent CCIM weight shapes: {dims:?}")));
        }
        if d_h != dims.d_h {
            return Err(Error::shape(format!("h has {d_h} entries, W_h expects {}", dims.d_h)));
        }
        if dict.dim() != dims.d {
            return Err(Error::shape(format!(
                "dictionary prototypes have dim {}, W_g/W_k expect {}",
                dict.dim(),
                dims.d
            )));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    fn tensors(&self) -> [&[f64]; 5] {
        [
            self.w_h.as_slice().unwrap(),
            self.w_g.as_slice().unwrap(),
            self.w_q.as_slice().unwrap(),
            self.w_k.as_slice().unwrap(),
            self.w_t.as_slice().unwrap(),
        ]
    }

    /// Score denominator.
    pub fn score_scale(&self) -> f64 {
        let dims = self.dims();
        match self.scale {
            ScoreScale::PrototypeDim => (dims.d as f64).sqrt(),
            ScoreScale::AttentionDim => (dims.d_n as f64).sqrt(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        self.write_to(&mut w);
        w.finish()
    }

    pub(crate) fn write_to(&self, w: &mut Writer) {
        let dims = self.dims();
        w.magic(PARAMS_MAGIC);
        for v in [dims.d_m, dims.d_h, dims.d_n, dims.d] {
            w.u64(v as u64);
        }
        for t in self.tensors() {
            w.f64s(t);
        }
        w.u8(match self.variant {
            AttentionVariant::DotProduct => 0,
            AttentionVariant::Additive => 1,
        });
        w.u8(self.flags.use_lambda as u8);
        w.u8(self.flags.use_prior as u8);
        w.u8(match self.scale {
            ScoreScale::PrototypeDim => 0,
            ScoreScale::AttentionDim => 1,
        });
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        r.expect_magic_at(PARAMS_MAGIC)?;
        let d_m = r.usize()?;
        let d_h = r.usize()?;
        let d_n = r.usize()?;
        let d = r.usize()?;
        let mut mat = |rows: usize, cols: usize| -> Result<Array2<f64>> {
            let v = r.f64s(rows * cols)?;
            Ok(Array2::from_shape_vec((rows, cols), v).unwrap())
        };
        let w_h = mat(d_m, d_h)?;
        let w_g = mat(d_m, d)?;
        let w_q = mat(d_n, d_h)?;
        let w_k = mat(d_n, d)?;
        let w_t = Array1::from(r.f64s(d_n)?);
        let variant = match r.u8()? {
            0 => AttentionVariant::DotProduct,
            1 => AttentionVariant::Additive,
            v => return Err(r.corrupt(format!("unknown variant tag {v}"))),
        };
        let flag = |v: u8| -> Result<bool> {
            match v {
                0 => Ok(false),
                1 => Ok(true),
                _ => Err(Error::Corruption(format!("flag byte {v} is not 0/1"))),
            }
        };
        let flags = CcimFlags {
            use_lambda: flag(r.u8()?)?,
            use_prior: flag(r.u8()?)?,
        };
        let scale = match r.u8()? {
            0 => ScoreScale::PrototypeDim,
            1 => ScoreScale::AttentionDim,
            v => return Err(r.corrupt(format!("unknown scale tag {v}"))),
        };
        Ok(CcimParams {
            w_h,
            w_g,
            w_q,
            w_k,
            w_t,
            variant,
            flags,
            scale,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "CCIM parameter file");
        let p = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(p)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        Self::from_bytes(&bytes)
    }
}

/// Gradients with the same shapes as [`CcimParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct CcimGrads {
    pub w_h: Array2<f64>,
    pub w_g: Array2<f64>,
    pub w_q: Array2<f64>,
    pub w_k: Array2<f64>,
    pub w_t: Array1<f64>,
}

impl CcimGrads {
    pub fn zeros_like(p: &CcimParams) -> Self {
        CcimGrads {
            w_h: Array2::zeros(p.w_h.raw_dim()),
            w_g: Array2::zeros(p.w_g.raw_dim()),
            w_q: Array2::zeros(p.w_q.raw_dim()),
            w_k: Array2::zeros(p.w_k.raw_dim()),
            w_t: Array1::zeros(p.w_t.raw_dim()),
        }
    }
}

impl CcimParams {
    /// Plain gradient-descent step.
    pub fn apply(&mut self, g: &CcimGrads, lr: f64) {
        self.w_h.scaled_add(-lr, &g.w_h);
        self.w_g.scaled_add(-lr, &g.w_g);
        self.w_q.scaled_add(-lr, &g.w_q);
        self.w_k.scaled_add(-lr, &g.w_k);
        self.w_t.scaled_add(-lr, &g.w_t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    #[test]
    fn checkpoint_roundtrip() {
        let dims = CcimDims { d_h: 3, d: 4, d_m: 2, d_n: 5 };
        let mut p = CcimParams::init(dims, AttentionVariant::Additive, CcimFlags { use_lambda: false, use_prior: true }, &mut rng_from_seed(1));
        p.scale = ScoreScale::AttentionDim;
        let back = CcimParams::from_bytes(&p.to_bytes()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.dims(), dims);
        let mut bad = p.to_bytes();
        bad[0] = b'Z';
        assert!(matches!(CcimParams::from_bytes(&bad), Err(Error::Format(_))));
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let dims = CcimDims { d_h: 64, d: 16, d_m: 8, d_n: 8 };
        let p = CcimParams::init(dims, AttentionVariant::DotProduct, CcimFlags::default(), &mut rng_from_seed(3));
        assert!(p.w_h.iter().all(|v| v.abs() <= 1.0 / 8.0));
        assert!(p.w_g.iter().all(|v| v.abs() <= 0.25));
    }
}
