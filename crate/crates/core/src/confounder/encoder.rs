//! Context encoders: deterministic maps from a context image to a feature row.

use std::collections::HashMap;

use rand_distr::{Distribution, StandardNormal};

use super::mask::ContextImage;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::types::FeatureSet;

pub trait ContextEncoder {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    /// Must return the same vector for the same input on every call.
    fn encode(&self, ctx: &ContextImage) -> Result<Vec<f64>>;
}

/// Frozen random linear projection of the flattened grid followed by `tanh`.
///
/// Entries are i.i.d. standard normal scaled by `1/sqrt(input_len)` and drawn
/// row by row from a ChaCha8 stream seeded with `seed`.
#[derive(Debug, Clone)]
pub struct RandomProjectionEncoder {
    input_len: usize,
    dim: usize,
    seed: u64,
    weights: Vec<f64>,
}

impl RandomProjectionEncoder {
    pub const NAME: &'static str = "random-proj";

    pub fn new(input_len: usize, dim: usize, seed: u64) -> Result<Self> {
        if input_len == 0 || dim == 0 {
            return Err(Error::argument("random projection needs positive input and output sizes"));
        }
        let mut rng = rng_from_seed(seed);
        let scale = 1.0 / (input_len as f64).sqrt();
        let weights = (0..input_len * dim)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut rng);
                v * scale
            })
            .collect();
        Ok(RandomProjectionEncoder {
            input_len,
            dim,
            seed,
            weights,
        })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

impl ContextEncoder for RandomProjectionEncoder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, ctx: &ContextImage) -> Result<Vec<f64>> {
        let x = &ctx.grid.data;
        if x.len() != self.input_len {
            return Err(Error::Encoder {
                encoder: Self::NAME.into(),
                sample: ctx.provenance.clone(),
                message: format!("input has {} cells, projection expects {}", x.len(), self.input_len),
            });
        }
        Ok(self
            .weights
            .chunks_exact(self.input_len)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>().tanh())
            .collect())
    }
}

/// Passes the flattened grid through unchanged. Used for synthetic context
/// blocks, which are already feature vectors.
#[derive(Debug, Clone)]
pub struct IdentityEncoder {
    dim: usize,
}

impl IdentityEncoder {
    pub const NAME: &'static str = "identity";

    pub fn new(dim: usize) -> Self {
        IdentityEncoder { dim }
    }
}

impl ContextEncoder for IdentityEncoder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn encode(&self, ctx: &ContextImage) -> Result<Vec<f64>> {
        if ctx.grid.data.len() != self.dim {
            return Err(Error::Encoder {
                encoder: Self::NAME.into(),
                sample: ctx.provenance.clone(),
                message: format!("expected {} cells, got {}", self.dim, ctx.grid.data.len()),
            });
        }
        Ok(ctx.grid.data.clone())
    }
}

/// Looks features up by sample id in a precomputed feature file, e.g. one
/// produced by an external pretrained backbone.
#[derive(Debug, Clone)]
pub struct ExternalFileEncoder {
    features: FeatureSet,
    index: HashMap<String, usize>,
}

impl ExternalFileEncoder {
    pub const NAME: &'static str = "external-file";

    pub fn new(features: FeatureSet) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (i, id) in features.row_ids().iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::Duplicate(id.clone()));
            }
        }
        Ok(ExternalFileEncoder { features, index })
    }
}

impl ContextEncoder for ExternalFileEncoder {
    fn name(&self) -> &str {
        Self::NAME
    }

    fn dim(&self) -> usize {
        self.features.dim()
    }

    fn encode(&self, ctx: &ContextImage) -> Result<Vec<f64>> {
        let i = self.index.get(&ctx.provenance).ok_or_else(|| Error::Encoder {
            encoder: Self::NAME.into(),
            sample: ctx.provenance.clone(),
            message: "no row with this id in the feature file".into(),
        })?;
        Ok(self.features.row(*i).iter().map(|&v| v as f64).collect())
    }
}

/// Encodes every context in order; row ids are the provenance ids.
pub fn extract_context_features(
    contexts: &[ContextImage],
    enc: &dyn ContextEncoder,
) -> Result<FeatureSet> {
    let mut rows = Vec::with_capacity(contexts.len());
    let mut ids = Vec::with_capacity(contexts.len());
    for ctx in contexts {
        let v = enc.encode(ctx)?;
        if v.len() != enc.dim() {
            return Err(Error::Encoder {
                encoder: enc.name().into(),
                sample: ctx.provenance.clone(),
                message: format!("emitted {} values, declared dim {}", v.len(), enc.dim()),
            });
        }
        let row: Vec<f32> = v.iter().map(|&x| x as f32).collect();
        if row.iter().any(|x| !x.is_finite()) {
            return Err(Error::Encoder {
                encoder: enc.name().into(),
                sample: ctx.provenance.clone(),
                message: "non-finite feature".into(),
            });
        }
        rows.push(row);
        ids.push(ctx.provenance.clone());
    }
    FeatureSet::new(enc.dim(), rows, ids)
}
