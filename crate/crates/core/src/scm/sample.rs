use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::ScmSpec;
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::types::{LabelSet, Sample, SampleInput, Split, SyntheticRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Ancestral sampling from the observational SCM.
    Biased,
    /// Z → X severed: `x` drawn from its marginal, independent of `z`.
    Deconfounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScmRecord {
    pub x: usize,
    pub s: usize,
    pub c: usize,
    /// Kept for auditing; never given to a model.
    pub z: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub records: Vec<ScmRecord>,
    pub regime: Regime,
    pub seed: u64,
    pub n_s: usize,
    pub n_c: usize,
    pub n_y: usize,
}

fn categorical(probs: impl IntoIterator<Item = f64>, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.into_iter().enumerate() {
        acc += p;
        if p > 0.0 {
            last = i;
        }
        if u < acc {
            return i;
        }
    }
    // u landed in the rounding slack above the final partial sum
    last
}

pub fn sample_dataset(scm: &ScmSpec, n: usize, seed: u64, regime: Regime) -> Result<SyntheticDataset> {
    if n == 0 {
        return Err(Error::argument("sample count must be at least 1"));
    }
    let mut rng = rng_from_seed(seed);
    let p_x = scm.p_x();
    let mut records = Vec::with_capacity(n);
    for _ in 0..n {
        let z = categorical(scm.p_z.iter().copied(), &mut rng);
        let x = match regime {
            Regime::Biased => categorical(scm.p_x_given_z.row(z).iter().copied(), &mut rng),
            Regime::Deconfounded => categorical(p_x.iter().copied(), &mut rng),
        };
        let s = categorical(scm.p_s_given_x.row(x).iter().copied(), &mut rng);
        let c = categorical((0..scm.n_c()).map(|c| scm.p_c_given_xz[[x, z, c]]), &mut rng);
        let y = categorical((0..scm.n_y()).map(|y| scm.p_y_given_sc[[s, c, y]]), &mut rng);
        records.push(ScmRecord { x, s, c, z, y });
    }
    Ok(SyntheticDataset {
        records,
        regime,
        seed,
        n_s: scm.n_s(),
        n_c: scm.n_c(),
        n_y: scm.n_y(),
    })
}

pub fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Manifest samples: one-hot `s` and `c` blocks, single label `y`, context
    /// id `c<k>`. `z` is not carried.
    pub fn to_samples(&self, id_prefix: &str, split: Split) -> Vec<Sample> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| Sample {
                sample_id: format!("{id_prefix}{i:06}"),
                input: SampleInput::Synthetic(SyntheticRecord {
                    subject: one_hot(self.n_s, r.s),
                    context: one_hot(self.n_c, r.c),
                }),
                subject_box: None,
                labels: LabelSet::SingleLabel(r.y),
                split,
                context_id: Some(format!("c{}", r.c)),
            })
            .collect()
    }
}
