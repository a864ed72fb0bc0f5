use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::cluster::{cluster_rows, Clusterer};
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::types::FeatureSet;

pub const DICTIONARY_MAGIC: &[u8; 8] = b"CCIMDIC1";

/// The stratified confounder: `N` context prototypes with empirical priors.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfounderDictionary {
    /// `N × d`, one prototype per row.
    pub prototypes: Array2<f64>,
    pub priors: Vec<f64>,
    pub member_counts: Vec<u64>,
    pub total: u64,
    pub encoder_name: String,
    pub seed: u64,
}

impl ConfounderDictionary {
    /// Builds a dictionary from explicit prototypes and member counts; priors
    /// are derived as `count / total`.
    pub fn from_parts(
        prototypes: Array2<f64>,
        member_counts: Vec<u64>,
        encoder_name: impl Into<String>,
        seed: u64,
    ) -> Result<Self> {
        let total: u64 = member_counts.iter().sum();
        let priors = member_counts
            .iter()
            .map(|&c| c as f64 / total as f64)
            .collect();
        let dict = ConfounderDictionary {
            prototypes,
            priors,
            member_counts,
            total,
            encoder_name: encoder_name.into(),
            seed,
        };
        dict.validate()?;
        Ok(dict)
    }

    pub fn len(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.prototypes.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 || self.dim() == 0 {
            return Err(Error::shape("dictionary needs at least one prototype of positive dim"));
        }
        if self.priors.len() != n || self.member_counts.len() != n {
            return Err(Error::shape(format!(
                "{n} prototypes but {} priors and {} counts",
                self.priors.len(),
                self.member_counts.len()
            )));
        }
        if self.member_counts.contains(&0) {
            return Err(Error::Numeric("empty cluster in dictionary".into()));
        }
        if self.member_counts.iter().sum::<u64>() != self.total {
            return Err(Error::Numeric("member counts do not sum to total".into()));
        }
        for (p, &c) in self.priors.iter().zip(&self.member_counts) {
            if *p != c as f64 / self.total as f64 {
                return Err(Error::Numeric(format!("prior {p} != {c}/{}", self.total)));
            }
        }
        let sum: f64 = self.priors.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!("priors sum to {sum}")));
        }
        if self.prototypes.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite prototype entry".into()));
        }
        Ok(())
    }

    /// Reorders prototypes, priors and counts together: row `i` of the result
    /// is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let n = self.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::argument("not a permutation of the dictionary rows"));
        }
        let mut prototypes = Array2::zeros((n, self.dim()));
        for (i, &p) in perm.iter().enumerate() {
            prototypes.row_mut(i).assign(&self.prototypes.row(p));
        }
        Ok(ConfounderDictionary {
            prototypes,
            priors: perm.iter().map(|&p| self.priors[p]).collect(),
            member_counts: perm.iter().map(|&p| self.member_counts[p]).collect(),
            total: self.total,
            encoder_name: self.encoder_name.clone(),
            seed: self.seed,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.magic(DICTIONARY_MAGIC);
        w.u64(self.len() as u64);
        w.u64(self.dim() as u64);
        w.f64s(self.prototypes.iter());
        w.f64s(&self.priors);
        for &c in &self.member_counts {
            w.u64(c);
        }
        w.u64(self.total);
        w.string(&self.encoder_name);
        w.string(&self.seed.to_string());
        w.finish()
    }

    pub(crate) fn read_from(r: &mut Reader<'_>) -> Result<Self> {
        r.expect_magic_at(DICTIONARY_MAGIC)?;
        let n = r.usize()?;
        let d = r.usize()?;
        let protos = r.f64s(n.checked_mul(d).ok_or_else(|| r.corrupt("size overflow"))?)?;
        let priors = r.f64s(n)?;
        let counts = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
        let total = r.u64()?;
        let encoder_name = r.string()?;
        let seed = r
            .string()?
            .parse::<u64>()
            .map_err(|_| r.corrupt("seed is not an unsigned integer"))?;
        let prototypes =
            Array2::from_shape_vec((n, d), protos).map_err(|e| r.corrupt(e.to_string()))?;
        let dict = ConfounderDictionary {
            prototypes,
            priors,
            member_counts: counts,
            total,
            encoder_name,
            seed,
        };
        dict.validate().map_err(|e| r.corrupt(e))?;
        Ok(dict)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "dictionary file");
        let dict = Self::read_from(&mut r)?;
        r.finish()?;
        Ok(dict)
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

/// Clusters context features with K-Means++ and averages each cluster.
pub fn build_dictionary(
    features: &FeatureSet,
    n: usize,
    seed: u64,
    encoder_name: &str,
) -> Result<ConfounderDictionary> {
    build_dictionary_with(features, n, seed, encoder_name, Clusterer::KMeansPp)
}

pub fn build_dictionary_with(
    features: &FeatureSet,
    n: usize,
    seed: u64,
    encoder_name: &str,
    clusterer: Clusterer,
) -> Result<ConfounderDictionary> {
    let rows = features.to_f64_rows();
    let clustering = cluster_rows(&rows, n, seed, clusterer)?;
    let d = features.dim();
    let mut sums = Array2::<f64>::zeros((n, d));
    let mut counts = vec![0u64; n];
    for (row, &a) in rows.iter().zip(&clustering.assignments) {
        counts[a] += 1;
        for (s, v) in sums.row_mut(a).iter_mut().zip(row) {
            *s += v;
        }
    }
    for (mut proto, &c) in sums.rows_mut().into_iter().zip(&counts) {
        proto.mapv_inplace(|v| v / c as f64);
    }
    ConfounderDictionary::from_parts(sums, counts, encoder_name, seed)
}

/// Standard-normal prototypes with uniform priors (one nominal member each).
pub fn random_dictionary(n: usize, d: usize, seed: u64) -> Result<ConfounderDictionary> {
    if n == 0 || d == 0 {
        return Err(Error::argument("random dictionary needs N >= 1 and d >= 1"));
    }
    let mut rng = rng_from_seed(seed);
    let prototypes = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut rng));
    ConfounderDictionary::from_parts(prototypes, vec![1; n], "random", seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fs(rows: &[[f32; 2]]) -> FeatureSet {
        FeatureSet::new(
            2,
            rows.iter().map(|r| r.to_vec()).collect(),
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_cluster_mean() {
        let d = build_dictionary(&fs(&[[0.0, 2.0], [2.0, 0.0]]), 1, 0, "t").unwrap();
        assert_eq!(d.prototypes.row(0).to_vec(), vec![1.0, 1.0]);
        assert_eq!(d.priors, vec![1.0]);
        assert_eq!(d.total, 2);
    }

    #[test]
    fn n_equals_rows_uniform_priors() {
        let d = build_dictionary(&fs(&[[0.0, 0.0], [1.0, 0.0], [5.0, 5.0], [9.0, 1.0]]), 4, 3, "t").unwrap();
        assert!(d.priors.iter().all(|&p| p == 0.25));
    }

    #[test]
    fn triad_prototypes_and_priors() {
        let f = fs(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [10.0, 10.0], [11.0, 10.0], [10.0, 12.0]]);
        let d = build_dictionary(&f, 2, 1, "t").unwrap();
        assert_eq!(d.priors, vec![0.5, 0.5]);
        let mut protos: Vec<Vec<f64>> = d.prototypes.rows().into_iter().map(|r| r.to_vec()).collect();
        protos.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = [[1.0 / 3.0, 1.0 / 3.0], [31.0 / 3.0, 32.0 / 3.0]];
        for (p, e) in protos.iter().zip(expect) {
            for (a, b) in p.iter().zip(e) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_dictionary_is_seeded_and_uniform() {
        let a = random_dictionary(4, 3, 11).unwrap();
        assert_eq!(a, random_dictionary(4, 3, 11).unwrap());
        assert_ne!(a.prototypes, random_dictionary(4, 3, 12).unwrap().prototypes);
        assert_eq!(a.priors, vec![0.25; 4]);
        assert!(random_dictionary(0, 3, 1).is_err());
    }

    #[test]
    fn bytes_roundtrip_and_magic() {
        let d = random_dictionary(3, 5, 2).unwrap();
        assert_eq!(ConfounderDictionary::from_bytes(&d.to_bytes()).unwrap(), d);
        let mut bad = d.to_bytes();
        bad[3] ^= 1;
        assert!(matches!(ConfounderDictionary::from_bytes(&bad), Err(Error::Format(_))));
        let mut short = d.to_bytes();
        short.truncate(40);
        assert!(matches!(ConfounderDictionary::from_bytes(&short), Err(Error::Corruption(_))));
    }

    #[test]
    fn permutation_keeps_rows_together() {
        let d = random_dictionary(3, 2, 4).unwrap();
        let p = d.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.prototypes.row(0), d.prototypes.row(2));
        assert!(d.permuted(&[0, 0, 1]).is_err());
    }
}
