//! K-Means++ and K-Medoids over dense feature rows.
//!
//! Both clusterers share the same conventions: squared Euclidean distance,
//! nearest-centroid ties go to the lowest centroid index, an empty cluster is
//! reseeded with the point farthest from its own centroid (taken from a cluster
//! with at least two members), and iteration stops once assignments no longer
//! change or after [`MAX_ITERATIONS`] rounds.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;
use crate::types::FeatureSet;

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clusterer {
    #[default]
    KMeansPp,
    KMedoids,
}

impl std::str::FromStr for Clusterer {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "kmeans-pp" | "kmeans++" => Ok(Clusterer::KMeansPp),
            "kmedoids" | "k-medoids" => Ok(Clusterer::KMedoids),
            other => Err(format!("unknown clusterer `{other}` (kmeans-pp | kmedoids)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub iterations: usize,
}

impl Clustering {
    pub fn member_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.centroids.len()];
        for &a in &self.assignments {
            counts[a] += 1;
        }
        counts
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = sq_dist(row, c);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

fn check_args(rows: &[Vec<f64>], n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::argument("cluster count must be at least 1"));
    }
    if n > rows.len() {
        return Err(Error::argument(format!(
            "cluster count {n} exceeds number of rows {}",
            rows.len()
        )));
    }
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(Error::Validation {
            sample: format!("row {i}"),
            message: "non-finite feature".into(),
        });
    }
    Ok(())
}

/// D²-weighted seeding. Returns indices of the chosen rows.
fn plus_plus_seeds(rows: &[Vec<f64>], n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut chosen = Vec::with_capacity(n);
    chosen.push(rng.random_range(0..rows.len()));
    let mut d2: Vec<f64> = rows.iter().map(|r| sq_dist(r, &rows[chosen[0]])).collect();
    while chosen.len() < n {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &d) in d2.iter().enumerate() {
                acc += d;
                if d > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `target` just above the final partial sum
            pick.unwrap_or_else(|| d2.iter().rposition(|&d| d > 0.0).unwrap())
        } else {
            rng.random_range(0..rows.len())
        };
        chosen.push(next);
        for (i, r) in rows.iter().enumerate() {
            let d = sq_dist(r, &rows[next]);
            if d < d2[i] {
                d2[i] = d;
            }
        }
    }
    chosen
}

/// Moves a point into every empty cluster. Returns whether anything moved.
fn fill_empty(rows: &[Vec<f64>], assign: &mut [usize], centroids: &mut [Vec<f64>]) -> bool {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a] += 1;
    }
    let mut moved = false;
    for j in 0..k {
        if counts[j] > 0 {
            continue;
        }
        let mut far = None;
        let mut far_d = f64::NEG_INFINITY;
        for (i, r) in rows.iter().enumerate() {
            if counts[assign[i]] < 2 {
                continue;
            }
            let d = sq_dist(r, &centroids[assign[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        // n <= rows guarantees a donor cluster with two or more members
        let i = far.expect("no donor cluster");
        counts[assign[i]] -= 1;
        assign[i] = j;
        counts[j] = 1;
        centroids[j] = rows[i].clone();
        moved = true;
    }
    moved
}

fn means(rows: &[Vec<f64>], assign: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (r, &a) in rows.iter().zip(assign) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(r) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        let c = c as f64;
        for v in s.iter_mut() {
            *v /= c;
        }
    }
    sums
}

/// Lloyd iterations from a K-Means++ seeding.
pub fn kmeans_pp_rows(rows: &[Vec<f64>], n: usize, seed: u64) -> Result<Clustering> {
    check_args(rows, n)?;
    let mut rng = rng_from_seed(seed);
    let mut centroids: Vec<Vec<f64>> = plus_plus_seeds(rows, n, &mut rng)
        .into_iter()
        .map(|i| rows[i].clone())
        .collect();
    let mut assign: Vec<usize> = vec![usize::MAX; rows.len()];
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids)).collect();
        let changed = next != assign;
        assign = next;
        let reseeded = fill_empty(rows, &mut assign, &mut centroids);
        centroids = means(rows, &assign, n);
        if !changed && !reseeded {
            break;
        }
    }
    Ok(Clustering {
        assignments: assign,
        centroids,
        iterations,
    })
}

pub fn kmeans_pp(features: &FeatureSet, n: usize, seed: u64) -> Result<Clustering> {
    kmeans_pp_rows(&features.to_f64_rows(), n, seed)
}

/// Alternating K-Medoids (Voronoi iteration); centroids are member rows.
pub fn kmedoids_rows(rows: &[Vec<f64>], n: usize, seed: u64) -> Result<Clustering> {
    check_args(rows, n)?;
    let mut rng = rng_from_seed(seed);
    let mut medoids = plus_plus_seeds(rows, n, &mut rng);
    let mut centroids: Vec<Vec<f64>> = medoids.iter().map(|&i| rows[i].clone()).collect();
    let mut assign: Vec<usize> = vec![usize::MAX; rows.len()];
    let mut iterations = 0;
    for it in 1..=MAX_ITERATIONS {
        iterations = it;
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centroids)).collect();
        let changed = next != assign;
        assign = next;
        let reseeded = fill_empty(rows, &mut assign, &mut centroids);

        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n];
        for (i, &a) in assign.iter().enumerate() {
            members[a].push(i);
        }
        let mut moved = false;
        for (j, m) in members.iter().enumerate() {
            let mut best = m[0];
            let mut best_cost = f64::INFINITY;
            for &cand in m {
                let cost: f64 = m.iter().map(|&o| sq_dist(&rows[cand], &rows[o]).sqrt()).sum();
                if cost < best_cost {
                    best_cost = cost;
                    best = cand;
                }
            }
            if best != medoids[j] {
                medoids[j] = best;
                moved = true;
            }
            centroids[j] = rows[best].clone();
        }
        if !changed && !reseeded && !moved {
            break;
        }
    }
    Ok(Clustering {
        assignments: assign,
        centroids,
        iterations,
    })
}

pub fn kmedoids(features: &FeatureSet, n: usize, seed: u64) -> Result<Clustering> {
    kmedoids_rows(&features.to_f64_rows(), n, seed)
}

pub fn cluster_rows(rows: &[Vec<f64>], n: usize, seed: u64, method: Clusterer) -> Result<Clustering> {
    match method {
        Clusterer::KMeansPp => kmeans_pp_rows(rows, n, seed),
        Clusterer::KMedoids => kmedoids_rows(rows, n, seed),
    }
}
