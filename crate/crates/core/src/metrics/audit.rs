//! Conditional-entropy audit of context bias.
//!
//! For every context category `c`, `H(Y | X = c)` is the binary entropy (base
//! 2, so it lies in [0, 1]) of the target emotion's positive/negative split
//! among that context's samples. A context whose samples are all positive or
//! all negative has zero entropy: a signature of context bias.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HISTOGRAM_BINS: usize = 5;

/// `−Σ p log2 p` over `{p, 1 − p}`, with `0 · log 0 = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    entropy_of(p, 1.0 - p)
}

/// Entropy of a positive/negative count split. Symmetric in its arguments
/// bit for bit.
pub fn count_entropy(positives: usize, negatives: usize) -> f64 {
    let n = (positives + negatives) as f64;
    entropy_of(positives as f64 / n, negatives as f64 / n)
}

fn entropy_of(a: f64, b: f64) -> f64 {
    let term = |q: f64| if q > 0.0 { -q * q.log2() } else { 0.0 };
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    term(lo) + term(hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextStats {
    pub samples: usize,
    pub positives: usize,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub per_context: BTreeMap<String, ContextStats>,
    pub zero_entropy_fraction: f64,
    /// Counts over `[0, 0.2), [0.2, 0.4), …, [0.8, 1.0]`.
    pub histogram: [usize; HISTOGRAM_BINS],
}

impl AuditReport {
    pub fn entropy(&self, context: &str) -> Result<f64> {
        self.per_context
            .get(context)
            .map(|s| s.entropy)
            .ok_or_else(|| Error::UnknownContext(context.to_string()))
    }

    pub fn per_context_entropy(&self) -> BTreeMap<String, f64> {
        self.per_context
            .iter()
            .map(|(k, v)| (k.clone(), v.entropy))
            .collect()
    }
}

pub fn histogram_bin(entropy: f64) -> usize {
    ((entropy * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

/// Audits every context present in `contexts`.
pub fn conditional_entropy_audit<S: AsRef<str>>(contexts: &[S], emotion_flags: &[bool]) -> Result<AuditReport> {
    audit_top_k(contexts, emotion_flags, None)
}

/// Audits only the `top_k` most frequent contexts (ties broken by id), or
/// all of them when `top_k` is `None`.
pub fn audit_top_k<S: AsRef<str>>(
    contexts: &[S],
    emotion_flags: &[bool],
    top_k: Option<usize>,
) -> Result<AuditReport> {
    if contexts.len() != emotion_flags.len() {
        return Err(Error::shape(format!(
            "{} context ids for {} flags",
            contexts.len(),
            emotion_flags.len()
        )));
    }
    if contexts.is_empty() {
        return Err(Error::UndefinedMetric("audit over zero samples".into()));
    }
    let mut counts: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (c, &f) in contexts.iter().zip(emotion_flags) {
        let e = counts.entry(c.as_ref().to_string()).or_default();
        e.0 += 1;
        e.1 += f as usize;
    }
    let mut chosen: Vec<(String, (usize, usize))> = counts.into_iter().collect();
    if let Some(k) = top_k {
        if k == 0 {
            return Err(Error::argument("top-k must be at least 1"));
        }
        // BTreeMap order is by id; the stable sort keeps that for equal counts
        chosen.sort_by_key(|c| std::cmp::Reverse(c.1 .0));
        chosen.truncate(k);
    }
    let mut per_context = BTreeMap::new();
    let mut histogram = [0usize; HISTOGRAM_BINS];
    let mut zero = 0usize;
    for (ctx, (n, pos)) in chosen {
        let entropy = count_entropy(pos, n - pos);
        if entropy == 0.0 {
            zero += 1;
        }
        histogram[histogram_bin(entropy)] += 1;
        per_context.insert(
            ctx,
            ContextStats {
                samples: n,
                positives: pos,
                entropy,
            },
        );
    }
    let zero_entropy_fraction = zero as f64 / per_context.len() as f64;
    Ok(AuditReport {
        per_context,
        zero_entropy_fraction,
        histogram,
    })
}
