//! Forward and backward passes of the intervention layer.
//!
//! Prototype-indexed reductions (the softmax normalizer and the weighted sum of
//! prototypes) run over the dictionary in a canonical row order, so permuting
//! the dictionary permutes `λ` and leaves every other output bit-identical.

use std::cmp::Ordering;

use ndarray::{s, Array1, Array2, ArrayView1, Axis};

use super::params::{AttentionVariant, CcimFlags, CcimGrads, CcimParams};
use crate::confounder::ConfounderDictionary;
use crate::error::{Error, Result};

/// Single-sample result.
#[derive(Debug, Clone, PartialEq)]
pub struct CcimOutput {
    /// `W_h h + W_g E_z[g(z)]`, length `d_m`.
    pub vector: Array1<f64>,
    /// Attention per prototype (all ones when `use_lambda` is off).
    pub lambda: Array1<f64>,
    /// `E_z[g(z)]`, length `d`.
    pub expectation: Array1<f64>,
}

/// Max-subtracted softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn row_cmp(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Dictionary rows sorted by (prototype, prior, count).
fn canonical_order(dict: &ConfounderDictionary) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..dict.len()).collect();
    idx.sort_by(|&a, &b| {
        row_cmp(dict.prototypes.row(a), dict.prototypes.row(b))
            .then(dict.priors[a].total_cmp(&dict.priors[b]))
            .then(dict.member_counts[a].cmp(&dict.member_counts[b]))
    });
    idx
}

/// Cached intermediates of a batched forward pass; rows are samples and
/// prototype-indexed columns are in canonical order.
#[derive(Debug, Clone)]
pub struct BatchForward {
    order: Vec<usize>,
    h: Array2<f64>,
    /// Canonically ordered prototypes, `N × d`.
    z: Array2<f64>,
    /// `P(z_i)` or ones, canonical order.
    prior_w: Array1<f64>,
    /// `W_q h`, `B × d_n`.
    q: Array2<f64>,
    /// `W_k z_i`, `N × d_n`.
    keys: Array2<f64>,
    /// `tanh(W_q h + W_k z_i)` laid out `(B·N) × d_n` (additive only).
    u: Option<Array2<f64>>,
    /// `B × N`.
    lambda: Array2<f64>,
    /// `B × d`.
    pub expectation: Array2<f64>,
    /// `B × d_m`.
    pub output: Array2<f64>,
    use_lambda: bool,
}

impl BatchForward {
    /// Attention weights of sample `b` in the dictionary's own row order.
    pub fn lambda_row(&self, b: usize) -> Array1<f64> {
        let mut out = Array1::zeros(self.order.len());
        for (c, &orig) in self.order.iter().enumerate() {
            out[orig] = self.lambda[[b, c]];
        }
        out
    }

    pub fn batch_size(&self) -> usize {
        self.h.nrows()
    }
}

fn prototype_weights(dict: &ConfounderDictionary, order: &[usize], flags: CcimFlags) -> Array1<f64> {
    order
        .iter()
        .map(|&i| if flags.use_prior { dict.priors[i] } else { 1.0 })
        .collect()
}

fn canonical_prototypes(dict: &ConfounderDictionary, order: &[usize]) -> Array2<f64> {
    dict.prototypes.select(Axis(0), order)
}

fn keys_for(p: &CcimParams, z: &Array2<f64>) -> Array2<f64> {
    let mut keys = Array2::zeros((z.nrows(), p.w_k.nrows()));
    for (i, zi) in z.rows().into_iter().enumerate() {
        keys.row_mut(i).assign(&p.w_k.dot(&zi));
    }
    keys
}

/// Raw attention scores (pre-softmax), `B × N` in canonical order, plus the
/// additive-attention activations when applicable.
fn scores(
    p: &CcimParams,
    q: &Array2<f64>,
    keys: &Array2<f64>,
) -> (Array2<f64>, Option<Array2<f64>>) {
    let (b, n, d_n) = (q.nrows(), keys.nrows(), keys.ncols());
    let mut s = Array2::zeros((b, n));
    match p.variant {
        AttentionVariant::DotProduct => {
            let scale = p.score_scale();
            for bi in 0..b {
                let qb = q.row(bi);
                for i in 0..n {
                    s[[bi, i]] = qb.dot(&keys.row(i)) / scale;
                }
            }
            (s, None)
        }
        AttentionVariant::Additive => {
            let mut u = Array2::zeros((b * n, d_n));
            for bi in 0..b {
                let qb = q.row(bi);
                for i in 0..n {
                    let mut ur = u.row_mut(bi * n + i);
                    for ((uv, &qv), &kv) in ur.iter_mut().zip(qb.iter()).zip(keys.row(i).iter()) {
                        *uv = (qv + kv).tanh();
                    }
                    s[[bi, i]] = p.w_t.dot(&ur);
                }
            }
            (s, Some(u))
        }
    }
}

/// Batched forward pass over the rows of `h` (`B × d_h`).
pub fn forward_batch(h: &Array2<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<BatchForward> {
    p.check(h.ncols(), dict)?;
    let order = canonical_order(dict);
    let z = canonical_prototypes(dict, &order);
    let prior_w = prototype_weights(dict, &order, p.flags);
    let q = h.dot(&p.w_q.t());
    let keys = keys_for(p, &z);
    let (lambda, u) = if p.flags.use_lambda {
        let (mut s, u) = scores(p, &q, &keys);
        for mut row in s.rows_mut() {
            let sm = softmax(row.as_slice().unwrap());
            row.assign(&Array1::from(sm));
        }
        (s, u)
    } else {
        (Array2::ones((h.nrows(), dict.len())), None)
    };
    let weights = &lambda * &prior_w;
    let expectation = weights.dot(&z);
    let output = h.dot(&p.w_h.t()) + expectation.dot(&p.w_g.t());
    if output.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite CCIM output".into()));
    }
    Ok(BatchForward {
        order,
        h: h.clone(),
        z,
        prior_w,
        q,
        keys,
        u,
        lambda,
        expectation,
        output,
        use_lambda: p.flags.use_lambda,
    })
}

/// Backpropagates `grad_out` (`B × d_m`, gradient of the loss w.r.t. each
/// output row) to the parameters and to `h`.
pub fn backward_batch(
    fwd: &BatchForward,
    p: &CcimParams,
    grad_out: &Array2<f64>,
) -> (CcimGrads, Array2<f64>) {
    let mut grads = CcimGrads::zeros_like(p);
    grads.w_h = grad_out.t().dot(&fwd.h);
    grads.w_g = grad_out.t().dot(&fwd.expectation);
    let mut dh = grad_out.dot(&p.w_h);
    if !fwd.use_lambda {
        return (grads, dh);
    }
    let de = grad_out.dot(&p.w_g);
    // dλ_bi = dE_b · (P(z_i) z_i)
    let weighted_z = &fwd.z * &fwd.prior_w.view().insert_axis(Axis(1));
    let dlambda = de.dot(&weighted_z.t());
    let (b, n) = fwd.lambda.dim();
    let mut dscore = Array2::zeros((b, n));
    for bi in 0..b {
        let lam = fwd.lambda.row(bi);
        let dl = dlambda.row(bi);
        let inner = lam.dot(&dl);
        for i in 0..n {
            dscore[[bi, i]] = lam[i] * (dl[i] - inner);
        }
    }
    let (dq, dkeys) = match p.variant {
        AttentionVariant::DotProduct => {
            let scale = p.score_scale();
            let dq = dscore.dot(&fwd.keys) / scale;
            let dk = dscore.t().dot(&fwd.q) / scale;
            (dq, dk)
        }
        AttentionVariant::Additive => {
            let u = fwd.u.as_ref().expect("additive forward caches activations");
            let d_n = p.w_t.len();
            let mut dq = Array2::zeros((b, d_n));
            let mut dk = Array2::zeros((n, d_n));
            let mut dwt = Array1::zeros(d_n);
            for bi in 0..b {
                for i in 0..n {
                    let ds = dscore[[bi, i]];
                    let ur = u.row(bi * n + i);
                    dwt.scaled_add(ds, &ur);
                    let da: Array1<f64> = ur
                        .iter()
                        .zip(p.w_t.iter())
                        .map(|(&uv, &wt)| ds * wt * (1.0 - uv * uv))
                        .collect();
                    dq.row_mut(bi).scaled_add(1.0, &da);
                    dk.row_mut(i).scaled_add(1.0, &da);
                }
            }
            grads.w_t = dwt;
            (dq, dk)
        }
    };
    grads.w_q = dq.t().dot(&fwd.h);
    grads.w_k = dkeys.t().dot(&fwd.z);
    dh += &dq.dot(&p.w_q);
    (grads, dh)
}

fn single(h: ArrayView1<f64>) -> Array2<f64> {
    h.to_owned().insert_axis(Axis(0))
}

fn check_h(h: ArrayView1<f64>) -> Result<()> {
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite entry in h".into()));
    }
    Ok(())
}

/// Softmax attention weights for the configured variant, in dictionary order.
fn attention(h: ArrayView1<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<Array1<f64>> {
    check_h(h)?;
    p.check(h.len(), dict)?;
    let order = canonical_order(dict);
    let z = canonical_prototypes(dict, &order);
    let q = single(h).dot(&p.w_q.t());
    let keys = keys_for(p, &z);
    let (s, _) = scores(p, &q, &keys);
    let sm = softmax(s.slice(s![0, ..]).as_slice().unwrap());
    let mut out = Array1::zeros(dict.len());
    for (c, &orig) in order.iter().enumerate() {
        out[orig] = sm[c];
    }
    Ok(out)
}

/// Raw scores in dictionary order; exposed for inspection and testing.
pub fn attention_scores(h: ArrayView1<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<Array1<f64>> {
    p.check(h.len(), dict)?;
    let order = canonical_order(dict);
    let z = canonical_prototypes(dict, &order);
    let q = single(h).dot(&p.w_q.t());
    let (s, _) = scores(p, &q, &keys_for(p, &z));
    let mut out = Array1::zeros(dict.len());
    for (c, &orig) in order.iter().enumerate() {
        out[orig] = s[[0, c]];
    }
    Ok(out)
}

/// `softmax_i((W_q h)ᵀ(W_k z_i) / scale)`.
pub fn attention_dot(h: ArrayView1<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<Array1<f64>> {
    if p.variant != AttentionVariant::DotProduct {
        return Err(Error::Config("attention_dot called on additive parameters".into()));
    }
    attention(h, dict, p)
}

/// `softmax_i(W_tᵀ tanh(W_q h + W_k z_i))`.
pub fn attention_additive(h: ArrayView1<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<Array1<f64>> {
    if p.variant != AttentionVariant::Additive {
        return Err(Error::Config("attention_additive called on dot-product parameters".into()));
    }
    attention(h, dict, p)
}

/// `Σ_i λ_i z_i P(z_i)`, with either factor replaced by 1 when its flag is off.
pub fn confounder_expectation(
    lambda: ArrayView1<f64>,
    dict: &ConfounderDictionary,
    flags: CcimFlags,
) -> Result<Array1<f64>> {
    if lambda.len() != dict.len() {
        return Err(Error::shape(format!(
            "{} attention weights for {} prototypes",
            lambda.len(),
            dict.len()
        )));
    }
    let order = canonical_order(dict);
    let z = canonical_prototypes(dict, &order);
    let w: Array1<f64> = order
        .iter()
        .map(|&i| {
            let l = if flags.use_lambda { lambda[i] } else { 1.0 };
            let pr = if flags.use_prior { dict.priors[i] } else { 1.0 };
            l * pr
        })
        .collect();
    Ok(w.insert_axis(Axis(0)).dot(&z).remove_axis(Axis(0)))
}

/// Single-sample forward pass.
pub fn forward(h: ArrayView1<f64>, dict: &ConfounderDictionary, p: &CcimParams) -> Result<CcimOutput> {
    check_h(h)?;
    let fwd = forward_batch(&single(h), dict, p)?;
    Ok(CcimOutput {
        vector: fwd.output.row(0).to_owned(),
        lambda: fwd.lambda_row(0),
        expectation: fwd.expectation.row(0).to_owned(),
    })
}
