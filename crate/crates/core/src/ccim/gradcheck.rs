//! Central-difference gradient checking for the intervention layer.

use ndarray::{Array1, ArrayView1};

use super::forward::{backward_batch, forward, forward_batch};
use super::params::CcimParams;
use crate::confounder::ConfounderDictionary;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-3;

/// Entries whose true gradient is this small are compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-8;

/// A scalar loss on the CCIM output vector.
pub trait OutputLoss {
    fn value(&self, out: ArrayView1<f64>) -> f64;
    fn grad(&self, out: ArrayView1<f64>) -> Array1<f64>;
}

/// `0.5 · ||out − target||²`.
#[derive(Debug, Clone)]
pub struct QuadraticLoss {
    pub target: Array1<f64>,
}

impl OutputLoss for QuadraticLoss {
    fn value(&self, out: ArrayView1<f64>) -> f64 {
        0.5 * out
            .iter()
            .zip(&self.target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>()
    }

    fn grad(&self, out: ArrayView1<f64>) -> Array1<f64> {
        &out - &self.target
    }
}

/// Ignores its input.
#[derive(Debug, Clone, Copy)]
pub struct ConstantLoss(pub f64);

impl OutputLoss for ConstantLoss {
    fn value(&self, _: ArrayView1<f64>) -> f64 {
        self.0
    }

    fn grad(&self, out: ArrayView1<f64>) -> Array1<f64> {
        Array1::zeros(out.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamCheck {
    pub name: &'static str,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    /// Largest analytic gradient magnitude, for context.
    pub max_grad: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientReport {
    pub params: Vec<ParamCheck>,
}

impl GradientReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn get(&self, name: &str) -> Option<&ParamCheck> {
        self.params.iter().find(|p| p.name == name)
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

fn compare(name: &'static str, analytic: &[f64], numeric: &[f64]) -> Result<ParamCheck> {
    let mut check = ParamCheck {
        name,
        entries: analytic.len(),
        max_rel_error: 0.0,
        max_abs_error: 0.0,
        max_grad: 0.0,
    };
    for (&a, &n) in analytic.iter().zip(numeric) {
        if !a.is_finite() || !n.is_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for {name}")));
        }
        check.max_rel_error = check.max_rel_error.max(relative_error(a, n));
        check.max_abs_error = check.max_abs_error.max((a - n).abs());
        check.max_grad = check.max_grad.max(a.abs());
    }
    Ok(check)
}

/// Fourth-order central difference of `f` at `x`:
/// `(f(x-2h) - f(x+2h) + 8 (f(x+h) - f(x-h))) / 12h` with `h = FD_STEP`,
/// grouped so a locally constant `f` gives exactly zero.
fn five_point(x: f64, mut f: impl FnMut(f64) -> Result<f64>) -> Result<f64> {
    let h = FD_STEP;
    let (m2, m1, p1, p2) = (f(x - 2.0 * h)?, f(x - h)?, f(x + h)?, f(x + 2.0 * h)?);
    Ok(((m2 - p2) + 8.0 * (p1 - m1)) / (12.0 * h))
}

/// Compares the analytic gradient of `loss(forward(h))` against central
/// differences (five-point stencil, step [`FD_STEP`]) for every entry of `W_h`, `W_g`, `W_q`,
/// `W_k`, `W_t` and `h`.
pub fn check_gradients(
    p: &CcimParams,
    h: ArrayView1<f64>,
    dict: &ConfounderDictionary,
    loss: &dyn OutputLoss,
) -> Result<GradientReport> {
    let hb = h.to_owned().insert_axis(ndarray::Axis(0));
    let fwd = forward_batch(&hb, dict, p)?;
    let g_out = loss.grad(fwd.output.row(0)).insert_axis(ndarray::Axis(0));
    let (grads, dh) = backward_batch(&fwd, p, &g_out);

    let eval = |pp: &CcimParams, hh: ArrayView1<f64>| -> Result<f64> {
        Ok(loss.value(forward(hh, dict, pp)?.vector.view()))
    };

    let mut params = Vec::new();
    type Slot = fn(&mut CcimParams) -> &mut [f64];
    let slots: [(&'static str, Slot, Vec<f64>); 5] = [
        ("w_h", |p| p.w_h.as_slice_mut().unwrap(), grads.w_h.iter().copied().collect()),
        ("w_g", |p| p.w_g.as_slice_mut().unwrap(), grads.w_g.iter().copied().collect()),
        ("w_q", |p| p.w_q.as_slice_mut().unwrap(), grads.w_q.iter().copied().collect()),
        ("w_k", |p| p.w_k.as_slice_mut().unwrap(), grads.w_k.iter().copied().collect()),
        ("w_t", |p| p.w_t.as_slice_mut().unwrap(), grads.w_t.iter().copied().collect()),
    ];
    for (name, slot, analytic) in slots {
        let mut work = p.clone();
        let mut numeric = Vec::with_capacity(analytic.len());
        for i in 0..analytic.len() {
            let orig = slot(&mut work)[i];
            let d = five_point(orig, |v| {
                slot(&mut work)[i] = v;
                eval(&work, h)
            })?;
            slot(&mut work)[i] = orig;
            numeric.push(d);
        }
        params.push(compare(name, &analytic, &numeric)?);
    }

    let mut hw = h.to_owned();
    let mut numeric = Vec::with_capacity(hw.len());
    for i in 0..hw.len() {
        let orig = hw[i];
        let d = five_point(orig, |v| {
            hw[i] = v;
            eval(p, hw.view())
        })?;
        hw[i] = orig;
        numeric.push(d);
    }
    params.push(compare("h", dh.row(0).as_slice().unwrap(), &numeric)?);
    Ok(GradientReport { params })
}
