//! Exact interventional and observational queries by enumeration.

use ndarray::Array2;

use super::spec::ScmSpec;
use crate::error::{Error, Result};

fn check_x(scm: &ScmSpec, x: usize) -> Result<()> {
    if x >= scm.n_x() {
        return Err(Error::argument(format!("x = {x} outside 0..{}", scm.n_x())));
    }
    Ok(())
}

/// `Σ_z w(z) Σ_s P(s|x) Σ_c P(c|x,z) P(y|s,c)` for a weighting of the strata.
fn stratified_outcome(scm: &ScmSpec, x: usize, z_weights: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scm.n_y()];
    for (z, &wz) in z_weights.iter().enumerate() {
        for s in 0..scm.n_s() {
            let ws = wz * scm.p_s_given_x[[x, s]];
            for c in 0..scm.n_c() {
                let wc = ws * scm.p_c_given_xz[[x, z, c]];
                for (y, o) in out.iter_mut().enumerate() {
                    *o += wc * scm.p_y_given_sc[[s, c, y]];
                }
            }
        }
    }
    out
}

/// Observational `P(Y | X = x)`, stratifying with the posterior `P(z|x)`.
pub fn exact_likelihood(scm: &ScmSpec, x: usize) -> Result<Vec<f64>> {
    check_x(scm, x)?;
    let joint: Vec<f64> = (0..scm.n_z())
        .map(|z| scm.p_z[z] * scm.p_x_given_z[[z, x]])
        .collect();
    let px: f64 = joint.iter().sum();
    if px <= 0.0 {
        return Err(Error::Conditioning { x });
    }
    let posterior: Vec<f64> = joint.iter().map(|j| j / px).collect();
    Ok(stratified_outcome(scm, x, &posterior))
}

/// Interventional `P(Y | do(X = x))` by backdoor adjustment over `Z`: the
/// same sum with the prior `P(z)` in place of `P(z|x)`.
pub fn exact_intervention(scm: &ScmSpec, x: usize) -> Result<Vec<f64>> {
    check_x(scm, x)?;
    Ok(stratified_outcome(scm, x, scm.p_z.as_slice().unwrap()))
}

/// `P(Y | do(X = x))` by graph surgery: replace `P(x'|z)` with a point mass
/// at `x` for every `z`, then marginalize the full joint over
/// `(z, x', s, c)`.
pub fn mutilated_intervention(scm: &ScmSpec, x: usize) -> Result<Vec<f64>> {
    check_x(scm, x)?;
    let (nz, nx, ns, nc, ny) = (scm.n_z(), scm.n_x(), scm.n_s(), scm.n_c(), scm.n_y());
    let clamped = Array2::from_shape_fn((nz, nx), |(_, xp)| if xp == x { 1.0 } else { 0.0 });
    let mut p_y = vec![0.0; ny];
    for z in 0..nz {
        for xp in 0..nx {
            let p_zx = scm.p_z[z] * clamped[[z, xp]];
            if p_zx == 0.0 {
                continue;
            }
            for s in 0..ns {
                for c in 0..nc {
                    let p_zxsc = p_zx * scm.p_s_given_x[[xp, s]] * scm.p_c_given_xz[[xp, z, c]];
                    for (y, acc) in p_y.iter_mut().enumerate() {
                        *acc += p_zxsc * scm.p_y_given_sc[[s, c, y]];
                    }
                }
            }
        }
    }
    Ok(p_y)
}

/// Total-variation distance `½ Σ |p − q|`.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "distributions over different supports");
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Mean over `x` of `TV(P(Y|x), P(Y|do(x)))`.
pub fn mean_confounding_gap(scm: &ScmSpec) -> Result<f64> {
    let mut total = 0.0;
    for x in 0..scm.n_x() {
        total += total_variation(&exact_likelihood(scm, x)?, &exact_intervention(scm, x)?);
    }
    Ok(total / scm.n_x() as f64)
}
