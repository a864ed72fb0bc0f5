use ndarray::{arr1, arr2, Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

use super::*;
use crate::confounder::{random_dictionary, ConfounderDictionary};
use crate::rng::rng_from_seed;

// ---- scalar-by-scalar oracles, deliberately free of ndarray linear algebra ----

fn naive_matvec(m: &Array2<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.nrows()];
    for r in 0..m.nrows() {
        let mut acc = 0.0;
        for c in 0..m.ncols() {
            acc += m[[r, c]] * v[c];
        }
        out[r] = acc;
    }
    out
}

fn naive_softmax(s: &[f64]) -> Vec<f64> {
    let mut total = 0.0;
    for &x in s {
        total += x.exp();
    }
    s.iter().map(|&x| x.exp() / total).collect()
}

fn naive_dot_lambda(h: &[f64], dict: &ConfounderDictionary, p: &CcimParams) -> Vec<f64> {
    let q = naive_matvec(&p.w_q, h);
    let d = dict.dim() as f64;
    let mut scores = Vec::new();
    for i in 0..dict.len() {
        let z: Vec<f64> = dict.prototypes.row(i).to_vec();
        let k = naive_matvec(&p.w_k, &z);
        let mut dot = 0.0;
        for a in 0..q.len() {
            dot += q[a] * k[a];
        }
        scores.push(dot / d.sqrt());
    }
    naive_softmax(&scores)
}

fn naive_additive_lambda(h: &[f64], dict: &ConfounderDictionary, p: &CcimParams) -> Vec<f64> {
    let q = naive_matvec(&p.w_q, h);
    let mut scores = Vec::new();
    for i in 0..dict.len() {
        let z: Vec<f64> = dict.prototypes.row(i).to_vec();
        let k = naive_matvec(&p.w_k, &z);
        let mut s = 0.0;
        for a in 0..q.len() {
            s += p.w_t[a] * (q[a] + k[a]).tanh();
        }
        scores.push(s);
    }
    naive_softmax(&scores)
}

fn naive_expectation(lambda: &[f64], dict: &ConfounderDictionary) -> Vec<f64> {
    let mut e = vec![0.0; dict.dim()];
    for (i, l) in lambda.iter().enumerate() {
        for (k, ek) in e.iter_mut().enumerate() {
            *ek += l * dict.prototypes[[i, k]] * dict.priors[i];
        }
    }
    e
}

fn naive_forward(h: &[f64], dict: &ConfounderDictionary, p: &CcimParams) -> Vec<f64> {
    let lambda = match p.variant {
        AttentionVariant::DotProduct => naive_dot_lambda(h, dict, p),
        AttentionVariant::Additive => naive_additive_lambda(h, dict, p),
    };
    let e = naive_expectation(&lambda, dict);
    let a = naive_matvec(&p.w_h, h);
    let b = naive_matvec(&p.w_g, &e);
    a.iter().zip(&b).map(|(x, y)| x + y).collect()
}

// ---- fixtures ----

fn dims(d_h: usize, d: usize, d_m: usize, d_n: usize) -> CcimDims {
    CcimDims { d_h, d, d_m, d_n }
}

fn setup(seed: u64, dims: CcimDims, n: usize, variant: AttentionVariant) -> (Array1<f64>, ConfounderDictionary, CcimParams) {
    let mut rng = rng_from_seed(seed);
    let p = CcimParams::init(dims, variant, CcimFlags::default(), &mut rng);
    let h: Array1<f64> = (0..dims.d_h).map(|_| rng.random_range(-1.0..1.0)).collect();
    let counts: Vec<u64> = (0..n).map(|_| rng.random_range(1..10)).collect();
    let protos = Array2::from_shape_simple_fn((n, dims.d), || rng.random_range(-2.0..2.0));
    let dict = ConfounderDictionary::from_parts(protos, counts, "test", seed).unwrap();
    (h, dict, p)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn assert_simplex(l: &Array1<f64>) {
    assert!(l.iter().all(|&v| v >= 0.0));
    assert!((l.sum() - 1.0).abs() <= 1e-9, "sum {}", l.sum());
}

// ---- attention ----

#[test]
fn zero_query_weights_give_uniform_dot_attention() {
    let (h, dict, mut p) = setup(1, dims(4, 4, 3, 5), 4, AttentionVariant::DotProduct);
    p.w_q.fill(0.0);
    let l = attention_dot(h.view(), &dict, &p).unwrap();
    assert!(l.iter().all(|&v| (v - 0.25).abs() < 1e-15));
}

#[test]
fn single_prototype_attention_is_one() {
    for variant in [AttentionVariant::DotProduct, AttentionVariant::Additive] {
        let (h, dict, p) = setup(2, dims(4, 4, 3, 5), 1, variant);
        let l = forward(h.view(), &dict, &p).unwrap().lambda;
        assert_eq!(l, arr1(&[1.0]));
    }
}

#[test]
fn dot_attention_matches_naive_oracle_seed_11() {
    let (h, dict, p) = setup(11, dims(4, 4, 3, 4), 3, AttentionVariant::DotProduct);
    let got = attention_dot(h.view(), &dict, &p).unwrap();
    let want = naive_dot_lambda(h.as_slice().unwrap(), &dict, &p);
    assert!(max_abs_diff(got.as_slice().unwrap(), &want) < 1e-12);
}

#[test]
fn zero_wt_gives_uniform_additive_attention() {
    let (h, dict, mut p) = setup(3, dims(4, 4, 3, 5), 5, AttentionVariant::Additive);
    p.w_t.fill(0.0);
    let l = attention_additive(h.view(), &dict, &p).unwrap();
    assert!(l.iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn identical_prototypes_get_identical_additive_weight() {
    let (h, _, p) = setup(4, dims(4, 3, 3, 5), 2, AttentionVariant::Additive);
    let protos = arr2(&[[0.5, -1.0, 2.0], [0.5, -1.0, 2.0], [1.0, 1.0, 1.0]]);
    let dict = ConfounderDictionary::from_parts(protos, vec![1, 3, 2], "t", 0).unwrap();
    let l = attention_additive(h.view(), &dict, &p).unwrap();
    assert_eq!(l[0], l[1]);
}

#[test]
fn additive_attention_matches_naive_oracle_seed_11() {
    let (h, dict, p) = setup(11, dims(4, 4, 3, 4), 3, AttentionVariant::Additive);
    let got = attention_additive(h.view(), &dict, &p).unwrap();
    let want = naive_additive_lambda(h.as_slice().unwrap(), &dict, &p);
    assert!(max_abs_diff(got.as_slice().unwrap(), &want) < 1e-12);
}

#[test]
fn wrong_variant_and_shape_errors() {
    let (h, dict, p) = setup(5, dims(4, 4, 3, 5), 3, AttentionVariant::DotProduct);
    assert!(attention_additive(h.view(), &dict, &p).is_err());
    let short = arr1(&[1.0, 2.0]);
    assert!(matches!(attention_dot(short.view(), &dict, &p), Err(crate::Error::Shape(_))));
    let other = random_dictionary(3, 7, 1).unwrap();
    assert!(matches!(forward(h.view(), &other, &p), Err(crate::Error::Shape(_))));
}

#[test]
fn softmax_shift_invariance() {
    let (h, dict, p) = setup(6, dims(5, 4, 3, 6), 6, AttentionVariant::DotProduct);
    let s = attention_scores(h.view(), &dict, &p).unwrap();
    let base = softmax(s.as_slice().unwrap());
    for offset in [-50.0, -1.5, 0.25, 3.0, 700.0] {
        let shifted: Vec<f64> = s.iter().map(|v| v + offset).collect();
        // the shift itself rounds the scores, hence the small tolerance
        assert!(max_abs_diff(&softmax(&shifted), &base) < 1e-12);
    }
    // large scores must not overflow
    assert_simplex(&Array1::from(softmax(&[1000.0, 999.0, -1000.0])));
}

// ---- expectation ----

#[test]
fn expectation_forced_case() {
    let protos = arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    let dict = ConfounderDictionary::from_parts(protos, vec![1, 1], "t", 0).unwrap();
    let e = confounder_expectation(arr1(&[1.0, 0.0]).view(), &dict, CcimFlags::default()).unwrap();
    assert_eq!(e, arr1(&[0.5, 1.0, 1.5]));
}

#[test]
fn expectation_single_prototype_collapses() {
    let dict = random_dictionary(1, 5, 8).unwrap();
    let e = confounder_expectation(arr1(&[1.0]).view(), &dict, CcimFlags::default()).unwrap();
    assert_eq!(e, dict.prototypes.row(0).to_owned());
}

#[test]
fn expectation_matches_naive_loop_seed_13() {
    let (_, dict, _) = setup(13, dims(2, 6, 2, 2), 3, AttentionVariant::DotProduct);
    let lambda = arr1(&[0.2, 0.5, 0.3]);
    let got = confounder_expectation(lambda.view(), &dict, CcimFlags::default()).unwrap();
    let want = naive_expectation(lambda.as_slice().unwrap(), &dict);
    assert!(max_abs_diff(got.as_slice().unwrap(), &want) < 1e-14);
}

#[test]
fn expectation_flag_semantics_closed_forms() {
    // dyadic values make every summation order exact
    let protos = arr2(&[[1.0, -2.0], [0.5, 4.0], [3.0, 0.25]]);
    let dict = ConfounderDictionary::from_parts(protos, vec![1, 1, 2], "t", 0).unwrap();
    let lambda = arr1(&[0.5, 0.25, 0.25]);
    let off = |l, p| CcimFlags { use_lambda: l, use_prior: p };
    let plain = confounder_expectation(lambda.view(), &dict, off(false, false)).unwrap();
    assert_eq!(plain, arr1(&[4.5, 2.25]));
    let no_lambda = confounder_expectation(lambda.view(), &dict, off(false, true)).unwrap();
    assert_eq!(no_lambda, arr1(&[0.25 + 0.125 + 1.5, -0.5 + 1.0 + 0.125]));
    let no_prior = confounder_expectation(lambda.view(), &dict, off(true, false)).unwrap();
    assert_eq!(no_prior, arr1(&[0.5 + 0.125 + 0.75, -1.0 + 1.0 + 0.0625]));
    assert!(confounder_expectation(arr1(&[1.0]).view(), &dict, CcimFlags::default()).is_err());
}

// ---- forward ----

#[test]
fn zero_wg_is_a_linear_head() {
    let (h, dict, mut p) = setup(14, dims(5, 4, 3, 6), 4, AttentionVariant::DotProduct);
    p.w_g.fill(0.0);
    let out = forward(h.view(), &dict, &p).unwrap();
    assert!(max_abs_diff(out.vector.as_slice().unwrap(), &naive_matvec(&p.w_h, h.as_slice().unwrap())) < 1e-15);
}

#[test]
fn zero_wh_single_prototype_is_wg_z() {
    let (h, dict, mut p) = setup(15, dims(5, 4, 3, 6), 1, AttentionVariant::Additive);
    p.w_h.fill(0.0);
    let out = forward(h.view(), &dict, &p).unwrap();
    let want = naive_matvec(&p.w_g, dict.prototypes.row(0).as_slice().unwrap());
    assert!(max_abs_diff(out.vector.as_slice().unwrap(), &want) < 1e-15);
    assert_eq!(out.expectation, dict.prototypes.row(0).to_owned());
}

#[test]
fn forward_matches_compositional_oracle_seed_17() {
    for variant in [AttentionVariant::DotProduct, AttentionVariant::Additive] {
        let (h, dict, p) = setup(17, dims(8, 8, 4, 6), 3, variant);
        let got = forward(h.view(), &dict, &p).unwrap();
        let want = naive_forward(h.as_slice().unwrap(), &dict, &p);
        assert!(max_abs_diff(got.vector.as_slice().unwrap(), &want) < 1e-12);
    }
}

#[test]
fn output_width_independent_of_dictionary_size() {
    for n in [1, 2, 7, 20] {
        let (h, dict, p) = setup(18, dims(4, 3, 5, 6), n, AttentionVariant::DotProduct);
        assert_eq!(forward(h.view(), &dict, &p).unwrap().vector.len(), 5);
    }
}

#[test]
fn lambda_off_reports_ones() {
    let (h, dict, mut p) = setup(19, dims(4, 3, 2, 6), 4, AttentionVariant::DotProduct);
    p.flags.use_lambda = false;
    let out = forward(h.view(), &dict, &p).unwrap();
    assert!(out.lambda.iter().all(|&v| v == 1.0));
}

#[test]
fn attention_dim_scale_override() {
    let (h, dict, mut p) = setup(20, dims(4, 9, 2, 16), 3, AttentionVariant::DotProduct);
    let s_default = attention_scores(h.view(), &dict, &p).unwrap();
    p.scale = ScoreScale::AttentionDim;
    let s_alt = attention_scores(h.view(), &dict, &p).unwrap();
    for (a, b) in s_default.iter().zip(&s_alt) {
        assert!((a * 3.0 - b * 4.0).abs() < 1e-12);
    }
}

#[test]
fn batch_rows_match_single_sample() {
    let (_, dict, p) = setup(21, dims(4, 3, 2, 5), 4, AttentionVariant::Additive);
    let mut rng = rng_from_seed(99);
    let hb = Array2::from_shape_simple_fn((6, 4), || rng.random_range(-1.0..1.0));
    let fwd = forward_batch(&hb, &dict, &p).unwrap();
    for b in 0..6 {
        let single = forward(hb.row(b), &dict, &p).unwrap();
        assert!(max_abs_diff(fwd.output.row(b).as_slice().unwrap(), single.vector.as_slice().unwrap()) < 1e-14);
    }
}

// ---- gradients ----

#[test]
fn linear_wh_quadratic_loss_exact() {
    let (h, dict, p) = setup(22, dims(4, 3, 3, 5), 3, AttentionVariant::DotProduct);
    let loss = QuadraticLoss { target: arr1(&[0.3, -0.2, 1.0]) };
    let report = check_gradients(&p, h.view(), &dict, &loss).unwrap();
    assert!(report.get("w_h").unwrap().max_abs_error < 1e-10);
}

#[test]
fn additive_wt_gradient_seed_19() {
    let (h, dict, p) = setup(19, dims(5, 4, 3, 6), 4, AttentionVariant::Additive);
    let loss = QuadraticLoss { target: arr1(&[1.0, -1.0, 0.5]) };
    let report = check_gradients(&p, h.view(), &dict, &loss).unwrap();
    assert!(report.get("w_t").unwrap().max_rel_error < 1e-5, "{report:?}");
    assert!(report.max_rel_error() < 1e-5, "{report:?}");
}

#[test]
fn constant_loss_has_zero_gradient() {
    let (h, dict, p) = setup(23, dims(4, 3, 3, 5), 3, AttentionVariant::Additive);
    let report = check_gradients(&p, h.view(), &dict, &ConstantLoss(2.5)).unwrap();
    for c in &report.params {
        assert_eq!(c.max_grad, 0.0);
        assert_eq!(c.max_abs_error, 0.0);
    }
}

#[test]
fn flags_off_gradients_still_correct() {
    for (l, pr) in [(false, true), (true, false), (false, false)] {
        let (h, dict, mut p) = setup(24, dims(4, 3, 3, 5), 3, AttentionVariant::DotProduct);
        p.flags = CcimFlags { use_lambda: l, use_prior: pr };
        let loss = QuadraticLoss { target: arr1(&[0.1, 0.2, 0.3]) };
        let report = check_gradients(&p, h.view(), &dict, &loss).unwrap();
        assert!(report.max_rel_error() < 1e-5, "{report:?}");
    }
}

// ---- properties ----

fn arb_case() -> impl Strategy<Value = (u64, usize, bool)> {
    (any::<u64>(), 1usize..9, any::<bool>())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lambda_is_on_the_simplex((seed, n, additive) in arb_case()) {
        let variant = if additive { AttentionVariant::Additive } else { AttentionVariant::DotProduct };
        let (h, dict, p) = setup(seed, dims(5, 4, 3, 6), n, variant);
        let l = forward(h.view(), &dict, &p).unwrap().lambda;
        prop_assert!(l.iter().all(|&v| v >= 0.0));
        prop_assert!((l.sum() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn permutation_equivariance_is_exact((seed, n, additive) in arb_case(), rot in 0usize..8) {
        let variant = if additive { AttentionVariant::Additive } else { AttentionVariant::DotProduct };
        let (h, dict, p) = setup(seed, dims(5, 4, 3, 6), n, variant);
        let perm: Vec<usize> = (0..n).map(|i| (i + rot) % n).rev().collect();
        let permuted = dict.permuted(&perm).unwrap();
        let a = forward(h.view(), &dict, &p).unwrap();
        let b = forward(h.view(), &permuted, &p).unwrap();
        prop_assert_eq!(&a.vector, &b.vector);
        prop_assert_eq!(&a.expectation, &b.expectation);
        for (i, &src) in perm.iter().enumerate() {
            prop_assert_eq!(b.lambda[i], a.lambda[src]);
        }
    }
}
