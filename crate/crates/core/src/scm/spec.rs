use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Largest cardinality accepted for any variable.
pub const MAX_CARDINALITY: usize = 32;

/// Knobs for [`build_scm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScmConfig {
    pub n_z: usize,
    pub n_x: usize,
    pub n_s: usize,
    pub n_c: usize,
    pub n_y: usize,
    /// Strength of the Z → X alignment, in [0, 1].
    pub beta: f64,
    /// Mass of `P(s|x)` on the subject state aligned with `x`.
    pub alpha_s: f64,
    /// Mass of `P(c|x,z)` on the context state aligned with `z`.
    pub alpha_c: f64,
    /// Mass of `P(y|s,c)` on the lookup-table label.
    pub alpha_y: f64,
    pub seed: u64,
}

impl Default for ScmConfig {
    fn default() -> Self {
        ScmConfig {
            n_z: 16,
            n_x: 16,
            n_s: 16,
            n_c: 16,
            n_y: 4,
            beta: 0.9,
            alpha_s: 0.8,
            alpha_c: 0.6,
            alpha_y: 0.9,
            seed: 23,
        }
    }
}

impl ScmConfig {
    /// All five variables binary.
    pub fn binary(beta: f64, seed: u64) -> Self {
        ScmConfig {
            n_z: 2,
            n_x: 2,
            n_s: 2,
            n_c: 2,
            n_y: 2,
            beta,
            seed,
            ..Default::default()
        }
    }
}

/// Discrete SCM over the graph
///
/// ```text
///   Z ──► X ──► S ──► Y
///   │     │           ▲
///   └───► C ◄─────────┤ (X → C, Z → C, C → Y)
/// ```
///
/// i.e. edges Z→X, Z→C, X→C, X→S, S→Y, C→Y. The only backdoor path from X to
/// Y is X ← Z → C → Y, blocked by adjusting for Z.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSpec {
    pub p_z: Array1<f64>,
    /// `[z, x]`.
    pub p_x_given_z: Array2<f64>,
    /// `[x, s]`.
    pub p_s_given_x: Array2<f64>,
    /// `[x, z, c]`.
    pub p_c_given_xz: Array3<f64>,
    /// `[s, c, y]`.
    pub p_y_given_sc: Array3<f64>,
    pub bias_beta: f64,
}

fn check_row(row: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut sum = 0.0;
    for v in row {
        if v < 0.0 || !v.is_finite() {
            return Err(Error::Numeric(format!("{what}: negative or non-finite probability {v}")));
        }
        sum += v;
    }
    if (sum - 1.0).abs() > 1e-12 {
        return Err(Error::Numeric(format!("{what}: row sums to {sum}")));
    }
    Ok(())
}

impl ScmSpec {
    pub fn n_z(&self) -> usize {
        self.p_z.len()
    }
    pub fn n_x(&self) -> usize {
        self.p_x_given_z.ncols()
    }
    pub fn n_s(&self) -> usize {
        self.p_s_given_x.ncols()
    }
    pub fn n_c(&self) -> usize {
        self.p_c_given_xz.dim().2
    }
    pub fn n_y(&self) -> usize {
        self.p_y_given_sc.dim().2
    }

    /// Checks shapes and that every CPT row lies on the simplex.
    pub fn validate(&self) -> Result<()> {
        let (nz, nx, ns, nc, ny) = (self.n_z(), self.n_x(), self.n_s(), self.n_c(), self.n_y());
        for (name, v) in [("N_z", nz), ("N_x", nx), ("N_s", ns), ("N_c", nc), ("N_y", ny)] {
            if v == 0 || v > MAX_CARDINALITY {
                return Err(Error::argument(format!("{name} = {v} outside 1..={MAX_CARDINALITY}")));
            }
        }
        let shapes_ok = self.p_x_given_z.dim() == (nz, nx)
            && self.p_s_given_x.dim() == (nx, ns)
            && self.p_c_given_xz.dim() == (nx, nz, nc)
            && self.p_y_given_sc.dim() == (ns, nc, ny);
        if !shapes_ok {
            return Err(Error::shape("CPT shapes disagree on cardinalities"));
        }
        check_row(self.p_z.iter().copied(), "P(z)")?;
        for r in self.p_x_given_z.rows() {
            check_row(r.iter().copied(), "P(x|z)")?;
        }
        for r in self.p_s_given_x.rows() {
            check_row(r.iter().copied(), "P(s|x)")?;
        }
        for x in 0..nx {
            for z in 0..nz {
                check_row((0..nc).map(|c| self.p_c_given_xz[[x, z, c]]), "P(c|x,z)")?;
            }
        }
        for s in 0..ns {
            for c in 0..nc {
                check_row((0..ny).map(|y| self.p_y_given_sc[[s, c, y]]), "P(y|s,c)")?;
            }
        }
        Ok(())
    }

    /// Marginal `P(x) = Σ_z P(z) P(x|z)`.
    pub fn p_x(&self) -> Array1<f64> {
        let mut px = Array1::zeros(self.n_x());
        for z in 0..self.n_z() {
            for x in 0..self.n_x() {
                px[x] += self.p_z[z] * self.p_x_given_z[[z, x]];
            }
        }
        px
    }
}

fn permutation(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// `alpha · onehot(target) + (1 − alpha) · w / Σw` with `w` drawn uniformly
/// from [1e-3, 1).
fn noisy_channel_row(n: usize, target: usize, alpha: f64, rng: &mut impl Rng) -> Vec<f64> {
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..1.0)).collect();
    let total: f64 = w.iter().sum();
    let mut row: Vec<f64> = w.iter().map(|v| (1.0 - alpha) * v / total).collect();
    row[target] += alpha;
    row
}

/// Builds the seeded CPT family described on [`ScmConfig`].
///
/// * `P(z)` uniform.
/// * `P(x|z) = (1 − β)/N_x + β·[x = z mod N_x]`.
/// * `P(s|x)`: noisy channel targeting `x mod N_s` with accuracy `alpha_s`.
/// * `P(c|x,z)`: noisy channel targeting `z mod N_c` with accuracy `alpha_c`;
///   the noise component is drawn per `(x, z)` row.
/// * `P(y|s,c)`: mass `alpha_y` on the lookup label
///   `(σ[s mod N_y] + τ[c mod N_y]) mod N_y`, with `σ`, `τ` seeded permutations
///   of `0..N_y`; the rest uniform. The label changes with either parent.
pub fn build_scm(cfg: &ScmConfig) -> Result<ScmSpec> {
    for (name, v) in [("N_z", cfg.n_z), ("N_x", cfg.n_x), ("N_s", cfg.n_s), ("N_c", cfg.n_c), ("N_y", cfg.n_y)] {
        if !(2..=MAX_CARDINALITY).contains(&v) {
            return Err(Error::argument(format!("{name} = {v} outside 2..={MAX_CARDINALITY}")));
        }
    }
    if !(0.0..=1.0).contains(&cfg.beta) {
        return Err(Error::argument(format!("bias beta = {} outside [0, 1]", cfg.beta)));
    }
    for (name, v) in [("alpha_s", cfg.alpha_s), ("alpha_c", cfg.alpha_c), ("alpha_y", cfg.alpha_y)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::argument(format!("{name} = {v} outside [0, 1]")));
        }
    }
    let mut rng = rng_from_seed(cfg.seed);
    let (nz, nx, ns, nc, ny) = (cfg.n_z, cfg.n_x, cfg.n_s, cfg.n_c, cfg.n_y);

    let p_z = Array1::from_elem(nz, 1.0 / nz as f64);
    let p_x_given_z = Array2::from_shape_fn((nz, nx), |(z, x)| {
        let aligned = if x == z % nx { 1.0 } else { 0.0 };
        (1.0 - cfg.beta) / nx as f64 + cfg.beta * aligned
    });

    let mut p_s_given_x = Array2::zeros((nx, ns));
    for x in 0..nx {
        let row = noisy_channel_row(ns, x % ns, cfg.alpha_s, &mut rng);
        p_s_given_x.row_mut(x).assign(&Array1::from(row));
    }

    let mut p_c_given_xz = Array3::zeros((nx, nz, nc));
    for x in 0..nx {
        for z in 0..nz {
            let row = noisy_channel_row(nc, z % nc, cfg.alpha_c, &mut rng);
            for (c, v) in row.into_iter().enumerate() {
                p_c_given_xz[[x, z, c]] = v;
            }
        }
    }

    let sigma = permutation(ny, &mut rng);
    let tau = permutation(ny, &mut rng);
    let mut p_y_given_sc = Array3::from_elem((ns, nc, ny), (1.0 - cfg.alpha_y) / ny as f64);
    for s in 0..ns {
        for c in 0..nc {
            let label = (sigma[s % ny] + tau[c % ny]) % ny;
            p_y_given_sc[[s, c, label]] += cfg.alpha_y;
        }
    }

    let spec = ScmSpec {
        p_z,
        p_x_given_z,
        p_s_given_x,
        p_c_given_xz,
        p_y_given_sc,
        bias_beta: cfg.beta,
    };
    spec.validate()?;
    Ok(spec)
}
