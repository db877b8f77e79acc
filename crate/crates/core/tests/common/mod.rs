//! Seeded generators shared by the integration tests and the acceptance
//! run. Systems are built in decomposed coordinates, where the ground truth
//! is known, and hidden behind random well-conditioned transformations.
#![allow(dead_code)]

use ddae_core::{
    build_split, construct_probe_history, DdaeSystem, FreeValues, PiecewisePolynomial, ProbeTarget,
    RankPolicy, SplitCoefficients,
};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
}

pub fn uniform_vec(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// `Q1 diag(s) Q2` with orthogonal `Q1`, `Q2` and `s` in `[0.5, 2]`.
pub fn well_conditioned(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let q1 = uniform(rng, n, n).qr().q();
    let q2 = uniform(rng, n, n).qr().q();
    let s = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.gen_range(0.5..2.0)));
    q1 * s * q2
}

/// Block diagonal nilpotent matrix of lower shift blocks of the given
/// sizes, `N e_i = e_{i+1}` inside each block.
pub fn shift_blocks(sizes: &[usize]) -> DMatrix<f64> {
    let n: usize = sizes.iter().sum();
    let mut m = DMatrix::zeros(n, n);
    let mut off = 0;
    for &s in sizes {
        for i in 1..s {
            m[(off + i, off + i - 1)] = 1.0;
        }
        off += s;
    }
    m
}

/// Rows of the fast block that are the last of their shift block; `N X = 0`
/// iff `X` vanishes outside these rows.
pub fn block_last_rows(sizes: &[usize]) -> Vec<usize> {
    let mut rows = Vec::new();
    let mut off = 0;
    for &s in sizes {
        rows.push(off + s - 1);
        off += s;
    }
    rows
}

pub fn random_block_sizes(rng: &mut ChaCha8Rng, n_a: usize, max_block: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut left = n_a;
    while left > 0 {
        let s = rng.gen_range(1..=left.min(max_block));
        sizes.push(s);
        left -= s;
    }
    sizes
}

/// A pencil `S0 diag(I, N) T0`, `S0 diag(J, I) T0` with known structure.
#[derive(Clone, Debug)]
pub struct KnownPencil {
    pub e: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub t0: DMatrix<f64>,
    pub n_d: usize,
    pub n_a: usize,
    pub nu: usize,
    pub sizes: Vec<usize>,
    pub j: DMatrix<f64>,
    pub n: DMatrix<f64>,
}

impl KnownPencil {
    pub fn dim(&self) -> usize {
        self.n_d + self.n_a
    }

    /// `D` whose transformed blocks `S0^-1 D T0^-1` are the given matrix.
    pub fn delay_from_blocks(&self, blocks: &DMatrix<f64>) -> DMatrix<f64> {
        &self.s0 * blocks * &self.t0
    }
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (n1, n2) = (a.nrows(), b.nrows());
    let mut m = DMatrix::zeros(n1 + n2, n1 + n2);
    m.view_mut((0, 0), (n1, n1)).copy_from(a);
    m.view_mut((n1, n1), (n2, n2)).copy_from(b);
    m
}

pub fn known_pencil(rng: &mut ChaCha8Rng, n_d: usize, sizes: Vec<usize>) -> KnownPencil {
    let n_a: usize = sizes.iter().sum();
    let n = n_d + n_a;
    let j = uniform(rng, n_d, n_d);
    let nm = shift_blocks(&sizes);
    let nu = if n_a == 0 { 0 } else { *sizes.iter().max().unwrap() };
    let s0 = well_conditioned(rng, n);
    let t0 = well_conditioned(rng, n);
    let e = &s0 * block_diag(&DMatrix::identity(n_d, n_d), &nm) * &t0;
    let a = &s0 * block_diag(&j, &DMatrix::identity(n_a, n_a)) * &t0;
    KnownPencil { e, a, s0, t0, n_d, n_a, nu, sizes, j, n: nm }
}

/// Random pencil of dimension `1..=max_n` with random slow dimension and
/// nilpotent block sizes.
pub fn random_known_pencil(rng: &mut ChaCha8Rng, max_n: usize, max_block: usize) -> KnownPencil {
    let n = rng.gen_range(1..=max_n);
    let n_d = rng.gen_range(0..=n);
    let sizes = random_block_sizes(rng, n - n_d, max_block);
    known_pencil(rng, n_d, sizes)
}

pub fn zero_data(n: usize, tau: f64, horizon: usize) -> (PiecewisePolynomial<f64>, PiecewisePolynomial<f64>) {
    (
        PiecewisePolynomial::zero(0.0, horizon as f64 * tau, n).unwrap(),
        PiecewisePolynomial::zero(-tau, 0.0, n).unwrap(),
    )
}

pub fn system(
    e: DMatrix<f64>,
    a: DMatrix<f64>,
    d: DMatrix<f64>,
    tau: f64,
    horizon: usize,
) -> DdaeSystem<f64> {
    let (f, phi) = zero_data(e.nrows(), tau, horizon);
    DdaeSystem::new(e, a, d, tau, horizon, f, phi).unwrap()
}

/// Random regular system of mixed type.
pub fn random_system(rng: &mut ChaCha8Rng, max_n: usize) -> DdaeSystem<f64> {
    let p = random_known_pencil(rng, max_n, 3);
    let n = p.dim();
    let d = match rng.gen_range(0..4) {
        0 => DMatrix::zeros(n, n),
        1 => {
            // Fast rows restricted so that N B_a = 0.
            let mut blocks = uniform(rng, n, n);
            let keep = block_last_rows(&p.sizes);
            for r in 0..p.n_a {
                if !keep.contains(&r) {
                    blocks.row_mut(p.n_d + r).fill(0.0);
                }
            }
            p.delay_from_blocks(&blocks)
        }
        _ => uniform(rng, n, n),
    };
    system(p.e, p.a, d, 1.0, 4)
}

/// Random smoothing-type system: `N B_a = 0` and `B_a2` strictly lower
/// triangular in the decomposed coordinates, `n <= max_n`, index `<= 2`.
pub fn smoothing_system(rng: &mut ChaCha8Rng, max_n: usize, horizon: usize, tau: f64) -> DdaeSystem<f64> {
    let n = rng.gen_range(2..=max_n);
    let n_d = rng.gen_range(1..n);
    let sizes = random_block_sizes(rng, n - n_d, 2);
    let mut p = known_pencil(rng, n_d, sizes);
    // Keep the slow dynamics mild so that five delay intervals stay well scaled.
    p.j *= 0.8;
    p.a = &p.s0 * block_diag(&p.j, &DMatrix::identity(p.n_a, p.n_a)) * &p.t0;
    let mut blocks = uniform(rng, n, n) * 0.8;
    let keep = block_last_rows(&p.sizes);
    for r in 0..p.n_a {
        if !keep.contains(&r) {
            blocks.row_mut(n_d + r).fill(0.0);
        }
        for c in r..p.n_a {
            blocks[(n_d + r, n_d + c)] = 0.0;
        }
    }
    let d = p.delay_from_blocks(&blocks);
    let f = PiecewisePolynomial::from_piece(
        0.0,
        horizon as f64 * tau,
        vec![uniform_vec(rng, n), uniform_vec(rng, n) * 0.5, uniform_vec(rng, n) * 0.1],
    )
    .unwrap();
    let phi = PiecewisePolynomial::zero(-tau, 0.0, n).unwrap();
    DdaeSystem::new(p.e, p.a, d, tau, horizon, f, phi).unwrap()
}

/// Replaces the history by an admissible, seeded polynomial one that is
/// smooth across `t = 0` up to order `smooth`.
pub fn with_admissible_history(sys: &DdaeSystem<f64>, smooth: usize, seed: u64) -> DdaeSystem<f64> {
    let split = build_split(sys, &RankPolicy::default()).unwrap();
    let m = smooth + 1;
    let target = ProbeTarget::Slow(DVector::zeros(split.n_d()));
    let target = if split.n_d() == 0 { ProbeTarget::Fast(DVector::zeros(split.n_a())) } else { target };
    let phi = construct_probe_history(&split, m, &target, FreeValues::Seeded(seed)).unwrap();
    sys.with_history(phi).unwrap()
}

/// System with `N B_a2 = 0`, `N B_a != 0`, `N^2 B_a = 0`, index 2 and
/// `N^2 B_a1 B_d2 = 0`, hidden behind random transformations.
pub fn weakly_de_smoothing_system(rng: &mut ChaCha8Rng, horizon: usize) -> DdaeSystem<f64> {
    let mut p = known_pencil(rng, 1, vec![2]);
    p.j = dmatrix![-0.5];
    p.a = &p.s0 * block_diag(&p.j, &DMatrix::identity(2, 2)) * &p.t0;
    // Fast rows [B_a1 | B_a2]: the first fast row is hit by N, so B_a2 has
    // a zero first row while B_a1 does not.
    let blocks = dmatrix![
        0.3, 0.2, 0.1;
        1.0, 0.0, 0.0;
        0.4, 0.5, 0.2
    ];
    let d = p.delay_from_blocks(&blocks);
    let f = PiecewisePolynomial::from_piece(0.0, horizon as f64, vec![dvector![0.2, -0.1, 0.3], dvector![0.1, 0.0, 0.0]])
        .unwrap();
    let phi = PiecewisePolynomial::zero(-1.0, 0.0, 3).unwrap();
    DdaeSystem::new(p.e, p.a, d, 1.0, horizon, f, phi).unwrap()
}

pub fn split(sys: &DdaeSystem<f64>) -> SplitCoefficients<f64> {
    build_split(sys, &RankPolicy::default()).unwrap()
}

pub fn scalar_poly(start: f64, end: f64, c: &[f64]) -> PiecewisePolynomial<f64> {
    PiecewisePolynomial::from_piece(start, end, c.iter().map(|&x| dvector![x]).collect()).unwrap()
}

/// `0 = x + x(t - 1) + 1`, `x = t` on `[-1, 0]`.
pub fn neutral_scalar(horizon: usize) -> DdaeSystem<f64> {
    DdaeSystem::new(
        dmatrix![0.0],
        dmatrix![1.0],
        dmatrix![1.0],
        1.0,
        horizon,
        scalar_poly(0.0, horizon as f64, &[1.0]),
        scalar_poly(-1.0, 0.0, &[-1.0, 1.0]),
    )
    .unwrap()
}

/// `x1' = x2`, `0 = x1 - x2(t - 1)` with a cubic history.
pub fn advanced_pair(horizon: usize) -> DdaeSystem<f64> {
    // (t-1)^3/3 + (t-1)^2 - 1 and t^3/3 + t^2 - 1 in powers of (t + 1)
    let phi = PiecewisePolynomial::from_piece(
        -1.0,
        0.0,
        vec![
            dvector![1.0 / 3.0, -1.0 / 3.0],
            dvector![0.0, -1.0],
            dvector![-1.0, 0.0],
            dvector![1.0 / 3.0, 1.0 / 3.0],
        ],
    )
    .unwrap();
    DdaeSystem::new(
        dmatrix![1.0, 0.0; 0.0, 0.0],
        dmatrix![0.0, 1.0; 1.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, -1.0],
        1.0,
        horizon,
        PiecewisePolynomial::zero(0.0, horizon as f64, 2).unwrap(),
        phi,
    )
    .unwrap()
}

/// `x1' = x2(t - 1)`, `0 = x2 - x1(t - 1)`, history `(t, -1)`.
pub fn slow_smoothing_pair(horizon: usize) -> DdaeSystem<f64> {
    DdaeSystem::new(
        dmatrix![1.0, 0.0; 0.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, 1.0],
        dmatrix![0.0, 1.0; -1.0, 0.0],
        1.0,
        horizon,
        PiecewisePolynomial::zero(0.0, horizon as f64, 2).unwrap(),
        PiecewisePolynomial::from_piece(-1.0, 0.0, vec![dvector![-1.0, -1.0], dvector![1.0, 0.0]]).unwrap(),
    )
    .unwrap()
}

/// `E = [[0, 1], [0, 0]]`, `A = I`, `D = [[1, 1], [0, 1]]`.
pub fn backward_example() -> DdaeSystem<f64> {
    system(dmatrix![0.0, 1.0; 0.0, 0.0], DMatrix::identity(2, 2), dmatrix![1.0, 1.0; 0.0, 1.0], 1.0, 4)
}
