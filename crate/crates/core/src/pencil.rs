//! Regularity, Wong sequences and the quasi-Weierstrass form of a matrix
//! pencil `(E, A)`.
//!
//! The decomposition is computed from the limits `V*` and `W*` of the Wong
//! sequences
//!
//! ```text
//! V_0 = F^n,  V_{i+1} = A^{-1}(E V_i)
//! W_0 = {0},  W_{i+1} = E^{-1}(A W_i)
//! ```
//!
//! With orthonormal bases as columns, `T = [V* W*]` and
//! `S = [E V*  A W*]^{-1}` bring the pencil to
//! `S E T = diag(I, N)`, `S A T = diag(J, I)` with `N` nilpotent. Only real
//! arithmetic is needed for real pencils.

use nalgebra::DMatrix;

use crate::linalg::{block, block_diag, column_space, hstack, null_space, singular_values};
use crate::{DdaeError, Field, Result};

/// Numerical rank decisions: a singular value `sigma` counts as nonzero iff
/// `sigma > max(abs_floor, rel_tol * sigma_max)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RankPolicy {
    pub rel_tol: f64,
    pub abs_floor: f64,
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_floor: 1e-14 }
    }
}

impl RankPolicy {
    pub fn new(rel_tol: f64, abs_floor: f64) -> Result<Self> {
        if !(rel_tol >= 0.0 && abs_floor >= 0.0) {
            return Err(DdaeError::InvalidArgument(
                "rank tolerances must be nonnegative".into(),
            ));
        }
        Ok(Self { rel_tol, abs_floor })
    }

    pub fn threshold(&self, sigma_max: f64) -> f64 {
        self.abs_floor.max(self.rel_tol * sigma_max)
    }

    /// A singular value within a factor 10 of the threshold.
    pub fn is_ambiguous(&self, sigma: f64, threshold: f64) -> bool {
        sigma > threshold / 10.0 && sigma <= threshold * 10.0
    }

    /// Numerical zero test for a derived quantity whose magnitude would be
    /// about `scale` if it were not zero.
    pub fn is_negligible(&self, norm: f64, scale: f64) -> bool {
        norm <= self.abs_floor.max(self.rel_tol * (1.0 + scale))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatrixPencil<T: Field> {
    e: DMatrix<T>,
    a: DMatrix<T>,
}

impl<T: Field> MatrixPencil<T> {
    pub fn new(e: DMatrix<T>, a: DMatrix<T>) -> Result<Self> {
        if !e.is_square() || !a.is_square() || e.shape() != a.shape() {
            return Err(DdaeError::DimensionMismatch(format!(
                "E is {}x{}, A is {}x{}; both must be square of equal size",
                e.nrows(),
                e.ncols(),
                a.nrows(),
                a.ncols()
            )));
        }
        if e.nrows() == 0 {
            return Err(DdaeError::DimensionMismatch("pencil dimension must be positive".into()));
        }
        Ok(Self { e, a })
    }

    pub fn e(&self) -> &DMatrix<T> {
        &self.e
    }

    pub fn a(&self) -> &DMatrix<T> {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.e.nrows()
    }

    /// Sample points `lambda_j = j * s`, `j = 0..=n`, with
    /// `s = (1 + |A|) / (1 + |E|)`.
    pub fn sample_points(&self) -> Vec<f64> {
        let s = (1.0 + self.a.norm()) / (1.0 + self.e.norm());
        (0..=self.dim()).map(|j| j as f64 * s).collect()
    }

    pub fn eval(&self, lambda: T) -> DMatrix<T> {
        &self.e * lambda - &self.a
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegularityVerdict {
    /// `det(witness * E - A)` is numerically nonzero.
    Regular { witness: f64, det_magnitude: f64 },
    Singular { max_det_magnitude: f64 },
}

impl RegularityVerdict {
    pub fn is_regular(&self) -> bool {
        matches!(self, RegularityVerdict::Regular { .. })
    }
}

/// Evaluates `lambda E - A` at `n + 1` deterministic points and declares the
/// pencil regular at the first point where the matrix has full numerical
/// rank. `det(lambda E - A)` has degree at most `n`, so a regular pencil
/// cannot vanish at all `n + 1` points.
pub fn check_regularity<T: Field>(p: &MatrixPencil<T>, policy: &RankPolicy) -> RegularityVerdict {
    let mut max_det: f64 = 0.0;
    for lambda in p.sample_points() {
        let sigma = singular_values(&p.eval(T::from_real(lambda)));
        let smax = sigma.iter().copied().fold(0.0, f64::max);
        let smin = sigma.iter().copied().fold(f64::INFINITY, f64::min);
        let det: f64 = sigma.iter().product();
        max_det = max_det.max(det);
        if smin > policy.threshold(smax) {
            return RegularityVerdict::Regular { witness: lambda, det_magnitude: det };
        }
    }
    RegularityVerdict::Singular { max_det_magnitude: max_det }
}

#[derive(Clone, Debug)]
pub struct WongLimits<T: Field> {
    /// Orthonormal basis of `V*` (n x n_d).
    pub v_star: DMatrix<T>,
    /// Orthonormal basis of `W*` (n x n_a).
    pub w_star: DMatrix<T>,
    /// Some singular value landed within a factor 10 of a rank threshold.
    pub rank_ambiguous: bool,
}

/// Limits of the Wong sequences of a regular pencil.
pub fn wong_sequences<T: Field>(p: &MatrixPencil<T>, policy: &RankPolicy) -> Result<WongLimits<T>> {
    if !check_regularity(p, policy).is_regular() {
        return Err(DdaeError::SingularPencil);
    }
    let n = p.dim();
    let e = p.e();
    let a = p.a();
    let e_scale = crate::linalg::spectral_norm(e);
    let a_scale = crate::linalg::spectral_norm(a);
    let mut ambiguous = false;

    // V_{i+1} = {x : A x in im(E V_i)}
    let mut v = DMatrix::<T>::identity(n, n);
    for _ in 0..=n {
        let img = column_space(&(e * &v), policy, e_scale);
        ambiguous |= img.ambiguous;
        let proj = DMatrix::identity(n, n) - &img.basis * img.basis.adjoint();
        let next = null_space(&(proj * a), policy, a_scale);
        ambiguous |= next.ambiguous;
        let done = next.basis.ncols() == v.ncols();
        v = next.basis;
        if done {
            break;
        }
    }

    // W_{i+1} = {x : E x in im(A W_i)}
    let mut w = DMatrix::<T>::zeros(n, 0);
    for _ in 0..=n {
        let img = column_space(&(a * &w), policy, a_scale);
        ambiguous |= img.ambiguous;
        let proj = DMatrix::identity(n, n) - &img.basis * img.basis.adjoint();
        let next = null_space(&(proj * e), policy, e_scale);
        ambiguous |= next.ambiguous;
        let done = next.basis.ncols() == w.ncols();
        w = next.basis;
        if done {
            break;
        }
    }

    Ok(WongLimits { v_star: v, w_star: w, rank_ambiguous: ambiguous })
}

#[derive(Clone, Debug)]
pub struct QuasiWeierstrassForm<T: Field> {
    pub s: DMatrix<T>,
    pub t: DMatrix<T>,
    pub t_inv: DMatrix<T>,
    pub j: DMatrix<T>,
    pub n: DMatrix<T>,
    pub n_d: usize,
    pub n_a: usize,
    /// Index of nilpotency of `N`; zero when `n_a == 0`.
    pub nu: usize,
    pub rank_ambiguous: bool,
    /// Largest of `|S E T - diag(I, N)|` and `|S A T - diag(J, I)|`.
    pub reconstruction_residual: f64,
}

impl<T: Field> QuasiWeierstrassForm<T> {
    pub fn dim(&self) -> usize {
        self.n_d + self.n_a
    }

    /// `diag(I_{n_d}, N)`
    pub fn e_form(&self) -> DMatrix<T> {
        block_diag(&DMatrix::identity(self.n_d, self.n_d), &self.n)
    }

    /// `diag(J, I_{n_a})`
    pub fn a_form(&self) -> DMatrix<T> {
        block_diag(&self.j, &DMatrix::identity(self.n_a, self.n_a))
    }
}

pub fn reconstruction_tolerance<T: Field>(p: &MatrixPencil<T>) -> f64 {
    1e-8 * (1.0 + p.e().norm() + p.a().norm())
}

pub fn compute_qwf<T: Field>(
    p: &MatrixPencil<T>,
    policy: &RankPolicy,
) -> Result<QuasiWeierstrassForm<T>> {
    let wong = wong_sequences(p, policy)?;
    let n = p.dim();
    let n_d = wong.v_star.ncols();
    let n_a = wong.w_star.ncols();
    let ambiguous = wong.rank_ambiguous;
    if n_d + n_a != n {
        return Err(DdaeError::DecompositionFailure {
            reason: format!("dim V* + dim W* = {} + {} != {}", n_d, n_a, n),
            rank_ambiguous: ambiguous,
        });
    }

    let t = hstack(&wong.v_star, &wong.w_star);
    let k = hstack(&(p.e() * &wong.v_star), &(p.a() * &wong.w_star));
    let sigma = singular_values(&k);
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let smin = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if smin <= policy.threshold(smax) {
        return Err(DdaeError::DecompositionFailure {
            reason: "[E V*, A W*] is numerically singular; tighten the rank policy".into(),
            rank_ambiguous: ambiguous,
        });
    }
    let s = k.try_inverse().ok_or_else(|| DdaeError::DecompositionFailure {
        reason: "[E V*, A W*] could not be inverted".into(),
        rank_ambiguous: ambiguous,
    })?;
    let t_inv = t.clone().try_inverse().ok_or_else(|| DdaeError::DecompositionFailure {
        reason: "T = [V*, W*] could not be inverted".into(),
        rank_ambiguous: ambiguous,
    })?;

    let set = &s * p.e() * &t;
    let sat = &s * p.a() * &t;
    let j = block(&sat, 0..n_d, 0..n_d);
    let nil = block(&set, n_d..n, n_d..n);
    let e_res = (&set - block_diag(&DMatrix::identity(n_d, n_d), &nil)).norm();
    let a_res = (&sat - block_diag(&j, &DMatrix::identity(n_a, n_a))).norm();
    let residual = e_res.max(a_res);
    if residual > reconstruction_tolerance(p) {
        return Err(DdaeError::DecompositionFailure {
            reason: format!("reconstruction residual {residual:.3e} exceeds tolerance"),
            rank_ambiguous: ambiguous,
        });
    }

    let nu = if n_a == 0 {
        0
    } else {
        match nilpotency_index(&nil, policy).index {
            Some(k) => k,
            None => {
                return Err(DdaeError::DecompositionFailure {
                    reason: "algebraic block N is not nilpotent".into(),
                    rank_ambiguous: ambiguous,
                })
            }
        }
    };

    Ok(QuasiWeierstrassForm {
        s,
        t,
        t_inv,
        j,
        n: nil,
        n_d,
        n_a,
        nu,
        rank_ambiguous: ambiguous,
        reconstruction_residual: residual,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NilpotencyIndex {
    pub nilpotent: bool,
    pub index: Option<usize>,
}

/// Smallest `k <= m` with `|M^k| <= rel_tol * (1 + |M|^k)`; the empty matrix
/// has index 0.
pub fn nilpotency_index<T: Field>(m: &DMatrix<T>, policy: &RankPolicy) -> NilpotencyIndex {
    let dim = m.nrows();
    if dim == 0 {
        return NilpotencyIndex { nilpotent: true, index: Some(0) };
    }
    let norm = m.norm();
    let mut power = DMatrix::identity(dim, dim);
    for k in 1..=dim {
        power = &power * m;
        if power.norm() <= policy.rel_tol * (1.0 + norm.powi(k as i32)) {
            return NilpotencyIndex { nilpotent: true, index: Some(k) };
        }
    }
    NilpotencyIndex { nilpotent: false, index: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use num_complex::Complex64;

    fn pencil(e: DMatrix<f64>, a: DMatrix<f64>) -> MatrixPencil<f64> {
        MatrixPencil::new(e, a).unwrap()
    }

    #[test]
    fn identity_pencil_is_regular_at_s() {
        let p = pencil(DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        let s = (1.0 + 0.0) / (1.0 + 2f64.sqrt());
        match check_regularity(&p, &RankPolicy::default()) {
            RegularityVerdict::Regular { witness, det_magnitude } => {
                assert!((witness - s).abs() < 1e-15);
                assert!((det_magnitude - s * s).abs() < 1e-14);
            }
            v => panic!("expected regular, got {v:?}"),
        }
    }

    #[test]
    fn advanced_example_pencil_has_constant_determinant() {
        let p = pencil(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 1.0; 1.0, 0.0]);
        for lambda in p.sample_points() {
            let det = p.eval(lambda).determinant();
            assert!((det + 1.0).abs() < 1e-14);
        }
        assert!(check_regularity(&p, &RankPolicy::default()).is_regular());
    }

    #[test]
    fn identical_nilpotent_pair_is_singular() {
        let m = dmatrix![0.0, 1.0; 0.0, 0.0];
        let p = pencil(m.clone(), m);
        assert!(!check_regularity(&p, &RankPolicy::default()).is_regular());
        assert_eq!(wong_sequences(&p, &RankPolicy::default()).unwrap_err(), DdaeError::SingularPencil);
    }

    #[test]
    fn shape_errors() {
        assert!(matches!(
            MatrixPencil::new(DMatrix::<f64>::zeros(2, 3), DMatrix::zeros(2, 3)),
            Err(DdaeError::DimensionMismatch(_))
        ));
        assert!(matches!(
            MatrixPencil::new(DMatrix::<f64>::zeros(2, 2), DMatrix::zeros(3, 3)),
            Err(DdaeError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn wong_limits_of_small_examples() {
        let policy = RankPolicy::default();
        let ode = wong_sequences(&pencil(DMatrix::identity(3, 3), dmatrix![1.0, 2.0, 0.0; 0.0, 1.0, 3.0; 4.0, 0.0, 1.0]), &policy).unwrap();
        assert_eq!((ode.v_star.ncols(), ode.w_star.ncols()), (3, 0));

        let adv = wong_sequences(&pencil(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 1.0; 1.0, 0.0]), &policy).unwrap();
        assert_eq!((adv.v_star.ncols(), adv.w_star.ncols()), (0, 2));

        let slow = wong_sequences(&pencil(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 0.0; 0.0, 1.0]), &policy).unwrap();
        assert_eq!((slow.v_star.ncols(), slow.w_star.ncols()), (1, 1));
        assert!((slow.v_star[(0, 0)].abs() - 1.0).abs() < 1e-14 && slow.v_star[(1, 0)].abs() < 1e-14);
        assert!((slow.w_star[(1, 0)].abs() - 1.0).abs() < 1e-14 && slow.w_star[(0, 0)].abs() < 1e-14);
    }

    #[test]
    fn qwf_of_advanced_example() {
        let p = pencil(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 1.0; 1.0, 0.0]);
        let q = compute_qwf(&p, &RankPolicy::default()).unwrap();
        assert_eq!((q.n_d, q.n_a, q.nu), (0, 2, 2));
        assert!(q.n.norm() > 0.5);
        assert!((&q.n * &q.n).norm() < 1e-14);
        assert!((&q.s * p.e() * &q.t - &q.n).norm() < 1e-12);
        assert!((&q.s * p.a() * &q.t - DMatrix::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn qwf_of_scalar_algebraic_equation() {
        let p = pencil(dmatrix![0.0], dmatrix![1.0]);
        let q = compute_qwf(&p, &RankPolicy::default()).unwrap();
        assert_eq!((q.n_d, q.n_a, q.nu), (0, 1, 1));
        assert!(q.n[(0, 0)].abs() < 1e-15);
    }

    #[test]
    fn qwf_of_ode_has_similar_j() {
        let a = dmatrix![-1.0, 2.0; 0.5, -3.0];
        let p = pencil(DMatrix::identity(2, 2), a.clone());
        let q = compute_qwf(&p, &RankPolicy::default()).unwrap();
        assert_eq!((q.n_d, q.n_a, q.nu), (2, 0, 0));
        assert!((q.j.trace() - a.trace()).abs() < 1e-12);
        assert!((q.j.determinant() - a.determinant()).abs() < 1e-12);
    }

    #[test]
    fn complex_pencil_stays_complex() {
        let i = Complex64::new(0.0, 1.0);
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let e = DMatrix::from_row_slice(2, 2, &[one, zero, zero, zero]);
        let a = DMatrix::from_row_slice(2, 2, &[i, zero, zero, one]);
        let p = MatrixPencil::new(e, a).unwrap();
        let q = compute_qwf(&p, &RankPolicy::default()).unwrap();
        assert_eq!((q.n_d, q.n_a, q.nu), (1, 1, 1));
        assert!((q.j[(0, 0)] - i).norm() < 1e-12);
    }

    #[test]
    fn nilpotency_examples() {
        let policy = RankPolicy::default();
        assert_eq!(
            nilpotency_index(&dmatrix![0.0, 1.0; 0.0, 0.0], &policy),
            NilpotencyIndex { nilpotent: true, index: Some(2) }
        );
        assert_eq!(nilpotency_index(&dmatrix![1.0], &policy), NilpotencyIndex { nilpotent: false, index: None });
        assert_eq!(nilpotency_index(&dmatrix![0.0], &policy), NilpotencyIndex { nilpotent: true, index: Some(1) });
        assert_eq!(
            nilpotency_index(&DMatrix::<f64>::zeros(0, 0), &policy),
            NilpotencyIndex { nilpotent: true, index: Some(0) }
        );
    }

    #[test]
    fn regularity_verdict_is_scale_invariant() {
        let policy = RankPolicy::default();
        let cases = [
            (dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 1.0; 1.0, 0.0]),
            (dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0, 1.0; 0.0, 0.0]),
            (dmatrix![1.0, 2.0; 0.0, 0.0], dmatrix![3.0, 0.0; 0.0, 1.0]),
            (dmatrix![1.0, 1.0; 1.0, 1.0], dmatrix![2.0, 2.0; 1.0, 1.0]),
        ];
        for (e, a) in cases {
            let base = check_regularity(&pencil(e.clone(), a.clone()), &policy).is_regular();
            for c in [1e-6, 1.0, 1e6] {
                let scaled = check_regularity(&pencil(&e * c, &a * c), &policy).is_regular();
                assert_eq!(scaled, base, "scale {c}");
            }
        }
    }
}
