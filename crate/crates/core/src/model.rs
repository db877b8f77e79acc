//! The DDAE problem container and the coefficient matrices derived from the
//! quasi-Weierstrass form.
//!
//! With `S E T = diag(I, N)` and `S A T = diag(J, I)` the state splits as
//! `x = T [v; w]` into a slow part `v` (an ODE) and a fast part `w` (an
//! algebraic relation). The derived matrices are
//!
//! ```text
//! A_diff = T diag(J, 0) T^-1        A_con = T diag(I, 0) T^-1
//! C_0    = T diag(I, 0) S           C_k   = -T diag(0, N^(k-1)) S,  k = 1..nu
//! B_k    = C_k D
//! [B_d; B_a] = S D                  [[B_d1, B_d2], [B_a1, B_a2]] = S D T
//! [g; h] = S f                      [psi; eta] = T^-1 phi
//! ```

use nalgebra::DMatrix;

use crate::linalg::{block, block_diag, mat_pow};
use crate::pencil::{check_regularity, compute_qwf, nilpotency_index, MatrixPencil, QuasiWeierstrassForm, RankPolicy};
use crate::poly::PiecewisePolynomial;
use crate::{DdaeError, Field, Result};

/// `E x'(t) = A x(t) + D x(t - tau) + f(t)` on `[0, M tau]` with history
/// `x = phi` on `[-tau, 0]`.
#[derive(Clone, Debug)]
pub struct DdaeSystem<T: Field> {
    pencil: MatrixPencil<T>,
    d: DMatrix<T>,
    tau: f64,
    horizon: usize,
    f: PiecewisePolynomial<T>,
    phi: PiecewisePolynomial<T>,
}

fn domain_matches(p: (f64, f64), a: f64, b: f64) -> bool {
    let eps = 1e-12 * (1.0 + a.abs() + b.abs());
    (p.0 - a).abs() <= eps && (p.1 - b).abs() <= eps
}

impl<T: Field> DdaeSystem<T> {
    /// Builds the problem and checks that `(E, A)` is regular under the
    /// default rank policy.
    pub fn new(
        e: DMatrix<T>,
        a: DMatrix<T>,
        d: DMatrix<T>,
        tau: f64,
        horizon: usize,
        f: PiecewisePolynomial<T>,
        phi: PiecewisePolynomial<T>,
    ) -> Result<Self> {
        Self::with_policy(e, a, d, tau, horizon, f, phi, &RankPolicy::default())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn with_policy(
        e: DMatrix<T>,
        a: DMatrix<T>,
        d: DMatrix<T>,
        tau: f64,
        horizon: usize,
        f: PiecewisePolynomial<T>,
        phi: PiecewisePolynomial<T>,
        policy: &RankPolicy,
    ) -> Result<Self> {
        let sys = Self::unchecked(e, a, d, tau, horizon, f, phi)?;
        if !check_regularity(&sys.pencil, policy).is_regular() {
            return Err(DdaeError::SingularPencil);
        }
        Ok(sys)
    }

    /// Validates shapes and domains but not regularity of the pencil.
    pub(crate) fn unchecked(
        e: DMatrix<T>,
        a: DMatrix<T>,
        d: DMatrix<T>,
        tau: f64,
        horizon: usize,
        f: PiecewisePolynomial<T>,
        phi: PiecewisePolynomial<T>,
    ) -> Result<Self> {
        let pencil = MatrixPencil::new(e, a)?;
        let n = pencil.dim();
        if d.shape() != (n, n) {
            return Err(DdaeError::DimensionMismatch(format!(
                "D is {}x{}, expected {n}x{n}",
                d.nrows(),
                d.ncols()
            )));
        }
        if !(tau.is_finite() && tau > 0.0) {
            return Err(DdaeError::InvalidArgument(format!("delay must be positive, got {tau}")));
        }
        if horizon == 0 {
            return Err(DdaeError::InvalidArgument("horizon must be at least one delay interval".into()));
        }
        if f.dim() != n || phi.dim() != n {
            return Err(DdaeError::DimensionMismatch(format!(
                "data functions have dimensions {} (f) and {} (phi), expected {n}",
                f.dim(),
                phi.dim()
            )));
        }
        let t_end = horizon as f64 * tau;
        if !domain_matches(phi.domain(), -tau, 0.0) {
            return Err(DdaeError::InvalidPiecewise(format!(
                "history must be defined on [-{tau}, 0], got [{}, {}]",
                phi.start(),
                phi.end()
            )));
        }
        if !domain_matches(f.domain(), 0.0, t_end) {
            return Err(DdaeError::InvalidPiecewise(format!(
                "inhomogeneity must be defined on [0, {t_end}], got [{}, {}]",
                f.start(),
                f.end()
            )));
        }
        Ok(Self { pencil, d, tau, horizon, f, phi })
    }

    pub fn pencil(&self) -> &MatrixPencil<T> {
        &self.pencil
    }

    pub fn e(&self) -> &DMatrix<T> {
        self.pencil.e()
    }

    pub fn a(&self) -> &DMatrix<T> {
        self.pencil.a()
    }

    pub fn d(&self) -> &DMatrix<T> {
        &self.d
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dim(&self) -> usize {
        self.pencil.dim()
    }

    pub fn f(&self) -> &PiecewisePolynomial<T> {
        &self.f
    }

    pub fn phi(&self) -> &PiecewisePolynomial<T> {
        &self.phi
    }

    /// Same system with a different history function.
    pub fn with_history(&self, phi: PiecewisePolynomial<T>) -> Result<Self> {
        Self::unchecked(
            self.e().clone(),
            self.a().clone(),
            self.d.clone(),
            self.tau,
            self.horizon,
            self.f.clone(),
            phi,
        )
    }

    /// Same system on a different number of delay intervals. The
    /// inhomogeneity is restricted or extended by zero.
    pub fn with_horizon(&self, horizon: usize) -> Result<Self> {
        let t_end = horizon as f64 * self.tau;
        let f = if t_end <= self.f.end() {
            self.f.restrict(0.0, t_end)?
        } else {
            self.f.concat(&PiecewisePolynomial::zero(self.f.end(), t_end, self.dim())?)?
        };
        Self::unchecked(self.e().clone(), self.a().clone(), self.d.clone(), self.tau, horizon, f, self.phi.clone())
    }
}

#[derive(Clone, Debug)]
pub struct SplitCoefficients<T: Field> {
    pub qwf: QuasiWeierstrassForm<T>,
    pub a_diff: DMatrix<T>,
    pub a_con: DMatrix<T>,
    /// `C_0 ..= C_nu`
    pub c: Vec<DMatrix<T>>,
    /// `B_0 ..= B_nu`
    pub b: Vec<DMatrix<T>>,
    pub b_d: DMatrix<T>,
    pub b_a: DMatrix<T>,
    pub b_d1: DMatrix<T>,
    pub b_d2: DMatrix<T>,
    pub b_a1: DMatrix<T>,
    pub b_a2: DMatrix<T>,
    pub g: PiecewisePolynomial<T>,
    pub h: PiecewisePolynomial<T>,
    pub psi: PiecewisePolynomial<T>,
    pub eta: PiecewisePolynomial<T>,
    /// The delay matrix `D` the split was built from.
    pub d: DMatrix<T>,
    pub tau: f64,
}

impl<T: Field> SplitCoefficients<T> {
    pub fn n(&self) -> usize {
        self.qwf.dim()
    }

    pub fn n_d(&self) -> usize {
        self.qwf.n_d
    }

    pub fn n_a(&self) -> usize {
        self.qwf.n_a
    }

    pub fn nu(&self) -> usize {
        self.qwf.nu
    }

    /// `N^k`
    pub fn n_pow(&self, k: usize) -> DMatrix<T> {
        mat_pow(&self.qwf.n, k)
    }

    /// Slow (`v`) and fast (`w`) parts of `T^-1 x`.
    pub fn to_slow_fast(&self, x: &nalgebra::DVector<T>) -> (nalgebra::DVector<T>, nalgebra::DVector<T>) {
        let y = &self.qwf.t_inv * x;
        (y.rows(0, self.n_d()).into_owned(), y.rows(self.n_d(), self.n_a()).into_owned())
    }

    /// Slow (`q_d`) and fast (`q_f`) parts of `S q`.
    pub fn split_input(&self, q: &nalgebra::DVector<T>) -> (nalgebra::DVector<T>, nalgebra::DVector<T>) {
        let y = &self.qwf.s * q;
        (y.rows(0, self.n_d()).into_owned(), y.rows(self.n_d(), self.n_a()).into_owned())
    }

    /// `T [v; w]`
    pub fn from_slow_fast(&self, v: &nalgebra::DVector<T>, w: &nalgebra::DVector<T>) -> nalgebra::DVector<T> {
        let mut y = nalgebra::DVector::zeros(self.n());
        y.rows_mut(0, self.n_d()).copy_from(v);
        y.rows_mut(self.n_d(), self.n_a()).copy_from(w);
        &self.qwf.t * y
    }
}

pub fn build_split<T: Field>(sys: &DdaeSystem<T>, policy: &RankPolicy) -> Result<SplitCoefficients<T>> {
    let qwf = compute_qwf(sys.pencil(), policy)?;
    let n = qwf.dim();
    let (n_d, n_a, nu) = (qwf.n_d, qwf.n_a, qwf.nu);
    let t = &qwf.t;
    let t_inv = &qwf.t_inv;
    let s = &qwf.s;

    let a_diff = t * block_diag(&qwf.j, &DMatrix::zeros(n_a, n_a)) * t_inv;
    let proj = block_diag(&DMatrix::identity(n_d, n_d), &DMatrix::zeros(n_a, n_a));
    let a_con = t * &proj * t_inv;
    let mut c = vec![t * &proj * s];
    for k in 1..=nu {
        let blk = block_diag(&DMatrix::zeros(n_d, n_d), &mat_pow(&qwf.n, k - 1));
        c.push(-(t * blk * s));
    }
    let b: Vec<DMatrix<T>> = c.iter().map(|ck| ck * sys.d()).collect();

    let sd = s * sys.d();
    let sdt = &sd * t;
    let b_d = block(&sd, 0..n_d, 0..n);
    let b_a = block(&sd, n_d..n, 0..n);
    let b_d1 = block(&sdt, 0..n_d, 0..n_d);
    let b_d2 = block(&sdt, 0..n_d, n_d..n);
    let b_a1 = block(&sdt, n_d..n, 0..n_d);
    let b_a2 = block(&sdt, n_d..n, n_d..n);

    let sf = sys.f().map_matrix(s)?;
    let g = sf.rows(0..n_d);
    let h = sf.rows(n_d..n);
    let tphi = sys.phi().map_matrix(t_inv)?;
    let psi = tphi.rows(0..n_d);
    let eta = tphi.rows(n_d..n);

    Ok(SplitCoefficients {
        qwf,
        a_diff,
        a_con,
        c,
        b,
        b_d,
        b_a,
        b_d1,
        b_d2,
        b_a1,
        b_a2,
        g,
        h,
        psi,
        eta,
        d: sys.d().clone(),
        tau: sys.tau(),
    })
}

/// `x' = A_diff x + forcing(t)` with `forcing = sum_{k=0}^{nu} C_k q^(k)`.
#[derive(Clone, Debug)]
pub struct UnderlyingOde<T: Field> {
    pub a_diff: DMatrix<T>,
    pub forcing: PiecewisePolynomial<T>,
}

pub fn underlying_ode_rhs<T: Field>(
    split: &SplitCoefficients<T>,
    q: &PiecewisePolynomial<T>,
) -> Result<UnderlyingOde<T>> {
    let mut forcing = q.map_matrix(&split.c[0])?;
    for (k, ck) in split.c.iter().enumerate().skip(1) {
        forcing = forcing.add(&q.derivative(k).map_matrix(ck)?)?;
    }
    Ok(UnderlyingOde { a_diff: split.a_diff.clone(), forcing })
}

/// `(B_0..=B_nu, C_0..=C_nu)` of the underlying DDE
/// `x' = A_diff x + sum_k (B_k x^(k)(t - tau) + C_k f^(k)(t))`.
pub fn underlying_dde_coeffs<T: Field>(split: &SplitCoefficients<T>) -> (Vec<DMatrix<T>>, Vec<DMatrix<T>>) {
    (split.b.clone(), split.c.clone())
}

/// Solution `w = -sum_{k=0}^{nu-1} N^k q_f^(k)` of `N w' = w + q_f`.
pub fn solve_fast_subsystem<T: Field>(
    n: &DMatrix<T>,
    q_f: &PiecewisePolynomial<T>,
    policy: &RankPolicy,
) -> Result<PiecewisePolynomial<T>> {
    if n.nrows() != q_f.dim() || !n.is_square() {
        return Err(DdaeError::DimensionMismatch(format!(
            "N is {}x{}, q_f has dimension {}",
            n.nrows(),
            n.ncols(),
            q_f.dim()
        )));
    }
    let nu = nilpotency_index(n, policy).index.ok_or_else(|| {
        DdaeError::InvalidArgument("fast subsystem requires a nilpotent N".into())
    })?;
    let mut w = q_f.scale(-T::one());
    let mut nk = DMatrix::identity(n.nrows(), n.ncols());
    for k in 1..nu {
        nk = &nk * n;
        w = w.add(&q_f.derivative(k).map_matrix(&(-&nk))?)?;
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Side;
    use nalgebra::{dmatrix, dvector, DVector};

    fn scalar_poly(start: f64, end: f64, c: &[f64]) -> PiecewisePolynomial<f64> {
        PiecewisePolynomial::from_piece(start, end, c.iter().map(|&x| dvector![x]).collect()).unwrap()
    }

    pub(crate) fn example_1_1(m: usize) -> DdaeSystem<f64> {
        DdaeSystem::new(
            dmatrix![0.0],
            dmatrix![1.0],
            dmatrix![1.0],
            1.0,
            m,
            scalar_poly(0.0, m as f64, &[1.0]),
            scalar_poly(-1.0, 0.0, &[-1.0, 1.0]),
        )
        .unwrap()
    }

    fn example_3_3() -> DdaeSystem<f64> {
        DdaeSystem::new(
            dmatrix![1.0, 0.0; 0.0, 0.0],
            dmatrix![0.0, 0.0; 0.0, 1.0],
            dmatrix![0.0, 1.0; -1.0, 0.0],
            1.0,
            4,
            PiecewisePolynomial::zero(0.0, 4.0, 2).unwrap(),
            PiecewisePolynomial::from_piece(-1.0, 0.0, vec![dvector![-1.0, -1.0], dvector![1.0, 0.0]]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn rejects_bad_domains_and_shapes() {
        let bad_phi = DdaeSystem::new(
            dmatrix![0.0],
            dmatrix![1.0],
            dmatrix![1.0],
            1.0,
            2,
            scalar_poly(0.0, 2.0, &[1.0]),
            scalar_poly(-0.5, 0.0, &[0.0]),
        );
        assert!(matches!(bad_phi, Err(DdaeError::InvalidPiecewise(_))));
        let bad_d = DdaeSystem::new(
            dmatrix![0.0],
            dmatrix![1.0],
            dmatrix![1.0, 0.0],
            1.0,
            2,
            scalar_poly(0.0, 2.0, &[1.0]),
            scalar_poly(-1.0, 0.0, &[0.0]),
        );
        assert!(matches!(bad_d, Err(DdaeError::DimensionMismatch(_))));
        let singular = DdaeSystem::new(
            dmatrix![0.0, 1.0; 0.0, 0.0],
            dmatrix![0.0, 1.0; 0.0, 0.0],
            DMatrix::zeros(2, 2),
            1.0,
            1,
            PiecewisePolynomial::zero(0.0, 1.0, 2).unwrap(),
            PiecewisePolynomial::zero(-1.0, 0.0, 2).unwrap(),
        );
        assert!(matches!(singular, Err(DdaeError::SingularPencil)));
    }

    #[test]
    fn split_of_neutral_scalar_example() {
        let sys = example_1_1(4);
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        assert_eq!((split.n_d(), split.n_a(), split.nu()), (0, 1, 1));
        assert!((split.b_a[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((split.b_a2[(0, 0)] - 1.0).abs() < 1e-14);
        assert!(split.c[0].norm() < 1e-15);
        assert!((split.c[1][(0, 0)] + 1.0).abs() < 1e-14);
        assert!(split.a_con.norm() < 1e-15);
    }

    #[test]
    fn split_of_slow_smoothing_example() {
        let sys = example_3_3();
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        assert_eq!((split.n_d(), split.n_a(), split.nu()), (1, 1, 1));
        // T is diagonal with entries +-1, so the blocks agree up to sign and
        // the products that matter are sign-free.
        assert!(split.b_d1[(0, 0)].abs() < 1e-14);
        assert!(split.b_a2[(0, 0)].abs() < 1e-14);
        assert!((split.b_d2[(0, 0)] * split.b_a1[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn ode_case_has_identity_c0() {
        let sys = DdaeSystem::new(
            DMatrix::identity(2, 2),
            dmatrix![-1.0, 0.5; 0.0, -2.0],
            dmatrix![0.3, 0.0; 0.1, 0.2],
            0.5,
            2,
            PiecewisePolynomial::zero(0.0, 1.0, 2).unwrap(),
            PiecewisePolynomial::zero(-0.5, 0.0, 2).unwrap(),
        )
        .unwrap();
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        assert_eq!(split.c.len(), 1);
        assert!((&split.c[0] - DMatrix::identity(2, 2)).norm() < 1e-12);
        assert!((&split.b[0] - sys.d()).norm() < 1e-12);
        assert_eq!(split.b_a.nrows(), 0);
    }

    #[test]
    fn projector_properties() {
        let sys = example_3_3();
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        assert!((&split.a_con * &split.a_con - &split.a_con).norm() < 1e-12);
        assert!((&split.a_diff * &split.a_con - &split.a_diff).norm() < 1e-12);
        assert!((&split.a_con * &split.a_diff - &split.a_diff).norm() < 1e-12);
        let t_phi = split.psi.vstack(&split.eta).unwrap().map_matrix(&split.qwf.t).unwrap();
        for &t in &[-1.0, -0.4, 0.0] {
            let a = t_phi.evaluate(t, 0, Side::Right).unwrap();
            let b = sys.phi().evaluate(t, 0, Side::Right).unwrap();
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn underlying_ode_forcing_of_neutral_example() {
        let sys = example_1_1(1);
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        // q(t) = phi(t - 1) + 1 = t on [0, 1]
        let q = scalar_poly(0.0, 1.0, &[0.0, 1.0]);
        let ode = underlying_ode_rhs(&split, &q).unwrap();
        assert!(ode.a_diff.norm() < 1e-15);
        let v = ode.forcing.evaluate(0.3, 0, Side::Right).unwrap()[0];
        assert!((v + 1.0).abs() < 1e-14);
    }

    #[test]
    fn fast_subsystem_identity() {
        let n = dmatrix![0.0, 0.0; 1.0, 0.0];
        let q = PiecewisePolynomial::from_piece(
            0.0,
            1.0,
            vec![dvector![1.0, 2.0], dvector![-1.0, 0.5], dvector![0.0, 3.0]],
        )
        .unwrap();
        let w = solve_fast_subsystem(&n, &q, &RankPolicy::default()).unwrap();
        for &t in &[0.0, 0.25, 1.0] {
            let wd = w.evaluate(t, 1, Side::Right).unwrap();
            let wv = w.evaluate(t, 0, Side::Right).unwrap();
            let qv = q.evaluate(t, 0, Side::Right).unwrap();
            let r: DVector<f64> = &n * wd - wv - qv;
            assert!(r.norm() < 1e-14);
        }
    }
}
