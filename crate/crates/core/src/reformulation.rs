//! Hidden-delay expansion of smoothing-type systems and embeddings of
//! neutral and pure-delay equations as DDAEs.
//!
//! For a smoothing-type system `B_a2` is nilpotent with index `nu_D` and
//! `N^k B_a = 0` for `k >= 1`, so the fast part is
//! `w = -B_a1 v(t - tau) - B_a2 w(t - tau) - h~` with
//! `h~ = sum_{k<nu} N^k h^(k)`. Substituting it into itself `nu_D` times
//! removes `w` and leaves, for `t > nu_D tau`,
//!
//! ```text
//! v' = J v + sum_{k=0}^{nu_D} D_k v(t - (k+1) tau) + theta(t)
//! D_0 = B_d1,  D_k = (-1)^k B_d2 B_a2^(k-1) B_a1
//! theta(t) = g(t) + sum_{k=0}^{nu_D - 1} (-1)^(k+1) B_d2 B_a2^k h~(t - (k+1) tau)
//! ```

use nalgebra::DMatrix;

use crate::classification::{classify_propagation, PropagationKind};
use crate::linalg::{block_diag, mat_pow};
use crate::model::{DdaeSystem, SplitCoefficients};
use crate::pencil::RankPolicy;
use crate::poly::PiecewisePolynomial;
use crate::{DdaeError, Field, Result};

#[derive(Clone, Debug)]
pub struct HiddenDelayExpansion<T: Field> {
    pub j: DMatrix<T>,
    /// `D_0 ..= D_{nu_D}`; `D_k` multiplies `v(t - (k+1) tau)`.
    pub d_k: Vec<DMatrix<T>>,
    /// Inhomogeneity on `[nu_D tau, M tau]`.
    pub theta: PiecewisePolynomial<T>,
    pub nu_d: usize,
}

pub fn expand_hidden_delays<T: Field>(
    split: &SplitCoefficients<T>,
    horizon: usize,
    policy: &RankPolicy,
) -> Result<HiddenDelayExpansion<T>> {
    let class = classify_propagation(split, horizon, policy);
    if class.kind != PropagationKind::Smoothing {
        return Err(DdaeError::NotSmoothingType);
    }
    let nu_d = class.nu_d.expect("smoothing systems have a nilpotent B_a2");
    let tau = split.tau;
    let t_end = horizon as f64 * tau;

    let mut d_k = vec![split.b_d1.clone()];
    for k in 1..=nu_d {
        let sign = if k % 2 == 0 { T::one() } else { -T::one() };
        d_k.push((&split.b_d2 * mat_pow(&split.b_a2, k - 1) * &split.b_a1) * sign);
    }

    let mut h_tilde = split.h.clone();
    for k in 1..split.nu() {
        h_tilde = h_tilde.add(&split.h.derivative(k).map_matrix(&split.n_pow(k))?)?;
    }

    let start = nu_d as f64 * tau;
    let mut theta = split.g.restrict(start, t_end)?;
    for k in 0..nu_d {
        let sign = if k % 2 == 0 { -T::one() } else { T::one() };
        let coupling = (&split.b_d2 * mat_pow(&split.b_a2, k)) * sign;
        let delayed = h_tilde.shifted((k + 1) as f64 * tau).restrict(start, t_end)?;
        theta = theta.add(&delayed.map_matrix(&coupling)?)?;
    }

    Ok(HiddenDelayExpansion { j: split.qwf.j.clone(), d_k, theta, nu_d })
}

fn dims_match<T: Field>(mats: &[&DMatrix<T>], n: usize) -> Result<()> {
    for m in mats {
        if m.shape() != (n, n) {
            return Err(DdaeError::DimensionMismatch(format!(
                "expected {n}x{n} matrices, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
    }
    Ok(())
}

/// History `[x(t); x(t - tau)]` on `[-tau, 0]` from `x` on `[-2 tau, 0]`.
fn stacked_history<T: Field>(phi: &PiecewisePolynomial<T>, tau: f64) -> Result<PiecewisePolynomial<T>> {
    let now = phi.restrict(-tau, 0.0)?;
    let before = phi.restrict(-2.0 * tau, -tau)?.shifted(tau);
    // Common refinement so both halves share knots.
    let knots: Vec<f64> = now.breakpoints().into_iter().chain(before.breakpoints()).collect();
    now.refine(&knots).vstack(&before.refine(&knots))
}

fn padded_f<T: Field>(f: &PiecewisePolynomial<T>) -> Result<PiecewisePolynomial<T>> {
    let zero = PiecewisePolynomial::zero(f.start(), f.end(), f.dim())?;
    f.vstack(&zero)
}

/// Neutral equation `x' = A x + D x(t - tau) + B x'(t - tau) + f` with
/// history on `[-2 tau, 0]`, written for `[x; y]`, `y(t) = x(t - tau)`:
///
/// ```text
/// [I -B] [x]'   [A 0] [x]   [ D 0] [x]            [f]
/// [0  0] [y]  = [0 I] [y] + [-I 0] [y](t - tau) + [0]
/// ```
#[allow(clippy::too_many_arguments)]
pub fn embed_neutral_dde<T: Field>(
    a_hat: &DMatrix<T>,
    d_hat: &DMatrix<T>,
    b_hat: &DMatrix<T>,
    tau: f64,
    horizon: usize,
    f: &PiecewisePolynomial<T>,
    phi: &PiecewisePolynomial<T>,
) -> Result<DdaeSystem<T>> {
    let n = a_hat.nrows();
    dims_match(&[a_hat, d_hat, b_hat], n)?;
    let id = DMatrix::<T>::identity(n, n);
    let mut e = block_diag(&id, &DMatrix::zeros(n, n));
    e.view_mut((0, n), (n, n)).copy_from(&(-b_hat));
    let a = block_diag(a_hat, &id);
    let mut d = block_diag(d_hat, &DMatrix::zeros(n, n));
    d.view_mut((n, 0), (n, n)).copy_from(&(-&id));
    DdaeSystem::new(e, a, d, tau, horizon, padded_f(f)?, stacked_history(phi, tau)?)
}

/// Pure delay equation `x = D x(t - tau) + B x'(t - tau) + f` with history
/// on `[-2 tau, 0]`, written for `[x; y]`, `y(t) = x(t - tau)`:
///
/// ```text
/// [0 -B] [x]'   [-I  D] [x]   [0 0] [x]            [f]
/// [0  0] [y]  = [ 0 -I] [y] + [I 0] [y](t - tau) + [0]
/// ```
pub fn embed_pure_delay<T: Field>(
    d_mat: &DMatrix<T>,
    b_mat: &DMatrix<T>,
    tau: f64,
    horizon: usize,
    f: &PiecewisePolynomial<T>,
    phi: &PiecewisePolynomial<T>,
) -> Result<DdaeSystem<T>> {
    let n = d_mat.nrows();
    dims_match(&[d_mat, b_mat], n)?;
    let id = DMatrix::<T>::identity(n, n);
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    e.view_mut((0, n), (n, n)).copy_from(&(-b_mat));
    let mut a = -DMatrix::<T>::identity(2 * n, 2 * n);
    a.view_mut((0, n), (n, n)).copy_from(d_mat);
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    d.view_mut((n, 0), (n, n)).copy_from(&id);
    DdaeSystem::new(e, a, d, tau, horizon, padded_f(f)?, stacked_history(phi, tau)?)
}
