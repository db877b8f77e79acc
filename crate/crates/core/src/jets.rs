//! Derivative jets at the ends of method-of-steps segments.
//!
//! At either end of a segment the derivatives of the solution follow from
//! the derivatives of the input `q = D x_prev + f`:
//!
//! ```text
//! w^(j)   = -sum_{k=0}^{nu-1} N^k q_f^(k+j)
//! v^(j+1) = J v^(j) + q_d^(j)
//! ```
//!
//! so only the value `v` at the end point has to come from integration. Jets
//! are what the jump ledger compares; they avoid differentiating an
//! interpolant several times.

use nalgebra::DVector;

use crate::model::SplitCoefficients;
use crate::poly::{PiecewisePolynomial, Side};
use crate::{Field, Result};

/// `p^(j)(t)` for `j = 0..=order`.
pub(crate) fn poly_jet<T: Field>(
    p: &PiecewisePolynomial<T>,
    t: f64,
    side: Side,
    order: usize,
) -> Result<Vec<DVector<T>>> {
    (0..=order).map(|j| p.evaluate(t, j, side)).collect()
}

/// `q^(j) = D x^(j) + f^(j)`.
pub(crate) fn input_jet<T: Field>(
    split: &SplitCoefficients<T>,
    x_prev: &[DVector<T>],
    f: &[DVector<T>],
) -> Vec<DVector<T>> {
    x_prev.iter().zip(f).map(|(x, fj)| &split.d * x + fj).collect()
}

/// Jet of `x = T [v; w]` of length `order + 1`. `q` must hold at least
/// `order + nu` entries (`order + 1` when `nu = 0`).
pub(crate) fn solution_jet<T: Field>(
    split: &SplitCoefficients<T>,
    q: &[DVector<T>],
    v0: &DVector<T>,
    order: usize,
) -> Vec<DVector<T>> {
    let (n_d, n_a, nu) = (split.n_d(), split.n_a(), split.nu());
    let q_split: Vec<(DVector<T>, DVector<T>)> = q.iter().map(|qj| split.split_input(qj)).collect();
    let n_pows: Vec<_> = (0..nu).map(|k| split.n_pow(k)).collect();
    let mut v = v0.clone();
    let mut out = Vec::with_capacity(order + 1);
    for j in 0..=order {
        let mut w = DVector::zeros(n_a);
        for (k, nk) in n_pows.iter().enumerate() {
            if let Some((_, qf)) = q_split.get(k + j) {
                w -= nk * qf;
            }
        }
        out.push(split.from_slow_fast(&v, &w));
        if n_d > 0 {
            let qd = q_split.get(j).map_or_else(|| DVector::zeros(n_d), |(qd, _)| qd.clone());
            v = &split.qwf.j * &v + qd;
        }
    }
    out
}

/// Jet of the first segment at `0+` for the history and inhomogeneity of
/// the split, starting from `v(0)` taken from `phi(0)`.
pub(crate) fn first_segment_start_jet<T: Field>(
    split: &SplitCoefficients<T>,
    phi: &PiecewisePolynomial<T>,
    f: &PiecewisePolynomial<T>,
    order: usize,
) -> Result<Vec<DVector<T>>> {
    let tau = split.tau;
    let len = order + split.nu().max(1);
    let x_prev = poly_jet(phi, -tau, Side::Right, len)?;
    let f_jet = poly_jet(f, 0.0, Side::Right, len)?;
    let q = input_jet(split, &x_prev, &f_jet);
    let phi0 = phi.evaluate(0.0, 0, Side::Left)?;
    let (v0, _) = split.to_slow_fast(&phi0);
    Ok(solution_jet(split, &q, &v0, order))
}
