//! History functions: admissibility, splicing conditions, the index-3
//! unique-solvability test and probe histories with a prescribed first jump.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::jets::first_segment_start_jet;
use crate::model::{DdaeSystem, SplitCoefficients};
use crate::pencil::RankPolicy;
use crate::poly::{PiecewisePolynomial, Side};
use crate::{DdaeError, Field, Result};

/// Relative tolerance of the history conditions.
pub const CONDITION_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    /// `|lhs - rhs|`
    pub residual: f64,
    /// `CONDITION_TOL * (1 + max(|lhs|, |rhs|))`
    pub tolerance: f64,
}

impl ConditionCheck {
    fn compare<T: Field>(lhs: &DVector<T>, rhs: &DVector<T>) -> Self {
        let residual = (lhs - rhs).norm();
        let tolerance = CONDITION_TOL * (1.0 + lhs.norm().max(rhs.norm()));
        Self { holds: residual <= tolerance, residual, tolerance }
    }
}

fn phi_at<T: Field>(sys: &DdaeSystem<T>, t: f64, order: usize) -> Result<DVector<T>> {
    let side = if t < 0.0 { Side::Right } else { Side::Left };
    sys.phi().evaluate(t, order, side)
}

fn f_at<T: Field>(sys: &DdaeSystem<T>, order: usize) -> Result<DVector<T>> {
    sys.f().evaluate(0.0, order, Side::Right)
}

/// Consistency of `phi(0)` for the first segment:
/// `phi(0) = A_con phi(0) + sum_{k=1}^{nu} (B_k phi^(k-1)(-tau) + C_k f^(k-1)(0))`.
pub fn check_admissible<T: Field>(sys: &DdaeSystem<T>, split: &SplitCoefficients<T>) -> Result<ConditionCheck> {
    let tau = sys.tau();
    let lhs = phi_at(sys, 0.0, 0)?;
    let mut rhs = &split.a_con * &lhs;
    for k in 1..=split.nu() {
        rhs += &split.b[k] * phi_at(sys, -tau, k - 1)? + &split.c[k] * f_at(sys, k - 1)?;
    }
    Ok(ConditionCheck::compare(&lhs, &rhs))
}

fn splicing_rhs<T: Field>(
    sys: &DdaeSystem<T>,
    split: &SplitCoefficients<T>,
    shift: usize,
) -> Result<(DVector<T>, DVector<T>)> {
    let tau = sys.tau();
    let lhs = phi_at(sys, 0.0, shift + 1)?;
    let mut rhs = &split.a_diff * phi_at(sys, 0.0, shift)?;
    for k in 0..=split.nu() {
        rhs += &split.b[k] * phi_at(sys, -tau, k + shift)? + &split.c[k] * f_at(sys, k + shift)?;
    }
    Ok((lhs, rhs))
}

/// `phi'(0) = A_diff phi(0) + sum_{k=0}^{nu} (B_k phi^(k)(-tau) + C_k f^(k)(0))`,
/// i.e. the solution is continuously differentiable across `t = 0`.
pub fn check_smoothness_condition<T: Field>(
    sys: &DdaeSystem<T>,
    split: &SplitCoefficients<T>,
) -> Result<ConditionCheck> {
    let (lhs, rhs) = splicing_rhs(sys, split, 0)?;
    Ok(ConditionCheck::compare(&lhs, &rhs))
}

/// `phi''(0) = A_diff phi'(0) + sum_{k=0}^{nu} (B_k phi^(k+1)(-tau) + C_k f^(k+1)(0))`.
pub fn check_second_splicing<T: Field>(
    sys: &DdaeSystem<T>,
    split: &SplitCoefficients<T>,
) -> Result<ConditionCheck> {
    let (lhs, rhs) = splicing_rhs(sys, split, 1)?;
    Ok(ConditionCheck::compare(&lhs, &rhs))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplicingReport {
    pub admissible: ConditionCheck,
    pub smooth_c1: ConditionCheck,
    pub smooth_c2: ConditionCheck,
    /// Largest `K <= nu + 2` with `phi^(j)(0) = x^(j)(0+)` for `j <= K`;
    /// `-1` when the history is not admissible.
    pub kappa_observed: i32,
}

pub fn splicing_report<T: Field>(sys: &DdaeSystem<T>, split: &SplitCoefficients<T>) -> Result<SplicingReport> {
    let admissible = check_admissible(sys, split)?;
    let smooth_c1 = check_smoothness_condition(sys, split)?;
    let smooth_c2 = check_second_splicing(sys, split)?;
    let mut kappa = -1;
    if admissible.holds {
        let cap = split.nu() + 2;
        let jet = first_segment_start_jet(split, sys.phi(), sys.f(), cap)?;
        for (j, xj) in jet.iter().enumerate() {
            let pj = phi_at(sys, 0.0, j)?;
            if !ConditionCheck::compare(&pj, xj).holds {
                break;
            }
            kappa = j as i32;
        }
    }
    Ok(SplicingReport { admissible, smooth_c1, smooth_c2, kappa_observed: kappa })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Index3Conditions {
    pub index_at_most_3: bool,
    /// `|N B_a2|`
    pub n_ba2: f64,
    pub n_ba2_zero: bool,
    /// `|N^2 B_a1 B_d2|`
    pub n2_ba1_bd2: f64,
    pub n2_ba1_bd2_zero: bool,
    /// All three conditions hold: every admissible history satisfying both
    /// splicing conditions yields a solution on the whole horizon.
    pub applicable: bool,
}

pub fn check_index3_uniqueness<T: Field>(split: &SplitCoefficients<T>, policy: &RankPolicy) -> Index3Conditions {
    let n = &split.qwf.n;
    let n_norm = n.norm();
    let n_ba2 = (n * &split.b_a2).norm();
    let n_ba2_zero = policy.is_negligible(n_ba2, n_norm * split.b_a2.norm());
    let n2 = n * n;
    let n2_ba1_bd2 = (&n2 * &split.b_a1 * &split.b_d2).norm();
    let n2_ba1_bd2_zero =
        policy.is_negligible(n2_ba1_bd2, n_norm * n_norm * split.b_a1.norm() * split.b_d2.norm());
    let index_at_most_3 = split.nu() <= 3;
    Index3Conditions {
        index_at_most_3,
        n_ba2,
        n_ba2_zero,
        n2_ba1_bd2,
        n2_ba1_bd2_zero,
        applicable: index_at_most_3 && n_ba2_zero && n2_ba1_bd2_zero,
    }
}

/// Side and size of the jump a probe history produces at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub enum ProbeTarget<T: Field> {
    /// `psi^(m)(0) - v^(m)(0+)`, a vector of length `n_d`.
    Slow(DVector<T>),
    /// `eta^(m)(0) - w^(m)(0+)`, a vector of length `n_a`.
    Fast(DVector<T>),
}

/// Values left free by the construction: derivatives at `-tau` and `v(0)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FreeValues {
    #[default]
    Zero,
    /// Uniform in `[-1, 1]` from a seeded generator.
    Seeded(u64),
}

/// Largest `m + nu` accepted by [`construct_probe_history`]; beyond it the
/// Hermite interpolant becomes too ill-conditioned.
pub const MAX_PROBE_ORDER: usize = 10;

/// Admissible polynomial history whose transition to the first segment is
/// smooth up to order `m - 1` and whose `m`-th derivatives of the slow or
/// fast coordinates jump by exactly the target (`history - solution`).
///
/// Derivatives of `[psi; eta] = T^-1 phi` at `-tau` are free. They fix the
/// derivatives of the first segment at `0+`, which are copied into the
/// derivatives of `[psi; eta]` at `0` up to order `m`, with the target added
/// at order `m`. The history is the two-point Hermite interpolant of degree
/// `2 (nu + m) + 1`.
pub fn construct_probe_history<T: Field>(
    split: &SplitCoefficients<T>,
    m: usize,
    target: &ProbeTarget<T>,
    free: FreeValues,
) -> Result<PiecewisePolynomial<T>> {
    let (n, n_d, n_a, nu) = (split.n(), split.n_d(), split.n_a(), split.nu());
    if m == 0 {
        return Err(DdaeError::InvalidArgument("probe order must be at least 1".into()));
    }
    if m + nu > MAX_PROBE_ORDER {
        return Err(DdaeError::InvalidArgument(format!(
            "probe order {m} with index {nu} exceeds the supported m + nu <= {MAX_PROBE_ORDER}"
        )));
    }
    match target {
        ProbeTarget::Slow(v) if v.len() != n_d => {
            return Err(DdaeError::DimensionMismatch(format!("slow target has length {}, expected {n_d}", v.len())))
        }
        ProbeTarget::Fast(w) if w.len() != n_a => {
            return Err(DdaeError::DimensionMismatch(format!("fast target has length {}, expected {n_a}", w.len())))
        }
        _ => {}
    }
    let k_top = nu + m;
    let tau = split.tau;

    let mut rng = match free {
        FreeValues::Zero => None,
        FreeValues::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
    };
    let mut draw = |len: usize| -> DVector<T> {
        match rng.as_mut() {
            None => DVector::zeros(len),
            Some(r) => DVector::from_fn(len, |_, _| T::from_real(r.gen_range(-1.0..=1.0))),
        }
    };
    // [psi; eta]^(j)(-tau), j = 0..=k_top
    let at_start: Vec<DVector<T>> = (0..=k_top).map(|_| draw(n)).collect();
    let v0 = draw(n_d);

    // Input jet at 0+: q^(j) = D T [psi; eta]^(j)(-tau) + f^(j)(0).
    let q: Vec<DVector<T>> = at_start
        .iter()
        .enumerate()
        .map(|(j, y)| Ok(&split.d * (&split.qwf.t * y) + split_f_jet(split, j)?))
        .collect::<Result<_>>()?;
    let seg = crate::jets::solution_jet(split, &q, &v0, m);

    let mut at_end: Vec<DVector<T>> = seg.iter().map(|x| &split.qwf.t_inv * x).collect();
    match target {
        ProbeTarget::Slow(v) => {
            let mut top = at_end[m].rows_mut(0, n_d);
            top += v;
        }
        ProbeTarget::Fast(w) => {
            let mut bottom = at_end[m].rows_mut(n_d, n_a);
            bottom += w;
        }
    }
    at_end.extend((m + 1..=k_top).map(|_| DVector::zeros(n)));

    let transformed = hermite_two_point(-tau, 0.0, &at_start, &at_end)?;
    transformed.map_matrix(&split.qwf.t)
}

/// `f^(j)(0)` recovered from `[g; h] = S f`.
fn split_f_jet<T: Field>(split: &SplitCoefficients<T>, j: usize) -> Result<DVector<T>> {
    let g = split.g.evaluate(0.0, j, Side::Right)?;
    let h = split.h.evaluate(0.0, j, Side::Right)?;
    let mut gh = DVector::zeros(split.n());
    gh.rows_mut(0, split.n_d()).copy_from(&g);
    gh.rows_mut(split.n_d(), split.n_a()).copy_from(&h);
    // S is invertible; solve rather than form S^-1 explicitly.
    split
        .qwf
        .s
        .clone()
        .lu()
        .solve(&gh)
        .ok_or_else(|| DdaeError::DecompositionFailure { reason: "S is singular".into(), rank_ambiguous: false })
}

/// Polynomial on `[a, b]` with prescribed derivatives `left[j]` at `a` and
/// `right[j]` at `b`, `j = 0..=K`; degree `2K + 1`.
pub(crate) fn hermite_two_point<T: Field>(
    a: f64,
    b: f64,
    left: &[DVector<T>],
    right: &[DVector<T>],
) -> Result<PiecewisePolynomial<T>> {
    let k = left.len() - 1;
    debug_assert_eq!(right.len(), k + 1);
    let dim = left[0].len();
    let h = b - a;
    // In u = (t - a) / h: p^(j)(0) = j! c_j and p^(j)(1) = sum_i i!/(i-j)! c_i.
    let mut fact = vec![1.0; 2 * k + 2];
    for i in 1..fact.len() {
        fact[i] = fact[i - 1] * i as f64;
    }
    let mut c: Vec<DVector<T>> = (0..=k)
        .map(|j| &left[j] * T::from_real(h.powi(j as i32) / fact[j]))
        .collect();
    let mut mat = DMatrix::<T>::zeros(k + 1, k + 1);
    let mut rhs = DMatrix::<T>::zeros(k + 1, dim);
    for j in 0..=k {
        for i in (k + 1)..=(2 * k + 1) {
            if i >= j {
                mat[(j, i - k - 1)] = T::from_real(fact[i] / fact[i - j]);
            }
        }
        let mut r = &right[j] * T::from_real(h.powi(j as i32));
        for (i, ci) in c.iter().enumerate().skip(j) {
            r -= ci * T::from_real(fact[i] / fact[i - j]);
        }
        rhs.row_mut(j).copy_from(&r.transpose());
    }
    let sol = mat
        .lu()
        .solve(&rhs)
        .ok_or_else(|| DdaeError::InvalidArgument("Hermite system is singular".into()))?;
    for i in 0..=k {
        c.push(sol.row(i).transpose());
    }
    let coeffs = c
        .into_iter()
        .enumerate()
        .map(|(i, ci)| ci * T::from_real(h.powi(-(i as i32))))
        .collect();
    PiecewisePolynomial::from_piece(a, b, coeffs)
}
