//! Small dense helpers shared by the decomposition and the solver.

use nalgebra::DMatrix;

use crate::pencil::RankPolicy;
use crate::Field;

/// Orthonormal basis of a subspace together with a flag telling whether a
/// singular value fell close to the rank threshold.
#[derive(Clone, Debug)]
pub(crate) struct Subspace<T: Field> {
    pub basis: DMatrix<T>,
    pub ambiguous: bool,
}

/// One-sided Jacobi SVD of an `m x n` matrix: singular values (one per
/// column, unsorted), the right singular vectors `V` (n x n) and `M V`,
/// whose columns are `sigma_i u_i`.
///
/// Used instead of the bidiagonal SVD, which loses accuracy on matrices
/// with a cluster of tiny singular values.
pub(crate) fn jacobi_svd<T: Field>(m: &DMatrix<T>) -> (Vec<f64>, DMatrix<T>, DMatrix<T>) {
    let n = m.ncols();
    let mut u = m.clone();
    let mut v = DMatrix::<T>::identity(n, n);
    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = u.column(p).norm_squared();
                let beta = u.column(q).norm_squared();
                let gamma = u.column(p).dotc(&u.column(q));
                let g = gamma.modulus();
                if g <= f64::EPSILON * (alpha * beta).sqrt() || g == 0.0 {
                    continue;
                }
                rotated = true;
                // Phase that makes the off-diagonal entry real and positive.
                let phase = gamma.unscale(g);
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut u, &mut v] {
                    for r in 0..mat.nrows() {
                        let xp = mat[(r, p)];
                        let xq = mat[(r, q)] * phase.conjugate();
                        mat[(r, p)] = xp.scale(c) - xq.scale(s);
                        mat[(r, q)] = xp.scale(s) + xq.scale(c);
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let sigma = (0..n).map(|j| u.column(j).norm()).collect();
    (sigma, v, u)
}

pub(crate) fn singular_values<T: Field>(m: &DMatrix<T>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    // Jacobi on the wider side only yields max(m, n) values; keep the
    // min(m, n) that are meaningful.
    let (mut sigma, _, _) = if m.nrows() < m.ncols() { jacobi_svd(&m.adjoint()) } else { jacobi_svd(m) };
    sigma.sort_by(|a, b| b.total_cmp(a));
    sigma.truncate(m.nrows().min(m.ncols()));
    sigma
}

pub(crate) fn spectral_norm<T: Field>(m: &DMatrix<T>) -> f64 {
    singular_values(m).into_iter().fold(0.0, f64::max)
}

/// Orthonormal basis of the column space of `m`.
///
/// `reference` is a scale the relative threshold is measured against in
/// addition to the largest singular value of `m` itself.
pub(crate) fn column_space<T: Field>(
    m: &DMatrix<T>,
    policy: &RankPolicy,
    reference: f64,
) -> Subspace<T> {
    let n = m.nrows();
    if m.ncols() == 0 || n == 0 {
        return Subspace { basis: DMatrix::zeros(n, 0), ambiguous: false };
    }
    let (sigma, _, mv) = jacobi_svd(m);
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let thr = policy.threshold(smax.max(reference));
    let ambiguous = sigma.iter().any(|&s| policy.is_ambiguous(s, thr));
    let keep: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] > thr).collect();
    let mut basis = DMatrix::zeros(n, keep.len());
    for (c, &i) in keep.iter().enumerate() {
        basis.set_column(c, &mv.column(i).unscale(sigma[i]));
    }
    // Re-orthonormalise against rounding in the rotated columns.
    if !keep.is_empty() {
        basis = basis.qr().q();
    }
    Subspace { basis, ambiguous }
}

/// Orthonormal basis of the null space of `m`.
pub(crate) fn null_space<T: Field>(
    m: &DMatrix<T>,
    policy: &RankPolicy,
    reference: f64,
) -> Subspace<T> {
    let cols = m.ncols();
    if cols == 0 {
        return Subspace { basis: DMatrix::zeros(0, 0), ambiguous: false };
    }
    if m.nrows() == 0 {
        return Subspace { basis: DMatrix::identity(cols, cols), ambiguous: false };
    }
    let (sigma, v, _) = jacobi_svd(m);
    let smax = sigma.iter().copied().fold(0.0, f64::max);
    let thr = policy.threshold(smax.max(reference));
    let ambiguous = sigma.iter().any(|&s| policy.is_ambiguous(s, thr));
    let drop: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= thr).collect();
    let mut basis = DMatrix::zeros(cols, drop.len());
    for (c, &i) in drop.iter().enumerate() {
        basis.set_column(c, &v.column(i));
    }
    Subspace { basis, ambiguous }
}

pub(crate) fn mat_pow<T: Field>(m: &DMatrix<T>, k: usize) -> DMatrix<T> {
    let mut out = DMatrix::identity(m.nrows(), m.ncols());
    for _ in 0..k {
        out = &out * m;
    }
    out
}

pub(crate) fn block_diag<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra + rb, ca + cb);
    out.view_mut((0, 0), (ra, ca)).copy_from(a);
    out.view_mut((ra, ca), (rb, cb)).copy_from(b);
    out
}

pub(crate) fn hstack<T: Field>(a: &DMatrix<T>, b: &DMatrix<T>) -> DMatrix<T> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

pub(crate) fn block<T: Field>(
    m: &DMatrix<T>,
    rows: std::ops::Range<usize>,
    cols: std::ops::Range<usize>,
) -> DMatrix<T> {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}
