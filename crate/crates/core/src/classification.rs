//! Discontinuity-propagation type and retarded / neutral / advanced type of a
//! DDAE, both read off the quasi-Weierstrass blocks.
//!
//! - de-smoothing: `N^k B_a != 0` for some `k >= 1`
//! - smoothing: `N B_a = 0` and `B_a2` nilpotent with index `nu_D < M`
//! - discontinuity invariant: otherwise
//!
//! The legacy type is retarded iff `B_a = 0`, neutral iff `B_a != 0` and
//! `N B_a = 0`, advanced otherwise. Both classifications share the same
//! numerical test for `N^k B_a`, so advanced and de-smoothing coincide
//! exactly.

use nalgebra::DMatrix;

use crate::linalg::mat_pow;
use crate::model::{build_split, DdaeSystem, SplitCoefficients};
use crate::pencil::{check_regularity, nilpotency_index, RankPolicy};
use crate::poly::PiecewisePolynomial;
use crate::{Field, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PropagationKind {
    Smoothing,
    DiscontinuityInvariant,
    DeSmoothing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PropagationClass {
    pub kind: PropagationKind,
    /// Nilpotency index of `B_a2`, if nilpotent.
    pub nu_d: Option<usize>,
    /// Smallest `k >= 1` with `N^k B_a != 0` (de-smoothing only).
    pub first_violating_k: Option<usize>,
    /// `B_a2` is nilpotent but `nu_D >= M`, so smoothing cannot be observed
    /// within the horizon.
    pub horizon_dependent_note: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LegacyClass {
    Retarded,
    Neutral,
    Advanced,
}

/// Norms the verdicts are based on.
#[derive(Clone, Debug, PartialEq)]
pub struct Evidence {
    /// `|N^k B_a|` for `k = 0..nu` (empty when `nu = 0`).
    pub n_pow_ba: Vec<f64>,
    /// `|B_a2^k|` for `k = 1..=n_a`.
    pub ba2_pow: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationReport {
    pub propagation: PropagationClass,
    pub legacy: LegacyClass,
    pub evidence: Evidence,
    /// `(legacy == Advanced) == (propagation == DeSmoothing)`
    pub consistent: bool,
}

fn ba_is_zero<T: Field>(split: &SplitCoefficients<T>, policy: &RankPolicy) -> bool {
    let scale = split.qwf.s.norm() * split.d.norm();
    policy.is_negligible(split.b_a.norm(), scale)
}

/// Smallest `k in 1..nu` with `N^k B_a` numerically nonzero.
fn first_nonzero_n_pow_ba<T: Field>(split: &SplitCoefficients<T>, policy: &RankPolicy) -> Option<usize> {
    let n_norm = split.qwf.n.norm();
    let ba_norm = split.b_a.norm();
    let mut nk = DMatrix::identity(split.n_a(), split.n_a());
    for k in 1..split.nu() {
        nk = &nk * &split.qwf.n;
        let norm = (&nk * &split.b_a).norm();
        if !policy.is_negligible(norm, n_norm.powi(k as i32) * ba_norm) {
            return Some(k);
        }
    }
    None
}

fn evidence<T: Field>(split: &SplitCoefficients<T>) -> Evidence {
    let n_pow_ba = (0..split.nu()).map(|k| (mat_pow(&split.qwf.n, k) * &split.b_a).norm()).collect();
    let ba2_pow = (1..=split.n_a()).map(|k| mat_pow(&split.b_a2, k).norm()).collect();
    Evidence { n_pow_ba, ba2_pow }
}

pub fn classify_propagation<T: Field>(
    split: &SplitCoefficients<T>,
    horizon: usize,
    policy: &RankPolicy,
) -> PropagationClass {
    if let Some(k) = first_nonzero_n_pow_ba(split, policy) {
        let nil = nilpotency_index(&split.b_a2, policy);
        return PropagationClass {
            kind: PropagationKind::DeSmoothing,
            nu_d: nil.index,
            first_violating_k: Some(k),
            horizon_dependent_note: false,
        };
    }
    let nil = nilpotency_index(&split.b_a2, policy);
    match nil.index {
        Some(nu_d) if nu_d < horizon => PropagationClass {
            kind: PropagationKind::Smoothing,
            nu_d: Some(nu_d),
            first_violating_k: None,
            horizon_dependent_note: false,
        },
        Some(nu_d) => PropagationClass {
            kind: PropagationKind::DiscontinuityInvariant,
            nu_d: Some(nu_d),
            first_violating_k: None,
            horizon_dependent_note: true,
        },
        None => PropagationClass {
            kind: PropagationKind::DiscontinuityInvariant,
            nu_d: None,
            first_violating_k: None,
            horizon_dependent_note: false,
        },
    }
}

pub fn classify_legacy<T: Field>(split: &SplitCoefficients<T>, policy: &RankPolicy) -> LegacyClass {
    if ba_is_zero(split, policy) {
        LegacyClass::Retarded
    } else if first_nonzero_n_pow_ba(split, policy).is_none() {
        LegacyClass::Neutral
    } else {
        LegacyClass::Advanced
    }
}

pub fn cross_check(report: &ClassificationReport) -> bool {
    (report.legacy == LegacyClass::Advanced) == (report.propagation.kind == PropagationKind::DeSmoothing)
}

pub fn classify<T: Field>(
    split: &SplitCoefficients<T>,
    horizon: usize,
    policy: &RankPolicy,
) -> ClassificationReport {
    let propagation = classify_propagation(split, horizon, policy);
    let legacy = classify_legacy(split, policy);
    let mut report = ClassificationReport { propagation, legacy, evidence: evidence(split), consistent: true };
    report.consistent = cross_check(&report);
    if !report.consistent {
        log::warn!(
            "legacy and propagation classes disagree ({:?} vs {:?}); evidence {:?}",
            report.legacy,
            report.propagation.kind,
            report.evidence
        );
    }
    report
}

/// The time-reversed system in doubled dimension,
/// `[[0, E], [0, 0]] z' = [[-D, 0], [0, I]] z + [[-A, 0], [-I, 0]] z(t - tau)`.
#[derive(Clone, Debug)]
pub struct BackwardSystem<T: Field> {
    pub e: DMatrix<T>,
    pub a: DMatrix<T>,
    pub d: DMatrix<T>,
    /// Regularity of the backward pencil; holds iff `det D != 0`.
    pub regular: bool,
    /// The backward system with zero data, when regular.
    pub system: Option<DdaeSystem<T>>,
    pub classification: Option<ClassificationReport>,
}

pub fn build_backward_system<T: Field>(sys: &DdaeSystem<T>, policy: &RankPolicy) -> Result<BackwardSystem<T>> {
    let n = sys.dim();
    let mut e = DMatrix::zeros(2 * n, 2 * n);
    e.view_mut((0, n), (n, n)).copy_from(sys.e());
    let mut a = DMatrix::zeros(2 * n, 2 * n);
    a.view_mut((0, 0), (n, n)).copy_from(&(-sys.d()));
    a.view_mut((n, n), (n, n)).fill_with_identity();
    let mut d = DMatrix::zeros(2 * n, 2 * n);
    d.view_mut((0, 0), (n, n)).copy_from(&(-sys.a()));
    d.view_mut((n, 0), (n, n)).copy_from(&(-DMatrix::<T>::identity(n, n)));

    let tau = sys.tau();
    let m = sys.horizon();
    let f = PiecewisePolynomial::zero(0.0, m as f64 * tau, 2 * n)?;
    let phi = PiecewisePolynomial::zero(-tau, 0.0, 2 * n)?;
    let backward = DdaeSystem::unchecked(e.clone(), a.clone(), d.clone(), tau, m, f, phi)?;
    let regular = check_regularity(backward.pencil(), policy).is_regular();
    if !regular {
        return Ok(BackwardSystem { e, a, d, regular, system: None, classification: None });
    }
    let split = build_split(&backward, policy)?;
    let classification = classify(&split, m, policy);
    Ok(BackwardSystem { e, a, d, regular, system: Some(backward), classification: Some(classification) })
}
