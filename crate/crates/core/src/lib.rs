//! Analysis and numerical solution of linear delay differential-algebraic
//! equations (DDAEs)
//!
//! ```text
//! E x'(t) = A x(t) + D x(t - tau) + f(t),   x = phi on [-tau, 0].
//! ```
//!
//! The crate is organised bottom-up:
//!
//! - [`pencil`]: regularity of `(E, A)`, Wong sequences and the
//!   quasi-Weierstrass form `S E T = diag(I, N)`, `S A T = diag(J, I)`.
//! - [`poly`] and [`chebyshev`]: piecewise polynomial data functions and the
//!   Chebyshev series used for segment solutions.
//! - [`model`]: the problem container and every coefficient matrix derived
//!   from the decomposition.
//! - [`classification`]: discontinuity-propagation type (smoothing,
//!   discontinuity invariant, de-smoothing) and the retarded / neutral /
//!   advanced type.
//! - [`history`]: admissibility, splicing conditions and probe histories.
//! - [`solver`]: the method of steps with a derivative-jump ledger.
//! - [`reformulation`]: hidden-delay expansion of smoothing-type systems.
//! - [`stability`]: characteristic roots and the spectral abscissa.

pub mod chebyshev;
pub mod classification;
mod error;
mod field;
pub mod history;
mod jets;
mod linalg;
pub mod model;
pub mod pencil;
pub mod poly;
pub mod reformulation;
pub mod solver;
pub mod stability;

pub use error::{DdaeError, Result};
pub use field::Field;

pub use classification::{
    build_backward_system, classify, classify_legacy, classify_propagation, cross_check,
    BackwardSystem, ClassificationReport, LegacyClass, PropagationClass, PropagationKind,
};
pub use history::{
    check_admissible, check_index3_uniqueness, check_second_splicing, check_smoothness_condition,
    construct_probe_history, splicing_report, ConditionCheck, FreeValues, Index3Conditions,
    ProbeTarget, SplicingReport,
};
pub use model::{
    build_split, solve_fast_subsystem, underlying_dde_coeffs, underlying_ode_rhs, DdaeSystem,
    SplitCoefficients, UnderlyingOde,
};
pub use pencil::{
    check_regularity, compute_qwf, nilpotency_index, wong_sequences, MatrixPencil, NilpotencyIndex,
    QuasiWeierstrassForm, RankPolicy, RegularityVerdict, WongLimits,
};
pub use poly::{PiecewisePolynomial, PolyPiece, Side};
pub use reformulation::{
    embed_neutral_dde, embed_pure_delay, expand_hidden_delays, HiddenDelayExpansion,
};
pub use solver::{
    detect_jumps, method_of_steps, solve_hidden_delay_dde, solve_segment, Breakdown, JumpLedger,
    LedgerEntry, OnInconsistent, SegmentSolution, SolverConfig, StepsOutcome, Trajectory,
};
pub use stability::{
    assess_exponential_stability, char_function, spectral_abscissa, CharValue, SearchBox,
    StabilityGate, StabilityReport, StabilityVerdict,
};
