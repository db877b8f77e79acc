//! Method of steps with a derivative-jump ledger.
//!
//! Segment `i` lives on `[(i-1) tau, i tau]` and solves the DAE
//! `E x' = A x + q` with `q(t) = D x(t - tau) + f(t)`. In coordinates
//! `x = T [v; w]`, `[q_d; q_f] = S q`:
//!
//! - `w = -sum_{k<nu} N^k q_f^(k)` is formed exactly on Chebyshev
//!   coefficients,
//! - `v' = J v + q_d` is integrated by Chebyshev collocation with one
//!   linear solve per sub-interval,
//!
//! and `x` is stored as a piecewise Chebyshev series. Sub-interval
//! boundaries are the knots of the history and inhomogeneity, carried
//! forward by `tau`.
//!
//! The restart value `x((i-1) tau)` taken from the previous segment is
//! never projected. If it violates the consistency condition the solver
//! stops and records the breakdown.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::chebyshev::{cgl_nodes, differentiation_matrix, ChebSeries, PiecewiseCheb};
use crate::history::check_admissible;
use crate::jets::{poly_jet, solution_jet};
use crate::linalg::block;
use crate::model::{DdaeSystem, SplitCoefficients};
use crate::pencil::RankPolicy;
use crate::poly::{PiecewisePolynomial, Side};
use crate::reformulation::HiddenDelayExpansion;
use crate::{DdaeError, Field, Result};

/// What to do when a restart value is inconsistent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum OnInconsistent {
    /// Return the trajectory so far together with a ledger entry for the
    /// failed knot.
    #[default]
    RecordAndStop,
    /// Fail with [`DdaeError::InconsistentRestart`].
    HardStop,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    /// Collocation degree per sub-interval.
    pub degree: usize,
    /// Highest derivative order compared at knots; `nu + 2` when `None`.
    pub k_max: Option<usize>,
    pub tol_jump: f64,
    pub tol_consistency: f64,
    pub on_inconsistent: OnInconsistent,
    /// Relative threshold for dropping trailing Chebyshev coefficients.
    pub chop_tol: f64,
    pub policy: RankPolicy,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            degree: 48,
            k_max: None,
            tol_jump: 1e-6,
            tol_consistency: 1e-7,
            on_inconsistent: OnInconsistent::RecordAndStop,
            chop_tol: 1e-13,
            policy: RankPolicy::default(),
        }
    }
}

impl SolverConfig {
    pub fn k_max_for(&self, nu: usize) -> usize {
        self.k_max.unwrap_or(nu + 2)
    }
}

/// One segment of the method of steps. Index `0` is the history on
/// `[-tau, 0]`.
#[derive(Clone, Debug)]
pub struct SegmentSolution<T: Field> {
    pub index: usize,
    pub tau: f64,
    /// The state in global time on `[(index - 1) tau, index tau]`.
    pub x: PiecewiseCheb<T>,
    /// `v`, the first `n_d` components of `T^-1 x`.
    pub slow: PiecewiseCheb<T>,
    /// `w`, the last `n_a` components of `T^-1 x`.
    pub fast: PiecewiseCheb<T>,
    /// Norm of the consistency defect of the start value.
    pub consistency_residual: f64,
    /// Derivatives `x^(j)` at the right limit of the start point.
    pub start_jet: Vec<DVector<T>>,
    /// Derivatives `x^(j)` at the left limit of the end point.
    pub end_jet: Vec<DVector<T>>,
}

impl<T: Field> SegmentSolution<T> {
    pub fn start(&self) -> f64 {
        self.x.start()
    }

    pub fn end(&self) -> f64 {
        self.x.end()
    }

    pub fn evaluate(&self, t: f64, order: usize, side: Side) -> Result<DVector<T>> {
        self.x.evaluate(t, order, side)
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.x.pieces.iter().map(|p| p.a).collect();
        b.push(self.end());
        b
    }

    /// `x^(k)` at the start (right limit), from the jet when available.
    pub fn start_derivative(&self, k: usize) -> Result<DVector<T>> {
        match self.start_jet.get(k) {
            Some(v) => Ok(v.clone()),
            None => self.x.evaluate(self.start(), k, Side::Right),
        }
    }

    /// `x^(k)` at the end (left limit), from the jet when available.
    pub fn end_derivative(&self, k: usize) -> Result<DVector<T>> {
        match self.end_jet.get(k) {
            Some(v) => Ok(v.clone()),
            None => self.x.evaluate(self.end(), k, Side::Left),
        }
    }
}

/// Contiguous segments; `x(t) = x^[i](t)` on `[(i-1) tau, i tau]`.
#[derive(Clone, Debug)]
pub struct Trajectory<T: Field> {
    pub tau: f64,
    pub n: usize,
    pub history: SegmentSolution<T>,
    pub segments: Vec<SegmentSolution<T>>,
}

impl<T: Field> Trajectory<T> {
    pub fn end(&self) -> f64 {
        self.segments.last().map_or(0.0, |s| s.end())
    }

    /// `x^(order)(t)` over the history and every solved segment. At a knot
    /// `side` selects the segment.
    pub fn eval(&self, t: f64, order: usize, side: Side) -> Result<DVector<T>> {
        let eps = 1e-12 * (1.0 + t.abs());
        if t < -eps || (t <= eps && side == Side::Left) || self.segments.is_empty() {
            return self.history.evaluate(t, order, side);
        }
        let mut i = (t / self.tau).floor().max(0.0) as usize;
        let knot = (t - i as f64 * self.tau).abs() <= eps * (1.0 + self.tau)
            || ((i + 1) as f64 * self.tau - t).abs() <= eps * (1.0 + self.tau);
        if knot {
            i = (t / self.tau).round() as usize;
            if side == Side::Left {
                i = i.saturating_sub(1);
            }
        }
        let i = i.min(self.segments.len() - 1);
        self.segments[i].evaluate(t, order, side)
    }

    /// The history followed by all segments.
    pub fn all_segments(&self) -> impl Iterator<Item = &SegmentSolution<T>> {
        std::iter::once(&self.history).chain(self.segments.iter())
    }
}

/// Comparison of the two one-sided limits at the knot `t = knot * tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct LedgerEntry<T: Field> {
    pub knot: usize,
    pub time: f64,
    /// Largest `j` such that derivatives `0..=j` agree; `-1` if the values
    /// themselves differ.
    pub matched_order: i32,
    /// `matched_order + 1` if that order was compared.
    pub first_jump_order: Option<usize>,
    /// `x^(first_jump_order)(t-) - x^(first_jump_order)(t+)`.
    pub jump_vector: Option<DVector<T>>,
    /// `T^-1 jump_vector`, the jump split into slow and fast parts.
    pub transformed_jump: Option<DVector<T>>,
    pub jump_norm: f64,
    pub inconsistent_restart: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct JumpLedger<T: Field> {
    pub k_max: usize,
    pub tol_jump: f64,
    pub entries: Vec<LedgerEntry<T>>,
}

impl<T: Field> JumpLedger<T> {
    pub fn entry(&self, knot: usize) -> Option<&LedgerEntry<T>> {
        self.entries.iter().find(|e| e.knot == knot)
    }

    pub fn matched_orders(&self) -> Vec<i32> {
        self.entries.iter().map(|e| e.matched_order).collect()
    }
}

/// The restart that could not be made consistent.
#[derive(Clone, Debug)]
pub struct Breakdown<T: Field> {
    /// Index of the segment that failed to start.
    pub segment: usize,
    pub time: f64,
    pub residual: f64,
    pub tolerance: f64,
    /// `x(t-) - x(t+)` with `x(t+)` from the attempted segment.
    pub jump_vector: DVector<T>,
    /// The segment computed from the slow part of the restart value.
    pub attempted: SegmentSolution<T>,
}

#[derive(Clone, Debug)]
pub struct StepsOutcome<T: Field> {
    pub trajectory: Trajectory<T>,
    pub ledger: JumpLedger<T>,
    pub breakdown: Option<Breakdown<T>>,
}

impl<T: Field> StepsOutcome<T> {
    pub fn completed(&self) -> bool {
        self.breakdown.is_none()
    }
}

/// Chebyshev collocation for `v' = J v + r` with cached LU factors.
struct Collocator<T: Field> {
    j: DMatrix<T>,
    p: usize,
    diff: DMatrix<f64>,
    cache: Vec<(f64, LU<T, Dyn, Dyn>)>,
}

impl<T: Field> Collocator<T> {
    fn new(j: DMatrix<T>, p: usize) -> Self {
        Self { j, p, diff: differentiation_matrix(p), cache: Vec::new() }
    }

    fn factor(&mut self, h: f64) -> Option<&LU<T, Dyn, Dyn>> {
        let pos = self.cache.iter().position(|(hc, _)| (hc - h).abs() <= 1e-14 * h);
        let pos = match pos {
            Some(p) => p,
            None => {
                let (p, m) = (self.p, self.j.nrows());
                let size = (p + 1) * m;
                let mut k = DMatrix::<T>::zeros(size, size);
                for r in 0..m {
                    k[(r, r)] = T::one();
                }
                let scale = 2.0 / h;
                for i in 1..=p {
                    for jn in 0..=p {
                        let dij = T::from_real(scale * self.diff[(i, jn)]);
                        for r in 0..m {
                            k[(i * m + r, jn * m + r)] += dij;
                        }
                    }
                    for r in 0..m {
                        for c in 0..m {
                            k[(i * m + r, i * m + c)] -= self.j[(r, c)];
                        }
                    }
                }
                let lu = k.lu();
                if !lu.is_invertible() {
                    return None;
                }
                self.cache.push((h, lu));
                self.cache.len() - 1
            }
        };
        Some(&self.cache[pos].1)
    }

    /// Solution on `[a, b]` from `v(a) = v0`; `forcing(t)` is sampled at
    /// the collocation nodes.
    fn solve(
        &mut self,
        a: f64,
        b: f64,
        v0: &DVector<T>,
        forcing: impl Fn(usize, f64) -> Result<DVector<T>>,
        segment: usize,
    ) -> Result<ChebSeries<T>> {
        let (p, m) = (self.p, self.j.nrows());
        if m == 0 {
            return Ok(ChebSeries::zero(a, b, 0));
        }
        let nodes = cgl_nodes(a, b, p);
        let mut rhs = DVector::<T>::zeros((p + 1) * m);
        rhs.rows_mut(0, m).copy_from(v0);
        for (i, &s) in nodes.iter().enumerate().skip(1) {
            rhs.rows_mut(i * m, m).copy_from(&forcing(i, s)?);
        }
        let lu = self.factor(b - a).ok_or(DdaeError::CollocationSingular { segment })?;
        let sol = lu.solve(&rhs).ok_or(DdaeError::CollocationSingular { segment })?;
        let values: Vec<DVector<T>> = (0..=p).map(|i| sol.rows(i * m, m).into_owned()).collect();
        Ok(ChebSeries::from_values(a, b, &values))
    }
}

/// Sorted union of `points` and the knots of `f` in `[a, b]`, merging
/// points closer than `1e-12 tau`.
fn merge_grid(mut points: Vec<f64>, extra: &[f64], a: f64, b: f64, tau: f64) -> Vec<f64> {
    let eps = 1e-12 * tau;
    points.extend(extra.iter().copied().filter(|&t| t > a + eps && t < b - eps));
    points.push(a);
    points.push(b);
    points.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(points.len());
    for t in points {
        if t < a - eps || t > b + eps {
            continue;
        }
        match out.last() {
            Some(&last) if t - last <= eps => {}
            _ => out.push(t),
        }
    }
    // Exact end points.
    out[0] = a;
    let last = out.len() - 1;
    if out.len() == 1 {
        out.push(b);
    } else {
        out[last] = b;
    }
    out
}

fn cheb_vstack<T: Field>(p: &ChebSeries<T>, q: &ChebSeries<T>) -> ChebSeries<T> {
    let len = p.coeffs.len().max(q.coeffs.len());
    let (n1, n2) = (p.dim(), q.dim());
    let coeffs = (0..len)
        .map(|k| {
            let mut v = DVector::zeros(n1 + n2);
            if let Some(c) = p.coeffs.get(k) {
                v.rows_mut(0, n1).copy_from(c);
            }
            if let Some(c) = q.coeffs.get(k) {
                v.rows_mut(n1, n2).copy_from(c);
            }
            v
        })
        .collect();
    ChebSeries { a: p.a, b: p.b, coeffs }
}

fn poly_to_cheb<T: Field>(p: &PiecewisePolynomial<T>, grid: &[f64]) -> Result<PiecewiseCheb<T>> {
    let pieces = grid
        .windows(2)
        .map(|w| {
            let k = p.piece_index(0.5 * (w[0] + w[1]), Side::Right)?;
            Ok(ChebSeries::from_poly_piece(&p.pieces()[k], w[0], w[1]))
        })
        .collect::<Result<Vec<_>>>()?;
    PiecewiseCheb::new(pieces)
}

fn split_cheb<T: Field>(split: &SplitCoefficients<T>, x: &PiecewiseCheb<T>) -> (PiecewiseCheb<T>, PiecewiseCheb<T>) {
    let y = x.map_matrix(&split.qwf.t_inv);
    (y.rows(0, split.n_d()), y.rows(split.n_d(), split.n_a()))
}

/// Number of jet orders of the previous segment needed for `order` orders
/// of the next one.
fn prev_order_needed(order: usize, nu: usize) -> usize {
    order + nu.max(1) - 1
}

/// The history as segment `0`, with exact jets up to `jet_order`.
fn history_segment<T: Field>(
    split: &SplitCoefficients<T>,
    phi: &PiecewisePolynomial<T>,
    jet_order: usize,
) -> Result<SegmentSolution<T>> {
    let tau = split.tau;
    let grid = merge_grid(phi.breakpoints(), &[], -tau, 0.0, tau);
    let x = poly_to_cheb(phi, &grid)?;
    let (slow, fast) = split_cheb(split, &x);
    Ok(SegmentSolution {
        index: 0,
        tau,
        x,
        slow,
        fast,
        consistency_residual: 0.0,
        start_jet: poly_jet(phi, -tau, Side::Right, jet_order)?,
        end_jet: poly_jet(phi, 0.0, Side::Left, jet_order)?,
    })
}

struct Advance<T: Field> {
    segment: SegmentSolution<T>,
    residual: f64,
    tolerance: f64,
}

impl<T: Field> Advance<T> {
    fn consistent(&self) -> bool {
        self.residual <= self.tolerance
    }
}

/// Computes the segment after `prev` from the slow part of the restart
/// value, whether or not the restart is consistent.
fn advance<T: Field>(
    split: &SplitCoefficients<T>,
    f: &PiecewisePolynomial<T>,
    prev: &SegmentSolution<T>,
    config: &SolverConfig,
    colloc: &mut Collocator<T>,
    jet_order: usize,
) -> Result<Advance<T>> {
    let tau = split.tau;
    let (n, n_d, n_a, nu) = (split.n(), split.n_d(), split.n_a(), split.nu());
    let index = prev.index + 1;
    let a = prev.end();
    let b = a + tau;
    let shifted: Vec<f64> = prev.breakpoints().iter().map(|t| t + tau).collect();
    let grid = merge_grid(shifted, &f.breakpoints(), a, b, tau);

    let s_d = block(&split.qwf.s, 0..n_d, 0..n);
    let s_a = block(&split.qwf.s, n_d..n, 0..n);
    let n_pows: Vec<DMatrix<T>> = (0..nu).map(|k| split.n_pow(k)).collect();

    let x0 = prev.end_derivative(0)?;
    let (v_start, _) = split.to_slow_fast(&x0);

    // Input jet at the start, from the previous start jet when it is long
    // enough, otherwise from the Chebyshev input on the first sub-interval.
    let need = prev_order_needed(jet_order, nu);
    let use_jets = prev.start_jet.len() > need && prev.end_jet.len() > need;

    let mut pieces = Vec::with_capacity(grid.len() - 1);
    let mut q_first: Option<ChebSeries<T>> = None;
    let mut v0 = v_start.clone();
    for w in grid.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        let mid = 0.5 * (sa + sb);
        let prev_piece = &prev.x.pieces[prev_index(&prev.x, mid - tau)];
        let f_piece = &f.pieces()[f.piece_index(mid, Side::Right)?];
        let deg = prev_piece.degree().max(f_piece.degree()).max(1);
        let q = ChebSeries::interpolate(sa, sb, deg, |t| &split.d * prev_piece.eval(t - tau) + f_piece.eval(t, 0));
        let q_f = q.map_matrix(&s_a);
        let mut fast = ChebSeries::zero(sa, sb, n_a);
        let mut dq = q_f.clone();
        for nk in &n_pows {
            fast = fast.add(&dq.map_matrix(nk).scale(-T::one()));
            dq = dq.derivative();
        }
        let q_d = q.map_matrix(&s_d);
        let p = config.degree.max(q_d.degree() + 1);
        if p != colloc.p {
            *colloc = Collocator::new(split.qwf.j.clone(), p);
        }
        let slow = colloc.solve(sa, sb, &v0, |_, t| Ok(q_d.eval(t)), index)?;
        v0 = slow.eval(sb);
        let mut x = cheb_vstack(&slow, &fast).map_matrix(&split.qwf.t);
        x.chop(config.chop_tol);
        pieces.push(x);
        if q_first.is_none() {
            q_first = Some(q);
        }
    }
    let x = PiecewiseCheb::new(pieces)?;
    let (slow, fast) = split_cheb(split, &x);

    let f_start = poly_jet(f, a, Side::Right, need)?;
    let f_end = poly_jet(f, b, Side::Left, need)?;
    let q_start: Vec<DVector<T>> = if use_jets {
        (0..=need).map(|k| &split.d * &prev.start_jet[k] + &f_start[k]).collect()
    } else {
        let q = q_first.expect("grid has at least one piece");
        (0..=need).map(|k| q.eval_derivative(a, k)).collect()
    };

    // Consistency of x0: x0 = A_con x0 + sum_{k=1}^{nu} C_k q^(k-1)(a+).
    let mut rhs = &split.a_con * &x0;
    for k in 1..=nu {
        rhs += &split.c[k] * &q_start[k - 1];
    }
    let residual = (&x0 - &rhs).norm();
    let tolerance = config.tol_consistency * (1.0 + x0.norm().max(rhs.norm()));

    let (start_jet, end_jet) = if use_jets {
        let q_end: Vec<DVector<T>> = (0..=need).map(|k| &split.d * &prev.end_jet[k] + &f_end[k]).collect();
        let v_end = slow.evaluate(b, 0, Side::Left)?;
        (
            solution_jet(split, &q_start, &v_start, jet_order),
            solution_jet(split, &q_end, &v_end, jet_order),
        )
    } else {
        (Vec::new(), Vec::new())
    };

    Ok(Advance {
        segment: SegmentSolution {
            index,
            tau,
            x,
            slow,
            fast,
            consistency_residual: residual,
            start_jet,
            end_jet,
        },
        residual,
        tolerance,
    })
}

fn prev_index<T: Field>(x: &PiecewiseCheb<T>, t: f64) -> usize {
    x.pieces.iter().position(|p| t < p.b).unwrap_or(x.pieces.len() - 1)
}

/// Solves the segment following `prev` (the history when `prev.index` is
/// `0`). Jets are propagated as far as those of `prev` allow.
///
/// Fails with [`DdaeError::InconsistentRestart`] when the end value of
/// `prev` violates the consistency condition.
pub fn solve_segment<T: Field>(
    split: &SplitCoefficients<T>,
    f: &PiecewisePolynomial<T>,
    prev: &SegmentSolution<T>,
    config: &SolverConfig,
) -> Result<SegmentSolution<T>> {
    let nu = split.nu();
    let avail = prev.start_jet.len().min(prev.end_jet.len());
    let jet_order = (avail + 1).saturating_sub(nu.max(1)).min(config.k_max_for(nu));
    let mut colloc = Collocator::new(split.qwf.j.clone(), config.degree);
    let adv = advance(split, f, prev, config, &mut colloc, jet_order)?;
    if !adv.consistent() {
        return Err(DdaeError::InconsistentRestart {
            segment: adv.segment.index,
            time: adv.segment.start(),
            residual: adv.residual,
        });
    }
    Ok(adv.segment)
}

/// Compares derivatives `0..=k_max` of `left` at its end and `right` at
/// its start. Order `k` matches when
/// `|x^(k)(t-) - x^(k)(t+)| <= tol_jump (1 + max |x^(k)(t+-)|)`.
pub fn detect_jumps<T: Field>(
    left: &SegmentSolution<T>,
    right: &SegmentSolution<T>,
    k_max: usize,
    tol_jump: f64,
) -> Result<LedgerEntry<T>> {
    let mut matched = -1;
    let mut jump = None;
    for k in 0..=k_max {
        let l = left.end_derivative(k)?;
        let r = right.start_derivative(k)?;
        let delta = &l - &r;
        if delta.norm() > tol_jump * (1.0 + l.norm().max(r.norm())) {
            jump = Some((k, delta));
            break;
        }
        matched = k as i32;
    }
    let (first_jump_order, jump_vector) = match jump {
        Some((k, d)) => (Some(k), Some(d)),
        None => (None, None),
    };
    Ok(LedgerEntry {
        knot: left.index,
        time: right.start(),
        matched_order: matched,
        first_jump_order,
        jump_norm: jump_vector.as_ref().map_or(0.0, |d| d.norm()),
        jump_vector,
        transformed_jump: None,
        inconsistent_restart: matched == -1,
    })
}

fn ledger_entry<T: Field>(
    split: &SplitCoefficients<T>,
    left: &SegmentSolution<T>,
    right: &SegmentSolution<T>,
    k_max: usize,
    tol_jump: f64,
) -> Result<LedgerEntry<T>> {
    let mut e = detect_jumps(left, right, k_max, tol_jump)?;
    e.transformed_jump = e.jump_vector.as_ref().map(|d| &split.qwf.t_inv * d);
    Ok(e)
}

/// Method of steps on the whole horizon of `sys`.
pub fn method_of_steps<T: Field>(
    sys: &DdaeSystem<T>,
    split: &SplitCoefficients<T>,
    config: &SolverConfig,
) -> Result<StepsOutcome<T>> {
    run_steps(sys, split, config, sys.horizon())
}

pub(crate) fn run_steps<T: Field>(
    sys: &DdaeSystem<T>,
    split: &SplitCoefficients<T>,
    config: &SolverConfig,
    segments: usize,
) -> Result<StepsOutcome<T>> {
    if config.degree < 2 {
        return Err(DdaeError::InvalidArgument("collocation degree must be at least 2".into()));
    }
    let admissible = check_admissible(sys, split)?;
    if !admissible.holds {
        return Err(DdaeError::NotAdmissible { residual: admissible.residual });
    }
    let nu = split.nu();
    let k_max = config.k_max_for(nu);
    let growth = nu.saturating_sub(1);
    let order_for = |i: usize| k_max + segments.saturating_sub(i) * growth;

    let history = history_segment(split, sys.phi(), order_for(0))?;
    let mut ledger = JumpLedger { k_max, tol_jump: config.tol_jump, entries: Vec::new() };
    let mut solved: Vec<SegmentSolution<T>> = Vec::with_capacity(segments);
    let mut colloc = Collocator::new(split.qwf.j.clone(), config.degree);
    let mut breakdown = None;

    for i in 1..=segments {
        let prev = solved.last().unwrap_or(&history);
        let adv = advance(split, sys.f(), prev, config, &mut colloc, order_for(i))?;
        if i > 1 && !adv.consistent() {
            let seg = adv.segment;
            if config.on_inconsistent == OnInconsistent::HardStop {
                return Err(DdaeError::InconsistentRestart { segment: i, time: seg.start(), residual: adv.residual });
            }
            log::warn!(
                "inconsistent restart of segment {i} at t = {} (residual {:.3e})",
                seg.start(),
                adv.residual
            );
            let mut entry = ledger_entry(split, prev, &seg, k_max, config.tol_jump)?;
            let jump = prev.end_derivative(0)? - seg.start_derivative(0)?;
            entry.matched_order = -1;
            entry.first_jump_order = Some(0);
            entry.jump_norm = jump.norm();
            entry.transformed_jump = Some(&split.qwf.t_inv * &jump);
            entry.jump_vector = Some(jump.clone());
            entry.inconsistent_restart = true;
            ledger.entries.push(entry);
            breakdown = Some(Breakdown {
                segment: i,
                time: seg.start(),
                residual: adv.residual,
                tolerance: adv.tolerance,
                jump_vector: jump,
                attempted: seg,
            });
            break;
        }
        ledger.entries.push(ledger_entry(split, prev, &adv.segment, k_max, config.tol_jump)?);
        solved.push(adv.segment);
    }

    Ok(StepsOutcome {
        trajectory: Trajectory { tau: split.tau, n: split.n(), history, segments: solved },
        ledger,
        breakdown,
    })
}

/// Solves the retarded multi-delay equation
/// `z' = J z + sum_{k=0}^{nu_D} D_k z(t - (k+1) tau) + theta(t)` for the
/// slow coordinates. On `[-tau, nu_D tau]` the data is the slow part of
/// the direct method-of-steps solution; the equation is integrated on the
/// remaining segments up to the horizon of `sys`.
pub fn solve_hidden_delay_dde<T: Field>(
    expansion: &HiddenDelayExpansion<T>,
    sys: &DdaeSystem<T>,
    config: &SolverConfig,
) -> Result<Trajectory<T>> {
    let split = crate::model::build_split(sys, &config.policy)?;
    let n_d = split.n_d();
    if expansion.j.nrows() != n_d {
        return Err(DdaeError::DimensionMismatch(format!(
            "expansion has slow dimension {}, system has {n_d}",
            expansion.j.nrows()
        )));
    }
    let tau = sys.tau();
    let m = sys.horizon();
    let nu_d = expansion.nu_d;
    if nu_d >= m {
        return Err(DdaeError::InvalidArgument(format!(
            "horizon {m} does not extend past the initial window of {nu_d} segments"
        )));
    }
    let direct = run_steps(sys, &split, config, nu_d)?;
    if let Some(b) = direct.breakdown {
        return Err(DdaeError::InconsistentRestart { segment: b.segment, time: b.time, residual: b.residual });
    }
    let as_z = |s: &SegmentSolution<T>| SegmentSolution {
        index: s.index,
        tau,
        x: s.slow.clone(),
        slow: s.slow.clone(),
        fast: PiecewiseCheb { pieces: s.slow.pieces.iter().map(|p| ChebSeries::zero(p.a, p.b, 0)).collect() },
        consistency_residual: s.consistency_residual,
        start_jet: Vec::new(),
        end_jet: Vec::new(),
    };
    let history = as_z(&direct.trajectory.history);
    let mut segs: Vec<SegmentSolution<T>> = direct.trajectory.segments.iter().map(as_z).collect();

    let theta = &expansion.theta;
    let mut colloc = Collocator::new(expansion.j.clone(), config.degree);
    let mut extra: Vec<f64> = sys.f().breakpoints();
    extra.extend(theta.breakpoints());
    for i in (nu_d + 1)..=m {
        let prev = segs.last().unwrap_or(&history);
        let a = prev.end();
        let b = a + tau;
        let shifted: Vec<f64> = prev.breakpoints().iter().map(|t| t + tau).collect();
        let grid = merge_grid(shifted, &extra, a, b, tau);
        let mut v0 = prev.x.evaluate(a, 0, Side::Left)?;
        let mut pieces = Vec::with_capacity(grid.len() - 1);
        for w in grid.windows(2) {
            let (sa, sb) = (w[0], w[1]);
            let delayed = |t: f64, side: Side| -> Result<DVector<T>> {
                let mut acc = theta.evaluate(t, 0, side)?;
                for (k, dk) in expansion.d_k.iter().enumerate() {
                    let src = i - k - 1;
                    let seg = if src == 0 { &history } else { &segs[src - 1] };
                    let ts = t - (k + 1) as f64 * tau;
                    acc += dk * seg.x.evaluate(ts.clamp(seg.start(), seg.end()), 0, side)?;
                }
                Ok(acc)
            };
            let p = colloc.p;
            let series = colloc.solve(
                sa,
                sb,
                &v0,
                |node, t| delayed(t, if node == p { Side::Left } else { Side::Right }),
                i,
            )?;
            v0 = series.eval(sb);
            let mut series = series;
            series.chop(config.chop_tol);
            pieces.push(series);
        }
        let x = PiecewiseCheb::new(pieces)?;
        segs.push(SegmentSolution {
            index: i,
            tau,
            slow: x.clone(),
            fast: PiecewiseCheb { pieces: x.pieces.iter().map(|p| ChebSeries::zero(p.a, p.b, 0)).collect() },
            x,
            consistency_residual: 0.0,
            start_jet: Vec::new(),
            end_jet: Vec::new(),
        });
    }
    Ok(Trajectory { tau, n: n_d, history, segments: segs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_split;
    use nalgebra::{dmatrix, dvector};

    fn scalar_poly(start: f64, end: f64, c: &[f64]) -> PiecewisePolynomial<f64> {
        PiecewisePolynomial::from_piece(start, end, c.iter().map(|&x| dvector![x]).collect()).unwrap()
    }

    fn neutral_example(m: usize) -> DdaeSystem<f64> {
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

    fn advanced_example() -> DdaeSystem<f64> {
        let phi = PiecewisePolynomial::from_piece(
            -1.0,
            0.0,
            vec![
                dvector![-8.0 / 3.0 + 4.0 - 1.0, -1.0 / 3.0],
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
            4,
            PiecewisePolynomial::zero(0.0, 4.0, 2).unwrap(),
            phi,
        )
        .unwrap()
    }

    fn solve(sys: &DdaeSystem<f64>, config: &SolverConfig) -> StepsOutcome<f64> {
        let split = build_split(sys, &config.policy).unwrap();
        method_of_steps(sys, &split, config).unwrap()
    }

    /// `x = -x(t - 1) - 1` for `t > 0`, `x = t` before.
    fn zig_zag(t: f64) -> f64 {
        if t <= 0.0 {
            t
        } else {
            -zig_zag(t - 1.0) - 1.0
        }
    }

    #[test]
    fn zig_zag_solution_of_neutral_example() {
        let sys = neutral_example(4);
        let out = solve(&sys, &SolverConfig::default());
        assert!(out.completed());
        assert_eq!(out.trajectory.segments.len(), 4);
        for i in 0..=40 {
            let t = i as f64 * 0.1;
            let x = out.trajectory.eval(t, 0, Side::Right).unwrap()[0];
            assert!((x - zig_zag(t)).abs() < 1e-12, "t={t}");
        }
        assert_eq!(out.ledger.entries.len(), 4);
        for entry in &out.ledger.entries {
            assert_eq!(entry.first_jump_order, Some(1));
            assert!((entry.jump_norm - 2.0).abs() < 1e-10);
        }
    }

    #[test]
    fn advanced_example_breaks_down_at_three() {
        let sys = advanced_example();
        let out = solve(&sys, &SolverConfig::default());
        assert_eq!(out.trajectory.segments.len(), 3);
        let b = out.breakdown.as_ref().unwrap();
        assert_eq!(b.segment, 4);
        assert!((b.time - 3.0).abs() < 1e-14);
        assert!((b.jump_vector[1] - 2.0).abs() < 1e-9);
        for &t in &[0.0, 0.25, 0.9] {
            let x2 = out.trajectory.eval(t, 0, Side::Right).unwrap()[1];
            assert!((x2 - (t * t - 1.0)).abs() < 1e-10);
        }
        let last = out.ledger.entries.last().unwrap();
        assert!(last.inconsistent_restart && last.matched_order == -1);

        let hard = SolverConfig { on_inconsistent: OnInconsistent::HardStop, ..Default::default() };
        let split = build_split(&sys, &hard.policy).unwrap();
        assert!(matches!(
            method_of_steps(&sys, &split, &hard),
            Err(DdaeError::InconsistentRestart { segment: 4, .. })
        ));
    }

    #[test]
    fn non_admissible_history_is_rejected() {
        let sys = neutral_example(2).with_history(scalar_poly(-1.0, 0.0, &[-0.5, 1.0])).unwrap();
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        let err = method_of_steps(&sys, &split, &SolverConfig::default());
        assert!(matches!(err, Err(DdaeError::NotAdmissible { .. })));
    }

    #[test]
    fn ode_collocation_is_spectrally_accurate() {
        // x' = -x on segments with D = 0 and x = 1 on [-1, 0].
        let sys = DdaeSystem::new(
            dmatrix![1.0],
            dmatrix![-1.0],
            dmatrix![0.0],
            1.0,
            3,
            scalar_poly(0.0, 3.0, &[0.0]),
            scalar_poly(-1.0, 0.0, &[1.0]),
        )
        .unwrap();
        let out = solve(&sys, &SolverConfig::default());
        for &t in &[0.5, 1.5, 3.0] {
            let x = out.trajectory.eval(t, 0, Side::Left).unwrap()[0];
            assert!((x - (-t).exp()).abs() < 1e-13);
        }
        // Retarded smoothing: orders match further at each knot.
        let m = out.ledger.matched_orders();
        assert_eq!(m[0], 0);
        assert!(m[1] >= 1);
    }

    #[test]
    fn identical_segments_match_to_k_max() {
        let sys = neutral_example(1);
        let out = solve(&sys, &SolverConfig::default());
        let seg = &out.trajectory.segments[0];
        // A copy whose start data equals the end data of the original.
        let mut moved = seg.clone();
        moved.x = seg.x.shifted(seg.tau);
        moved.start_jet = seg.end_jet.clone();
        let e = detect_jumps(seg, &moved, 3, 1e-6).unwrap();
        assert_eq!(e.matched_order, 3);
        assert_eq!(e.first_jump_order, None);
    }

    #[test]
    fn collocation_residual_is_small() {
        let sys = DdaeSystem::new(
            dmatrix![1.0, 0.0, 0.0; 0.0, 0.0, 1.0; 0.0, 0.0, 0.0],
            dmatrix![-0.5, 1.0, 0.0; 0.0, 1.0, 0.0; 0.0, 0.0, 1.0],
            dmatrix![0.2, 0.0, 0.1; 0.3, 0.0, 0.0; 0.0, 0.0, 0.0],
            0.7,
            3,
            PiecewisePolynomial::from_piece(0.0, 2.1, vec![dvector![1.0, 0.0, 0.5], dvector![0.0, 1.0, 0.0]]).unwrap(),
            // x3 = -q3 = -0.5, x2 = -q3' - q2 with q2 = 0.3 x1(t - tau) + t
            PiecewisePolynomial::constant(-0.7, 0.0, dvector![1.0, -0.3, -0.5]).unwrap(),
        )
        .unwrap();
        let split = build_split(&sys, &RankPolicy::default()).unwrap();
        let out = method_of_steps(&sys, &split, &SolverConfig::default()).unwrap();
        assert!(out.completed());
        let tr = &out.trajectory;
        for seg in &tr.segments {
            for piece in &seg.x.pieces {
                for t in cgl_nodes(piece.a, piece.b, 12) {
                    let x = piece.eval(t);
                    let dx = piece.eval_derivative(t, 1);
                    let xd = tr.eval(t - 0.7, 0, Side::Right).unwrap();
                    let q = sys.d() * xd + sys.f().evaluate(t, 0, Side::Right).unwrap();
                    let r = sys.e() * dx - sys.a() * x - q;
                    assert!(r.norm() < 1e-9, "residual {}", r.norm());
                }
            }
        }
    }

    #[test]
    fn grid_merges_close_points() {
        let g = merge_grid(vec![0.0, 0.5, 0.5 + 1e-15, 1.0], &[0.25, 2.0], 0.0, 1.0, 1.0);
        assert_eq!(g, vec![0.0, 0.25, 0.5, 1.0]);
    }
}
