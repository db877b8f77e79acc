//! Characteristic roots of `det(lambda E - A - exp(-lambda tau) D)` and the
//! exponential-stability verdict.
//!
//! Roots are located by Newton's method started from the local minima of
//! `log |h|` on a grid over a bounded search box. The spectral abscissa is
//! the largest real part found; roots close to the box edge make the
//! estimate box-limited.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::classification::{classify, ClassificationReport, PropagationKind};
use crate::model::{build_split, DdaeSystem};
use crate::{DdaeError, Field, Result};

/// `h(lambda)`, `h'(lambda)` and the Newton step `h / h'`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CharValue {
    pub value: Complex64,
    pub derivative: Complex64,
    /// `ln |h|` from the pivots, finite-safe for huge or tiny values.
    pub log_abs: f64,
    /// `1 / tr(M^-1 M')`; `None` when `M` is exactly singular.
    pub newton_step: Option<Complex64>,
}

struct CharMatrices {
    e: DMatrix<Complex64>,
    a: DMatrix<Complex64>,
    d: DMatrix<Complex64>,
    tau: f64,
}

impl CharMatrices {
    fn new<T: Field>(sys: &DdaeSystem<T>) -> Self {
        Self {
            e: sys.e().map(|x| x.to_c64()),
            a: sys.a().map(|x| x.to_c64()),
            d: sys.d().map(|x| x.to_c64()),
            tau: sys.tau(),
        }
    }

    fn eval(&self, lambda: Complex64) -> CharValue {
        let n = self.e.nrows();
        let decay = (-lambda * self.tau).exp();
        let m = &self.e * lambda - &self.a - &self.d * decay;
        let dm = &self.e + &self.d * (decay * self.tau);
        let lu = m.lu();
        let value = lu.determinant();
        let log_abs = (0..n).map(|i| lu.u()[(i, i)].norm().ln()).sum();
        match lu.solve(&dm) {
            Some(x) if value != Complex64::new(0.0, 0.0) => {
                let trace = x.trace();
                let newton_step = (trace != Complex64::new(0.0, 0.0)).then(|| trace.inv());
                CharValue { value, derivative: value * trace, log_abs, newton_step }
            }
            _ => CharValue {
                value: Complex64::new(0.0, 0.0),
                derivative: Complex64::new(0.0, 0.0),
                log_abs: f64::NEG_INFINITY,
                newton_step: None,
            },
        }
    }

    /// Acceptance threshold `1e-8 (1 + |l| |E| + |A| + |e^{-l tau}| |D|)^n`.
    fn tolerance(&self, lambda: Complex64) -> f64 {
        let n = self.e.nrows() as i32;
        let decay = (-lambda * self.tau).exp().norm();
        1e-8 * (1.0 + lambda.norm() * self.e.norm() + self.a.norm() + decay * self.d.norm()).powi(n)
    }
}

/// `det(lambda E - A - exp(-lambda tau) D)` with its derivative
/// `h' = h tr(M^-1 (E + tau exp(-lambda tau) D))`.
pub fn char_function<T: Field>(sys: &DdaeSystem<T>, lambda: Complex64) -> CharValue {
    CharMatrices::new(sys).eval(lambda)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchBox {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    /// Grid cells along the real axis.
    pub n_re: usize,
    /// Grid cells along the imaginary axis.
    pub n_im: usize,
}

impl SearchBox {
    /// `Re in [-10, 5] (1 + |A| + |D|) / (1 + |E|)`, `Im in [0, 20 pi / tau]`
    /// (symmetric for complex data), 80 x 80 cells.
    pub fn default_for<T: Field>(sys: &DdaeSystem<T>) -> Self {
        let scale = (1.0 + sys.a().norm() + sys.d().norm()) / (1.0 + sys.e().norm());
        let im_max = 20.0 * std::f64::consts::PI / sys.tau();
        Self {
            re_min: -10.0 * scale,
            re_max: 5.0 * scale,
            im_min: if T::IS_COMPLEX { -im_max } else { 0.0 },
            im_max,
            n_re: 80,
            n_im: 80,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.re_min < self.re_max && self.im_min < self.im_max && self.n_re >= 2 && self.n_im >= 2;
        if !ok || ![self.re_min, self.re_max, self.im_min, self.im_max].iter().all(|x| x.is_finite()) {
            return Err(DdaeError::InvalidArgument(format!("invalid search box {self:?}")));
        }
        Ok(())
    }

    fn cell(&self) -> (f64, f64) {
        ((self.re_max - self.re_min) / self.n_re as f64, (self.im_max - self.im_min) / self.n_im as f64)
    }
}

/// Whether the stability statement applies to the system at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityGate {
    Applicable,
    NotApplicableDeSmoothing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityReport {
    pub alpha: f64,
    /// Roots within `1e-6 (1 + |alpha|)` of `alpha`, with `|h|`.
    pub rightmost_roots: Vec<(Complex64, f64)>,
    /// All accepted roots, sorted by decreasing real part.
    pub roots: Vec<(Complex64, f64)>,
    pub gate: StabilityGate,
    pub search_box: SearchBox,
    /// A rightmost root lies within two grid cells of an open edge of the
    /// box, so roots further out may have been missed.
    pub box_limited: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    /// `|alpha| <= margin`.
    Marginal,
    InconclusiveDeSmoothing,
    InconclusiveBox,
}

impl StabilityVerdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Stable => "stable",
            Self::Unstable => "unstable",
            Self::Marginal => "marginal",
            Self::InconclusiveDeSmoothing => "inconclusive_de_smoothing",
            Self::InconclusiveBox => "inconclusive_box",
        }
    }
}

const NEWTON_ITERS: usize = 60;

fn newton(ch: &CharMatrices, seed: Complex64, bx: &SearchBox) -> Option<(Complex64, f64)> {
    let (dx, dy) = bx.cell();
    let max_step = 4.0 * dx.hypot(dy);
    let mut lambda = seed;
    for _ in 0..NEWTON_ITERS {
        let v = ch.eval(lambda);
        let Some(step) = v.newton_step else {
            return Some((lambda, 0.0));
        };
        let step = if step.norm() > max_step { step * (max_step / step.norm()) } else { step };
        lambda -= step;
        let outside = lambda.re < bx.re_min - max_step
            || lambda.re > bx.re_max + max_step
            || lambda.im.abs() > bx.im_max.abs().max(bx.im_min.abs()) + max_step;
        if outside || !lambda.re.is_finite() || !lambda.im.is_finite() {
            return None;
        }
        if step.norm() <= 1e-14 * (1.0 + lambda.norm()) {
            break;
        }
    }
    let residual = ch.eval(lambda).value.norm();
    (residual <= ch.tolerance(lambda)).then_some((lambda, residual))
}

/// Locates the characteristic roots in the search box and estimates the
/// spectral abscissa.
pub fn spectral_abscissa<T: Field>(sys: &DdaeSystem<T>, search_box: &SearchBox) -> Result<StabilityReport> {
    search_box.validate()?;
    let ch = CharMatrices::new(sys);
    let bx = search_box;
    let (dx, dy) = bx.cell();
    let (nr, ni) = (bx.n_re + 1, bx.n_im + 1);
    let point = |i: usize, j: usize| Complex64::new(bx.re_min + i as f64 * dx, bx.im_min + j as f64 * dy);
    let logs: Vec<f64> = (0..nr * ni).map(|k| ch.eval(point(k / ni, k % ni)).log_abs).collect();
    let at = |i: usize, j: usize| logs[i * ni + j];

    let mut seeds = Vec::new();
    for i in 0..nr {
        for j in 0..ni {
            let c = at(i, j);
            let mut is_min = true;
            'nb: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ii, jj) = (i as i64 + di, j as i64 + dj);
                    if ii < 0 || jj < 0 || ii >= nr as i64 || jj >= ni as i64 {
                        continue;
                    }
                    if at(ii as usize, jj as usize) < c {
                        is_min = false;
                        break 'nb;
                    }
                }
            }
            if is_min {
                seeds.push(point(i, j));
            }
        }
    }

    let mut found: Vec<(Complex64, f64)> = seeds
        .iter()
        .filter_map(|&s| newton(&ch, s, bx))
        .map(|(mut l, r)| {
            if !T::IS_COMPLEX {
                if l.im < 0.0 {
                    l = l.conj();
                }
                if l.im.abs() <= 1e-10 * (1.0 + l.norm()) {
                    l.im = 0.0;
                }
            }
            (l, r)
        })
        .filter(|(l, _)| {
            l.re >= bx.re_min - dx && l.re <= bx.re_max + dx && l.im >= bx.im_min - dy && l.im <= bx.im_max + dy
        })
        .collect();
    found.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let mut roots: Vec<(Complex64, f64)> = Vec::new();
    for (l, r) in found {
        if !roots.iter().any(|(m, _)| (l - m).norm() <= 1e-6 * (1.0 + l.norm())) {
            roots.push((l, r));
        }
    }
    if roots.is_empty() {
        return Err(DdaeError::NoRootsFound);
    }
    roots.sort_by(|a, b| b.0.re.total_cmp(&a.0.re).then(a.0.im.total_cmp(&b.0.im)));
    let alpha = roots[0].0.re;
    let rightmost_roots: Vec<(Complex64, f64)> = roots
        .iter()
        .filter(|(l, _)| l.re >= alpha - 1e-6 * (1.0 + alpha.abs()))
        .copied()
        .collect();
    let box_limited = rightmost_roots.iter().any(|(l, _)| {
        bx.re_max - l.re <= 2.0 * dx
            || bx.im_max - l.im <= 2.0 * dy
            || (T::IS_COMPLEX && l.im - bx.im_min <= 2.0 * dy)
    });

    let policy = crate::pencil::RankPolicy::default();
    let split = build_split(sys, &policy)?;
    let class = classify(&split, sys.horizon(), &policy);
    let gate = if class.propagation.kind == PropagationKind::DeSmoothing {
        StabilityGate::NotApplicableDeSmoothing
    } else {
        StabilityGate::Applicable
    };
    Ok(StabilityReport { alpha, rightmost_roots, roots, gate, search_box: *bx, box_limited })
}

/// Exponential stability from the spectral abscissa. Not decided for
/// de-smoothing systems, where `alpha < 0` is not sufficient.
pub fn assess_exponential_stability(
    classification: &ClassificationReport,
    report: &StabilityReport,
    margin: f64,
) -> StabilityVerdict {
    if classification.propagation.kind == PropagationKind::DeSmoothing
        || report.gate == StabilityGate::NotApplicableDeSmoothing
    {
        StabilityVerdict::InconclusiveDeSmoothing
    } else if report.box_limited {
        StabilityVerdict::InconclusiveBox
    } else if report.alpha < -margin {
        StabilityVerdict::Stable
    } else if report.alpha > margin {
        StabilityVerdict::Unstable
    } else {
        StabilityVerdict::Marginal
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pencil::RankPolicy;
    use crate::poly::PiecewisePolynomial;
    use nalgebra::dmatrix;

    fn sys(e: DMatrix<f64>, a: DMatrix<f64>, d: DMatrix<f64>) -> DdaeSystem<f64> {
        let n = e.nrows();
        DdaeSystem::new(
            e,
            a,
            d,
            1.0,
            3,
            PiecewisePolynomial::zero(0.0, 3.0, n).unwrap(),
            PiecewisePolynomial::zero(-1.0, 0.0, n).unwrap(),
        )
        .unwrap()
    }

    fn verdict(s: &DdaeSystem<f64>) -> (StabilityReport, StabilityVerdict) {
        let policy = RankPolicy::default();
        let report = spectral_abscissa(s, &SearchBox::default_for(s)).unwrap();
        let class = classify(&build_split(s, &policy).unwrap(), s.horizon(), &policy);
        let v = assess_exponential_stability(&class, &report, 1e-6);
        (report, v)
    }

    /// Root of `lambda + 2 - exp(-lambda)` on the real axis by bisection.
    fn bisection_root() -> f64 {
        let h = |x: f64| x + 2.0 - (-x).exp();
        let (mut lo, mut hi) = (-1.0, 0.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if h(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn char_function_values() {
        let s = sys(dmatrix![1.0], dmatrix![-2.0], dmatrix![1.0]);
        let v = char_function(&s, Complex64::new(0.0, 0.0));
        assert!((v.value - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        // h'(0) = 1 + exp(0) = 2
        assert!((v.derivative - Complex64::new(2.0, 0.0)).norm() < 1e-14);
        let ode = sys(DMatrix::identity(2, 2), -DMatrix::identity(2, 2), DMatrix::zeros(2, 2));
        assert!(char_function(&ode, Complex64::new(-1.0, 0.0)).value.norm() < 1e-15);
    }

    #[test]
    fn scalar_retarded_equation_is_stable() {
        let s = sys(dmatrix![1.0], dmatrix![-2.0], dmatrix![1.0]);
        let (report, v) = verdict(&s);
        let oracle = bisection_root();
        assert!((oracle + 0.4428544).abs() < 1e-6);
        assert!((report.alpha - oracle).abs() < 1e-10);
        assert_eq!(report.rightmost_roots[0].0.im, 0.0);
        assert_eq!(v, StabilityVerdict::Stable);
    }

    #[test]
    fn ode_abscissa_is_rightmost_eigenvalue() {
        let s = sys(DMatrix::identity(2, 2), dmatrix![-1.0, 3.0; 0.0, -2.0], DMatrix::zeros(2, 2));
        let (report, v) = verdict(&s);
        assert!((report.alpha + 1.0).abs() < 1e-12);
        assert_eq!(report.roots.len(), 2);
        assert_eq!(v, StabilityVerdict::Stable);
    }

    #[test]
    fn neutral_example_is_marginal() {
        let s = sys(dmatrix![0.0], dmatrix![1.0], dmatrix![1.0]);
        let (report, v) = verdict(&s);
        assert!(report.alpha.abs() < 1e-8);
        assert!(!report.box_limited);
        for (l, _) in &report.roots {
            let k = (l.im / std::f64::consts::PI - 1.0) / 2.0;
            assert!((k - k.round()).abs() < 1e-8);
        }
        assert_eq!(v, StabilityVerdict::Marginal);
    }

    #[test]
    fn de_smoothing_input_is_inconclusive() {
        let s = sys(dmatrix![1.0, 0.0; 0.0, 0.0], dmatrix![0.0, 1.0; 1.0, 0.0], dmatrix![0.0, 0.0; 0.0, -1.0]);
        let policy = RankPolicy::default();
        let class = classify(&build_split(&s, &policy).unwrap(), 3, &policy);
        let report = match spectral_abscissa(&s, &SearchBox::default_for(&s)) {
            Ok(r) => r,
            Err(e) => panic!("{e}"),
        };
        assert_eq!(report.gate, StabilityGate::NotApplicableDeSmoothing);
        assert_eq!(assess_exponential_stability(&class, &report, 1e-6), StabilityVerdict::InconclusiveDeSmoothing);
    }

    #[test]
    fn unstable_root_is_detected() {
        let s = sys(dmatrix![1.0], dmatrix![0.5], dmatrix![0.2]);
        let (report, v) = verdict(&s);
        assert!(report.alpha > 0.5);
        assert_eq!(v, StabilityVerdict::Unstable);
    }

    #[test]
    fn rejects_bad_boxes() {
        let s = sys(dmatrix![1.0], dmatrix![-1.0], dmatrix![0.0]);
        let mut bx = SearchBox::default_for(&s);
        bx.re_min = bx.re_max;
        assert!(matches!(spectral_abscissa(&s, &bx), Err(DdaeError::InvalidArgument(_))));
    }
}
