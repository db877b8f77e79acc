//! Piecewise polynomial vector functions in a local monomial basis.
//!
//! Each piece stores coefficient vectors `c_0, c_1, ..` of
//! `p(t) = sum_k c_k (t - start)^k`. Differentiation is exact
//! (shift-and-scale of the coefficients), which is what history and
//! inhomogeneity data need: every consistency and splicing check consumes
//! derivatives of several orders.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::{DdaeError, Field, Result};

/// Pieces above this degree are rejected.
pub const MAX_DEGREE: usize = 64;
/// Monomial coefficients above this degree are poorly conditioned.
const WARN_DEGREE: usize = 24;

/// Which one-sided limit to take at a knot. The right limit is the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Side {
    Left,
    #[default]
    Right,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolyPiece<T: Field> {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<DVector<T>>,
}

impl<T: Field> PolyPiece<T> {
    pub fn new(start: f64, end: f64, coeffs: Vec<DVector<T>>) -> Self {
        Self { start, end, coeffs }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn dim(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.len())
    }

    /// Evaluates the `order`-th derivative at `t` without a domain check.
    pub fn eval(&self, t: f64, order: usize) -> DVector<T> {
        let n = self.dim();
        let mut out = DVector::zeros(n);
        if order >= self.coeffs.len() {
            return out;
        }
        let x = T::from_real(t - self.start);
        for k in (order..self.coeffs.len()).rev() {
            let factor = falling_factorial(k, order);
            out = out * x + &self.coeffs[k] * T::from_real(factor);
        }
        out
    }

    pub fn derivative(&self) -> Self {
        let n = self.dim();
        let coeffs = if self.coeffs.len() <= 1 {
            vec![DVector::zeros(n)]
        } else {
            (1..self.coeffs.len())
                .map(|k| &self.coeffs[k] * T::from_real(k as f64))
                .collect()
        };
        Self { start: self.start, end: self.end, coeffs }
    }

    /// Same polynomial expressed in powers of `t - new_start`.
    pub fn rebased(&self, new_start: f64) -> Vec<DVector<T>> {
        let d = T::from_real(new_start - self.start);
        let mut c = self.coeffs.clone();
        let deg = c.len().saturating_sub(1);
        for i in 0..deg {
            for j in (i..deg).rev() {
                let next = c[j + 1].clone();
                c[j] += next * d;
            }
        }
        c
    }
}

fn falling_factorial(k: usize, order: usize) -> f64 {
    ((k - order + 1)..=k).fold(1.0, |acc, j| acc * j as f64)
}

/// Absolute slack used for domain and contiguity checks.
fn slack(a: f64, b: f64) -> f64 {
    1e-12 * (1.0 + a.abs() + b.abs())
}

#[derive(Clone, Debug, PartialEq)]
pub struct PiecewisePolynomial<T: Field> {
    pieces: Vec<PolyPiece<T>>,
    dim: usize,
}

impl<T: Field> PiecewisePolynomial<T> {
    pub fn new(pieces: Vec<PolyPiece<T>>, dim: usize) -> Result<Self> {
        if pieces.is_empty() {
            return Err(DdaeError::InvalidPiecewise("no pieces".into()));
        }
        let mut pieces = pieces;
        for (k, piece) in pieces.iter().enumerate() {
            if !(piece.start.is_finite() && piece.end.is_finite() && piece.start < piece.end) {
                return Err(DdaeError::InvalidPiecewise(format!(
                    "piece {k} has invalid interval [{}, {}]",
                    piece.start, piece.end
                )));
            }
            if piece.coeffs.is_empty() {
                return Err(DdaeError::InvalidPiecewise(format!("piece {k} has no coefficients")));
            }
            if piece.coeffs.iter().any(|c| c.len() != dim) {
                return Err(DdaeError::InvalidPiecewise(format!(
                    "piece {k} has coefficient vectors of the wrong length (expected {dim})"
                )));
            }
            if piece.degree() > MAX_DEGREE {
                return Err(DdaeError::InvalidPiecewise(format!(
                    "piece {k} has degree {} above the cap {MAX_DEGREE}",
                    piece.degree()
                )));
            }
            if piece.degree() > WARN_DEGREE {
                log::warn!("piece {k} has degree {}; monomial coefficients may be ill-conditioned", piece.degree());
            }
        }
        for k in 1..pieces.len() {
            let prev_end = pieces[k - 1].end;
            if (pieces[k].start - prev_end).abs() > slack(prev_end, pieces[k].start) {
                return Err(DdaeError::InvalidPiecewise(format!(
                    "pieces {} and {k} are not contiguous ({} != {})",
                    k - 1,
                    prev_end,
                    pieces[k].start
                )));
            }
            pieces[k].start = prev_end;
        }
        Ok(Self { pieces, dim })
    }

    pub fn from_piece(start: f64, end: f64, coeffs: Vec<DVector<T>>) -> Result<Self> {
        let dim = coeffs.first().map_or(0, |c| c.len());
        Self::new(vec![PolyPiece::new(start, end, coeffs)], dim)
    }

    pub fn constant(start: f64, end: f64, value: DVector<T>) -> Result<Self> {
        Self::from_piece(start, end, vec![value])
    }

    pub fn zero(start: f64, end: f64, dim: usize) -> Result<Self> {
        Self::from_piece(start, end, vec![DVector::zeros(dim)])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pieces(&self) -> &[PolyPiece<T>] {
        &self.pieces
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].start
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].end
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.start(), self.end())
    }

    /// All piece boundaries including both domain ends.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut out: Vec<f64> = self.pieces.iter().map(|p| p.start).collect();
        out.push(self.end());
        out
    }

    pub fn max_degree(&self) -> usize {
        self.pieces.iter().map(|p| p.degree()).max().unwrap_or(0)
    }

    /// Index of the piece used for `t`; at an interior knot `side` picks the
    /// piece ending (`Left`) or starting (`Right`) there.
    pub fn piece_index(&self, t: f64, side: Side) -> Result<usize> {
        let (a, b) = self.domain();
        let eps = slack(a, b);
        if !(t >= a - eps && t <= b + eps) {
            return Err(DdaeError::OutOfDomain { t, start: a, end: b });
        }
        let last = self.pieces.len() - 1;
        let idx = match side {
            Side::Right => self
                .pieces
                .iter()
                .position(|p| t < p.end - slack(p.end, t) * 0.5)
                .unwrap_or(last),
            Side::Left => self
                .pieces
                .iter()
                .position(|p| t <= p.end + slack(p.end, t) * 0.5)
                .unwrap_or(last),
        };
        Ok(idx)
    }

    /// Derivative of order `order` at `t`; `side` selects the one-sided limit
    /// at interior knots.
    pub fn evaluate(&self, t: f64, order: usize, side: Side) -> Result<DVector<T>> {
        let k = self.piece_index(t, side)?;
        Ok(self.pieces[k].eval(t, order))
    }

    pub fn derivative(&self, order: usize) -> Self {
        let mut out = self.clone();
        for _ in 0..order {
            out.pieces = out.pieces.iter().map(|p| p.derivative()).collect();
        }
        out
    }

    /// Applies a constant matrix to every coefficient vector.
    pub fn map_matrix(&self, m: &DMatrix<T>) -> Result<Self> {
        if m.ncols() != self.dim {
            return Err(DdaeError::DimensionMismatch(format!(
                "matrix has {} columns, function has dimension {}",
                m.ncols(),
                self.dim
            )));
        }
        let pieces = self
            .pieces
            .iter()
            .map(|p| PolyPiece::new(p.start, p.end, p.coeffs.iter().map(|c| m * c).collect()))
            .collect();
        Ok(Self { pieces, dim: m.nrows() })
    }

    /// Selects the components in `rows`.
    pub fn rows(&self, rows: Range<usize>) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| {
                let coeffs = p.coeffs.iter().map(|c| c.rows(rows.start, rows.len()).into_owned()).collect();
                PolyPiece::new(p.start, p.end, coeffs)
            })
            .collect();
        Self { pieces, dim: rows.len() }
    }

    pub fn scale(&self, c: T) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| PolyPiece::new(p.start, p.end, p.coeffs.iter().map(|v| v * c).collect()))
            .collect();
        Self { pieces, dim: self.dim }
    }

    /// `t -> self(t - delta)`, defined on the domain moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| PolyPiece::new(p.start + delta, p.end + delta, p.coeffs.clone()))
            .collect();
        Self { pieces, dim: self.dim }
    }

    /// Splits pieces at the given points; points outside the open domain are
    /// ignored.
    pub fn refine(&self, points: &[f64]) -> Self {
        let mut pieces = Vec::new();
        for p in &self.pieces {
            let mut cuts: Vec<f64> = points
                .iter()
                .copied()
                .filter(|&x| x > p.start + slack(p.start, x) && x < p.end - slack(p.end, x))
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|a, b| (*a - *b).abs() <= slack(*a, *b));
            let mut lo = p.start;
            for &c in cuts.iter().chain(std::iter::once(&p.end)) {
                pieces.push(PolyPiece::new(lo, c, p.rebased(lo)));
                lo = c;
            }
        }
        Self { pieces, dim: self.dim }
    }

    pub fn restrict(&self, a: f64, b: f64) -> Result<Self> {
        let (lo, hi) = self.domain();
        let eps = slack(lo, hi);
        if !(a < b && a >= lo - eps && b <= hi + eps) {
            return Err(DdaeError::OutOfDomain { t: if a < lo { a } else { b }, start: lo, end: hi });
        }
        let refined = self.refine(&[a, b]);
        let pieces: Vec<PolyPiece<T>> = refined
            .pieces
            .into_iter()
            .filter(|p| p.end > a + slack(a, p.end) && p.start < b - slack(b, p.start))
            .collect();
        let mut out = Self { pieces, dim: self.dim };
        if out.pieces.is_empty() {
            // [a, b] lies within one slack of a single knot; fall back to the
            // containing piece.
            let k = self.piece_index(0.5 * (a + b), Side::Right)?;
            let p = &self.pieces[k];
            out.pieces.push(PolyPiece::new(a, b, p.rebased(a)));
        }
        let first = &mut out.pieces[0];
        if first.start != a {
            first.coeffs = first.rebased(a);
            first.start = a;
        }
        let last = out.pieces.len() - 1;
        out.pieces[last].end = b;
        Ok(out)
    }

    /// Pointwise sum; both functions must live on the same domain.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(DdaeError::DimensionMismatch(format!(
                "cannot add functions of dimension {} and {}",
                self.dim, other.dim
            )));
        }
        let (a, b) = self.domain();
        let (c, d) = other.domain();
        if (a - c).abs() > slack(a, c) || (b - d).abs() > slack(b, d) {
            return Err(DdaeError::InvalidPiecewise(format!(
                "cannot add functions on [{a}, {b}] and [{c}, {d}]"
            )));
        }
        let left = self.refine(&other.breakpoints());
        let right = other.refine(&self.breakpoints());
        if left.pieces.len() != right.pieces.len() {
            return Err(DdaeError::InvalidPiecewise("knot refinement mismatch".into()));
        }
        let pieces = left
            .pieces
            .iter()
            .zip(&right.pieces)
            .map(|(p, q)| {
                let len = p.coeffs.len().max(q.coeffs.len());
                let coeffs = (0..len)
                    .map(|k| {
                        let mut v = DVector::zeros(self.dim);
                        if let Some(x) = p.coeffs.get(k) {
                            v += x;
                        }
                        if let Some(x) = q.coeffs.get(k) {
                            v += x;
                        }
                        v
                    })
                    .collect();
                PolyPiece::new(p.start, p.end, coeffs)
            })
            .collect();
        Self::new(pieces, self.dim)
    }

    /// Joins `other`, which must start where `self` ends.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(DdaeError::DimensionMismatch("concat of different dimensions".into()));
        }
        let mut pieces = self.pieces.clone();
        pieces.extend(other.pieces.iter().cloned());
        Self::new(pieces, self.dim)
    }

    /// Stacks `self` on top of `other` (same domain).
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        let n1 = self.dim;
        let n2 = other.dim;
        let mut top = DMatrix::zeros(n1 + n2, n1);
        top.view_mut((0, 0), (n1, n1)).fill_with_identity();
        let mut bottom = DMatrix::zeros(n1 + n2, n2);
        bottom.view_mut((n1, 0), (n2, n2)).fill_with_identity();
        self.map_matrix(&top)?.add(&other.map_matrix(&bottom)?)
    }
}
