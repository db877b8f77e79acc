//! Chebyshev series on intervals, used for the segment solutions of the
//! method of steps.
//!
//! Values are sampled at the Chebyshev-Gauss-Lobatto points
//! `x_j = -cos(j pi / p)`, `j = 0..=p` (ascending), converted to
//! coefficients by a direct cosine transform, evaluated with Clenshaw's
//! recurrence and differentiated with the coefficient recurrence
//! `c'_{k-1} = c'_{k+1} + 2 k c_k`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::poly::{PolyPiece, Side};
use crate::{DdaeError, Field, Result};

/// Ascending Chebyshev-Gauss-Lobatto points on `[-1, 1]`.
pub fn cgl_points(p: usize) -> Vec<f64> {
    if p == 0 {
        return vec![0.0];
    }
    (0..=p).map(|j| -(j as f64 * PI / p as f64).cos()).collect()
}

/// CGL points mapped to `[a, b]`. The end points are exact.
pub fn cgl_nodes(a: f64, b: f64, p: usize) -> Vec<f64> {
    let mut out: Vec<f64> = cgl_points(p)
        .into_iter()
        .map(|x| 0.5 * (a + b) + 0.5 * (b - a) * x)
        .collect();
    if p > 0 {
        out[0] = a;
        out[p] = b;
    }
    out
}

/// Spectral differentiation matrix on the ascending CGL points of `[-1, 1]`,
/// built from barycentric weights.
pub fn differentiation_matrix(p: usize) -> DMatrix<f64> {
    let x = cgl_points(p);
    let w: Vec<f64> = (0..=p)
        .map(|j| {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == p {
                0.5 * sign
            } else {
                sign
            }
        })
        .collect();
    let mut d = DMatrix::zeros(p + 1, p + 1);
    for i in 0..=p {
        let mut diag = 0.0;
        for j in 0..=p {
            if i != j {
                let v = (w[j] / w[i]) / (x[i] - x[j]);
                d[(i, j)] = v;
                diag -= v;
            }
        }
        d[(i, i)] = diag;
    }
    d
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChebSeries<T: Field> {
    pub a: f64,
    pub b: f64,
    pub coeffs: Vec<DVector<T>>,
}

impl<T: Field> ChebSeries<T> {
    pub fn zero(a: f64, b: f64, dim: usize) -> Self {
        Self { a, b, coeffs: vec![DVector::zeros(dim)] }
    }

    pub fn dim(&self) -> usize {
        self.coeffs[0].len()
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// Interpolant through values at the CGL nodes of `[a, b]`.
    pub fn from_values(a: f64, b: f64, values: &[DVector<T>]) -> Self {
        let p = values.len() - 1;
        if p == 0 {
            return Self { a, b, coeffs: vec![values[0].clone()] };
        }
        let dim = values[0].len();
        let pf = p as f64;
        let coeffs = (0..=p)
            .map(|k| {
                let mut c = DVector::zeros(dim);
                for (j, v) in values.iter().enumerate() {
                    let mut weight = (((k * j) % (2 * p)) as f64 * PI / pf).cos();
                    if k % 2 == 1 {
                        weight = -weight;
                    }
                    if j == 0 || j == p {
                        weight *= 0.5;
                    }
                    c += v * T::from_real(weight);
                }
                let mut scale = 2.0 / pf;
                if k == 0 || k == p {
                    scale *= 0.5;
                }
                c * T::from_real(scale)
            })
            .collect();
        Self { a, b, coeffs }
    }

    pub fn interpolate(a: f64, b: f64, p: usize, f: impl Fn(f64) -> DVector<T>) -> Self {
        let values: Vec<DVector<T>> = cgl_nodes(a, b, p).into_iter().map(f).collect();
        Self::from_values(a, b, &values)
    }

    /// Exact conversion of a monomial piece restricted to `[a, b]`.
    pub fn from_poly_piece(piece: &PolyPiece<T>, a: f64, b: f64) -> Self {
        let p = piece.degree().max(1);
        let mut s = Self::interpolate(a, b, p, |t| piece.eval(t, 0));
        s.chop(1e-15);
        s
    }

    fn local(&self, t: f64) -> f64 {
        (2.0 * t - self.a - self.b) / (self.b - self.a)
    }

    pub fn eval(&self, t: f64) -> DVector<T> {
        let x = T::from_real(self.local(t));
        let two_x = x + x;
        let dim = self.dim();
        let mut b1 = DVector::zeros(dim);
        let mut b2 = DVector::zeros(dim);
        for c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + &b1 * two_x - &b2;
            b2 = b1;
            b1 = b0;
        }
        &self.coeffs[0] + b1 * x - b2
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        let dim = self.dim();
        if n == 0 {
            return Self::zero(self.a, self.b, dim);
        }
        let mut d = vec![DVector::zeros(dim); n];
        for k in (1..=n).rev() {
            let mut v = &self.coeffs[k] * T::from_real(2.0 * k as f64);
            if k + 1 < n {
                v += &d[k + 1];
            }
            d[k - 1] = v;
        }
        d[0] *= T::from_real(0.5);
        let scale = T::from_real(2.0 / (self.b - self.a));
        for c in &mut d {
            *c *= scale;
        }
        Self { a: self.a, b: self.b, coeffs: d }
    }

    pub fn eval_derivative(&self, t: f64, order: usize) -> DVector<T> {
        let mut s = self.clone();
        for _ in 0..order {
            s = s.derivative();
        }
        s.eval(t)
    }

    /// Drops trailing coefficients whose norm is below `rel` times the
    /// largest coefficient norm.
    pub fn chop(&mut self, rel: f64) {
        let max = self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let thr = rel * max;
        while self.coeffs.len() > 1 && self.coeffs.last().is_some_and(|c| c.norm() <= thr) {
            self.coeffs.pop();
        }
    }

    pub fn map_matrix(&self, m: &DMatrix<T>) -> Self {
        Self { a: self.a, b: self.b, coeffs: self.coeffs.iter().map(|c| m * c).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let dim = self.dim();
        let coeffs = (0..len)
            .map(|k| {
                let mut v = DVector::zeros(dim);
                if let Some(c) = self.coeffs.get(k) {
                    v += c;
                }
                if let Some(c) = other.coeffs.get(k) {
                    v += c;
                }
                v
            })
            .collect();
        Self { a: self.a, b: self.b, coeffs }
    }

    pub fn scale(&self, c: T) -> Self {
        Self { a: self.a, b: self.b, coeffs: self.coeffs.iter().map(|v| v * c).collect() }
    }

    pub fn rows(&self, start: usize, len: usize) -> Self {
        Self {
            a: self.a,
            b: self.b,
            coeffs: self.coeffs.iter().map(|c| c.rows(start, len).into_owned()).collect(),
        }
    }

    /// Same function on the interval moved by `delta`.
    pub fn shifted(&self, delta: f64) -> Self {
        Self { a: self.a + delta, b: self.b + delta, coeffs: self.coeffs.clone() }
    }
}

/// Contiguous Chebyshev series on consecutive sub-intervals.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseCheb<T: Field> {
    pub pieces: Vec<ChebSeries<T>>,
}

impl<T: Field> PiecewiseCheb<T> {
    pub fn new(pieces: Vec<ChebSeries<T>>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(DdaeError::InvalidPiecewise("no Chebyshev pieces".into()));
        }
        Ok(Self { pieces })
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    pub fn start(&self) -> f64 {
        self.pieces[0].a
    }

    pub fn end(&self) -> f64 {
        self.pieces[self.pieces.len() - 1].b
    }

    fn index(&self, t: f64, side: Side) -> Result<usize> {
        let (a, b) = (self.start(), self.end());
        let eps = 1e-12 * (1.0 + a.abs() + b.abs());
        if !(t >= a - eps && t <= b + eps) {
            return Err(DdaeError::OutOfDomain { t, start: a, end: b });
        }
        let last = self.pieces.len() - 1;
        Ok(match side {
            Side::Right => self.pieces.iter().position(|p| t < p.b - eps).unwrap_or(last),
            Side::Left => self.pieces.iter().position(|p| t <= p.b + eps).unwrap_or(last),
        })
    }

    pub fn evaluate(&self, t: f64, order: usize, side: Side) -> Result<DVector<T>> {
        let k = self.index(t, side)?;
        Ok(self.pieces[k].eval_derivative(t, order))
    }

    pub fn derivative(&self) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.derivative()).collect() }
    }

    pub fn map_matrix(&self, m: &DMatrix<T>) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.map_matrix(m)).collect() }
    }

    pub fn rows(&self, start: usize, len: usize) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.rows(start, len)).collect() }
    }

    /// Piecewise sum; the two functions must share their sub-intervals.
    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.pieces.len(), other.pieces.len());
        Self { pieces: self.pieces.iter().zip(&other.pieces).map(|(p, q)| p.add(q)).collect() }
    }

    pub fn shifted(&self, delta: f64) -> Self {
        Self { pieces: self.pieces.iter().map(|p| p.shifted(delta)).collect() }
    }

    /// Vertical concatenation `[self; other]` on shared sub-intervals.
    pub fn vstack(&self, other: &Self) -> Self {
        let pieces = self
            .pieces
            .iter()
            .zip(&other.pieces)
            .map(|(p, q)| {
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
            })
            .collect();
        Self { pieces }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dvector;

    #[test]
    fn nodes_are_ascending_with_exact_ends() {
        let x = cgl_nodes(0.0, 2.0, 8);
        assert_eq!(x[0], 0.0);
        assert_eq!(x[8], 2.0);
        assert!(x.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let f = |t: f64| dvector![1.0 - 2.0 * t + 3.0 * t.powi(4), t.powi(7)];
        let s = ChebSeries::interpolate(0.5, 2.0, 12, f);
        for &t in &[0.5, 0.77, 1.3, 2.0] {
            assert!((s.eval(t) - f(t)).norm() < 1e-12);
        }
        let d = s.derivative();
        for &t in &[0.5f64, 1.1, 2.0] {
            let expected = dvector![-2.0 + 12.0 * t.powi(3), 7.0 * t.powi(6)];
            assert!((d.eval(t) - &expected).norm() < 1e-10 * (1.0 + expected.norm()));
        }
        let dd = s.eval_derivative(1.0, 7)[1];
        assert!((dd - 5040.0).abs() < 1e-6 * 5040.0);
    }

    #[test]
    fn differentiation_matrix_is_exact_on_polynomials() {
        let p = 10;
        let d = differentiation_matrix(p);
        let x = cgl_points(p);
        let f = DVector::from_iterator(p + 1, x.iter().map(|&t| t.powi(5) - t));
        let df = &d * f;
        for (i, &t) in x.iter().enumerate() {
            assert!((df[i] - (5.0 * t.powi(4) - 1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn exponential_converges_spectrally() {
        let s = ChebSeries::interpolate(0.0, 1.0, 24, |t| dvector![(-3.0 * t).exp()]);
        let err = (s.eval(0.3)[0] - (-0.9f64).exp()).abs();
        assert!(err < 1e-14);
    }

    #[test]
    fn chop_removes_negligible_tail() {
        let mut s = ChebSeries::interpolate(0.0, 1.0, 30, |t| dvector![t * t]);
        s.chop(1e-13);
        assert_eq!(s.degree(), 2);
    }

    #[test]
    fn piecewise_sides() {
        let left = ChebSeries::interpolate(0.0, 1.0, 1, |t| dvector![t]);
        let right = ChebSeries::interpolate(1.0, 2.0, 1, |_| dvector![7.0]);
        let pw = PiecewiseCheb::new(vec![left, right]).unwrap();
        assert!((pw.evaluate(1.0, 0, Side::Left).unwrap()[0] - 1.0).abs() < 1e-15);
        assert!((pw.evaluate(1.0, 0, Side::Right).unwrap()[0] - 7.0).abs() < 1e-15);
        assert!(pw.evaluate(3.0, 0, Side::Right).is_err());
    }
}
