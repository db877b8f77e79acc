//! The problem file: a JSON description of `E x' = A x + D x(t - tau) + f`
//! with polynomial history and inhomogeneity.
//!
//! Matrices are flat row-major arrays of length `dimension^2`. Polynomial
//! pieces hold monomial coefficients in powers of `t - start`, lowest power
//! first, each a vector of length `dimension`. Complex problems write every
//! entry as a `[re, im]` pair.

use ddae_core::{DdaeSystem, Field, PiecewisePolynomial, PolyPiece};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldTag {
    #[default]
    Real,
    Complex,
}

impl FieldTag {
    pub fn of<T: Field>() -> Self {
        if T::IS_COMPLEX {
            Self::Complex
        } else {
            Self::Real
        }
    }
}

/// A number, or a `[re, im]` pair in complex problems.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Real(f64),
    Complex([f64; 2]),
}

impl Scalar {
    pub fn from_field<T: Field>(x: T) -> Self {
        let c = x.to_c64();
        if T::IS_COMPLEX {
            Self::Complex([c.re, c.im])
        } else {
            Self::Real(c.re)
        }
    }

    pub fn to_field<T: Field>(self) -> Result<T, CliError> {
        let (re, im) = match self {
            Self::Real(x) => (x, 0.0),
            Self::Complex([re, im]) => (re, im),
        };
        if !(re.is_finite() && im.is_finite()) {
            return Err(CliError::Input("non-finite number".into()));
        }
        T::from_parts(re, im).ok_or_else(|| CliError::Input("complex entry in a real problem".into()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PieceFile {
    pub start: f64,
    pub end: f64,
    pub coeffs: Vec<Vec<Scalar>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    pub dimension: usize,
    #[serde(rename = "E")]
    pub e: Vec<Scalar>,
    #[serde(rename = "A")]
    pub a: Vec<Scalar>,
    #[serde(rename = "D")]
    pub d: Vec<Scalar>,
    pub tau: f64,
    pub horizon_intervals: usize,
    #[serde(default)]
    pub field: FieldTag,
    pub history: Vec<PieceFile>,
    pub inhomogeneity: Vec<PieceFile>,
}

/// The history part of a problem file, as written by `probe`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryFragment {
    pub field: FieldTag,
    pub history: Vec<PieceFile>,
}

pub fn matrix_out<T: Field>(m: &DMatrix<T>) -> Vec<Scalar> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(Scalar::from_field(m[(i, j)]));
        }
    }
    out
}

pub fn vector_out<T: Field>(v: &DVector<T>) -> Vec<Scalar> {
    v.iter().map(|&x| Scalar::from_field(x)).collect()
}

pub fn pieces_out<T: Field>(p: &PiecewisePolynomial<T>) -> Vec<PieceFile> {
    p.pieces()
        .iter()
        .map(|piece| PieceFile {
            start: piece.start,
            end: piece.end,
            coeffs: piece.coeffs.iter().map(vector_out).collect(),
        })
        .collect()
}

fn matrix_in<T: Field>(name: &str, data: &[Scalar], n: usize) -> Result<DMatrix<T>, CliError> {
    if data.len() != n * n {
        return Err(CliError::Input(format!("{name} has {} entries, expected {}", data.len(), n * n)));
    }
    let entries = data.iter().map(|s| s.to_field::<T>()).collect::<Result<Vec<_>, _>>()?;
    Ok(DMatrix::from_row_slice(n, n, &entries))
}

pub fn vector_in<T: Field>(data: &[Scalar]) -> Result<DVector<T>, CliError> {
    let entries = data.iter().map(|s| s.to_field::<T>()).collect::<Result<Vec<_>, _>>()?;
    Ok(DVector::from_vec(entries))
}

fn pieces_in<T: Field>(name: &str, pieces: &[PieceFile], n: usize) -> Result<PiecewisePolynomial<T>, CliError> {
    if pieces.is_empty() {
        return Err(CliError::Input(format!("{name} has no pieces")));
    }
    let mut out = Vec::with_capacity(pieces.len());
    for (k, p) in pieces.iter().enumerate() {
        if p.start >= p.end || p.start.is_nan() || p.end.is_nan() {
            return Err(CliError::Input(format!("{name} piece {k}: start must be below end")));
        }
        if k > 0 && p.start != pieces[k - 1].end {
            return Err(CliError::Input(format!("{name} piece {k} does not start where piece {} ends", k - 1)));
        }
        let coeffs = p.coeffs.iter().map(|c| vector_in::<T>(c)).collect::<Result<Vec<_>, _>>()?;
        if coeffs.iter().any(|c| c.len() != n) {
            return Err(CliError::Input(format!("{name} piece {k}: coefficient vectors must have length {n}")));
        }
        out.push(PolyPiece::new(p.start, p.end, coeffs));
    }
    PiecewisePolynomial::new(out, n).map_err(|e| CliError::Input(format!("{name}: {e}")))
}

impl ProblemFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Input(format!("problem file: {e}")))
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical form: pretty-printed with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("problem files always serialise");
        s.push('\n');
        s
    }

    pub fn to_system<T: Field>(&self) -> Result<DdaeSystem<T>, CliError> {
        if self.field != FieldTag::of::<T>() {
            return Err(CliError::Input("field tag does not match the requested scalar type".into()));
        }
        let n = self.dimension;
        if n == 0 {
            return Err(CliError::Input("dimension must be positive".into()));
        }
        let e = matrix_in::<T>("E", &self.e, n)?;
        let a = matrix_in::<T>("A", &self.a, n)?;
        let d = matrix_in::<T>("D", &self.d, n)?;
        let phi = pieces_in::<T>("history", &self.history, n)?;
        let f = pieces_in::<T>("inhomogeneity", &self.inhomogeneity, n)?;
        Ok(DdaeSystem::new(e, a, d, self.tau, self.horizon_intervals, f, phi)?)
    }

    pub fn from_system<T: Field>(sys: &DdaeSystem<T>) -> Self {
        Self {
            dimension: sys.dim(),
            e: matrix_out(sys.e()),
            a: matrix_out(sys.a()),
            d: matrix_out(sys.d()),
            tau: sys.tau(),
            horizon_intervals: sys.horizon(),
            field: FieldTag::of::<T>(),
            history: pieces_out(sys.phi()),
            inhomogeneity: pieces_out(sys.f()),
        }
    }
}
