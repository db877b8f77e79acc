use nalgebra::ComplexField;
use num_complex::Complex64;

/// Scalar field of a problem: `f64` for real data, `Complex64` for complex
/// data. All computations stay in the field of the inputs.
pub trait Field: ComplexField<RealField = f64> + Copy + Send + Sync + 'static {
    const IS_COMPLEX: bool;

    fn to_c64(self) -> Complex64;

    /// Builds a scalar from real and imaginary parts. Returns `None` for a
    /// real field when `im != 0`.
    fn from_parts(re: f64, im: f64) -> Option<Self>;
}

impl Field for f64 {
    const IS_COMPLEX: bool = false;

    fn to_c64(self) -> Complex64 {
        Complex64::new(self, 0.0)
    }

    fn from_parts(re: f64, im: f64) -> Option<Self> {
        (im == 0.0).then_some(re)
    }
}

impl Field for Complex64 {
    const IS_COMPLEX: bool = true;

    fn to_c64(self) -> Complex64 {
        self
    }

    fn from_parts(re: f64, im: f64) -> Option<Self> {
        Some(Complex64::new(re, im))
    }
}
