//! Writes the sample problem files into `problems/` (or the directory given
//! as the first argument).

use ddae_cli::ProblemFile;
use ddae_core::{DdaeSystem, Field, PiecewisePolynomial};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use num_complex::Complex64;

fn poly<T: Field>(start: f64, end: f64, coeffs: Vec<DVector<T>>) -> PiecewisePolynomial<T> {
    PiecewisePolynomial::from_piece(start, end, coeffs).unwrap()
}

fn zero_f<T: Field>(n: usize, horizon: usize) -> PiecewisePolynomial<T> {
    PiecewisePolynomial::zero(0.0, horizon as f64, n).unwrap()
}

fn problems() -> Vec<(&'static str, ProblemFile)> {
    // 0 = x + x(t - 1) + 1 with x = t on [-1, 0]
    let neutral_scalar = DdaeSystem::new(
        dmatrix![0.0],
        dmatrix![1.0],
        dmatrix![1.0],
        1.0,
        4,
        poly(0.0, 4.0, vec![dvector![1.0]]),
        poly(-1.0, 0.0, vec![dvector![-1.0], dvector![1.0]]),
    )
    .unwrap();

    // x1' = x2, 0 = x1 - x2(t - 1); history in powers of (t + 1)
    let advanced_pair = DdaeSystem::new(
        dmatrix![1.0, 0.0; 0.0, 0.0],
        dmatrix![0.0, 1.0; 1.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, -1.0],
        1.0,
        4,
        zero_f(2, 4),
        poly(
            -1.0,
            0.0,
            vec![
                dvector![1.0 / 3.0, -1.0 / 3.0],
                dvector![0.0, -1.0],
                dvector![-1.0, 0.0],
                dvector![1.0 / 3.0, 1.0 / 3.0],
            ],
        ),
    )
    .unwrap();

    // x1' = x2(t - 1), 0 = x2 - x1(t - 1)
    let slow_smoothing = DdaeSystem::new(
        dmatrix![1.0, 0.0; 0.0, 0.0],
        dmatrix![0.0, 0.0; 0.0, 1.0],
        dmatrix![0.0, 1.0; -1.0, 0.0],
        1.0,
        4,
        zero_f(2, 4),
        poly(-1.0, 0.0, vec![dvector![-1.0, -1.0], dvector![1.0, 0.0]]),
    )
    .unwrap();

    let backward = DdaeSystem::new(
        dmatrix![0.0, 1.0; 0.0, 0.0],
        DMatrix::identity(2, 2),
        dmatrix![1.0, 1.0; 0.0, 1.0],
        1.0,
        4,
        zero_f(2, 4),
        PiecewisePolynomial::zero(-1.0, 0.0, 2).unwrap(),
    )
    .unwrap();

    // x' = -2 x + x(t - 1), x = 1 on [-1, 0]
    let scalar_retarded = DdaeSystem::new(
        dmatrix![1.0],
        dmatrix![-2.0],
        dmatrix![1.0],
        1.0,
        3,
        zero_f(1, 3),
        PiecewisePolynomial::constant(-1.0, 0.0, dvector![1.0]).unwrap(),
    )
    .unwrap();

    // x' = (-1 + 2i) x + 0.5 x(t - 1), x = 1 on [-1, 0]
    let c = |re: f64, im: f64| Complex64::new(re, im);
    let complex_rotation = DdaeSystem::new(
        DMatrix::from_element(1, 1, c(1.0, 0.0)),
        DMatrix::from_element(1, 1, c(-1.0, 2.0)),
        DMatrix::from_element(1, 1, c(0.5, 0.0)),
        1.0,
        3,
        zero_f(1, 3),
        PiecewisePolynomial::constant(-1.0, 0.0, DVector::from_element(1, c(1.0, 0.0))).unwrap(),
    )
    .unwrap();

    vec![
        ("neutral_scalar", ProblemFile::from_system(&neutral_scalar)),
        ("advanced_pair", ProblemFile::from_system(&advanced_pair)),
        ("slow_smoothing_pair", ProblemFile::from_system(&slow_smoothing)),
        ("backward_example", ProblemFile::from_system(&backward)),
        ("scalar_retarded", ProblemFile::from_system(&scalar_retarded)),
        ("complex_rotation", ProblemFile::from_system(&complex_rotation)),
    ]
}

fn main() {
    let dir = std::env::args()
        .nth(1)
        .map(std::path::PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("problems"));
    std::fs::create_dir_all(&dir).unwrap();
    for (name, file) in problems() {
        let path = dir.join(format!("{name}.json"));
        std::fs::write(&path, file.to_json()).unwrap();
        println!("wrote {}", path.display());
    }
}
