//! Small complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// Largest entry modulus.
pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn max_abs_vec(v: &CVec) -> f64 {
    v.iter().fold(0.0, |a, z| a.max(z.norm()))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Numerical rank from singular values, relative to the largest.
pub fn rank(m: &CMat, rel_tol: f64) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    if top == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * top).count()
}

pub fn inverse(m: &CMat) -> Option<CMat> {
    m.clone().try_inverse()
}

/// `exp` of a diagonal matrix given by its entries.
pub fn diag_exp(d: &[Complex64]) -> CMat {
    CMat::from_diagonal(&CVec::from_iterator(d.len(), d.iter().map(|x| x.exp())))
}

/// Row-major nested vectors, for serialization.
pub fn to_rows(m: &CMat) -> Vec<Vec<Complex64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}
