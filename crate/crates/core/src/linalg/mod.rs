//! Sparse matrices, banded LU with partial pivoting, and the shift-invert Lanczos
//! eigensolver.

mod banded;
mod csr;
mod lanczos;

pub use banded::{BandedLu, Factorization, ResidualBound};
pub(crate) use banded::lattice_ordering;
pub use csr::CsrMatrix;
pub use lanczos::{smallest_eigenpairs, EigenOptions, Eigenpairs};

use std::fmt::Debug;
use std::ops::{AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// Field scalar used by the sparse kernels: `f64` or `Complex64`.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Mul<Output = Self>
    + Div<Output = Self>
    + Sub<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn conj(self) -> Self;
    fn modulus(self) -> f64;
    fn from_real(v: f64) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn conj(self) -> Self {
        self
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(v: f64) -> Self {
        v
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
}

pub(crate) fn vec_norm<T: Scalar>(v: &[T]) -> f64 {
    v.iter().map(|x| x.modulus().powi(2)).sum::<f64>().sqrt()
}
