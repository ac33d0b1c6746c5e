//! Numerical laboratory for maximal Lp-regularity of non-autonomous
//! parabolic evolution equations
//!
//! ```text
//! u'(t) + A(t) u(t) = f(t),   u(0) = u0,
//! ```
//!
//! on finite-dimensional Galerkin truncations.  The operators A(t) come from
//! sesquilinear form families on a fixed form domain V -> H, represented by a
//! single coordinate space equipped with two Gram matrices.  The solver path
//! discretizes the evolution-family representation
//!
//! ```text
//! A(t)u(t) = (Q A(.)u(.))(t) + (L f)(t) + (R u0)(t)
//! ```
//!
//! and inverts I - Q by Neumann iteration after an optional positive shift
//! makes Q a strict contraction.  Alongside the solver live a semigroup
//! calculus for single operators, an operator-valued Fourier-multiplier /
//! pseudo-differential engine, Dini-integral and interpolation-norm metrics,
//! and a zoo of concrete model families.

// Validation guards are written `!(x > 0.0)` on purpose: the negated form
// rejects NaN along with the out-of-range values, which `x <= 0.0` would not.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod space;
pub mod forms;
pub mod semigroup;
pub mod grid;
pub mod quad;
pub mod fit;
pub mod probe;
pub mod metrics;
pub mod volterra;
pub mod pdo;
pub mod zoo;
pub mod config;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = nalgebra::Complex<f64>;
/// Dense complex matrix.
pub type CMat = nalgebra::DMatrix<C64>;
/// Dense complex column vector.
pub type CVec = nalgebra::DVector<C64>;

pub(crate) fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}
