//! Grauert tubes of the Heisenberg group inside its complexification.
//!
//! The crate builds the invariant gauge `φ` on `ℍ₃(ℂ)` and the thickened gauge
//! `φ̃ = (Im z0)² + φ` on `(ℂ/ℤ) × ℍ₃(ℂ)`, their Levi forms and Levi
//! polynomials, and the quadrature needed to check integrability thresholds,
//! convolution blow-up and the right-regular representation numerically.

// `!(x > 0.0)` deliberately lets NaN fail validation; index loops mirror
// the matrix formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod error;
pub mod fit;
pub mod gauge;
pub mod heisenberg;
pub mod levi;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
