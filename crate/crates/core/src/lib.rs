//! Separation of variables for Hitchin systems on hyperelliptic curves.
//!
//! The library builds spectral curves for the classical root-system families,
//! recovers the action variables (Hamiltonians) from a divisor of spectral
//! points — in radicals for so(4), by damped Newton in general — and computes
//! the conjugate angle coordinates by numerical integration on the spectral
//! cover. A verification suite checks that the resulting coordinates are
//! canonical via finite-difference symplectic tests.

pub mod angle;
pub mod canonicity;
pub mod error;
pub mod hyperelliptic;
pub mod polyalg;
pub mod sov;
pub mod spectral;

pub use error::{Error, Result};
pub use num_complex::Complex64;
