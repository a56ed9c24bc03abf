//! Strong-stability-preserving two-step Runge–Kutta (TSRK) methods for
//! integrating-factor time stepping.
//!
//! The crate covers the whole pipeline:
//!
//! - [`densemat`]: small dense linear algebra and the matrix exponential.
//! - [`tableau`]: the coefficient, Spijker `(S, T)` and canonical Shu–Osher
//!   representations of a TSRK method and the conversions between them.
//! - [`order`]: order-condition residuals through order eight.
//! - [`certify`]: SSP coefficient by bisection and the abscissa monotonicity check.
//! - [`optimize`]: multistart search for methods with a maximal SSP coefficient.
//! - [`semidiscrete`]: periodic upwind / WENO5 discretizations and the TV seminorm.
//! - [`integrate`]: integrating-factor steppers with per-stage TV tracing.
//! - [`harness`]: TVD time-step sweeps and convergence studies.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the method
//! registry and the command-line front end live in the `sspif` crate.

#![no_std]
#![warn(rust_2018_idioms, missing_debug_implementations)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub(crate) mod lsq;
pub(crate) mod math;
pub(crate) mod rng;

pub mod certify;
pub mod densemat;
pub mod harness;
pub mod integrate;
pub mod methods;
pub mod optimize;
pub mod order;
pub mod semidiscrete;
pub mod tableau;

pub use error::{Error, Result};
