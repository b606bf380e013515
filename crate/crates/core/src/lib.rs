//! Forward solution, high-frequency asymptotics and source-recovery inverse
//! problems for the wave equation with a rapidly oscillating source
//!
//! ```text
//! u_tt = L u + f(x, t) r(t, ωt),   u(x, 0) = u_t(x, 0) = 0,   u = 0 on ∂Ω,
//! ```
//!
//! where `r(t, τ) = r₀(t) + r₁(t, τ)` and `r₁` is 2π-periodic in `τ` with zero mean.

pub mod asymptotics;
pub mod error;
pub mod expr;
pub mod forward;
pub mod harness;
pub mod inverse;
pub mod quadrature;
pub mod selftest;
pub mod source;
pub mod spectral_basis;
pub mod trace;
mod tridiag;
pub mod volterra;

pub use error::{Error, Result};
pub use expr::Expr;
pub use spectral_basis::{EigenBasis, SpatialField, SpaceTimeFunction};
pub use source::{FastProfile, OscillatorySource};
pub use trace::{TimeGrid, TimeTrace};
