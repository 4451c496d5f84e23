//! Computational toolkit for rank-one flows built by cutting and stacking.
//!
//! The crate models a flow specification as cut counts plus spacer rows
//! ([`flowspec`]), generates the exponential-staircase family of such
//! specifications ([`staircase`]), and evaluates the spectral objects the
//! construction gives rise to: the Fejér-type reference measure μ_s
//! ([`kernel`]), partial Riesz products and their exact Fourier transforms
//! ([`riesz`]), and an independent tower autocorrelation oracle ([`tower`]).
//! On top of those sit the singularity functionals ([`criteria`]), the
//! trigonometric-sum central limit experiment ([`clt`]), and the
//! word-combinatorics suite ([`words`]).
//!
//! Numerics follow two rules throughout:
//! * every contractual value is computed in extended precision
//!   ([`prec::Ctx`], default 60 decimal digits), and
//! * phases θ·ω are reduced modulo 2π before any trig call, in double-double
//!   arithmetic ([`dd`]) on the fast path and in extended precision when the
//!   product leaves the double-double envelope.

pub mod clt;
pub mod config;
pub mod criteria;
pub mod dd;
pub mod flowspec;
pub mod kernel;
pub mod prec;
pub mod riesz;
pub mod staircase;
pub mod tower;
pub mod words;

/// Crate version string embedded in CLI output metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
