//! Reduction of a two-timescale prey-predator metapopulation model with fast
//! periodic migration to a low-dimensional averaged Lotka-Volterra system.
//!
//! The pipeline follows the structure of the underlying model
//!
//! ```text
//! dp/dt = (1/eps) K_p(t/eps) p + f(p, q)
//! dq/dt = (1/eps) K_q(t/eps) q + g(p, q)
//! ```
//!
//! where `K_p`, `K_q` are column-sum-zero transport matrices, periodic in the
//! fast phase, and `f`, `g` are per-site Lotka-Volterra interaction terms:
//!
//! 1. [`model`] builds the transport matrices from transfer rates, verifies
//!    their spectral gap and tracks the periodic Perron equilibria.
//! 2. [`reduction`] changes coordinates to slow totals plus contracted
//!    remainders and removes the residual stiff forcing term.
//! 3. [`manifold`] computes the fast-time periodic center manifold order by
//!    order, with a fixed-point oracle and shadowing initial data.
//! 4. [`averaging`] averages the reduced slow equation over the fast phase,
//!    producing an autonomous Lotka-Volterra system with corrected
//!    coefficients and the sigma stability indicator.
//! 5. [`integrate`] holds the stiff reference integrator (implicit Euler with
//!    Newton) and RK4 for the reduced/averaged systems.
//! 6. [`harness`] orchestrates the experiments and writes plot-ready CSV.

pub mod averaging;
pub mod error;
pub mod harness;
pub mod integrate;
pub mod manifold;
pub mod model;
pub mod modelfile;
pub mod periodic;
pub mod reduction;
pub mod resolvent;

pub use error::{Error, Result};
pub use periodic::{PeriodicMatrixFn, PeriodicSpline, PeriodicVectorFn, QuadratureRule};
pub use resolvent::ResolventCache;

/// Fast-phase period of all periodic data in this crate.
pub const PERIOD: f64 = 2.0 * std::f64::consts::PI;
