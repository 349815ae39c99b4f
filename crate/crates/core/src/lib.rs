//! Error-inhibiting explicit block one-step ODE schemes.
//!
//! A block scheme advances `s` staggered solution values at once,
//! `V_{n+1} = A V_n + Δt B F(V_n)`. When `A = 1·aᵀ` with `aᵀ1 = 1` and the
//! leading truncation residual lies in the kernel of `A`, local errors are
//! damped instead of accumulated and the global error is one order higher
//! than the truncation error.
//!
//! * [`exact`]: rationals and fraction-free linear algebra
//! * [`scheme`]: scheme model, built-in registry, JSON files
//! * [`analysis`]: residuals, truncation order, conditions C1–C4, stability scan
//! * [`derive`]: solving the order conditions for `B` and searching the EIS constraint
//! * [`integrate`]: floating-point stepping, test problems, LTE measurement
//! * [`harness`]: convergence studies, slope fits, CSV and gnuplot output
//! * [`cli`]: the `eis` command line

// Error values carry exact rationals as witnesses.
#![allow(clippy::result_large_err)]

pub mod analysis;
pub mod cli;
pub mod derive;
pub mod exact;
pub mod harness;
pub mod integrate;
pub mod scheme;

pub use exact::{ExactMatrix, ExactVector, Rational};
pub use scheme::Scheme;
