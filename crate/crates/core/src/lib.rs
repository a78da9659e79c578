//! Joint estimation of the two parameters of a phase-space displacement.
//!
//! * [`gaussian`] – covariance-matrix representation of one- and two-mode
//!   Gaussian states and their symplectic evolution.
//! * [`fock`] – truncated Fock-space oracle that evaluates the SLD/RLD
//!   Fisher matrices from their operator definitions.
//! * [`bounds`] – closed Gaussian evaluation of the Cramér-Rao bounds,
//!   prior-weighted variants, thresholds and the optimality gap.
//! * [`sim`] – seedable Monte Carlo of the double-homodyne scheme and of the
//!   coherent-state heterodyne baseline.
//! * [`entanglement`] – Duan inseparability witness and its relation to
//!   beating the standard quantum limit.
//!
//! Units: ħ = 1, `[q, p] = i`, vacuum quadrature variance 1/2, phase-space
//! vectors ordered `(q1, p1, q2, p2, ...)`.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod entanglement;
pub mod error;
pub mod fock;
pub mod gaussian;
pub mod probe;
pub mod sim;

pub use error::{Error, Result};
pub use probe::Probe;

/// The standard quantum limit on the variance sum (coherent probe, heterodyne).
pub const SQL: f64 = 2.0;
