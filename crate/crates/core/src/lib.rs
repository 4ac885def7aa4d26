//! Simulation and decay-rate analysis for the nonlinearly damped Timoshenko
//! beam coupled to Cattaneo heat conduction:
//!
//! ```text
//! ρ1 φ_tt − k(φ_x + ψ)_x = 0
//! ρ2 ψ_tt − b ψ_xx + k(φ_x + ψ) + δ θ_x + a(x) g(ψ_t) = 0
//! ρ3 θ_t + q_x + δ ψ_xt = 0
//! τ q_t + β q + θ_x = 0
//! ```
//!
//! on `(0, 1)` with `φ = ψ = q = 0` at both ends.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod banded;
pub mod cli;
pub mod energy;
pub mod laws;
pub mod ode;
pub mod quad;
pub mod rates;
pub mod solver;
