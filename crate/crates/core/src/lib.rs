//! Exact simulation and analysis of single-qubit histories over two times.
//!
//! The crate provides:
//!
//! - [`qstate`]: complex linear algebra for 1–3 qubit registers (parametrized
//!   kets, inner products, tensor products, unitaries, projections),
//! - [`history`]: two-time history states and the projection-amplitude
//!   functional for evolved states and history states,
//! - [`chsh`]: the spatial CHSH quantity S, its temporal analogue S̃, and a
//!   derivative-free maximizer for violation search,
//! - [`protocol`]: gate-by-gate simulation of the auxiliary-qubit circuits
//!   that prepare and probe entangled histories by post-selection,
//! - [`functionals`]: the mean (M) and variance (V) witnesses over the
//!   measurement-angle box, their closed forms, bounds and the entanglement
//!   classifier.

pub mod chsh;
pub mod error;
pub mod functionals;
pub mod history;
pub mod protocol;
pub mod qstate;

pub use error::{Error, Result};
