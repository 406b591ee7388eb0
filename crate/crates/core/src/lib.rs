//! Dissipative exciton dynamics in a three-site network coupled to a
//! structured harmonic bath.
//!
//! The crate provides perturbative (Bloch-Redfield, secular and non-secular)
//! and numerically exact (hierarchical equations of motion) propagation of the
//! reduced density matrix, the bath correlation machinery both share, and the
//! observables used to characterise coherence generation by incoherent
//! relaxation.
//!
//! All quantities are in atomic units internally. See [`units`] for the
//! conversion constants used at the interface (cm⁻¹, fs, K).

pub mod bath;
pub mod config;
pub mod error;
pub mod experiments;
pub mod heom;
pub mod model;
pub mod observables;
pub mod ode;
pub mod quadrature;
pub mod redfield;
pub mod units;

pub use error::{Error, Result};

pub use num_complex::Complex64 as C64;
