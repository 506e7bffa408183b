//! Simulation of linear-optical networks driven by single photons that carry
//! explicit spectral/temporal wavepackets.
//!
//! The crate is layered bottom-up:
//!
//! * [`spectral`]: single-photon spectral amplitudes, their time-domain duals,
//!   filter modifiers and the pairwise overlap engine.
//! * [`state`]: multiphoton states as sums of creation-operator products and
//!   their inner products (permanents of packet-overlap matrices).
//! * [`network`]: frequency-independent mode transformations built from
//!   phase-asymmetric beamsplitters, including the heralded CNOT layout.
//! * [`detection`]: photon-counter models, post-selection and partial traces.
//! * [`metrics`]: coincidence rates, gate fidelity / success probability and
//!   the worst-case Monte Carlo search.
//! * [`closedform`]: analytic two-photon interference formulas used as
//!   oracles for the numerical engine.

pub mod closedform;
pub mod detection;
pub mod error;
pub mod metrics;
pub mod network;
pub mod quadrature;
pub mod spectral;
pub mod state;

pub use error::{Error, Result};
pub use num_complex::Complex64;
