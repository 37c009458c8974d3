//! Differential-phase-shift quantum key distribution over high-loss links.
//!
//! The crate is split the same way the link is analysed:
//!
//! * [`params`] and [`model`] hold the closed-form link model: click
//!   probability, sifted rate with dead time, QBER, and the secure-key
//!   fraction against general individual attacks.
//! * [`sim`] is a seeded Monte Carlo of the transmitter, lossy channel,
//!   one-bit-delay interferometer and the two detectors. Kernels are
//!   interchangeable and looked up by name through [`sim::KernelRegistry`].
//! * [`postprocess`] turns a sifted key into a final key: error estimation,
//!   reconciliation cost accounting and Toeplitz privacy amplification.
//! * [`experiments`] wires the above into published-scenario comparisons
//!   and loss sweeps.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiments;
pub mod model;
pub mod params;
pub mod postprocess;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use model::{AnalyticPoint, ClickProbabilities};
pub use params::{ChannelSpec, DetectorParams, EtaComposition, FiberSpan, SystemParams};
