//! Cascaded noiseless linear amplification of single photons.
//!
//! [`analytic`] holds the closed-form stage recurrences. [`circuit`] builds the
//! same amplifiers out of beam splitters, ancilla photons and photon-counting
//! detectors and simulates them in a truncated Fock space, so the two can be
//! checked against each other. [`spdc`] models a four-photon down-conversion
//! source feeding a two-stage experiment, and [`cli`] drives parameter sweeps.

pub mod analytic;
pub mod circuit;
pub mod cli;
pub mod error;
pub mod fock;
pub mod optics;
pub mod spdc;

pub use error::{NlaError, Result};
