//! Transmissive attacks as digital epidemics.
//!
//! Contact processes come from synthetic mobility ([`mobility`]) or imported
//! datasets ([`traces`]); [`engine`] propagates an attack over them under a
//! global timeout; [`analytic`] supplies the SI/SIS/SIR counterparts and
//! [`optimizer`] searches the success/exposure tradeoff.

pub mod analytic;
pub mod cli;
pub mod engine;
pub mod error;
pub mod mobility;
pub mod optimizer;
pub mod rng;
pub mod traces;

pub use error::{Error, ErrorKind, Result};
