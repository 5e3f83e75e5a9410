//! Speckle-pattern material classification, smoke detection and
//! exhaust-pump energy management.
//!
//! The crate bundles a small from-scratch CNN stack ([`nn`], [`train`],
//! [`zoo`]), image handling ([`imaging`]), a synthetic speckle generator
//! ([`synth`]), evaluation metrics ([`metrics`]), checkpoints
//! ([`checkpoint`]) and a trace-driven pump controller simulation
//! ([`energy`]).

pub mod checkpoint;
pub mod dataset;
pub mod energy;
pub mod error;
pub mod imaging;
pub mod json;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod tensor;
pub mod train;
pub mod zoo;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor};
