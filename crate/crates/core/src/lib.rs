//! Signature-guided data augmentation for induction-motor fault diagnosis.
//!
//! Healthy stator-current spectra are turned into labeled fault examples by
//! placing synthetic peaks at the frequencies where each fault is known to
//! appear. A residual 1D CNN trained on the result is then evaluated against
//! simulated recordings that carry physical sidebands.

pub mod augment;
pub mod classifier;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod motor_model;
pub mod signal_io;
pub mod sim_oracle;
pub mod spectrum;
pub mod vae;

pub use error::{Result, SgdaError};
