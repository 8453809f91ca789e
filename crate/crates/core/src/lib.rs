//! STSK-aided OTFS multiple access: encoding, channel models, detectors,
//! performance analysis and a Monte Carlo harness.

pub mod analysis;
pub mod channel;
pub mod config;
pub mod detectors;
pub mod dispersion;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mapping;

pub use config::{SystemConfig, ValidatedConfig};
pub use error::{Error, Result};
