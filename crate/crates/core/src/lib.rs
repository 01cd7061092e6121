//! Desk-scale simulator of a sensing-aided covert communication link over a
//! pinching-antenna system: near-field channel synthesis, EKF tracking of a
//! mobile warden, closed-form covert beamforming and artificial-noise
//! design, and learned antenna placement with baselines.

pub mod baselines;
pub mod channel;
pub mod config;
pub mod covertness;
pub mod ekf;
pub mod error;
pub mod export;
pub mod harness;
pub mod linalg;
pub mod optimizer;
pub mod sac;
pub mod validate;

pub use error::{Error, Result};
