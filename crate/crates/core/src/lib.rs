//! Ordered and unordered ZF-SIC V-BLAST over i.i.d. Rayleigh fading.
//!
//! * [`channel`]: channel sampling, projections, noise and conditional BER.
//! * [`receivers`]: ZF-SIC with optimal, sub-optimal or no ordering, linear
//!   ZF/MMSE interfaces and D-BLAST symbol cycling.
//! * [`analytic`]: outage and error-rate closed forms, bounds and
//!   approximations.
//! * [`montecarlo`]: reproducible trial engine producing curves with
//!   confidence intervals.
//! * [`report`]: configuration files, CSV/JSON output, curve comparison and
//!   figure bundles.

pub mod analytic;
pub mod channel;
pub mod error;
pub mod exec;
pub mod linalg;
pub mod montecarlo;
pub mod quadrature;
pub mod receivers;
pub mod report;
pub mod stats;

pub use channel::{ChannelMatrix, Modulation, NoiseModel, SystemDims};
pub use error::{Error, Result};
pub use receivers::{DetectionResult, OrderingStrategy, ReceiverKind};
