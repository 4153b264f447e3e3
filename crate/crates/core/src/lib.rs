//! CSI-free transmission design for a RIS-assisted multi-user MISO downlink.
//!
//! The base station never sees the channels. It treats the pilot-estimated
//! objective (sum MSE, smoothed max MSE, or harvested power) as a black box
//! over an unconstrained real design vector and minimizes it with windowed
//! additive Gaussian-process Bayesian optimization. A known-CSI alternating
//! optimization baseline and a seeded experiment harness are included.
//!
//! Module map:
//!
//! - [`system_model`]: channels, pilot simulation, closed-form objectives.
//! - [`parametrization`]: `(W, Φ, C)` ⇄ real design vector.
//! - [`gp`]: kernels, windowed posterior, LCB acquisition, length-scale fit.
//! - [`additive_bo`]: random partitions, per-segment acquisition search, the
//!   full training loop.
//! - [`known_csi`]: precoder/filter closed forms and MM phase updates.
//! - [`experiments`]: scenario runner, config, CSV results.

pub mod additive_bo;
pub mod error;
pub mod experiments;
pub mod gp;
pub mod known_csi;
pub mod parametrization;
pub mod system_model;

pub use error::{Error, Result};
pub use system_model::C64;
