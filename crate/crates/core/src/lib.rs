//! Behavioral mixed-signal simulator for memristor-crossbar neural networks
//! with regulated-cascode current-mode neurons and SAR-based calibration of
//! their DC operating points.
//!
//! Layers, bottom-up:
//!
//! - [`device`]: square-law MOSFET and memristor cell models
//! - [`crossbar`]: ideal dot products and nodal solves of non-ideal arrays
//! - [`neuron`]: DC operating point and small-signal analysis of the neuron
//! - [`sar`]: successive-approximation search and the shared-SAR scheduler
//! - [`variability`]: seeded Monte Carlo mismatch studies
//! - [`network`]: weight mapping, inference at several fidelities, energy
//! - [`frontend`]: configuration, experiments and report emission

// `!(x > 0.0)` is how NaN gets rejected along with the out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod crossbar;
pub mod device;
pub mod error;
pub mod exec;
pub mod frontend;
pub mod linalg;
pub mod network;
pub mod neuron;
pub mod report;
pub mod sar;
pub mod seed;
pub mod units;
pub mod variability;

pub use error::{Error, Result, SolveError};
pub use exec::Exec;
