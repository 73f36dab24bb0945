//! Boundary-preserving time stepping for Wright–Fisher type SDEs
//! `dx = (k1 - k2 x) dt + k3 sqrt(x (1 - x)) dW`, plus a coupled Monte Carlo
//! harness for measuring strong convergence.

pub mod brownian;
pub mod config;
pub mod error;
pub mod harness;
pub mod model;
pub mod plot;
pub mod quadrature;
pub mod scalar;
pub mod split;
pub mod table;
pub mod three_state;

pub use error::{Error, Result};
pub use harness::{ConvergenceReport, ErrorRow, ExperimentConfig, ExperimentReport, ModelSpec};
pub use model::{Preset, WfParams};
pub use scalar::SchemeId;
pub use three_state::{ClampPolicy, SimplexState};
