//! Entropy-adjusted preference optimization at desk scale: alpha-divergence
//! style Gaussian fitting, tabular H-DPO training against its closed-form
//! optimum, and coverage and diversity metrics.

// Negated comparisons are how NaN inputs get rejected alongside bad values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod error;
pub mod gmm_fit;
pub mod matrix;
pub mod metrics;
pub mod optim;
pub mod preference;
pub mod quadrature;
pub mod runner;
pub mod trainer;

pub use error::{Error, Result};
