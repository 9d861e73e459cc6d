//! Geometry diagnostics for neural regression representations.
//!
//! The crate measures how learned last-layer features relate to the regression targets:
//!
//! - [`idest`]: global intrinsic dimension by the two-nearest-neighbour ratio method.
//! - [`collapse`]: the NRC1 metric, the mean squared residual of centered, normalised
//!   features off their top-`n` principal subspace.
//! - [`mlp`]: a small deterministic ReLU regression network with manual backprop and SGD.
//! - [`datagen`]: synthetic regression tasks with known intrinsic dimension, CSV I/O.
//! - [`experiments`]: weight-decay/architecture sweeps, regime labels, and reports.
//!
//! Everything runs in `f64` and is reproducible from explicit seeds. With the `parallel`
//! feature (on by default) the neighbour search and sweeps use rayon; results are bitwise
//! identical to the sequential path.

pub mod collapse;
pub mod datagen;
pub mod error;
pub mod experiments;
pub mod idest;
pub mod kv;
pub mod mlp;
pub mod ndstats;
pub(crate) mod seeds;

pub use error::{Error, Result};
pub use ndstats::Matrix;
