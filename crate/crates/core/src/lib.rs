//! Derivative principal component analysis for sparse and dense
//! longitudinal data.
//!
//! The crate estimates mean derivatives and the mixed partial derivatives
//! of the covariance surface by local polynomial smoothing, decomposes the
//! derivative covariance into derivative eigenfunctions, and predicts
//! per-subject derivative principal component scores by best linear
//! unbiased prediction. The FPCA derivative representation (trajectory
//! scores combined with eigenfunction derivatives) is available as the
//! comparator, along with per-curve baselines, the simulation models
//! used to benchmark them, and a score-based logistic classifier.

pub mod baselines;
pub mod classify;
pub mod data;
pub mod dpca;
pub mod error;
pub mod fpca;
pub mod grid;
pub mod io;
pub mod simlab;
pub mod smoothing;

pub use data::{LongitudinalDataset, Subject};
pub use dpca::{fit_dpca, Bandwidth, CovSelector, DpcaConfig, DpcaFit, KPolicy, SmoothingMode};
pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, GridSurface};
pub use smoothing::Kernel;
