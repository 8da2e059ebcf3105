//! Metrics, the experiment matrix and the command-line front end.

pub mod cli;
pub mod matrix;
pub mod metrics;
pub mod spectral;

pub use matrix::{run_matrix, run_matrix_with, CellResult, MatrixConfig, MatrixResult, RunRow};
pub use metrics::{mean_norm, mean_std, rms, sqrt_rms, SignalSeries, Window};
pub use spectral::{spectral_row, SpectralRow};
