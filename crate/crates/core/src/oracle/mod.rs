//! Ground-truth machinery the learning rules are checked against.
//!
//! Nothing here feeds back into training: every function reads a frozen
//! network and returns a number to compare.

mod alignment;
mod covariance;
mod directional;
mod fd;

pub use alignment::{alignment_experiment, AlignmentReport, AlignmentRow, AlignmentSettings};
pub use covariance::{covariance_propagation_check, CovarianceCheck};
pub use directional::directional_gradient_estimate;
pub use fd::{
    fd_gradient, layer_scaled_error, max_relative_error, smooth_input, DEFAULT_FD_STEP,
    SMOOTH_MARGIN,
};
