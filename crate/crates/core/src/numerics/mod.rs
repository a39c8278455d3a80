//! Dense 64-bit linear algebra, splittable Gaussian streams and update angles.

pub(crate) mod angle;
mod matrix;
mod rng;
mod vector;

pub use angle::angle_degrees;
pub use matrix::Matrix;
pub use rng::{gaussian, standard_normals, RngStream};
pub use vector::Vector;
