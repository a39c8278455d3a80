//! Forward-pass-only training rules for fully-connected networks.
//!
//! The crate covers node perturbation (NP), iterative node perturbation (INP),
//! activity-based node perturbation (ANP), a hand-derived backpropagation
//! baseline, layer-wise input decorrelation, and the oracles used to check
//! every rule against finite differences and directional derivatives.
//!
//! Everything here is `no_std` with `alloc`: no file, clock or thread access.
//! Data loading, the training harness and the CLI live in the `perturbnet`
//! crate.
//!
//! ## Layout
//!
//! - [`numerics`]: dense matrices, splittable random streams, update angles
//! - [`network`]: network definition, clean and noisy forward passes, losses
//! - [`learners`]: BP / NP / INP / ANP updates, decorrelation, Adam
//! - [`oracle`]: finite differences, directional-derivative averaging,
//!   covariance propagation and alignment experiments
//!
//! Layer numbers in the public API are 1-based: layer 0 is the input, layer
//! `l` in `1..=L` owns weight matrix `W_l`, which is stored at index `l - 1`.

#![no_std]

extern crate alloc;

pub mod error;
pub mod learners;
pub mod network;
pub mod numerics;
pub mod oracle;

pub use error::{Error, Result};
pub use learners::{
    AdamState, LossDifferential, RuleConfig, RuleKind, Signal, UnitCount, UpdateAccumulator,
    UpdateSet,
};
pub use network::{ForwardTrace, Loss, Network, NetworkSpec, NoiseBundle, NoiseTarget};
pub use numerics::{angle_degrees, gaussian, standard_normals, Matrix, RngStream, Vector};
