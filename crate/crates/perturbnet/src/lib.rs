//! Data loading, training harness and command line for `perturbnet-core`.
//!
//! ```no_run
//! use perturbnet::data::SyntheticSpec;
//! use perturbnet::harness::{train, DatasetSelector, ExperimentConfig};
//! use perturbnet_core::RuleKind;
//!
//! let mut config = ExperimentConfig::new(
//!     vec![128, 64, 64, 64, 10],
//!     RuleKind::Anp,
//!     true,
//!     DatasetSelector::Synthetic(SyntheticSpec::default()),
//! );
//! config.epochs = 5;
//! let records = train(&config)?;
//! # Ok::<(), perturbnet::Error>(())
//! ```

pub mod check;
pub mod cli;
pub mod data;
pub mod error;
pub mod harness;

pub use error::{Error, Result};
