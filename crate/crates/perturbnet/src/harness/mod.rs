//! Training loop, evaluation, metrics files and alignment drivers.

mod metrics;
mod sweep;
mod train;

use std::path::PathBuf;

use perturbnet_core::{Loss, NetworkSpec, RuleConfig, RuleKind};

use crate::data::{load_cifar10, synthetic_classification, Dataset, SyntheticSpec};
use crate::error::{Error, Result};

pub use metrics::{format_sig, write_alignment, write_meta, write_metrics, METRICS_HEADER};
pub use sweep::{alignment_run, focus_layer, sigma_sweep, sigma_sweep_on, SweepSettings};
pub use train::{evaluate, train, train_on, train_seed, Evaluation, MetricsRecord, Trainer};

pub const DEFAULT_BATCH_SIZE: usize = 1000;
pub const DEFAULT_SIGMA2: f64 = 1e-6;
pub const DEFAULT_DECORRELATION_RATE: f64 = 1e-3;

/// Learning rate by rule and depth: the highest stable value per
/// architecture, with the nearest listed architecture used where a rule has
/// no entry of its own.
pub fn default_learning_rate(kind: RuleKind, decorrelate: bool, hidden_layers: usize) -> f64 {
    match (hidden_layers, decorrelate) {
        (0, _) => 1e-3,
        (1..=3, true) => 1e-3,
        (_, true) if kind == RuleKind::Bp => 1e-3,
        (_, true) => 5e-3,
        (_, false) => 1e-4,
    }
}

/// Where training data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSelector {
    Cifar10 { dir: PathBuf, standardize: bool },
    Synthetic(SyntheticSpec),
}

impl DatasetSelector {
    pub fn name(&self) -> &'static str {
        match self {
            DatasetSelector::Cifar10 { .. } => "cifar10",
            DatasetSelector::Synthetic(_) => "synthetic",
        }
    }

    pub fn load(&self) -> Result<(Dataset, Dataset)> {
        match self {
            DatasetSelector::Cifar10 { dir, standardize } => load_cifar10(dir, *standardize),
            DatasetSelector::Synthetic(spec) => synthetic_classification(spec),
        }
    }
}

/// Everything one `train` invocation needs.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub network: NetworkSpec,
    pub rule: RuleConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seeds: Vec<u64>,
    pub dataset: DatasetSelector,
    pub loss: Loss,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Defaults: CCE with a linear output layer, batch 1000, σ² = 1e-6,
    /// α = 1e-3, one noise draw, seed 0, and the tabulated learning rate.
    pub fn new(
        widths: Vec<usize>,
        kind: RuleKind,
        decorrelate: bool,
        dataset: DatasetSelector,
    ) -> Self {
        let loss = Loss::CrossEntropy;
        let hidden = widths.len().saturating_sub(2);
        let network = NetworkSpec::new(widths)
            .with_decorrelation(decorrelate)
            .with_linear_output(loss.wants_linear_output());
        let mut rule = RuleConfig::new(kind);
        rule.decorrelate = decorrelate;
        rule.variance = DEFAULT_SIGMA2;
        rule.decorrelation_rate = DEFAULT_DECORRELATION_RATE;
        rule.learning_rate = default_learning_rate(kind, decorrelate, hidden);
        ExperimentConfig {
            network,
            rule,
            epochs: 1,
            batch_size: DEFAULT_BATCH_SIZE,
            seeds: vec![0],
            dataset,
            loss,
            output: None,
        }
    }

    pub fn hidden_layers(&self) -> usize {
        self.network.depth().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.rule.validate()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.network.decorrelate != self.rule.decorrelate {
            return Err(Error::Config(
                "network and rule disagree on decorrelation".into(),
            ));
        }
        if self.network.linear_output != self.loss.wants_linear_output() {
            return Err(Error::Config(
                "output layer activation does not match the loss".into(),
            ));
        }
        Ok(())
    }

    /// Check a loaded dataset against the network's input and output widths.
    pub fn check_dataset(&self, data: &Dataset) -> Result<()> {
        if data.is_empty() {
            return Ok(());
        }
        if data.input_width() != self.network.input_width() {
            return Err(Error::Config(format!(
                "dataset inputs have width {}, network expects {}",
                data.input_width(),
                self.network.input_width()
            )));
        }
        if data.target_width() != self.network.output_width() {
            return Err(Error::Config(format!(
                "dataset targets have width {}, network outputs {}",
                data.target_width(),
                self.network.output_width()
            )));
        }
        Ok(())
    }
}
