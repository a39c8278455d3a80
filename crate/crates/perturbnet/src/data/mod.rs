//! Datasets, preprocessing and mini-batch order.

mod cifar;
mod synthetic;

use perturbnet_core::{RngStream, Vector};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};

pub use cifar::{load_cifar10, parse_cifar10_records, Standardizer, CIFAR10_RECORD_BYTES};
pub use synthetic::{synthetic_classification, SyntheticSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Inputs paired with one-hot (or regression) targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<Vector>,
    targets: Vec<Vector>,
    split: Split,
}

impl Dataset {
    pub fn new(inputs: Vec<Vector>, targets: Vec<Vector>, split: Split) -> Result<Self> {
        if inputs.len() != targets.len() {
            return Err(Error::Config(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        let width = |v: &[Vector]| v.first().map_or(0, |x| x.len());
        let (iw, tw) = (width(&inputs), width(&targets));
        if inputs.iter().any(|x| x.len() != iw) || targets.iter().any(|t| t.len() != tw) {
            return Err(Error::Config("ragged dataset".into()));
        }
        Ok(Dataset {
            inputs,
            targets,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn inputs(&self) -> &[Vector] {
        &self.inputs
    }

    pub fn targets(&self) -> &[Vector] {
        &self.targets
    }

    pub fn input_width(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.len())
    }

    pub fn target_width(&self) -> usize {
        self.targets.first().map_or(0, |x| x.len())
    }

    /// Copy of the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            inputs: indices.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: indices.iter().map(|&i| self.targets[i].clone()).collect(),
            split: self.split,
        }
    }

    pub(crate) fn inputs_mut(&mut self) -> &mut [Vector] {
        &mut self.inputs
    }
}

pub(crate) fn one_hot(class: usize, classes: usize) -> Vector {
    let mut t = Vector::zeros(classes);
    t[class] = 1.0;
    t
}

/// Shuffling and batch size for one epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
    pub epoch: u64,
}

/// Indices `0..n` permuted by `(seed, epoch)` and cut into batches of
/// `batch_size`; the last batch may be short.
pub fn batches(n: usize, plan: &BatchPlan) -> Result<Vec<Vec<usize>>> {
    if plan.batch_size == 0 {
        return Err(Error::Config("batch size must be at least 1".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngStream::new(plan.seed).derive(plan.epoch).rng());
    Ok(order
        .chunks(plan.batch_size)
        .map(<[usize]>::to_vec)
        .collect())
}
