use std::fs;
use std::path::{Path, PathBuf};

use perturbnet_core::Vector;

use super::{one_hot, Dataset, Split};
use crate::error::{Error, Result};

/// One label byte followed by 32×32 pixels in R, G, B planes.
pub const CIFAR10_RECORD_BYTES: usize = 1 + 3 * 32 * 32;

const CLASSES: usize = 10;
const TRAIN_FILES: [&str; 5] = [
    "data_batch_1.bin",
    "data_batch_2.bin",
    "data_batch_3.bin",
    "data_batch_4.bin",
    "data_batch_5.bin",
];
const TEST_FILE: &str = "test_batch.bin";

/// Decode binary records into pixels scaled to `[0, 1]` and labels.
pub fn parse_cifar10_records(bytes: &[u8], path: &Path) -> Result<(Vec<Vector>, Vec<usize>)> {
    if !bytes.len().is_multiple_of(CIFAR10_RECORD_BYTES) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "length {} is not a multiple of {CIFAR10_RECORD_BYTES}",
                bytes.len()
            ),
        });
    }
    let mut inputs = Vec::with_capacity(bytes.len() / CIFAR10_RECORD_BYTES);
    let mut labels = Vec::with_capacity(inputs.capacity());
    for (i, record) in bytes.chunks_exact(CIFAR10_RECORD_BYTES).enumerate() {
        let label = record[0] as usize;
        if label >= CLASSES {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("record {i} has label {label}"),
            });
        }
        labels.push(label);
        inputs.push(record[1..].iter().map(|&p| f64::from(p) / 255.0).collect());
    }
    Ok((inputs, labels))
}

/// Per-feature mean and standard deviation fitted on one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Standardizer {
    /// Constant features keep a unit scale instead of dividing by zero.
    pub fn fit(inputs: &[Vector]) -> Self {
        let width = inputs.first().map_or(0, |x| x.len());
        let n = inputs.len().max(1) as f64;
        let mut mean = vec![0.0; width];
        for x in inputs {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; width];
        for x in inputs {
            for ((s, v), m) in var.iter_mut().zip(x.iter()).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn apply(&self, inputs: &mut [Vector]) {
        for x in inputs {
            for ((v, m), s) in x.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

fn batch_dir(dir: &Path) -> PathBuf {
    let nested = dir.join("cifar-10-batches-bin");
    if !dir.join(TEST_FILE).exists() && nested.join(TEST_FILE).exists() {
        nested
    } else {
        dir.to_path_buf()
    }
}

fn read_split(paths: &[PathBuf], split: Split) -> Result<Dataset> {
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for path in paths {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let (x, labels) = parse_cifar10_records(&bytes, path)?;
        inputs.extend(x);
        targets.extend(labels.into_iter().map(|c| one_hot(c, CLASSES)));
    }
    Dataset::new(inputs, targets, split)
}

/// Train and test splits from the binary CIFAR-10 batches in `dir` (or its
/// `cifar-10-batches-bin` subdirectory). With `standardize`, both splits are
/// shifted and scaled by train-split statistics.
pub fn load_cifar10(dir: &Path, standardize: bool) -> Result<(Dataset, Dataset)> {
    let dir = batch_dir(dir);
    let train_paths: Vec<PathBuf> = TRAIN_FILES.iter().map(|f| dir.join(f)).collect();
    let mut train = read_split(&train_paths, Split::Train)?;
    let mut test = read_split(&[dir.join(TEST_FILE)], Split::Test)?;
    if standardize {
        let s = Standardizer::fit(train.inputs());
        s.apply(train.inputs_mut());
        s.apply(test.inputs_mut());
    }
    Ok((train, test))
}
