use perturbnet_core::{standard_normals, RngStream, Vector};
use rand::Rng;

use super::{one_hot, Dataset, Split};
use crate::error::{Error, Result};

/// Gaussian-cluster classification task.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub train: usize,
    pub test: usize,
    pub dim: usize,
    pub classes: usize,
    /// Distance of every class mean from the origin.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            train: 2000,
            test: 500,
            dim: 128,
            classes: 10,
            margin: 3.0,
            seed: 0,
        }
    }
}

/// Unit-variance isotropic clusters around class means at distance `margin`
/// from the origin in random directions. Labels are uniform over classes.
///
/// Equal-norm means keep the task solvable without bias terms.
pub fn synthetic_classification(spec: &SyntheticSpec) -> Result<(Dataset, Dataset)> {
    if spec.classes < 2 {
        return Err(Error::Config(
            "synthetic task needs at least 2 classes".into(),
        ));
    }
    if spec.dim == 0 || !(spec.margin >= 0.0 && spec.margin.is_finite()) {
        return Err(Error::Config(
            "synthetic task needs dim ≥ 1 and a finite margin ≥ 0".into(),
        ));
    }
    let root = RngStream::new(spec.seed);
    let means: Vec<Vector> = (0..spec.classes)
        .map(|c| {
            let mut d = standard_normals(spec.dim, &root.derive(0).derive(c as u64));
            let norm = d.norm();
            d.scale(if norm > 0.0 { spec.margin / norm } else { 0.0 });
            d
        })
        .collect();
    let split = |tag: u64, n: usize, split: Split| {
        let stream = root.derive(tag);
        let mut labels = stream.derive(u64::MAX).rng();
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for i in 0..n {
            let c = labels.random_range(0..spec.classes);
            let mut x = standard_normals(spec.dim, &stream.derive(i as u64));
            x.axpy(1.0, &means[c]);
            inputs.push(x);
            targets.push(one_hot(c, spec.classes));
        }
        Dataset::new(inputs, targets, split)
    };
    Ok((
        split(1, spec.train, Split::Train)?,
        split(2, spec.test, Split::Test)?,
    ))
}
