use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::network::{ForwardTrace, Network};
use crate::numerics::Matrix;

/// One decorrelation step `R ← R − α (x* x*ᵀ − diag(x*²)) R`.
///
/// The correction term has an exactly zero diagonal.
pub fn decorrelation_step(r: &Matrix, x_star: &[f64], alpha: f64) -> Result<Matrix> {
    decorrelation_step_batch(r, core::iter::once(x_star), alpha)
}

/// Batch form: the correction term is averaged over all `x*` samples.
pub fn decorrelation_step_batch<'a>(
    r: &Matrix,
    samples: impl IntoIterator<Item = &'a [f64]>,
    alpha: f64,
) -> Result<Matrix> {
    if !r.is_square() {
        return Err(shape!(
            "decorrelation matrix must be square, got {:?}",
            r.shape()
        ));
    }
    let n = r.rows();
    let mut correlation = Matrix::zeros(n, n);
    let mut count = 0usize;
    for x in samples {
        if x.len() != n {
            return Err(shape!("x* has length {}, R is {n}x{n}", x.len()));
        }
        correlation.add_outer(1.0, x, x);
        count += 1;
    }
    if count == 0 {
        return Ok(r.clone());
    }
    apply_correction(r, correlation, count, alpha)
}

fn apply_correction(
    r: &Matrix,
    mut correlation: Matrix,
    count: usize,
    alpha: f64,
) -> Result<Matrix> {
    let n = r.rows();
    for i in 0..n {
        correlation.set(i, i, 0.0);
    }
    correlation.scale(1.0 / count as f64);
    let correction = correlation.matmul(r)?;
    let mut out = r.clone();
    out.axpy(-alpha, &correction)?;
    Ok(out)
}

/// Collects `x*_0..x*_{L-1}` over a batch, then updates every `R_l` once.
#[derive(Debug, Clone)]
pub struct DecorrelationAccumulator {
    correlations: Vec<Matrix>,
    count: usize,
}

impl DecorrelationAccumulator {
    pub fn new(net: &Network) -> Self {
        DecorrelationAccumulator {
            correlations: net
                .decorrelators()
                .iter()
                .map(|r| Matrix::zeros(r.rows(), r.cols()))
                .collect(),
            count: 0,
        }
    }

    /// Add the decorrelated layer inputs of one pass.
    pub fn add(&mut self, trace: &ForwardTrace) -> Result<()> {
        if trace.depth() != self.correlations.len() {
            return Err(shape!("trace depth does not match the network"));
        }
        for (l, c) in self.correlations.iter_mut().enumerate() {
            let x = trace.decorrelated_input(l + 1);
            if x.len() != c.rows() {
                return Err(shape!("x*_{l} does not match R_{l}"));
            }
            c.add_outer(1.0, x, x);
        }
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// `R_l ← R_l − α mean(x*_l x*_lᵀ − diag(x*_l²)) R_l` for every `l`.
    pub fn apply(self, net: &mut Network, alpha: f64) -> Result<()> {
        if self.count == 0 || alpha == 0.0 {
            return Ok(());
        }
        let count = self.count;
        for (r, c) in net.decorrelators_mut().iter_mut().zip(self.correlations) {
            *r = apply_correction(r, c, count, alpha)?;
        }
        Ok(())
    }
}
