use crate::error::{invalid, Result};
use crate::numerics::{standard_normals, Matrix, RngStream};

/// Outcome of pushing whitened inputs through a linear map.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceCheck {
    /// Sample covariance of `W x`.
    pub empirical: Matrix,
    /// `W Wᵀ`.
    pub expected: Matrix,
    /// `‖empirical − expected‖_F / ‖expected‖_F`.
    pub relative_error: f64,
}

/// Draws `samples` white inputs `x ~ N(0, I)` from `stream.derive(s)` and
/// compares the sample covariance of `W x` with `W Wᵀ`.
pub fn covariance_propagation_check(
    w: &Matrix,
    samples: usize,
    stream: &RngStream,
) -> Result<CovarianceCheck> {
    if samples < 2 {
        return Err(invalid!(
            "covariance needs at least two samples, got {samples}"
        ));
    }
    let n = w.rows();
    let mut mean = alloc::vec![0.0; n];
    let mut second = Matrix::zeros(n, n);
    for s in 0..samples {
        let x = standard_normals(w.cols(), &stream.derive(s as u64));
        let y = w.mul_vec(&x)?;
        for (m, v) in mean.iter_mut().zip(&y) {
            *m += v;
        }
        second.add_outer(1.0, &y, &y);
    }
    let count = samples as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    let mut empirical = second;
    empirical.add_outer(-count, &mean, &mean);
    empirical.scale(1.0 / (count - 1.0));
    let expected = w.matmul(&w.transpose())?;
    let mut diff = empirical.clone();
    diff.axpy(-1.0, &expected)?;
    let norm = expected.frobenius_norm();
    let relative_error = if norm == 0.0 {
        diff.frobenius_norm()
    } else {
        diff.frobenius_norm() / norm
    };
    Ok(CovarianceCheck {
        empirical,
        expected,
        relative_error,
    })
}
