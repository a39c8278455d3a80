use crate::error::{invalid, shape, Result};
use crate::numerics::Vector;

/// Training objective on the network output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Softmax cross-entropy on raw logits against a one-hot target.
    CrossEntropy,
    /// Sum of squared errors over output units.
    SquaredError,
}

impl Loss {
    pub fn value(self, output: &[f64], target: &[f64]) -> Result<f64> {
        match self {
            Loss::CrossEntropy => loss_cce(output, target),
            Loss::SquaredError => loss_mse(output, target),
        }
    }

    /// `∂L/∂x_L`.
    pub fn output_gradient(self, output: &[f64], target: &[f64]) -> Result<Vector> {
        match self {
            Loss::CrossEntropy => {
                let class = one_hot_class(output, target)?;
                let mut p = softmax(output);
                p[class] -= 1.0;
                Ok(p)
            }
            Loss::SquaredError => {
                check_lengths(output, target)?;
                Ok(output
                    .iter()
                    .zip(target)
                    .map(|(o, t)| 2.0 * (o - t))
                    .collect())
            }
        }
    }

    /// Whether the output layer should emit raw logits.
    pub fn wants_linear_output(self) -> bool {
        matches!(self, Loss::CrossEntropy)
    }
}

/// `-log softmax(output)[class]`, stabilised by subtracting the max logit.
pub fn loss_cce(output: &[f64], target: &[f64]) -> Result<f64> {
    let class = one_hot_class(output, target)?;
    let max = output
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| f64::max(m, v));
    let log_sum: f64 = libm::log(output.iter().map(|&v| libm::exp(v - max)).sum::<f64>());
    Ok(log_sum - (output[class] - max))
}

pub fn loss_mse(output: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(output, target)?;
    Ok(output
        .iter()
        .zip(target)
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

fn softmax(logits: &[f64]) -> Vector {
    let max = logits
        .iter()
        .fold(f64::NEG_INFINITY, |m, &v| f64::max(m, v));
    let mut p: Vector = logits.iter().map(|&v| libm::exp(v - max)).collect();
    let total: f64 = p.iter().sum();
    p.scale(1.0 / total);
    p
}

fn check_lengths(output: &[f64], target: &[f64]) -> Result<()> {
    if output.len() != target.len() {
        return Err(shape!(
            "output length {} does not match target length {}",
            output.len(),
            target.len()
        ));
    }
    Ok(())
}

fn one_hot_class(output: &[f64], target: &[f64]) -> Result<usize> {
    check_lengths(output, target)?;
    let mut class = None;
    for (i, &t) in target.iter().enumerate() {
        if t == 1.0 && class.is_none() {
            class = Some(i);
        } else if t != 0.0 {
            return Err(invalid!("cross-entropy target is not one-hot"));
        }
    }
    class.ok_or_else(|| invalid!("cross-entropy target is not one-hot"))
}
