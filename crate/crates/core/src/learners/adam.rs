use alloc::vec::Vec;

use crate::error::{shape, Result};
use crate::network::Network;
use crate::numerics::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;

/// Adam moments for every weight matrix. `t` counts batches.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    first: Vec<Matrix>,
    second: Vec<Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(net: &Network) -> Self {
        let zeros: Vec<Matrix> = net
            .weights()
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        AdamState {
            first: zeros.clone(),
            second: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// `W ← W − η m̂ / (√v̂ + ε)` with bias-corrected moments of `updates`.
    pub fn step(&mut self, net: &mut Network, updates: &super::UpdateSet, lr: f64) -> Result<()> {
        if updates.depth() != net.depth() || self.first.len() != net.depth() {
            return Err(shape!("Adam state, updates and network disagree on depth"));
        }
        for (l, (g, w)) in updates.layers().iter().zip(net.weights()).enumerate() {
            if g.shape() != w.shape() || self.first[l].shape() != w.shape() {
                return Err(shape!("update for layer {} does not match W", l + 1));
            }
        }
        self.t += 1;
        let t = self.t as f64;
        let c1 = 1.0 - libm::pow(ADAM_BETA1, t);
        let c2 = 1.0 - libm::pow(ADAM_BETA2, t);
        for (l, w) in net.weights_mut().iter_mut().enumerate() {
            let g = updates.layers()[l].as_slice();
            let m = self.first[l].as_mut_slice();
            let v = self.second[l].as_mut_slice();
            for (i, wi) in w.as_mut_slice().iter_mut().enumerate() {
                m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
                v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *wi -= lr * m_hat / (libm::sqrt(v_hat) + ADAM_EPSILON);
            }
        }
        Ok(())
    }
}
