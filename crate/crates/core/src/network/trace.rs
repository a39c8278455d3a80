use alloc::vec::Vec;

use crate::numerics::Vector;

use super::NoiseBundle;

/// Everything one forward pass computed. Layer numbers are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    input: Vector,
    decorrelated: Vec<Vector>,
    pre: Vec<Vector>,
    post: Vec<Vector>,
    noise: Option<NoiseBundle>,
}

impl ForwardTrace {
    pub(crate) fn new(
        input: Vector,
        decorrelated: Vec<Vector>,
        pre: Vec<Vector>,
        post: Vec<Vector>,
        noise: Option<NoiseBundle>,
    ) -> Self {
        ForwardTrace {
            input,
            decorrelated,
            pre,
            post,
            noise,
        }
    }

    pub fn depth(&self) -> usize {
        self.pre.len()
    }

    /// `x_0`.
    pub fn input(&self) -> &Vector {
        &self.input
    }

    /// `x*_{l-1}`, the (decorrelated) input that `W_l` multiplies.
    pub fn decorrelated_input(&self, layer: usize) -> &Vector {
        &self.decorrelated[layer - 1]
    }

    /// `a_l` (or `ã_l` on a noisy pass).
    pub fn pre_activation(&self, layer: usize) -> &Vector {
        &self.pre[layer - 1]
    }

    /// `x_l`.
    pub fn layer_output(&self, layer: usize) -> &Vector {
        &self.post[layer - 1]
    }

    /// `x_L`.
    pub fn output(&self) -> &Vector {
        &self.post[self.post.len() - 1]
    }

    pub fn noise(&self) -> Option<&NoiseBundle> {
        self.noise.as_ref()
    }

    pub fn is_clean(&self) -> bool {
        self.noise.is_none()
    }

    /// Smallest |a_l| over every unit that passes through the leaky ReLU.
    pub fn min_kink_distance(&self, linear_output: bool) -> f64 {
        let activated = if linear_output {
            &self.pre[..self.pre.len() - 1]
        } else {
            &self.pre[..]
        };
        activated
            .iter()
            .flat_map(|a| a.iter())
            .fold(f64::INFINITY, |m, v| f64::min(m, v.abs()))
    }
}
