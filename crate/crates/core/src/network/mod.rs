//! Fully-connected leaky-ReLU networks without biases, with optional
//! per-layer input decorrelation.
//!
//! A forward pass computes, for `l = 1..=L`,
//!
//! ```text
//! x*_{l-1} = R_{l-1} x_{l-1}     (x*_{l-1} = x_{l-1} without decorrelation)
//! a_l      = W_l x*_{l-1} + ν_l   (ν_l = 0 on a clean pass)
//! x_l      = f(a_l)
//! ```
//!
//! with `f` the leaky ReLU, or the identity on layer `L` when the [`NetworkSpec`] asks
//! for a linear (logit) output.

mod loss;
mod noise;
mod trace;

use alloc::vec::Vec;

use rand::Rng;

pub use loss::{loss_cce, loss_mse, Loss};
pub use noise::{NoiseBundle, NoiseTarget};
pub use trace::ForwardTrace;

use crate::error::{invalid, shape, Result};
use crate::numerics::{Matrix, RngStream, Vector};

pub const DEFAULT_SLOPE: f64 = 0.01;

/// Architecture and activation settings.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    /// `N_0..=N_L`: input width first, output width last.
    pub widths: Vec<usize>,
    /// Negative slope of the leaky ReLU.
    pub slope: f64,
    pub decorrelate: bool,
    /// Skip the activation on layer `L` (raw logits for softmax + CCE).
    pub linear_output: bool,
}

impl NetworkSpec {
    pub fn new(widths: impl Into<Vec<usize>>) -> Self {
        NetworkSpec {
            widths: widths.into(),
            slope: DEFAULT_SLOPE,
            decorrelate: false,
            linear_output: false,
        }
    }

    pub fn with_slope(mut self, slope: f64) -> Self {
        self.slope = slope;
        self
    }

    pub fn with_decorrelation(mut self, on: bool) -> Self {
        self.decorrelate = on;
        self
    }

    pub fn with_linear_output(mut self, on: bool) -> Self {
        self.linear_output = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(invalid!(
                "need at least an input and an output width, got {:?}",
                self.widths
            ));
        }
        if self.widths.contains(&0) {
            return Err(invalid!(
                "layer widths must be positive, got {:?}",
                self.widths
            ));
        }
        if !(0.0..1.0).contains(&self.slope) {
            return Err(invalid!(
                "leaky ReLU slope must lie in [0, 1), got {}",
                self.slope
            ));
        }
        Ok(())
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    /// `N_l` for `l` in `0..=L`.
    pub fn width(&self, layer: usize) -> usize {
        self.widths[layer]
    }

    /// `Σ_{l=1}^{L} N_l`: every unit that can receive noise.
    pub fn noisy_units(&self) -> usize {
        self.widths[1..].iter().sum()
    }

    /// `Σ_{l=0}^{L} N_l`, input units included.
    pub fn total_units(&self) -> usize {
        self.widths.iter().sum()
    }

    /// Half-width of the uniform initialisation range for `W_l`.
    pub fn init_bound(&self, layer: usize) -> f64 {
        libm::sqrt(6.0 / (self.widths[layer - 1] + self.widths[layer]) as f64)
    }

    pub(crate) fn is_linear_layer(&self, layer: usize) -> bool {
        self.linear_output && layer == self.depth()
    }
}

#[inline]
pub fn leaky_relu(a: f64, slope: f64) -> f64 {
    if a >= 0.0 {
        a
    } else {
        slope * a
    }
}

#[inline]
pub fn leaky_relu_derivative(a: f64, slope: f64) -> f64 {
    if a >= 0.0 {
        1.0
    } else {
        slope
    }
}

/// Weights `W_1..W_L` and decorrelation matrices `R_0..R_{L-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
    decorrelators: Vec<Matrix>,
}

impl Network {
    /// Uniform Glorot initialisation, `R_l = I`.
    ///
    /// `W_l` is drawn from the stream `stream.derive(l)`.
    pub fn init(spec: NetworkSpec, stream: &RngStream) -> Result<Self> {
        spec.validate()?;
        let weights = (1..=spec.depth())
            .map(|l| {
                let bound = spec.init_bound(l);
                let mut rng = stream.derive(l as u64).rng();
                Matrix::from_fn(spec.width(l), spec.width(l - 1), |_, _| {
                    rng.random_range(-bound..=bound)
                })
            })
            .collect();
        let decorrelators = identities(&spec);
        Ok(Network {
            spec,
            weights,
            decorrelators,
        })
    }

    /// Assemble a network from explicit weights; decorrelators start at `I`.
    pub fn from_weights(spec: NetworkSpec, weights: Vec<Matrix>) -> Result<Self> {
        let decorrelators = identities(&spec);
        Network::from_parts(spec, weights, decorrelators)
    }

    pub fn from_parts(
        spec: NetworkSpec,
        weights: Vec<Matrix>,
        decorrelators: Vec<Matrix>,
    ) -> Result<Self> {
        spec.validate()?;
        let depth = spec.depth();
        if weights.len() != depth || decorrelators.len() != depth {
            return Err(shape!(
                "{depth} layers need {depth} weight and decorrelation matrices, got {} and {}",
                weights.len(),
                decorrelators.len()
            ));
        }
        for l in 1..=depth {
            let expected = (spec.width(l), spec.width(l - 1));
            if weights[l - 1].shape() != expected {
                return Err(shape!(
                    "W_{l} should be {:?}, got {:?}",
                    expected,
                    weights[l - 1].shape()
                ));
            }
            let n = spec.width(l - 1);
            if decorrelators[l - 1].shape() != (n, n) {
                return Err(shape!(
                    "R_{} should be {n}x{n}, got {:?}",
                    l - 1,
                    decorrelators[l - 1].shape()
                ));
            }
        }
        Ok(Network {
            spec,
            weights,
            decorrelators,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn depth(&self) -> usize {
        self.spec.depth()
    }

    /// `W_1..W_L` at indices `0..L`.
    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// `R_0..R_{L-1}` at indices `0..L`.
    pub fn decorrelators(&self) -> &[Matrix] {
        &self.decorrelators
    }

    pub fn decorrelators_mut(&mut self) -> &mut [Matrix] {
        &mut self.decorrelators
    }

    pub fn set_decorrelation(&mut self, on: bool) {
        self.spec.decorrelate = on;
    }

    pub(crate) fn activate(&self, layer: usize, a: f64) -> f64 {
        if self.spec.is_linear_layer(layer) {
            a
        } else {
            leaky_relu(a, self.spec.slope)
        }
    }

    pub(crate) fn activation_derivative(&self, layer: usize, a: f64) -> f64 {
        if self.spec.is_linear_layer(layer) {
            1.0
        } else {
            leaky_relu_derivative(a, self.spec.slope)
        }
    }

    /// Clean (`noise = None`) or noisy forward pass.
    pub fn forward(&self, x0: &[f64], noise: Option<&NoiseBundle>) -> Result<ForwardTrace> {
        if x0.len() != self.spec.input_width() {
            return Err(invalid!(
                "input has length {}, network expects {}",
                x0.len(),
                self.spec.input_width()
            ));
        }
        if let Some(bundle) = noise {
            bundle.check_shape(&self.spec)?;
        }
        let depth = self.depth();
        let mut decorrelated = Vec::with_capacity(depth);
        let mut pre = Vec::with_capacity(depth);
        let mut post: Vec<Vector> = Vec::with_capacity(depth);
        for l in 1..=depth {
            let x_prev: &[f64] = if l == 1 { x0 } else { &post[l - 2] };
            let x_star = if self.spec.decorrelate {
                Vector::from(self.decorrelators[l - 1].mul_vec(x_prev)?)
            } else {
                Vector::from(x_prev)
            };
            let mut a = Vector::from(self.weights[l - 1].mul_vec(&x_star)?);
            if let Some(bundle) = noise {
                a.axpy(1.0, bundle.layer(l));
            }
            let x: Vector = a.iter().map(|&v| self.activate(l, v)).collect();
            decorrelated.push(x_star);
            pre.push(a);
            post.push(x);
        }
        Ok(ForwardTrace::new(
            Vector::from(x0),
            decorrelated,
            pre,
            post,
            noise.cloned(),
        ))
    }

    /// Draw a noise bundle for this architecture; see [`NoiseBundle::sample`].
    pub fn sample_noise(
        &self,
        target: NoiseTarget,
        variance: f64,
        stream: &RngStream,
    ) -> Result<NoiseBundle> {
        NoiseBundle::sample(&self.spec, target, variance, stream)
    }
}

fn identities(spec: &NetworkSpec) -> Vec<Matrix> {
    (0..spec.depth())
        .map(|l| Matrix::identity(spec.width(l)))
        .collect()
}
