//! Weight-update rules and optimisers.
//!
//! Every rule has the shape `ΔW_l = s_l (x*_{l-1})ᵀ`: a per-layer learning
//! [`Signal`] `s_l` standing in for the gradient `g_l = ∂L/∂a_l`, times the
//! (decorrelated) layer input of a reference pass. The rules differ only in
//! how they build `s_l`:
//!
//! | rule | signal `s_l`                          | forward passes |
//! |------|---------------------------------------|----------------|
//! | BP   | `g_l` by the chain rule               | 1              |
//! | NP   | `δL ε_l / σ²`                         | 2              |
//! | INP  | `N_l δL_l v_l / ‖v_l‖²`, one pass per layer | L + 1    |
//! | ANP  | `N δL δa_l / ‖δa‖²`                   | 2              |

mod adam;
mod config;
mod decorrelation;
mod rules;

use alloc::vec::Vec;

pub use adam::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use config::{sample_update, RuleConfig, RuleKind, SampleUpdate, UnitCount};
pub use decorrelation::{decorrelation_step, decorrelation_step_batch, DecorrelationAccumulator};
pub use rules::{
    anp_signal, anp_update, backprop_signal, bp_update, double_noisy_differences, inp_signal,
    inp_update, np_signal, np_update, resample_update, ActivityDifference, DEGENERATE_NORM,
};

use crate::error::{shape, Result};
use crate::network::{ForwardTrace, Network, NetworkSpec};
use crate::numerics::{angle::angle_between_blocks, Matrix, Vector};

/// `δL = L(perturbed output) − L(reference output)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LossDifferential(pub f64);

impl LossDifferential {
    pub fn between(perturbed_loss: f64, reference_loss: f64) -> Self {
        LossDifferential(perturbed_loss - reference_loss)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Per-layer learning signals `s_1..s_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    layers: Vec<Vector>,
}

impl Signal {
    pub fn zeros(spec: &NetworkSpec) -> Self {
        Signal {
            layers: (1..=spec.depth())
                .map(|l| Vector::zeros(spec.width(l)))
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<Vector>) -> Self {
        Signal { layers }
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `s_l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &Vector {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vector] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Vector] {
        &mut self.layers
    }

    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().for_each(|v| v.scale(c));
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &Signal) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(c, b);
        }
        Ok(())
    }

    fn check_compatible(&self, other: &Signal) -> Result<()> {
        let same = self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.len() == b.len());
        if same {
            Ok(())
        } else {
            Err(shape!("learning signals have different layer shapes"))
        }
    }
}

/// Per-layer weight updates `ΔW_1..ΔW_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateSet {
    layers: Vec<Matrix>,
}

impl UpdateSet {
    pub fn zeros(net: &Network) -> Self {
        UpdateSet {
            layers: net
                .weights()
                .iter()
                .map(|w| Matrix::zeros(w.rows(), w.cols()))
                .collect(),
        }
    }

    pub fn from_layers(layers: Vec<Matrix>) -> Self {
        UpdateSet { layers }
    }

    /// `ΔW_l = s_l (x*_{l-1})ᵀ` with `x*` taken from `reference`.
    pub fn from_signal(signal: &Signal, reference: &ForwardTrace) -> Result<Self> {
        if signal.depth() != reference.depth() {
            return Err(shape!(
                "signal has {} layers, trace has {}",
                signal.depth(),
                reference.depth()
            ));
        }
        let layers = (1..=signal.depth())
            .map(|l| {
                let s = signal.layer(l);
                let x = reference.decorrelated_input(l);
                if s.len() != reference.pre_activation(l).len() {
                    return Err(shape!("signal for layer {l} has wrong length"));
                }
                Ok(Matrix::outer(s, x))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(UpdateSet { layers })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `ΔW_l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &Matrix {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.layers
    }

    pub fn into_layers(self) -> Vec<Matrix> {
        self.layers
    }

    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().for_each(|m| m.scale(c));
    }

    /// `self += c · other`.
    pub fn axpy(&mut self, c: f64, other: &UpdateSet) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(shape!(
                "update sets have {} and {} layers",
                self.layers.len(),
                other.layers.len()
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.axpy(c, b)?;
        }
        Ok(())
    }

    /// `self += c · s_l (x*_{l-1})ᵀ` for every layer.
    pub fn add_signal(&mut self, c: f64, signal: &Signal, reference: &ForwardTrace) -> Result<()> {
        if signal.depth() != self.depth() || reference.depth() != self.depth() {
            return Err(shape!("signal, trace and update set disagree on depth"));
        }
        for (l, m) in self.layers.iter_mut().enumerate() {
            let s = &signal.layers[l];
            let x = reference.decorrelated_input(l + 1);
            if m.shape() != (s.len(), x.len()) {
                return Err(shape!("signal for layer {} does not match ΔW shape", l + 1));
            }
            m.add_outer(c, s, x);
        }
        Ok(())
    }

    /// Element-wise mean. Errors on an empty slice.
    pub fn mean(updates: &[UpdateSet]) -> Result<UpdateSet> {
        let (first, rest) = updates
            .split_first()
            .ok_or_else(|| shape!("mean of zero update sets"))?;
        let mut acc = first.clone();
        for u in rest {
            acc.axpy(1.0, u)?;
        }
        acc.scale(1.0 / updates.len() as f64);
        Ok(acc)
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(Matrix::is_finite)
    }

    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .fold(0.0, |m, l| f64::max(m, l.max_abs()))
    }

    /// Angle between the concatenation of all layers of both sets.
    pub fn angle_degrees(&self, other: &UpdateSet) -> Result<f64> {
        if self.layers.len() != other.layers.len() {
            return Err(shape!("update sets have different depths"));
        }
        let mut blocks = Vec::with_capacity(self.layers.len());
        for (a, b) in self.layers.iter().zip(&other.layers) {
            if a.shape() != b.shape() {
                return Err(shape!("update sets have different layer shapes"));
            }
            blocks.push((a.as_slice(), b.as_slice()));
        }
        angle_between_blocks(&blocks)
    }

    /// Angle between `ΔW_l` of both sets.
    pub fn layer_angle_degrees(&self, other: &UpdateSet, layer: usize) -> Result<f64> {
        if layer == 0 || layer > self.depth() || layer > other.depth() {
            return Err(shape!("layer {layer} out of range"));
        }
        crate::numerics::angle_degrees(self.layer(layer).as_slice(), other.layer(layer).as_slice())
    }
}

/// Running mean of per-sample updates over a mini-batch.
///
/// Summation follows insertion order, so a fixed sample order gives a
/// bit-reproducible batch update.
#[derive(Debug, Clone)]
pub struct UpdateAccumulator {
    sum: UpdateSet,
    samples: usize,
}

impl UpdateAccumulator {
    pub fn new(net: &Network) -> Self {
        UpdateAccumulator {
            sum: UpdateSet::zeros(net),
            samples: 0,
        }
    }

    pub fn add(&mut self, update: &UpdateSet) -> Result<()> {
        self.sum.axpy(1.0, update)?;
        self.samples += 1;
        Ok(())
    }

    /// Add one sample's already-weighted terms; counts as one sample.
    pub fn add_sample(&mut self, sample: &SampleUpdate) -> Result<()> {
        for (signal, weight, trace) in sample.terms() {
            self.sum.add_signal(weight, signal, trace)?;
        }
        if !sample.is_skipped() {
            self.samples += 1;
        }
        Ok(())
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// Batch mean; all-zero when every sample was skipped.
    pub fn finish(mut self) -> UpdateSet {
        if self.samples > 0 {
            self.sum.scale(1.0 / self.samples as f64);
        }
        self.sum
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RngStream;
    use alloc::vec;

    #[test]
    fn mean_of_updates() {
        let a = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap()]);
        let b = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![3.0, 6.0]).unwrap()]);
        let m = UpdateSet::mean(&[a, b]).unwrap();
        assert_eq!(m.layer(1).as_slice(), &[2.0, 4.0]);
        assert!(UpdateSet::mean(&[]).is_err());
    }

    #[test]
    fn angles_between_update_sets() {
        let net = Network::init(NetworkSpec::new(vec![3, 2, 2]), &RngStream::new(0)).unwrap();
        let mut a = UpdateSet::zeros(&net);
        a.layers[0].set(0, 0, 1.0);
        let mut b = UpdateSet::zeros(&net);
        b.layers[1].set(0, 0, 1.0);
        assert!((a.angle_degrees(&b).unwrap() - 90.0).abs() < 1e-12);
        assert!(a.layer_angle_degrees(&b, 1).is_err());
        let mut c = a.clone();
        c.scale(-3.0);
        assert!((a.angle_degrees(&c).unwrap() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn accumulator_is_order_independent_up_to_rounding() {
        let net = Network::init(NetworkSpec::new(vec![3, 2]), &RngStream::new(0)).unwrap();
        let ups: Vec<UpdateSet> = (0..5)
            .map(|i| {
                UpdateSet::from_layers(vec![Matrix::from_fn(2, 3, |r, c| {
                    (i * 7 + r * 3 + c) as f64 * 0.37 - 1.0
                })])
            })
            .collect();
        let mut fwd = UpdateAccumulator::new(&net);
        let mut rev = UpdateAccumulator::new(&net);
        for u in &ups {
            fwd.add(u).unwrap();
        }
        for u in ups.iter().rev() {
            rev.add(u).unwrap();
        }
        let (f, r) = (fwd.finish(), rev.finish());
        let mean = UpdateSet::mean(&ups).unwrap();
        for ((x, y), z) in f
            .layer(1)
            .as_slice()
            .iter()
            .zip(r.layer(1).as_slice())
            .zip(mean.layer(1).as_slice())
        {
            assert!((x - y).abs() < 1e-12 && (x - z).abs() < 1e-12);
        }
    }
}
