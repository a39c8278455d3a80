use alloc::vec::Vec;

use crate::error::{invalid, shape, Result};
use crate::numerics::{gaussian, RngStream, Vector};

use super::NetworkSpec;

/// Which units a noise bundle perturbs. Layer numbers are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseTarget {
    /// Every layer, i.i.d. N(0, σ²): the ε of a node-perturbation pass.
    AllLayers,
    /// Only layer `l`, N(0, σ² I): the v of a single-layer directional derivative.
    SingleLayer(usize),
    /// One unit of one layer, displaced by `h = σ`.
    SingleUnit { layer: usize, unit: usize },
}

/// Per-layer pre-activation perturbations `ν_1..ν_L`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseBundle {
    target: NoiseTarget,
    variance: f64,
    layers: Vec<Vector>,
}

impl NoiseBundle {
    /// Bundle from explicit per-layer vectors.
    ///
    /// Vectors outside the target's support must be all zero.
    pub fn new(target: NoiseTarget, variance: f64, layers: Vec<Vector>) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid!("noise variance must be positive, got {variance}"));
        }
        let bundle = NoiseBundle {
            target,
            variance,
            layers,
        };
        let depth = bundle.layers.len();
        match target {
            NoiseTarget::AllLayers => {}
            NoiseTarget::SingleLayer(l) => {
                check_layer(l, depth)?;
                bundle.check_masked(|k, _| k == l)?;
            }
            NoiseTarget::SingleUnit { layer, unit } => {
                check_layer(layer, depth)?;
                if unit >= bundle.layers[layer - 1].len() {
                    return Err(invalid!("unit {unit} out of range for layer {layer}"));
                }
                bundle.check_masked(|k, i| k == layer && i == unit)?;
            }
        }
        Ok(bundle)
    }

    /// Sample a bundle for `spec`.
    ///
    /// Layer `l` is drawn from `stream.derive(l)`, so an all-layer bundle and
    /// a single-layer bundle built from the same stream agree on that layer.
    pub fn sample(
        spec: &NetworkSpec,
        target: NoiseTarget,
        variance: f64,
        stream: &RngStream,
    ) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(invalid!("noise variance must be positive, got {variance}"));
        }
        let depth = spec.depth();
        let draw = |l: usize| gaussian(spec.width(l), variance, &stream.derive(l as u64));
        let layers = match target {
            NoiseTarget::AllLayers => (1..=depth).map(draw).collect::<Result<Vec<_>>>()?,
            NoiseTarget::SingleLayer(l) => {
                check_layer(l, depth)?;
                let mut layers: Vec<Vector> =
                    (1..=depth).map(|k| Vector::zeros(spec.width(k))).collect();
                layers[l - 1] = draw(l)?;
                layers
            }
            NoiseTarget::SingleUnit { layer, unit } => {
                check_layer(layer, depth)?;
                if unit >= spec.width(layer) {
                    return Err(invalid!(
                        "unit {unit} out of range for layer {layer} of width {}",
                        spec.width(layer)
                    ));
                }
                let mut layers: Vec<Vector> =
                    (1..=depth).map(|k| Vector::zeros(spec.width(k))).collect();
                layers[layer - 1][unit] = libm::sqrt(variance);
                layers
            }
        };
        Ok(NoiseBundle {
            target,
            variance,
            layers,
        })
    }

    pub fn target(&self) -> NoiseTarget {
        self.target
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `ν_l` for `l` in `1..=L`.
    pub fn layer(&self, l: usize) -> &Vector {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vector] {
        &self.layers
    }

    pub fn squared_norm(&self) -> f64 {
        self.layers.iter().map(Vector::squared_norm).sum()
    }

    /// Multiply every entry by `c`; the recorded variance scales by `c²`.
    pub fn scale(&mut self, c: f64) {
        self.layers.iter_mut().for_each(|v| v.scale(c));
        self.variance *= c * c;
    }

    pub(crate) fn check_shape(&self, spec: &NetworkSpec) -> Result<()> {
        if self.layers.len() != spec.depth() {
            return Err(invalid!(
                "noise bundle has {} layers, network has {}",
                self.layers.len(),
                spec.depth()
            ));
        }
        for (l, v) in self.layers.iter().enumerate() {
            if v.len() != spec.width(l + 1) {
                return Err(shape!(
                    "noise for layer {} has length {}, layer width is {}",
                    l + 1,
                    v.len(),
                    spec.width(l + 1)
                ));
            }
        }
        Ok(())
    }

    fn check_masked(&self, allowed: impl Fn(usize, usize) -> bool) -> Result<()> {
        for (k, v) in self.layers.iter().enumerate() {
            for (i, &x) in v.iter().enumerate() {
                if x != 0.0 && !allowed(k + 1, i) {
                    return Err(invalid!(
                        "{:?} bundle has nonzero noise at layer {}, unit {i}",
                        self.target,
                        k + 1
                    ));
                }
            }
        }
        Ok(())
    }
}

fn check_layer(l: usize, depth: usize) -> Result<()> {
    if l == 0 || l > depth {
        return Err(invalid!("layer {l} out of range 1..={depth}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_layer_masks_other_layers() {
        let spec = NetworkSpec::new(vec![4, 3, 3, 2]);
        let b = NoiseBundle::sample(&spec, NoiseTarget::SingleLayer(2), 1.0, &RngStream::new(0))
            .unwrap();
        assert!(b.layer(1).iter().all(|&v| v == 0.0));
        assert!(b.layer(3).iter().all(|&v| v == 0.0));
        assert!(b.layer(2).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn single_unit_has_one_nonzero() {
        let spec = NetworkSpec::new(vec![2, 3]);
        let b = NoiseBundle::sample(
            &spec,
            NoiseTarget::SingleUnit { layer: 1, unit: 0 },
            1e-6,
            &RngStream::new(0),
        )
        .unwrap();
        let nonzero: Vec<f64> = b.layer(1).iter().copied().filter(|v| *v != 0.0).collect();
        assert_eq!(nonzero, vec![1e-3]);
        assert_eq!(b.layer(1)[0], 1e-3);
    }

    #[test]
    fn invalid_targets_are_rejected() {
        let spec = NetworkSpec::new(vec![2, 3, 2]);
        let s = RngStream::new(0);
        assert!(NoiseBundle::sample(&spec, NoiseTarget::SingleLayer(0), 1.0, &s).is_err());
        assert!(NoiseBundle::sample(&spec, NoiseTarget::SingleLayer(3), 1.0, &s).is_err());
        assert!(NoiseBundle::sample(
            &spec,
            NoiseTarget::SingleUnit { layer: 2, unit: 2 },
            1.0,
            &s
        )
        .is_err());
        assert!(NoiseBundle::sample(&spec, NoiseTarget::AllLayers, 0.0, &s).is_err());
    }

    #[test]
    fn explicit_bundles_enforce_masks() {
        let layers = vec![Vector::from(vec![1.0]), Vector::from(vec![1.0])];
        assert!(NoiseBundle::new(NoiseTarget::SingleLayer(1), 1.0, layers.clone()).is_err());
        assert!(NoiseBundle::new(NoiseTarget::AllLayers, 1.0, layers).is_ok());
    }

    #[test]
    fn all_layer_pooled_variance() {
        let spec = NetworkSpec::new(vec![10, 50_000, 50_000]);
        let b =
            NoiseBundle::sample(&spec, NoiseTarget::AllLayers, 1e-6, &RngStream::new(3)).unwrap();
        let n = 100_000.0;
        let pooled: Vec<f64> = b.layers().iter().flat_map(|v| v.iter().copied()).collect();
        let mean = pooled.iter().sum::<f64>() / n;
        let var = pooled.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        assert!((var / 1e-6 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn single_layer_agrees_with_all_layer_draw() {
        let spec = NetworkSpec::new(vec![3, 4, 5]);
        let s = RngStream::new(8);
        let all = NoiseBundle::sample(&spec, NoiseTarget::AllLayers, 1e-4, &s).unwrap();
        let one = NoiseBundle::sample(&spec, NoiseTarget::SingleLayer(2), 1e-4, &s).unwrap();
        assert_eq!(all.layer(2), one.layer(2));
    }
}
