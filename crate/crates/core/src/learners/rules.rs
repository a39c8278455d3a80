use alloc::vec::Vec;

use crate::error::{degenerate, invalid, shape, Result};
use crate::network::{ForwardTrace, Loss, Network, NoiseTarget};
use crate::numerics::{RngStream, Vector};

use super::{LossDifferential, Signal, UnitCount, UpdateSet};

/// Directions shorter than this are treated as zero and their draw skipped.
pub const DEGENERATE_NORM: f64 = 1e-30;

/// `g_l = ∂L/∂a_l` by the chain rule through the leaky ReLU and the loss.
///
/// Decorrelation matrices enter as constants: `∂L/∂x_l = R_lᵀ W_{l+1}ᵀ g_{l+1}`.
pub fn backprop_signal(
    net: &Network,
    trace: &ForwardTrace,
    target: &[f64],
    loss: Loss,
) -> Result<Signal> {
    let depth = net.depth();
    if trace.depth() != depth {
        return Err(shape!(
            "trace has {} layers, network has {depth}",
            trace.depth()
        ));
    }
    let mut layers: Vec<Vector> = alloc::vec![Vector::default(); depth];
    let mut upstream = loss.output_gradient(trace.output(), target)?;
    for l in (1..=depth).rev() {
        let a = trace.pre_activation(l);
        if a.len() != upstream.len() {
            return Err(shape!("trace layer {l} does not match the network"));
        }
        let g: Vector = upstream
            .iter()
            .zip(a.iter())
            .map(|(d, &a)| d * net.activation_derivative(l, a))
            .collect();
        if l > 1 {
            let through_w = net.weights()[l - 1].transpose_mul_vec(&g)?;
            upstream = if net.spec().decorrelate {
                Vector::from(net.decorrelators()[l - 1].transpose_mul_vec(&through_w)?)
            } else {
                Vector::from(through_w)
            };
        }
        layers[l - 1] = g;
    }
    Ok(Signal::from_layers(layers))
}

/// Backpropagation update `ΔW_l = g_l (x*_{l-1})ᵀ`.
pub fn bp_update(
    net: &Network,
    trace: &ForwardTrace,
    target: &[f64],
    loss: Loss,
) -> Result<UpdateSet> {
    UpdateSet::from_signal(&backprop_signal(net, trace, target, loss)?, trace)
}

/// Node-perturbation signal `s_l = δL ε_l / σ²`.
///
/// `noisy` must carry an all-layer noise bundle.
pub fn np_signal(noisy: &ForwardTrace, dl: LossDifferential, variance: f64) -> Result<Signal> {
    check_variance(variance)?;
    let bundle = noisy
        .noise()
        .ok_or_else(|| invalid!("node perturbation needs a noisy trace"))?;
    if bundle.target() != NoiseTarget::AllLayers {
        return Err(invalid!(
            "node perturbation needs all-layer noise, trace used {:?}",
            bundle.target()
        ));
    }
    let c = dl.value() / variance;
    Ok(Signal::from_layers(
        bundle
            .layers()
            .iter()
            .map(|eps| {
                let mut s = eps.clone();
                s.scale(c);
                s
            })
            .collect(),
    ))
}

/// Node-perturbation update `ΔW_l = δL (ε_l / σ²) (x*_{l-1})ᵀ`, with `x*`
/// from `reference`.
pub fn np_update(
    reference: &ForwardTrace,
    noisy: &ForwardTrace,
    dl: LossDifferential,
    variance: f64,
) -> Result<UpdateSet> {
    check_same_input(reference, noisy)?;
    UpdateSet::from_signal(&np_signal(noisy, dl, variance)?, reference)
}

/// Iterative node-perturbation signal: one single-layer perturbed pass per
/// layer, `s_l = N_l δL_l v_l / ‖v_l‖²`.
///
/// The noise for layer `l` comes from `stream.derive(l)`, the same draw an
/// all-layer bundle on `stream` would use for that layer.
pub fn inp_signal(
    net: &Network,
    clean: &ForwardTrace,
    target: &[f64],
    loss: Loss,
    variance: f64,
    stream: &RngStream,
) -> Result<Signal> {
    check_variance(variance)?;
    let clean_loss = loss.value(clean.output(), target)?;
    let layers = (1..=net.depth())
        .map(|l| {
            let bundle = net.sample_noise(NoiseTarget::SingleLayer(l), variance, stream)?;
            let noisy = net.forward(clean.input(), Some(&bundle))?;
            let dl = loss.value(noisy.output(), target)? - clean_loss;
            let v = bundle.layer(l);
            let sq = v.squared_norm();
            if libm::sqrt(sq) < DEGENERATE_NORM {
                return Err(degenerate!("zero-norm perturbation on layer {l}"));
            }
            let mut s = v.clone();
            s.scale(v.len() as f64 * dl / sq);
            Ok(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Signal::from_layers(layers))
}

/// INP update for one sample: a clean pass plus `L` single-layer passes.
pub fn inp_update(
    net: &Network,
    x0: &[f64],
    target: &[f64],
    loss: Loss,
    variance: f64,
    stream: &RngStream,
) -> Result<UpdateSet> {
    let clean = net.forward(x0, None)?;
    let signal = inp_signal(net, &clean, target, loss, variance, stream)?;
    UpdateSet::from_signal(&signal, &clean)
}

/// Pre-activation differences `δa_l` between two passes, with their loss
/// differential.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityDifference {
    layers: Vec<Vector>,
    loss: LossDifferential,
}

impl ActivityDifference {
    /// `δa_l = a_l(perturbed) − a_l(reference)`.
    pub fn between(
        reference: &ForwardTrace,
        perturbed: &ForwardTrace,
        dl: LossDifferential,
    ) -> Result<Self> {
        check_same_input(reference, perturbed)?;
        if reference.depth() != perturbed.depth() {
            return Err(shape!("traces have different depths"));
        }
        let layers = (1..=reference.depth())
            .map(|l| {
                let (a, b) = (perturbed.pre_activation(l), reference.pre_activation(l));
                if a.len() != b.len() {
                    return Err(shape!("traces disagree on the width of layer {l}"));
                }
                Ok(a.iter().zip(b.iter()).map(|(x, y)| x - y).collect())
            })
            .collect::<Result<Vec<Vector>>>()?;
        Ok(ActivityDifference { layers, loss: dl })
    }

    pub fn layer(&self, l: usize) -> &Vector {
        &self.layers[l - 1]
    }

    pub fn layers(&self) -> &[Vector] {
        &self.layers
    }

    pub fn loss(&self) -> LossDifferential {
        self.loss
    }

    /// `‖δa‖²` over the concatenation of all layers.
    pub fn squared_norm(&self) -> f64 {
        self.layers.iter().map(Vector::squared_norm).sum()
    }

    /// Activity-based signal `s_l = N δL δa_l / ‖δa‖²`.
    pub fn anp_signal(&self, unit_count: f64) -> Result<Signal> {
        let sq = self.squared_norm();
        if libm::sqrt(sq) < DEGENERATE_NORM {
            return Err(degenerate!("activity difference has zero norm"));
        }
        let c = unit_count * self.loss.value() / sq;
        Ok(Signal::from_layers(
            self.layers
                .iter()
                .map(|d| {
                    let mut s = d.clone();
                    s.scale(c);
                    s
                })
                .collect(),
        ))
    }
}

/// Activity-based signal from a reference and a perturbed pass. Never reads
/// the noise bundle.
pub fn anp_signal(
    reference: &ForwardTrace,
    noisy: &ForwardTrace,
    dl: LossDifferential,
    units: UnitCount,
) -> Result<Signal> {
    let n = units.count_for_trace(reference) as f64;
    ActivityDifference::between(reference, noisy, dl)?.anp_signal(n)
}

/// Activity-based update `ΔW_l = N δL (δa_l / ‖δa‖²) (x*_{l-1})ᵀ`.
pub fn anp_update(
    reference: &ForwardTrace,
    noisy: &ForwardTrace,
    dl: LossDifferential,
    units: UnitCount,
) -> Result<UpdateSet> {
    UpdateSet::from_signal(&anp_signal(reference, noisy, dl, units)?, reference)
}

/// Differences between two independently noisy passes, `pass2` acting as the
/// reference: `δa_l = a⁽¹⁾_l − a⁽²⁾_l`, `δL = L(pass1) − L(pass2)`.
pub fn double_noisy_differences(
    pass1: &ForwardTrace,
    pass2: &ForwardTrace,
    loss: Loss,
    target: &[f64],
) -> Result<ActivityDifference> {
    let (b1, b2) = match (pass1.noise(), pass2.noise()) {
        (Some(b1), Some(b2)) => (b1, b2),
        _ => return Err(invalid!("double-noisy mode needs two noisy passes")),
    };
    if b1 == b2 {
        return Err(degenerate!("both passes used the same noise bundle"));
    }
    let dl = LossDifferential::between(
        loss.value(pass1.output(), target)?,
        loss.value(pass2.output(), target)?,
    );
    ActivityDifference::between(pass2, pass1, dl)
}

/// Mean of `k` updates, draw `i` produced by `draw(i)`.
pub fn resample_update(
    k: usize,
    mut draw: impl FnMut(usize) -> Result<UpdateSet>,
) -> Result<UpdateSet> {
    if k == 0 {
        return Err(invalid!("resample count must be at least 1"));
    }
    let mut acc = draw(0)?;
    for i in 1..k {
        acc.axpy(1.0, &draw(i)?)?;
    }
    acc.scale(1.0 / k as f64);
    Ok(acc)
}

fn check_variance(variance: f64) -> Result<()> {
    if variance > 0.0 && variance.is_finite() {
        Ok(())
    } else {
        Err(invalid!("noise variance must be positive, got {variance}"))
    }
}

fn check_same_input(a: &ForwardTrace, b: &ForwardTrace) -> Result<()> {
    if a.input() == b.input() {
        Ok(())
    } else {
        Err(invalid!("traces were computed on different input samples"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{NetworkSpec, NoiseBundle};
    use crate::numerics::Matrix;
    use crate::Error;
    use alloc::vec;

    fn scalar_linear_net() -> Network {
        // x0 = 1, W = 1 keeps a = 1 on the linear branch of the leaky ReLU.
        let spec = NetworkSpec::new(vec![1, 1]);
        Network::from_weights(spec, vec![Matrix::from_vec(1, 1, vec![1.0]).unwrap()]).unwrap()
    }

    fn all_layer(net: &Network, values: Vec<Vec<f64>>, var: f64) -> NoiseBundle {
        let _ = net;
        NoiseBundle::new(
            NoiseTarget::AllLayers,
            var,
            values.into_iter().map(Vector::from).collect(),
        )
        .unwrap()
    }

    #[test]
    fn bp_zero_at_mse_optimum() {
        let net = Network::init(NetworkSpec::new(vec![3, 4, 2]), &RngStream::new(0)).unwrap();
        let x = [0.5, -0.3, 0.8];
        let t = net.forward(&x, None).unwrap();
        let target = t.output().clone();
        let u = bp_update(&net, &t, &target, Loss::SquaredError).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn bp_scalar_hand_gradient() {
        let net = scalar_linear_net();
        let t = net.forward(&[1.0], None).unwrap();
        let u = bp_update(&net, &t, &[0.0], Loss::SquaredError).unwrap();
        assert!((u.layer(1).get(0, 0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn np_zero_loss_change_gives_zero_update() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let clean = net.forward(&[1.0, 2.0], None).unwrap();
        let b = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(2))
            .unwrap();
        let noisy = net.forward(&[1.0, 2.0], Some(&b)).unwrap();
        let u = np_update(&clean, &noisy, LossDifferential(0.0), 1e-6).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn np_hand_value() {
        let spec = NetworkSpec::new(vec![2, 1]);
        let net =
            Network::from_weights(spec, vec![Matrix::from_vec(1, 2, vec![0.3, 0.1]).unwrap()])
                .unwrap();
        let clean = net.forward(&[1.0, -1.0], None).unwrap();
        let b = all_layer(&net, vec![vec![1e-3]], 1e-6);
        let noisy = net.forward(&[1.0, -1.0], Some(&b)).unwrap();
        let u = np_update(&clean, &noisy, LossDifferential(2.0), 1e-6).unwrap();
        let w = u.layer(1).as_slice();
        assert!(
            (w[0] - 2000.0).abs() < 1e-9 && (w[1] + 2000.0).abs() < 1e-9,
            "{w:?}"
        );
    }

    #[test]
    fn np_rejects_single_layer_bundle() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let clean = net.forward(&[1.0, 2.0], None).unwrap();
        let b = net
            .sample_noise(NoiseTarget::SingleLayer(1), 1e-6, &RngStream::new(2))
            .unwrap();
        let noisy = net.forward(&[1.0, 2.0], Some(&b)).unwrap();
        assert!(matches!(
            np_update(&clean, &noisy, LossDifferential(1.0), 1e-6),
            Err(Error::InvalidParameter(_))
        ));
        assert!(np_update(&clean, &clean, LossDifferential(1.0), 1e-6).is_err());
    }

    #[test]
    fn inp_scalar_expansion() {
        // δL = (1 + v)² − 1 = 2v + v², so ΔW = δL / v = 2 + v exactly.
        let net = scalar_linear_net();
        let s = RngStream::new(5);
        let u = inp_update(&net, &[1.0], &[0.0], Loss::SquaredError, 1e-6, &s).unwrap();
        let v = net
            .sample_noise(NoiseTarget::SingleLayer(1), 1e-6, &s)
            .unwrap()
            .layer(1)[0];
        let expected = 2.0 + v;
        assert!(
            (u.layer(1).get(0, 0) - expected).abs() < 1e-6,
            "{}",
            u.layer(1).get(0, 0)
        );
        assert!((u.layer(1).get(0, 0) - 2.0).abs() < 1e-2);
    }

    #[test]
    fn inp_constant_loss_gives_zero_update() {
        // Slope 0 and a strongly negative pre-activation: the output is pinned at 0.
        let spec = NetworkSpec::new(vec![1, 1]).with_slope(0.0);
        let net =
            Network::from_weights(spec, vec![Matrix::from_vec(1, 1, vec![-5.0]).unwrap()]).unwrap();
        let u = inp_update(
            &net,
            &[1.0],
            &[0.3],
            Loss::SquaredError,
            1e-6,
            &RngStream::new(0),
        )
        .unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn anp_equals_inp_on_single_layer() {
        let spec = NetworkSpec::new(vec![4, 3]);
        let net = Network::init(spec, &RngStream::new(3)).unwrap();
        let x = [0.4, -0.2, 0.9, 0.1];
        let target = [0.0, 1.0, 0.0];
        let s = RngStream::new(4);
        let clean = net.forward(&x, None).unwrap();
        let inp = inp_update(&net, &x, &target, Loss::SquaredError, 1e-6, &s).unwrap();
        // Same draw as INP's layer-1 perturbation.
        let b = net.sample_noise(NoiseTarget::AllLayers, 1e-6, &s).unwrap();
        let noisy = net.forward(&x, Some(&b)).unwrap();
        let dl = LossDifferential::between(
            Loss::SquaredError.value(noisy.output(), &target).unwrap(),
            Loss::SquaredError.value(clean.output(), &target).unwrap(),
        );
        let anp = anp_update(&clean, &noisy, dl, UnitCount::NoisyUnits).unwrap();
        let np = np_update(&clean, &noisy, dl, 1e-6).unwrap();
        for (a, b) in anp.layer(1).as_slice().iter().zip(inp.layer(1).as_slice()) {
            assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
        }
        assert!(anp.angle_degrees(&np).unwrap() < 1e-5);
    }

    #[test]
    fn anp_zero_loss_change() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let clean = net.forward(&[1.0, 2.0], None).unwrap();
        let b = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(2))
            .unwrap();
        let noisy = net.forward(&[1.0, 2.0], Some(&b)).unwrap();
        let u = anp_update(&clean, &noisy, LossDifferential(0.0), UnitCount::NoisyUnits).unwrap();
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn anp_degenerate_when_passes_agree() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let clean = net.forward(&[1.0, 2.0], None).unwrap();
        assert!(matches!(
            anp_update(&clean, &clean, LossDifferential(1.0), UnitCount::NoisyUnits),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn unit_count_modes() {
        let net = Network::init(NetworkSpec::new(vec![5, 3, 2]), &RngStream::new(1)).unwrap();
        let t = net.forward(&[0.0; 5], None).unwrap();
        assert_eq!(UnitCount::NoisyUnits.count_for_trace(&t), 5);
        assert_eq!(UnitCount::AllUnits.count_for_trace(&t), 10);
    }

    #[test]
    fn double_noisy_identical_bundles_are_degenerate() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let b = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(2))
            .unwrap();
        let p = net.forward(&[1.0, 2.0], Some(&b)).unwrap();
        let target = [1.0, 0.0];
        assert!(matches!(
            double_noisy_differences(&p, &p.clone(), Loss::SquaredError, &target),
            Err(Error::Degenerate(_))
        ));
        let clean = net.forward(&[1.0, 2.0], None).unwrap();
        assert!(matches!(
            double_noisy_differences(&p, &clean, Loss::SquaredError, &target),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn double_noisy_swap_negates() {
        let net = Network::init(NetworkSpec::new(vec![2, 3, 2]), &RngStream::new(1)).unwrap();
        let x = [1.0, 2.0];
        let target = [1.0, 0.0];
        let b1 = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(2))
            .unwrap();
        let b2 = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(3))
            .unwrap();
        let p1 = net.forward(&x, Some(&b1)).unwrap();
        let p2 = net.forward(&x, Some(&b2)).unwrap();
        let d12 = double_noisy_differences(&p1, &p2, Loss::SquaredError, &target).unwrap();
        let d21 = double_noisy_differences(&p2, &p1, Loss::SquaredError, &target).unwrap();
        assert_eq!(d12.loss().value(), -d21.loss().value());
        for l in 1..=2 {
            for (a, b) in d12.layer(l).iter().zip(d21.layer(l).iter()) {
                assert_eq!(*a, -*b);
            }
        }
        // The ANP signal is unchanged by the swap.
        let s12 = d12.anp_signal(5.0).unwrap();
        let s21 = d21.anp_signal(5.0).unwrap();
        for l in 1..=2 {
            for (a, b) in s12.layer(l).iter().zip(s21.layer(l).iter()) {
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn resample_count_one_is_identity_and_zero_is_invalid() {
        let net = Network::init(NetworkSpec::new(vec![2, 2]), &RngStream::new(1)).unwrap();
        let x = [0.3, 0.7];
        let target = [1.0, 0.0];
        let draw = |i: usize| {
            inp_update(
                &net,
                &x,
                &target,
                Loss::SquaredError,
                1e-6,
                &RngStream::new(i as u64),
            )
        };
        assert_eq!(resample_update(1, draw).unwrap(), draw(0).unwrap());
        assert!(resample_update(0, draw).is_err());
        let zero = resample_update(4, |_| Ok(UpdateSet::zeros(&net))).unwrap();
        assert_eq!(zero.max_abs(), 0.0);
    }

    #[test]
    fn rules_are_positively_homogeneous_in_loss_change() {
        let net = Network::init(NetworkSpec::new(vec![3, 4, 2]), &RngStream::new(6)).unwrap();
        let x = [0.2, -0.5, 0.9];
        let clean = net.forward(&x, None).unwrap();
        let b = net
            .sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(7))
            .unwrap();
        let noisy = net.forward(&x, Some(&b)).unwrap();
        for c in [0.1, 3.0, 250.0] {
            let np1 = np_update(&clean, &noisy, LossDifferential(0.7), 1e-6).unwrap();
            let mut npc = np_update(&clean, &noisy, LossDifferential(0.7 * c), 1e-6).unwrap();
            let an1 =
                anp_update(&clean, &noisy, LossDifferential(0.7), UnitCount::NoisyUnits).unwrap();
            let mut anc = anp_update(
                &clean,
                &noisy,
                LossDifferential(0.7 * c),
                UnitCount::NoisyUnits,
            )
            .unwrap();
            npc.scale(1.0 / c);
            anc.scale(1.0 / c);
            for (a, b) in [(np1, npc), (an1, anc)] {
                let mut d = a.clone();
                d.axpy(-1.0, &b).unwrap();
                assert!(d.max_abs() <= 1e-12 * a.max_abs());
            }
        }
    }

    #[test]
    fn np_monte_carlo_mean_matches_bp_on_scalar_net() {
        let net = scalar_linear_net();
        let clean = net.forward(&[1.0], None).unwrap();
        let l0 = Loss::SquaredError.value(clean.output(), &[0.0]).unwrap();
        let root = RngStream::new(21);
        let n = 10_000;
        let mut mean = 0.0;
        for k in 0..n {
            let b = net
                .sample_noise(NoiseTarget::AllLayers, 1e-6, &root.derive(k))
                .unwrap();
            let noisy = net.forward(&[1.0], Some(&b)).unwrap();
            let dl = LossDifferential::between(
                Loss::SquaredError.value(noisy.output(), &[0.0]).unwrap(),
                l0,
            );
            mean += np_update(&clean, &noisy, dl, 1e-6)
                .unwrap()
                .layer(1)
                .get(0, 0);
        }
        mean /= n as f64;
        assert!((mean - 2.0).abs() < 0.1, "{mean}");
    }
}
