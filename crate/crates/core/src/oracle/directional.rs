use crate::error::{degenerate, invalid, Error, Result};
use crate::learners::DEGENERATE_NORM;
use crate::network::{ForwardTrace, Loss, Network, NoiseBundle, NoiseTarget};
use crate::numerics::{RngStream, Vector};

/// Noise-averaged directional-derivative estimate of `g_l = ∂L/∂a_l`:
/// `ĝ_l = N_l · mean_s [δL_s v_s / ‖v_s‖²]` over `samples` single-layer draws.
///
/// Draw `s` uses `stream.derive(s)`. Zero-norm draws are skipped.
#[allow(clippy::too_many_arguments)]
pub fn directional_gradient_estimate(
    net: &Network,
    x0: &[f64],
    target: &[f64],
    loss: Loss,
    layer: usize,
    samples: usize,
    variance: f64,
    stream: &RngStream,
) -> Result<Vector> {
    if samples == 0 {
        return Err(invalid!("directional estimate needs at least one sample"));
    }
    if layer == 0 || layer > net.depth() {
        return Err(invalid!("layer {layer} out of range 1..={}", net.depth()));
    }
    let clean = net.forward(x0, None)?;
    let clean_loss = loss.value(clean.output(), target)?;
    let mut sum = Vector::zeros(net.spec().width(layer));
    let mut used = 0usize;
    for s in 0..samples {
        let bundle = net.sample_noise(
            NoiseTarget::SingleLayer(layer),
            variance,
            &stream.derive(s as u64),
        )?;
        match directional_term(net, &clean, clean_loss, target, loss, &bundle, layer) {
            Ok(term) => {
                sum.axpy(1.0, &term);
                used += 1;
            }
            Err(Error::Degenerate(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(degenerate!("every draw had a zero-norm perturbation"));
    }
    sum.scale(1.0 / used as f64);
    Ok(sum)
}

/// `N_l δL v / ‖v‖²` for one single-layer perturbation `v`.
pub(crate) fn directional_term(
    net: &Network,
    clean: &ForwardTrace,
    clean_loss: f64,
    target: &[f64],
    loss: Loss,
    bundle: &NoiseBundle,
    layer: usize,
) -> Result<Vector> {
    let noisy = net.forward(clean.input(), Some(bundle))?;
    let dl = loss.value(noisy.output(), target)? - clean_loss;
    let v = bundle.layer(layer);
    let sq = v.squared_norm();
    if libm::sqrt(sq) < DEGENERATE_NORM {
        return Err(degenerate!("zero-norm perturbation on layer {layer}"));
    }
    let mut term = v.clone();
    term.scale(v.len() as f64 * dl / sq);
    Ok(term)
}
