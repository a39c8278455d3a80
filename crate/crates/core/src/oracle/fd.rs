use crate::error::{degenerate, invalid, Result};
use crate::learners::UpdateSet;
use crate::network::{Loss, Network};
use crate::numerics::{standard_normals, RngStream, Vector};

pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Minimum distance from every pre-activation to the ReLU kink for inputs
/// used in finite-difference checks.
pub const SMOOTH_MARGIN: f64 = 1e-3;

const SMOOTH_ATTEMPTS: u64 = 1000;

/// Central-difference gradient of the loss with respect to every weight.
///
/// Decorrelation matrices are held fixed.
pub fn fd_gradient(
    net: &Network,
    x0: &[f64],
    target: &[f64],
    loss: Loss,
    step: f64,
) -> Result<UpdateSet> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(invalid!(
            "finite-difference step must be positive, got {step}"
        ));
    }
    let mut probe = net.clone();
    let mut layers = UpdateSet::zeros(net).into_layers();
    for (l, g) in layers.iter_mut().enumerate() {
        for i in 0..g.as_slice().len() {
            let w = probe.weights()[l].as_slice()[i];
            probe.weights_mut()[l].as_mut_slice()[i] = w + step;
            let up = loss.value(probe.forward(x0, None)?.output(), target)?;
            probe.weights_mut()[l].as_mut_slice()[i] = w - step;
            let down = loss.value(probe.forward(x0, None)?.output(), target)?;
            probe.weights_mut()[l].as_mut_slice()[i] = w;
            g.as_mut_slice()[i] = (up - down) / (2.0 * step);
        }
    }
    Ok(UpdateSet::from_layers(layers))
}

/// Standard-normal input whose clean pass keeps every activated unit at
/// least `margin` away from the kink. Redraws from `stream.derive(attempt)`.
pub fn smooth_input(net: &Network, margin: f64, stream: &RngStream) -> Result<Vector> {
    let linear_output = net.spec().linear_output;
    for attempt in 0..SMOOTH_ATTEMPTS {
        let x = standard_normals(net.spec().input_width(), &stream.derive(attempt));
        if net.forward(&x, None)?.min_kink_distance(linear_output) >= margin {
            return Ok(x);
        }
    }
    Err(degenerate!(
        "no input within {SMOOTH_ATTEMPTS} draws keeps every unit {margin} from the kink"
    ))
}

/// `max_i |a_i − b_i| / max(|a_i|, |b_i|, floor)` over every entry.
///
/// The floor keeps entries that are zero up to rounding from dominating.
pub fn max_relative_error(reference: &UpdateSet, other: &UpdateSet, floor: f64) -> Result<f64> {
    if reference.depth() != other.depth() {
        return Err(invalid!("update sets have different depths"));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in reference.layers().iter().zip(other.layers()) {
        if a.shape() != b.shape() {
            return Err(invalid!("update sets have different layer shapes"));
        }
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            let scale = x.abs().max(y.abs()).max(floor);
            if scale > 0.0 {
                worst = worst.max((x - y).abs() / scale);
            }
        }
    }
    Ok(worst)
}

/// `max_l max_i |a_li − b_li| / max_i |a_li|`: entrywise error against the
/// scale of each reference layer.
pub fn layer_scaled_error(reference: &UpdateSet, other: &UpdateSet) -> Result<f64> {
    if reference.depth() != other.depth() {
        return Err(invalid!("update sets have different depths"));
    }
    let mut worst: f64 = 0.0;
    for (a, b) in reference.layers().iter().zip(other.layers()) {
        if a.shape() != b.shape() {
            return Err(invalid!("update sets have different layer shapes"));
        }
        let scale = a.max_abs();
        let diff = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        if scale > 0.0 {
            worst = worst.max(diff / scale);
        } else if diff > 0.0 {
            worst = f64::INFINITY;
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learners::bp_update;
    use crate::network::NetworkSpec;
    use crate::numerics::Matrix;
    use alloc::vec;

    #[test]
    fn scalar_linear_gradient() {
        let spec = NetworkSpec::new(vec![1, 1]).with_linear_output(true);
        let net =
            Network::from_weights(spec, vec![Matrix::from_vec(1, 1, vec![1.0]).unwrap()]).unwrap();
        let g = fd_gradient(&net, &[1.0], &[0.0], Loss::SquaredError, 1e-5).unwrap();
        assert!((g.layer(1).get(0, 0) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn constant_loss_gives_zero() {
        let spec = NetworkSpec::new(vec![2, 1]);
        let net = Network::from_weights(spec, vec![Matrix::zeros(1, 2)]).unwrap();
        let g = fd_gradient(&net, &[0.0, 0.0], &[0.0], Loss::SquaredError, 1e-5).unwrap();
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn rejects_non_positive_step() {
        let net = Network::init(NetworkSpec::new(vec![2, 1]), &RngStream::new(0)).unwrap();
        assert!(fd_gradient(&net, &[1.0, 1.0], &[0.0], Loss::SquaredError, 0.0).is_err());
    }

    #[test]
    fn agrees_with_backprop_on_small_net() {
        let spec = NetworkSpec::new(vec![6, 5, 4, 3]).with_linear_output(true);
        let net = Network::init(spec, &RngStream::new(11)).unwrap();
        let x = smooth_input(&net, SMOOTH_MARGIN, &RngStream::new(12)).unwrap();
        let t = [0.0, 1.0, 0.0];
        let bp = bp_update(
            &net,
            &net.forward(&x, None).unwrap(),
            &t,
            Loss::CrossEntropy,
        )
        .unwrap();
        let fd = fd_gradient(&net, &x, &t, Loss::CrossEntropy, 1e-5).unwrap();
        assert!(bp.angle_degrees(&fd).unwrap() < 1e-4);
        assert!(layer_scaled_error(&bp, &fd).unwrap() < 1e-6);
    }

    #[test]
    fn error_shrinks_quadratically_with_step() {
        let spec = NetworkSpec::new(vec![5, 4, 3]).with_linear_output(true);
        let net = Network::init(spec, &RngStream::new(5)).unwrap();
        let x = smooth_input(&net, 0.05, &RngStream::new(6)).unwrap();
        let t = [1.0, 0.0, 0.0];
        let bp = bp_update(
            &net,
            &net.forward(&x, None).unwrap(),
            &t,
            Loss::CrossEntropy,
        )
        .unwrap();
        let err = |h: f64| {
            let mut d = fd_gradient(&net, &x, &t, Loss::CrossEntropy, h).unwrap();
            d.axpy(-1.0, &bp).unwrap();
            d.max_abs()
        };
        let ratio = err(4e-3) / err(1e-3);
        assert!((12.0..20.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn smooth_input_respects_margin() {
        let net = Network::init(NetworkSpec::new(vec![8, 8, 4]), &RngStream::new(1)).unwrap();
        let x = smooth_input(&net, SMOOTH_MARGIN, &RngStream::new(2)).unwrap();
        assert!(net.forward(&x, None).unwrap().min_kink_distance(false) >= SMOOTH_MARGIN);
    }

    #[test]
    fn layer_scaled_error_uses_layer_maximum() {
        let a = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![2.0, 0.0]).unwrap()]);
        let b = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![2.0, 1e-3]).unwrap()]);
        assert!((layer_scaled_error(&a, &b).unwrap() - 5e-4).abs() < 1e-15);
        let z = UpdateSet::from_layers(vec![Matrix::zeros(1, 2)]);
        assert_eq!(layer_scaled_error(&z, &z).unwrap(), 0.0);
        assert_eq!(layer_scaled_error(&z, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn relative_error_uses_floor() {
        let a = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![1.0, 0.0]).unwrap()]);
        let b = UpdateSet::from_layers(vec![Matrix::from_vec(1, 2, vec![1.0, 1e-9]).unwrap()]);
        assert_eq!(max_relative_error(&a, &b, 0.0).unwrap(), 1.0);
        assert!(max_relative_error(&a, &b, 1e-3).unwrap() <= 1e-6);
    }
}
