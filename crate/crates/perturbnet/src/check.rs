//! The oracle suite behind `perturbnet check`.

use perturbnet_core::learners::{anp_update, bp_update, np_update, resample_update};
use perturbnet_core::oracle::{
    covariance_propagation_check, directional_gradient_estimate, fd_gradient, layer_scaled_error,
    smooth_input, DEFAULT_FD_STEP, SMOOTH_MARGIN,
};
use perturbnet_core::{
    angle_degrees, Loss, LossDifferential, Matrix, Network, NetworkSpec, NoiseTarget, RngStream,
    RuleConfig, RuleKind, UnitCount, Vector,
};

use crate::error::Result;

/// Outcome of one oracle check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn target(classes: usize, class: usize) -> Vector {
    let mut t = Vector::zeros(classes);
    t[class] = 1.0;
    t
}

fn bp_vs_fd() -> Result<(bool, String)> {
    let net = Network::init(
        NetworkSpec::new(vec![12, 8, 8, 4]).with_linear_output(true),
        &RngStream::new(1),
    )?;
    let x = smooth_input(&net, SMOOTH_MARGIN, &RngStream::new(2))?;
    let t = target(4, 1);
    let bp = bp_update(&net, &net.forward(&x, None)?, &t, Loss::CrossEntropy)?;
    let fd = fd_gradient(&net, &x, &t, Loss::CrossEntropy, DEFAULT_FD_STEP)?;
    let angle = bp.angle_degrees(&fd)?;
    let rel = layer_scaled_error(&bp, &fd)?;
    Ok((
        angle < 0.01 && rel < 1e-6,
        format!("angle {angle:.3e} deg, layer-scaled error {rel:.3e}"),
    ))
}

fn directional_recovery() -> Result<(bool, String)> {
    let net = Network::init(
        NetworkSpec::new(vec![10, 8, 8, 3]).with_linear_output(true),
        &RngStream::new(3),
    )?;
    let x = perturbnet_core::standard_normals(10, &RngStream::new(4));
    let t = target(3, 2);
    let g = perturbnet_core::learners::backprop_signal(
        &net,
        &net.forward(&x, None)?,
        &t,
        Loss::CrossEntropy,
    )?;
    let mut passed = true;
    let mut detail = Vec::new();
    for l in 1..=net.depth() {
        let angles = [100, 10_000]
            .iter()
            .map(|&s| {
                let est = directional_gradient_estimate(
                    &net,
                    &x,
                    &t,
                    Loss::CrossEntropy,
                    l,
                    s,
                    1e-6,
                    &RngStream::new(5),
                )?;
                Ok(angle_degrees(&est, g.layer(l))?)
            })
            .collect::<Result<Vec<f64>>>()?;
        passed &= angles[1] < angles[0];
        detail.push(format!(
            "layer {l}: {:.2} -> {:.2} deg",
            angles[0], angles[1]
        ));
    }
    Ok((passed, detail.join(", ")))
}

fn covariance_propagation() -> Result<(bool, String)> {
    let stream = RngStream::new(6);
    let w = Matrix::from_fn(8, 8, |r, c| {
        perturbnet_core::standard_normals(1, &stream.derive((r * 8 + c) as u64))[0]
    });
    let check = covariance_propagation_check(&w, 100_000, &RngStream::new(7))?;
    Ok((
        check.relative_error < 0.05,
        format!("relative error {:.4}", check.relative_error),
    ))
}

fn anp_soundness() -> Result<(bool, String)> {
    let net = Network::init(
        NetworkSpec::new(vec![16, 8, 4]).with_linear_output(true),
        &RngStream::new(8),
    )?;
    let x = perturbnet_core::standard_normals(16, &RngStream::new(9));
    let t = target(4, 0);
    let clean = net.forward(&x, None)?;
    let l0 = Loss::CrossEntropy.value(clean.output(), &t)?;
    let bp = bp_update(&net, &clean, &t, Loss::CrossEntropy)?;
    let stream = RngStream::new(10);
    let mean = resample_update(10_000, |k| {
        let bundle = net.sample_noise(NoiseTarget::AllLayers, 1e-6, &stream.derive(k as u64))?;
        let noisy = net.forward(&x, Some(&bundle))?;
        let dl = LossDifferential::between(Loss::CrossEntropy.value(noisy.output(), &t)?, l0);
        anp_update(&clean, &noisy, dl, UnitCount::NoisyUnits)
    })?;
    let angle = mean.angle_degrees(&bp)?;
    Ok((angle < 90.0, format!("angle {angle:.2} deg")))
}

fn np_anp_first_layer() -> Result<(bool, String)> {
    let net = Network::init(
        NetworkSpec::new(vec![10, 8, 8, 3]).with_linear_output(true),
        &RngStream::new(11),
    )?;
    let x = perturbnet_core::standard_normals(10, &RngStream::new(12));
    let t = target(3, 0);
    let clean = net.forward(&x, None)?;
    let l0 = Loss::CrossEntropy.value(clean.output(), &t)?;
    let bundle = net.sample_noise(NoiseTarget::AllLayers, 1e-6, &RngStream::new(13))?;
    let noisy = net.forward(&x, Some(&bundle))?;
    let dl = LossDifferential::between(Loss::CrossEntropy.value(noisy.output(), &t)?, l0);
    let np = np_update(&clean, &noisy, dl, 1e-6)?;
    let anp = anp_update(&clean, &noisy, dl, UnitCount::NoisyUnits)?;
    let angle = np.layer_angle_degrees(&anp, 1)?;
    Ok((angle < 1e-6, format!("angle {angle:.3e} deg")))
}

fn forward_pass_accounting() -> Result<(bool, String)> {
    let depth = 4;
    let mut ok = true;
    for (kind, double, k, expected) in [
        (RuleKind::Bp, false, 1, 1),
        (RuleKind::Np, false, 1, 2),
        (RuleKind::Anp, false, 1, 2),
        (RuleKind::Inp, false, 1, 5),
        (RuleKind::Np, false, 7, 8),
        (RuleKind::Anp, true, 3, 6),
        (RuleKind::Inp, false, 3, 13),
    ] {
        let mut c = RuleConfig::new(kind);
        c.double_noisy = double;
        c.resamples = k;
        ok &= c.forward_passes_per_sample(depth) == expected;
    }
    Ok((ok, format!("depth {depth}")))
}

type CheckFn = fn() -> Result<(bool, String)>;

/// Run every check; errors inside a check count as failures.
pub fn run_checks() -> Vec<CheckOutcome> {
    let checks: [(&'static str, CheckFn); 6] = [
        ("backprop matches finite differences", bp_vs_fd),
        (
            "directional average approaches the gradient",
            directional_recovery,
        ),
        (
            "white inputs acquire covariance W Wᵀ",
            covariance_propagation,
        ),
        ("mean ANP update is a descent direction", anp_soundness),
        (
            "NP and ANP share the first-layer direction per draw",
            np_anp_first_layer,
        ),
        ("forward-pass cost model", forward_pass_accounting),
    ];
    checks
        .into_iter()
        .map(|(name, check)| {
            let (passed, detail) = check().unwrap_or_else(|e| (false, e.to_string()));
            CheckOutcome {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_check_passes() {
        for c in run_checks() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
