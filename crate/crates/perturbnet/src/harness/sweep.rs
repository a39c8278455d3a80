use perturbnet_core::oracle::{alignment_experiment, AlignmentReport, AlignmentSettings};
use perturbnet_core::{Loss, Network, RngStream, RuleKind, UnitCount, Vector};

use super::ExperimentConfig;
use crate::error::{Error, Result};

/// Alignment draws use `RngStream::new(seed).derive(sample)`, so the frozen
/// network's weights come from a tag no batch index reaches.
const FROZEN_INIT_TAG: u64 = u64::MAX;

/// Second hidden layer when the network has one, else the last hidden layer
/// (or the only layer of a single-layer network).
pub fn focus_layer(depth: usize) -> usize {
    2.min(depth.saturating_sub(1)).max(1)
}

/// Settings for scoring alignment across σ² at one averaging count.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSettings {
    pub algorithms: Vec<RuleKind>,
    pub averaging_count: usize,
    /// `None` picks [`focus_layer`].
    pub layer: Option<usize>,
    pub unit_count: UnitCount,
    pub seed: u64,
}

impl SweepSettings {
    pub fn new(seed: u64) -> Self {
        SweepSettings {
            algorithms: vec![RuleKind::Np, RuleKind::Inp, RuleKind::Anp],
            averaging_count: 100,
            layer: None,
            unit_count: UnitCount::NoisyUnits,
            seed,
        }
    }
}

/// One row per (σ², algorithm): the angle to BP at the chosen layer on a
/// frozen network. All σ² share the same standard-normal draws.
pub fn sigma_sweep_on(
    net: &Network,
    inputs: &[Vector],
    targets: &[Vector],
    loss: Loss,
    variances: &[f64],
    settings: &SweepSettings,
) -> Result<AlignmentReport> {
    let layer = settings.layer.unwrap_or_else(|| focus_layer(net.depth()));
    if layer == 0 || layer > net.depth() {
        return Err(Error::Config(format!(
            "layer {layer} out of range 1..={}",
            net.depth()
        )));
    }
    let full = alignment_experiment(
        net,
        inputs,
        targets,
        loss,
        &AlignmentSettings {
            algorithms: settings.algorithms.clone(),
            averaging_counts: vec![settings.averaging_count],
            variances: variances.to_vec(),
            unit_count: settings.unit_count,
            seed: settings.seed,
        },
    )?;
    let mut report = AlignmentReport::default();
    for row in full.rows().iter().filter(|r| r.layer == layer) {
        report.push(*row);
    }
    Ok(report)
}

fn frozen_setup(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Network, Vec<Vector>, Vec<Vector>)> {
    config.validate()?;
    let (train, _) = config.dataset.load()?;
    config.check_dataset(&train)?;
    let n = config.batch_size.min(train.len());
    if n == 0 {
        return Err(Error::Config(
            "alignment needs a non-empty training split".into(),
        ));
    }
    let net = Network::init(
        config.network.clone(),
        &RngStream::new(seed).derive(FROZEN_INIT_TAG),
    )?;
    Ok((
        net,
        train.inputs()[..n].to_vec(),
        train.targets()[..n].to_vec(),
    ))
}

/// σ² sweep for every configured seed on the freshly initialised network and
/// the first `batch_size` training samples.
pub fn sigma_sweep(
    config: &ExperimentConfig,
    variances: &[f64],
    averaging_count: usize,
) -> Result<AlignmentReport> {
    let mut report = AlignmentReport::default();
    for &seed in &config.seeds {
        let (net, x, t) = frozen_setup(config, seed)?;
        let settings = SweepSettings {
            averaging_count,
            unit_count: config.rule.unit_count,
            ..SweepSettings::new(seed)
        };
        report.extend(sigma_sweep_on(
            &net,
            &x,
            &t,
            config.loss,
            variances,
            &settings,
        )?);
    }
    Ok(report)
}

/// Alignment against averaging count for every configured seed.
pub fn alignment_run(
    config: &ExperimentConfig,
    averaging_counts: &[usize],
) -> Result<AlignmentReport> {
    let mut report = AlignmentReport::default();
    for &seed in &config.seeds {
        let (net, x, t) = frozen_setup(config, seed)?;
        let settings = AlignmentSettings {
            averaging_counts: averaging_counts.to_vec(),
            variances: vec![config.rule.variance],
            unit_count: config.rule.unit_count,
            ..AlignmentSettings::new(seed)
        };
        report.extend(alignment_experiment(&net, &x, &t, config.loss, &settings)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use perturbnet_core::{standard_normals, NetworkSpec};

    #[test]
    fn focus_layer_choices() {
        assert_eq!(focus_layer(1), 1);
        assert_eq!(focus_layer(2), 1);
        assert_eq!(focus_layer(4), 2);
    }

    #[test]
    fn single_variance_single_algorithm_gives_one_row() {
        let net = Network::init(
            NetworkSpec::new(vec![5, 4, 4, 2]).with_linear_output(true),
            &RngStream::new(0),
        )
        .unwrap();
        let x: Vec<Vector> = (0..3)
            .map(|i| standard_normals(5, &RngStream::new(i)))
            .collect();
        let t: Vec<Vector> = (0..3)
            .map(|i| Vector::from(vec![(i % 2) as f64, ((i + 1) % 2) as f64]))
            .collect();
        let settings = SweepSettings {
            algorithms: vec![RuleKind::Anp],
            averaging_count: 3,
            ..SweepSettings::new(1)
        };
        let r = sigma_sweep_on(&net, &x, &t, Loss::CrossEntropy, &[1e-6], &settings).unwrap();
        assert_eq!(r.rows().len(), 1);
        assert_eq!(r.rows()[0].layer, 2);
    }
}
