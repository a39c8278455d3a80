use alloc::vec::Vec;

use crate::error::{invalid, shape, Error, Result};
use crate::learners::{
    anp_signal, bp_update, inp_signal, np_signal, LossDifferential, RuleKind, Signal, UnitCount,
    UpdateSet,
};
use crate::network::{ForwardTrace, Loss, Network, NoiseTarget};
use crate::numerics::{RngStream, Vector};

/// What to measure in [`alignment_experiment`].
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentSettings {
    /// Perturbative rules to compare against backpropagation.
    pub algorithms: Vec<RuleKind>,
    /// Noise iterations after which the running mean is scored.
    pub averaging_counts: Vec<usize>,
    /// σ² values; every value reuses the same standard-normal draws.
    pub variances: Vec<f64>,
    pub unit_count: UnitCount,
    pub seed: u64,
}

impl AlignmentSettings {
    pub fn new(seed: u64) -> Self {
        AlignmentSettings {
            algorithms: alloc::vec![RuleKind::Np, RuleKind::Inp, RuleKind::Anp],
            averaging_counts: alloc::vec![1, 10, 100, 1000],
            variances: alloc::vec![1e-6],
            unit_count: UnitCount::NoisyUnits,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            return Err(invalid!("alignment needs at least one algorithm"));
        }
        if self.algorithms.contains(&RuleKind::Bp) {
            return Err(invalid!(
                "backpropagation is the reference, not a compared rule"
            ));
        }
        if self.averaging_counts.is_empty() || self.averaging_counts.contains(&0) {
            return Err(invalid!(
                "averaging counts must be non-empty and at least 1"
            ));
        }
        if self.variances.is_empty() || self.variances.iter().any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(invalid!("variances must be non-empty and positive"));
        }
        Ok(())
    }
}

/// One angle measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentRow {
    pub algorithm: RuleKind,
    pub layer: usize,
    pub averaging_count: usize,
    /// Forward passes per sample to reach `averaging_count` noise iterations.
    pub forward_passes: u64,
    pub sigma2: f64,
    pub angle_degrees: f64,
    pub seed: u64,
}

/// Angles between perturbative batch updates and the backpropagation update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AlignmentReport {
    rows: Vec<AlignmentRow>,
}

impl AlignmentReport {
    pub fn rows(&self) -> &[AlignmentRow] {
        &self.rows
    }

    pub fn push(&mut self, row: AlignmentRow) {
        self.rows.push(row);
    }

    pub fn extend(&mut self, other: AlignmentReport) {
        self.rows.extend(other.rows);
    }

    /// Angles matching every given filter, in row order.
    pub fn angles(
        &self,
        algorithm: RuleKind,
        layer: usize,
        averaging_count: usize,
        sigma2: Option<f64>,
    ) -> impl Iterator<Item = f64> + '_ {
        self.rows
            .iter()
            .filter(move |r| {
                r.algorithm == algorithm
                    && r.layer == layer
                    && r.averaging_count == averaging_count
                    && sigma2.is_none_or(|s| r.sigma2 == s)
            })
            .map(|r| r.angle_degrees)
    }

    /// Mean over matching rows (typically over seeds); `None` when none match.
    pub fn mean_angle(
        &self,
        algorithm: RuleKind,
        layer: usize,
        averaging_count: usize,
        sigma2: Option<f64>,
    ) -> Option<f64> {
        let (sum, n) = self
            .angles(algorithm, layer, averaging_count, sigma2)
            .fold((0.0, 0usize), |(s, n), a| (s + a, n + 1));
        (n > 0).then(|| sum / n as f64)
    }
}

/// Angles between BP's batch update and the batch updates of perturbative
/// rules on a frozen network, as the number of averaged noise iterations
/// grows.
///
/// Draw `k` of sample `i` comes from `RngStream::new(seed).derive(i).derive(k)`
/// and is shared by all rules and all σ², so the comparisons use common
/// random numbers.
pub fn alignment_experiment(
    net: &Network,
    inputs: &[Vector],
    targets: &[Vector],
    loss: Loss,
    settings: &AlignmentSettings,
) -> Result<AlignmentReport> {
    settings.validate()?;
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(shape!(
            "alignment batch has {} inputs and {} targets",
            inputs.len(),
            targets.len()
        ));
    }
    let depth = net.depth();
    let cleans = inputs
        .iter()
        .map(|x| net.forward(x, None))
        .collect::<Result<Vec<_>>>()?;
    let clean_losses = cleans
        .iter()
        .zip(targets)
        .map(|(c, t)| loss.value(c.output(), t))
        .collect::<Result<Vec<_>>>()?;
    let mut bp = UpdateSet::zeros(net);
    for (c, t) in cleans.iter().zip(targets) {
        bp.axpy(1.0, &bp_update(net, c, t, loss)?)?;
    }
    bp.scale(1.0 / inputs.len() as f64);

    let root = RngStream::new(settings.seed);
    let max_count = settings.averaging_counts.iter().copied().max().unwrap_or(0);
    let needs_joint = settings
        .algorithms
        .iter()
        .any(|a| matches!(a, RuleKind::Np | RuleKind::Anp));
    let mut report = AlignmentReport::default();

    for &sigma2 in &settings.variances {
        let mut sums: Vec<Vec<Signal>> = settings
            .algorithms
            .iter()
            .map(|_| inputs.iter().map(|_| Signal::zeros(net.spec())).collect())
            .collect();
        let mut used = alloc::vec![alloc::vec![0usize; inputs.len()]; settings.algorithms.len()];
        for k in 0..max_count {
            for (i, clean) in cleans.iter().enumerate() {
                let stream = root.derive(i as u64).derive(k as u64);
                let noisy = if needs_joint {
                    let bundle = net.sample_noise(NoiseTarget::AllLayers, sigma2, &stream)?;
                    let noisy = net.forward(&inputs[i], Some(&bundle))?;
                    let dl = LossDifferential::between(
                        loss.value(noisy.output(), &targets[i])?,
                        clean_losses[i],
                    );
                    Some((noisy, dl))
                } else {
                    None
                };
                for (a, &algorithm) in settings.algorithms.iter().enumerate() {
                    let signal = match (algorithm, &noisy) {
                        (RuleKind::Np, Some((noisy, dl))) => np_signal(noisy, *dl, sigma2),
                        (RuleKind::Anp, Some((noisy, dl))) => {
                            anp_signal(clean, noisy, *dl, settings.unit_count)
                        }
                        (RuleKind::Inp, _) => {
                            inp_signal(net, clean, &targets[i], loss, sigma2, &stream)
                        }
                        _ => unreachable!("validated above"),
                    };
                    match signal {
                        Ok(s) => {
                            sums[a][i].axpy(1.0, &s)?;
                            used[a][i] += 1;
                        }
                        Err(Error::Degenerate(_)) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
            let count = k + 1;
            if !settings.averaging_counts.contains(&count) {
                continue;
            }
            for (a, &algorithm) in settings.algorithms.iter().enumerate() {
                let update = batch_update(net, &cleans, &sums[a], &used[a])?;
                let passes = match algorithm {
                    RuleKind::Inp => 1 + (depth * count) as u64,
                    _ => 1 + count as u64,
                };
                for layer in 1..=depth {
                    report.push(AlignmentRow {
                        algorithm,
                        layer,
                        averaging_count: count,
                        forward_passes: passes,
                        sigma2,
                        angle_degrees: update.layer_angle_degrees(&bp, layer)?,
                        seed: settings.seed,
                    });
                }
            }
        }
    }
    Ok(report)
}

/// `mean_i (Σ_k s_ik / used_i) (x*_i)ᵀ`, skipping samples with no usable draw.
fn batch_update(
    net: &Network,
    cleans: &[ForwardTrace],
    sums: &[Signal],
    used: &[usize],
) -> Result<UpdateSet> {
    let mut update = UpdateSet::zeros(net);
    let mut samples = 0usize;
    for ((clean, sum), &n) in cleans.iter().zip(sums).zip(used) {
        if n > 0 {
            update.add_signal(1.0 / n as f64, sum, clean)?;
            samples += 1;
        }
    }
    if samples > 0 {
        update.scale(1.0 / samples as f64);
    }
    Ok(update)
}
