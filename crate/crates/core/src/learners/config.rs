use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{invalid, Error, Result};
use crate::network::{ForwardTrace, Loss, Network, NetworkSpec, NoiseTarget};
use crate::numerics::RngStream;

use super::rules::{anp_signal, backprop_signal, double_noisy_differences, inp_signal, np_signal};
use super::{LossDifferential, Signal, UpdateSet};

/// Which learning rule produces the per-sample signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    Bp,
    Np,
    Inp,
    Anp,
}

impl RuleKind {
    pub const ALL: [RuleKind; 4] = [RuleKind::Bp, RuleKind::Np, RuleKind::Inp, RuleKind::Anp];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Bp => "bp",
            RuleKind::Np => "np",
            RuleKind::Inp => "inp",
            RuleKind::Anp => "anp",
        }
    }

    pub fn is_perturbative(self) -> bool {
        !matches!(self, RuleKind::Bp)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid!("unknown rule {s:?}; expected bp, np, inp or anp"))
    }
}

/// The `N` that scales the activity-based rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnitCount {
    /// `Σ_{l=1}^{L} N_l`: units that receive noise.
    #[default]
    NoisyUnits,
    /// `Σ_{l=0}^{L} N_l`: input units included.
    AllUnits,
}

impl UnitCount {
    pub fn count(self, spec: &NetworkSpec) -> usize {
        match self {
            UnitCount::NoisyUnits => spec.noisy_units(),
            UnitCount::AllUnits => spec.total_units(),
        }
    }

    pub fn count_for_trace(self, trace: &ForwardTrace) -> usize {
        let noisy: usize = (1..=trace.depth())
            .map(|l| trace.pre_activation(l).len())
            .sum();
        match self {
            UnitCount::NoisyUnits => noisy,
            UnitCount::AllUnits => noisy + trace.input().len(),
        }
    }
}

/// Learning-rule settings for one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleConfig {
    pub kind: RuleKind,
    pub decorrelate: bool,
    /// Perturbation variance σ².
    pub variance: f64,
    /// Noise draws `K` averaged per sample update.
    pub resamples: usize,
    /// Replace the clean pass by a second independent noisy pass.
    pub double_noisy: bool,
    /// Weight learning rate η.
    pub learning_rate: f64,
    /// Decorrelation learning rate α.
    pub decorrelation_rate: f64,
    pub unit_count: UnitCount,
}

impl RuleConfig {
    pub fn new(kind: RuleKind) -> Self {
        RuleConfig {
            kind,
            decorrelate: false,
            variance: 1e-6,
            resamples: 1,
            double_noisy: false,
            learning_rate: 1e-3,
            decorrelation_rate: 1e-3,
            unit_count: UnitCount::NoisyUnits,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(invalid!("sigma2 must be positive, got {}", self.variance));
        }
        if self.resamples == 0 {
            return Err(invalid!("noise sample count must be at least 1"));
        }
        if self.double_noisy && !matches!(self.kind, RuleKind::Np | RuleKind::Anp) {
            return Err(invalid!(
                "double-noisy passes only apply to np and anp, not {}",
                self.kind
            ));
        }
        for (name, rate) in [
            ("learning rate", self.learning_rate),
            ("decorrelation rate", self.decorrelation_rate),
        ] {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(invalid!("{name} must be non-negative, got {rate}"));
            }
        }
        Ok(())
    }

    /// Forward passes one sample update costs on a depth-`L` network.
    pub fn forward_passes_per_sample(&self, depth: usize) -> u64 {
        let k = self.resamples as u64;
        match (self.kind, self.double_noisy) {
            (RuleKind::Bp, _) => 1,
            (RuleKind::Np | RuleKind::Anp, false) => 1 + k,
            (RuleKind::Np | RuleKind::Anp, true) => 2 * k,
            (RuleKind::Inp, _) => 1 + depth as u64 * k,
        }
    }

    /// Short label such as `dnp`, `anp`, `dbp`.
    pub fn label(&self) -> alloc::string::String {
        let mut s = alloc::string::String::new();
        if self.decorrelate {
            s.push('d');
        }
        s.push_str(self.kind.name());
        s
    }
}

/// One sample's contribution to a batch update.
///
/// Holds weighted `(signal, reference trace)` terms rather than a dense
/// update, so a batch accumulates rank-one products directly.
#[derive(Debug, Clone)]
pub struct SampleUpdate {
    traces: Vec<ForwardTrace>,
    terms: Vec<(Signal, f64, usize)>,
    reference_loss: f64,
    forward_passes: u64,
    skipped_draws: usize,
}

impl SampleUpdate {
    /// Pass whose `x*` feeds the decorrelation update: the clean pass, or the
    /// first reference pass in double-noisy mode.
    pub fn reference(&self) -> &ForwardTrace {
        &self.traces[0]
    }

    pub fn reference_loss(&self) -> f64 {
        self.reference_loss
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes
    }

    /// Draws dropped for a zero-norm direction.
    pub fn skipped_draws(&self) -> usize {
        self.skipped_draws
    }

    /// True when every draw was degenerate and the sample contributes nothing.
    pub fn is_skipped(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Signal, f64, &ForwardTrace)> + '_ {
        self.terms.iter().map(|(s, w, t)| (s, *w, &self.traces[*t]))
    }

    /// Dense `ΔW` for this sample (zero when skipped).
    pub fn to_update(&self, net: &Network) -> Result<UpdateSet> {
        let mut u = UpdateSet::zeros(net);
        for (s, w, t) in self.terms() {
            u.add_signal(w, s, t)?;
        }
        Ok(u)
    }
}

/// Per-sample update for any rule: passes, loss differentials and the
/// mean over `K` noise draws.
///
/// Draw `k` uses `stream.derive(k)`; in double-noisy mode its two passes use
/// `stream.derive(k).derive(0)` and `.derive(1)`, the second acting as the
/// reference.
pub fn sample_update(
    net: &Network,
    x0: &[f64],
    target: &[f64],
    loss: Loss,
    config: &RuleConfig,
    stream: &RngStream,
) -> Result<SampleUpdate> {
    config.validate()?;
    let k = config.resamples;
    let forward_passes = config.forward_passes_per_sample(net.depth());
    if config.double_noisy {
        return double_noisy_sample(net, x0, target, loss, config, stream, forward_passes);
    }
    let clean = net.forward(x0, None)?;
    let clean_loss = loss.value(clean.output(), target)?;
    let mut update = SampleUpdate {
        traces: Vec::new(),
        terms: Vec::new(),
        reference_loss: clean_loss,
        forward_passes,
        skipped_draws: 0,
    };
    if config.kind == RuleKind::Bp {
        let signal = backprop_signal(net, &clean, target, loss)?;
        update.traces.push(clean);
        update.terms.push((signal, 1.0, 0));
        return Ok(update);
    }
    let mut sum = Signal::zeros(net.spec());
    let mut used = 0usize;
    for draw in 0..k {
        let s = stream.derive(draw as u64);
        let signal = match config.kind {
            RuleKind::Inp => inp_signal(net, &clean, target, loss, config.variance, &s),
            RuleKind::Np | RuleKind::Anp => {
                let bundle = net.sample_noise(NoiseTarget::AllLayers, config.variance, &s)?;
                let noisy = net.forward(x0, Some(&bundle))?;
                let dl = LossDifferential::between(loss.value(noisy.output(), target)?, clean_loss);
                if config.kind == RuleKind::Np {
                    np_signal(&noisy, dl, config.variance)
                } else {
                    anp_signal(&clean, &noisy, dl, config.unit_count)
                }
            }
            RuleKind::Bp => unreachable!(),
        };
        match signal {
            Ok(signal) => {
                sum.axpy(1.0, &signal)?;
                used += 1;
            }
            Err(Error::Degenerate(_)) => update.skipped_draws += 1,
            Err(e) => return Err(e),
        }
    }
    update.traces.push(clean);
    if used > 0 {
        update.terms.push((sum, 1.0 / used as f64, 0));
    }
    Ok(update)
}

fn double_noisy_sample(
    net: &Network,
    x0: &[f64],
    target: &[f64],
    loss: Loss,
    config: &RuleConfig,
    stream: &RngStream,
    forward_passes: u64,
) -> Result<SampleUpdate> {
    let n = config.unit_count.count(net.spec()) as f64;
    let mut traces = Vec::with_capacity(config.resamples);
    let mut signals = Vec::with_capacity(config.resamples);
    let mut reference_loss = f64::NAN;
    let mut skipped_draws = 0;
    for draw in 0..config.resamples {
        let s = stream.derive(draw as u64);
        let b1 = net.sample_noise(NoiseTarget::AllLayers, config.variance, &s.derive(0))?;
        let b2 = net.sample_noise(NoiseTarget::AllLayers, config.variance, &s.derive(1))?;
        let pass1 = net.forward(x0, Some(&b1))?;
        let pass2 = net.forward(x0, Some(&b2))?;
        if draw == 0 {
            reference_loss = loss.value(pass2.output(), target)?;
        }
        let signal = double_noisy_differences(&pass1, &pass2, loss, target).and_then(|diff| {
            match config.kind {
                RuleKind::Np => np_signal(&pass1, diff.loss(), config.variance),
                _ => diff.anp_signal(n),
            }
        });
        match signal {
            Ok(signal) => {
                signals.push((signal, traces.len()));
                traces.push(pass2);
            }
            Err(Error::Degenerate(_)) => {
                skipped_draws += 1;
                if traces.is_empty() {
                    traces.push(pass2);
                }
            }
            Err(e) => return Err(e),
        }
    }
    let weight = 1.0 / signals.len().max(1) as f64;
    let terms = signals.into_iter().map(|(s, t)| (s, weight, t)).collect();
    Ok(SampleUpdate {
        traces,
        terms,
        reference_loss,
        forward_passes,
        skipped_draws,
    })
}
