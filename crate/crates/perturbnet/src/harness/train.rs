use std::time::Instant;

use perturbnet_core::learners::{sample_update, DecorrelationAccumulator};
use perturbnet_core::{AdamState, Loss, Network, RngStream, RuleConfig, UpdateAccumulator};

use super::ExperimentConfig;
use crate::data::{batches, BatchPlan, Dataset};
use crate::error::{Error, Result};

const INIT_TAG: u64 = 1;
const NOISE_TAG: u64 = 2;

/// One row of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub seed: u64,
    /// 1-based.
    pub epoch: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub train_loss: f64,
    pub test_loss: f64,
    /// Training forward passes so far; evaluation passes are not counted.
    pub forward_passes: u64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Clean-pass accuracy (argmax of output against argmax of target) and mean loss.
pub fn evaluate(net: &Network, data: &Dataset, loss: Loss) -> Result<Evaluation> {
    if data.is_empty() {
        return Ok(Evaluation {
            accuracy: f64::NAN,
            loss: f64::NAN,
        });
    }
    let mut correct = 0usize;
    let mut total_loss = 0.0;
    for (x, t) in data.inputs().iter().zip(data.targets()) {
        let trace = net.forward(x, None)?;
        if trace.output().argmax() == t.argmax() {
            correct += 1;
        }
        total_loss += loss.value(trace.output(), t)?;
    }
    let n = data.len() as f64;
    Ok(Evaluation {
        accuracy: correct as f64 / n,
        loss: total_loss / n,
    })
}

/// Mini-batch training state for one seed.
///
/// Per batch: every sample gets a rule-specific update from its own noise
/// stream, the batch mean drives one Adam step, and then the decorrelation
/// matrices take one step on the reference passes' layer inputs.
#[derive(Debug, Clone)]
pub struct Trainer {
    net: Network,
    adam: AdamState,
    rule: RuleConfig,
    loss: Loss,
    noise: RngStream,
    forward_passes: u64,
}

impl Trainer {
    pub fn new(net: Network, rule: RuleConfig, loss: Loss, noise: RngStream) -> Result<Self> {
        rule.validate()?;
        if net.spec().decorrelate != rule.decorrelate {
            return Err(Error::Config(
                "network and rule disagree on decorrelation".into(),
            ));
        }
        Ok(Trainer {
            adam: AdamState::new(&net),
            net,
            rule,
            loss,
            noise,
            forward_passes: 0,
        })
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn into_net(self) -> Network {
        self.net
    }

    pub fn forward_passes(&self) -> u64 {
        self.forward_passes
    }

    pub fn train_batch(
        &mut self,
        data: &Dataset,
        indices: &[usize],
        epoch: usize,
        batch: usize,
    ) -> Result<()> {
        let diverged = |reason: String| Error::Diverged {
            epoch,
            batch,
            reason,
        };
        let stream = self.noise.derive(epoch as u64).derive(batch as u64);
        let mut updates = UpdateAccumulator::new(&self.net);
        let mut decorrelation = self
            .rule
            .decorrelate
            .then(|| DecorrelationAccumulator::new(&self.net));
        for (pos, &i) in indices.iter().enumerate() {
            let (x, t) = (&data.inputs()[i], &data.targets()[i]);
            let sample = sample_update(
                &self.net,
                x,
                t,
                self.loss,
                &self.rule,
                &stream.derive(pos as u64),
            )?;
            if !sample.reference_loss().is_finite() {
                return Err(diverged(format!(
                    "loss {} on sample {i}",
                    sample.reference_loss()
                )));
            }
            self.forward_passes += sample.forward_passes();
            updates.add_sample(&sample)?;
            if let Some(d) = decorrelation.as_mut() {
                d.add(sample.reference())?;
            }
        }
        let update = updates.finish();
        if !update.is_finite() {
            return Err(diverged("non-finite weight update".into()));
        }
        self.adam
            .step(&mut self.net, &update, self.rule.learning_rate)?;
        if let Some(d) = decorrelation {
            d.apply(&mut self.net, self.rule.decorrelation_rate)?;
        }
        let finite = self.net.weights().iter().all(|w| w.is_finite())
            && self.net.decorrelators().iter().all(|r| r.is_finite());
        if !finite {
            return Err(diverged("non-finite parameters after the update".into()));
        }
        Ok(())
    }

    /// One pass over `data` in the order fixed by `(shuffle_seed, epoch)`.
    pub fn run_epoch(
        &mut self,
        data: &Dataset,
        batch_size: usize,
        shuffle_seed: u64,
        epoch: usize,
    ) -> Result<()> {
        let plan = BatchPlan {
            batch_size,
            seed: shuffle_seed,
            epoch: epoch as u64,
        };
        for (b, indices) in batches(data.len(), &plan)?.iter().enumerate() {
            self.train_batch(data, indices, epoch, b)?;
        }
        Ok(())
    }
}

/// Train one seed and evaluate after every epoch.
///
/// The seed fixes the initial weights, the batch order and every noise draw.
pub fn train_seed(
    config: &ExperimentConfig,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<MetricsRecord>> {
    let start = Instant::now();
    let root = RngStream::new(seed);
    let net = Network::init(config.network.clone(), &root.derive(INIT_TAG))?;
    let mut trainer = Trainer::new(
        net,
        config.rule.clone(),
        config.loss,
        root.derive(NOISE_TAG),
    )?;
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        trainer.run_epoch(train, config.batch_size, seed, epoch)?;
        let tr = evaluate(trainer.net(), train, config.loss)?;
        let te = evaluate(trainer.net(), test, config.loss)?;
        records.push(MetricsRecord {
            seed,
            epoch,
            train_accuracy: tr.accuracy,
            test_accuracy: te.accuracy,
            train_loss: tr.loss,
            test_loss: te.loss,
            forward_passes: trainer.forward_passes(),
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

/// Train every seed on already-loaded splits.
pub fn train_on(
    config: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    config.check_dataset(train)?;
    config.check_dataset(test)?;
    let mut records = Vec::new();
    for &seed in &config.seeds {
        records.extend(train_seed(config, seed, train, test)?);
    }
    Ok(records)
}

/// Load the configured dataset and train every seed.
pub fn train(config: &ExperimentConfig) -> Result<Vec<MetricsRecord>> {
    config.validate()?;
    let (train, test) = config.dataset.load()?;
    train_on(config, &train, &test)
}
