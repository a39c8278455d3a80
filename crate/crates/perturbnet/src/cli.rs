//! Command-line front end.
//!
//! Exit codes: 0 success, 1 configuration error (including a failed
//! `check`), 2 diverged run, 3 I/O or format error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use perturbnet_core::oracle::AlignmentReport;
use perturbnet_core::{Loss, RuleKind, UnitCount};

use crate::check::run_checks;
use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::harness::{
    alignment_run, default_learning_rate, format_sig, sigma_sweep, train, write_alignment,
    write_meta, write_metrics, DatasetSelector, ExperimentConfig, MetricsRecord, METRICS_HEADER,
};

#[derive(Debug, Parser)]
#[command(
    name = "perturbnet",
    version,
    about = "Train and analyse node-perturbation learning rules"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a network and write per-epoch metrics.
    Train(RunArgs),
    /// Angles between perturbative and BP updates against the number of noise iterations.
    Align {
        #[command(flatten)]
        run: RunArgs,
        /// Averaging counts at which angles are reported.
        #[arg(long, value_delimiter = ',', default_value = "1,10,100,1000")]
        counts: Vec<usize>,
    },
    /// Angles between perturbative and BP updates across noise variances.
    SweepSigma {
        #[command(flatten)]
        run: RunArgs,
        /// Noise variances to compare.
        #[arg(long, value_delimiter = ',', default_value = "1e-6,1e-5,1e-4")]
        sigmas: Vec<f64>,
        /// Noise iterations averaged at every variance.
        #[arg(long, default_value_t = 100)]
        averaging: usize,
    },
    /// Run the oracle suite; fails unless every check passes.
    Check,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum LossArg {
    Cce,
    Mse,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DatasetArg {
    Cifar10,
    Synthetic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NMode {
    NoisyUnits,
    AllUnits,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Learning rule: bp, np, inp or anp; a leading `d` (e.g. dnp) also enables decorrelation.
    #[arg(long, default_value = "np")]
    algo: String,
    /// Decorrelate every layer input.
    #[arg(long)]
    decorrelate: bool,
    /// Comma-separated layer widths, input first (default 3072,10 for cifar10; 128,64,64,64,10 for synthetic).
    #[arg(long, value_delimiter = ',')]
    layers: Option<Vec<usize>>,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = crate::harness::DEFAULT_BATCH_SIZE)]
    batch_size: usize,
    /// Weight learning rate (default: tabulated by rule and depth).
    #[arg(long)]
    lr: Option<f64>,
    /// Decorrelation learning rate.
    #[arg(long, default_value_t = crate::harness::DEFAULT_DECORRELATION_RATE)]
    decor_lr: f64,
    /// Perturbation variance.
    #[arg(long, default_value_t = crate::harness::DEFAULT_SIGMA2)]
    sigma2: f64,
    /// Noise draws averaged per sample update (K).
    #[arg(long, default_value_t = 1)]
    noise_samples: usize,
    /// Replace the clean reference pass with a second noisy pass (np and anp only).
    #[arg(long)]
    double_noisy: bool,
    #[arg(long, value_enum, default_value = "cce")]
    loss: LossArg,
    #[arg(long, value_enum, default_value = "synthetic")]
    dataset: DatasetArg,
    /// Directory holding the CIFAR-10 binary batches.
    #[arg(long, env = "PERTURBNET_DATA")]
    data_dir: Option<PathBuf>,
    /// Skip per-feature standardisation of CIFAR-10 pixels.
    #[arg(long)]
    no_standardize: bool,
    /// Run seed; repeat for several sequential runs.
    #[arg(long = "seed", default_value = "0")]
    seeds: Vec<u64>,
    /// Output CSV path; a `.meta` file is written next to it. Prints to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Negative slope of the leaky ReLU.
    #[arg(long, default_value_t = perturbnet_core::network::DEFAULT_SLOPE)]
    slope: f64,
    /// Unit count N scaling the activity-based rule.
    #[arg(long, value_enum, default_value = "noisy-units")]
    n_mode: NMode,
    /// Synthetic training-set size.
    #[arg(long, default_value_t = SyntheticSpec::default().train)]
    train_size: usize,
    /// Synthetic test-set size.
    #[arg(long, default_value_t = SyntheticSpec::default().test)]
    test_size: usize,
    /// Distance of synthetic class means from the origin.
    #[arg(long, default_value_t = SyntheticSpec::default().margin)]
    margin: f64,
    /// Seed of the synthetic dataset, independent of the run seeds.
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
}

fn parse_algo(algo: &str) -> Result<(RuleKind, bool)> {
    let lower = algo.to_ascii_lowercase();
    if let Ok(kind) = lower.parse::<RuleKind>() {
        return Ok((kind, false));
    }
    match lower.strip_prefix('d').map(str::parse::<RuleKind>) {
        Some(Ok(kind)) => Ok((kind, true)),
        _ => Err(Error::Config(format!(
            "unknown --algo {algo:?}; expected bp, np, inp or anp, optionally prefixed with d"
        ))),
    }
}

impl RunArgs {
    fn to_config(&self) -> Result<ExperimentConfig> {
        let (kind, prefixed) = parse_algo(&self.algo)?;
        let decorrelate = prefixed || self.decorrelate;
        let dataset = match self.dataset {
            DatasetArg::Cifar10 => DatasetSelector::Cifar10 {
                dir: self.data_dir.clone().ok_or_else(|| {
                    Error::Config("cifar10 needs --data-dir or PERTURBNET_DATA".into())
                })?,
                standardize: !self.no_standardize,
            },
            DatasetArg::Synthetic => DatasetSelector::Synthetic(SyntheticSpec::default()),
        };
        let widths = match (&self.layers, self.dataset) {
            (Some(w), _) => w.clone(),
            (None, DatasetArg::Cifar10) => vec![3072, 10],
            (None, DatasetArg::Synthetic) => vec![128, 64, 64, 64, 10],
        };
        let dataset = match dataset {
            DatasetSelector::Synthetic(_) => DatasetSelector::Synthetic(SyntheticSpec {
                train: self.train_size,
                test: self.test_size,
                dim: widths.first().copied().unwrap_or(0),
                classes: widths.last().copied().unwrap_or(0),
                margin: self.margin,
                seed: self.data_seed,
            }),
            other => other,
        };
        let loss = match self.loss {
            LossArg::Cce => Loss::CrossEntropy,
            LossArg::Mse => Loss::SquaredError,
        };
        let hidden = widths.len().saturating_sub(2);
        let mut config = ExperimentConfig::new(widths, kind, decorrelate, dataset);
        config.loss = loss;
        config.network.linear_output = loss.wants_linear_output();
        config.network.slope = self.slope;
        config.epochs = self.epochs;
        config.batch_size = self.batch_size;
        config.seeds = self.seeds.clone();
        config.output = self.out.clone();
        config.rule.learning_rate = self
            .lr
            .unwrap_or_else(|| default_learning_rate(kind, decorrelate, hidden));
        config.rule.decorrelation_rate = self.decor_lr;
        config.rule.variance = self.sigma2;
        config.rule.resamples = self.noise_samples;
        config.rule.double_noisy = self.double_noisy;
        config.rule.unit_count = match self.n_mode {
            NMode::NoisyUnits => UnitCount::NoisyUnits,
            NMode::AllUnits => UnitCount::AllUnits,
        };
        if self.double_noisy && !matches!(kind, RuleKind::Np | RuleKind::Anp) {
            return Err(Error::Config(format!(
                "--double-noisy conflicts with --algo {}: only np and anp use a reference pass",
                self.algo
            )));
        }
        config.validate()?;
        Ok(config)
    }
}

fn metrics_to_stdout(records: &[MetricsRecord]) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{METRICS_HEADER}");
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.seed,
            r.epoch,
            format_sig(r.train_accuracy, 6),
            format_sig(r.test_accuracy, 6),
            format_sig(r.train_loss, 6),
            format_sig(r.test_loss, 6),
            r.forward_passes,
            format_sig(r.wall_seconds, 6),
        );
    }
}

fn emit_alignment(
    report: &AlignmentReport,
    config: &ExperimentConfig,
    extra: &[(&str, String)],
) -> Result<()> {
    match &config.output {
        Some(path) => {
            write_alignment(report, path)?;
            write_meta(config, path, extra)
        }
        None => {
            let mut out = std::io::stdout().lock();
            let _ = writeln!(
                out,
                "algorithm,layer,averaging_count,forward_passes,sigma2,angle_degrees,seed"
            );
            for r in report.rows() {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.algorithm,
                    r.layer,
                    r.averaging_count,
                    r.forward_passes,
                    format_sig(r.sigma2, 6),
                    format_sig(r.angle_degrees, 6),
                    r.seed
                );
            }
            Ok(())
        }
    }
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(args) => {
            let config = args.to_config()?;
            let records = train(&config)?;
            match &config.output {
                Some(path) => {
                    write_metrics(&records, path)?;
                    write_meta(&config, path, &[])
                }
                None => {
                    metrics_to_stdout(&records);
                    Ok(())
                }
            }
        }
        Command::Align { run, counts } => {
            let config = run.to_config()?;
            let report = alignment_run(&config, &counts)?;
            emit_alignment(&report, &config, &[("counts", join(&counts))])
        }
        Command::SweepSigma {
            run,
            sigmas,
            averaging,
        } => {
            let config = run.to_config()?;
            let report = sigma_sweep(&config, &sigmas, averaging)?;
            emit_alignment(
                &report,
                &config,
                &[
                    ("sigmas", join(&sigmas)),
                    ("averaging", averaging.to_string()),
                ],
            )
        }
        Command::Check => {
            let outcomes = run_checks();
            let mut out = std::io::stdout().lock();
            for c in &outcomes {
                let _ = writeln!(
                    out,
                    "{} {}: {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                );
            }
            let failed: Vec<&str> = outcomes
                .iter()
                .filter(|c| !c.passed)
                .map(|c| c.name)
                .collect();
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Error::CheckFailed(failed.join("; ")))
            }
        }
    }
}

/// Parse `argv` (program name first), run the command and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn algo_names() {
        assert_eq!(parse_algo("np").unwrap(), (RuleKind::Np, false));
        assert_eq!(parse_algo("dnp").unwrap(), (RuleKind::Np, true));
        assert_eq!(parse_algo("DANP").unwrap(), (RuleKind::Anp, true));
        assert_eq!(parse_algo("dbp").unwrap(), (RuleKind::Bp, true));
        assert!(parse_algo("sgd").is_err());
        assert!(parse_algo("d").is_err());
    }

    #[test]
    fn unknown_flag_is_config_error() {
        assert_eq!(run(["perturbnet", "train", "--frobnicate"]), 1);
    }

    #[test]
    fn double_noisy_bp_is_rejected() {
        assert_eq!(
            run(["perturbnet", "train", "--algo", "bp", "--double-noisy"]),
            1
        );
    }

    #[test]
    fn help_exits_cleanly() {
        assert_eq!(run(["perturbnet", "--help"]), 0);
    }

    #[test]
    fn help_lists_every_flag() {
        use clap::CommandFactory;
        let mut cmd = Cli::command();
        let help = cmd
            .find_subcommand_mut("train")
            .unwrap()
            .render_long_help()
            .to_string();
        for flag in [
            "--algo",
            "--decorrelate",
            "--layers",
            "--epochs",
            "--batch-size",
            "--lr",
            "--decor-lr",
            "--sigma2",
            "--noise-samples",
            "--double-noisy",
            "--loss",
            "--dataset",
            "--data-dir",
            "--seed",
            "--out",
            "--slope",
            "--n-mode",
        ] {
            assert!(help.contains(flag), "{flag}");
        }
    }
}
