use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use perturbnet_core::oracle::AlignmentReport;

use super::{ExperimentConfig, MetricsRecord};
use crate::error::{Error, Result};

pub const METRICS_HEADER: &str =
    "seed,epoch,train_acc,test_acc,train_loss,test_loss,forward_passes,wall_seconds";

const ALIGNMENT_HEADER: &str =
    "algorithm,layer,averaging_count,forward_passes,sigma2,angle_degrees,seed";

/// Shortest `%g`-style rendering with `digits` significant digits.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent in scientific format");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= digits as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim_zeros(mantissa), exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// One row per record under [`METRICS_HEADER`], floats to 6 significant digits.
pub fn write_metrics(records: &[MetricsRecord], path: &Path) -> Result<()> {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
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
    write_file(path, &out)
}

/// Alignment rows as CSV, angles to 6 significant digits.
pub fn write_alignment(report: &AlignmentReport, path: &Path) -> Result<()> {
    let mut out = String::from(ALIGNMENT_HEADER);
    out.push('\n');
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
            r.seed,
        );
    }
    write_file(path, &out)
}

/// `key=value` echo of the configuration next to `csv_path`, as `<csv_path>.meta`.
pub fn write_meta(
    config: &ExperimentConfig,
    csv_path: &Path,
    extra: &[(&str, String)],
) -> Result<()> {
    let rule = &config.rule;
    let widths: Vec<String> = config.network.widths.iter().map(usize::to_string).collect();
    let seeds: Vec<String> = config.seeds.iter().map(u64::to_string).collect();
    let mut pairs: Vec<(&str, String)> = vec![
        ("version", env!("CARGO_PKG_VERSION").to_string()),
        ("algo", rule.kind.to_string()),
        ("decorrelate", rule.decorrelate.to_string()),
        ("layers", widths.join(",")),
        ("epochs", config.epochs.to_string()),
        ("batch_size", config.batch_size.to_string()),
        ("lr", format_sig(rule.learning_rate, 6)),
        ("decor_lr", format_sig(rule.decorrelation_rate, 6)),
        ("sigma2", format_sig(rule.variance, 6)),
        ("noise_samples", rule.resamples.to_string()),
        ("double_noisy", rule.double_noisy.to_string()),
        ("loss", loss_name(config.loss).to_string()),
        ("dataset", config.dataset.name().to_string()),
        ("seeds", seeds.join(",")),
        ("slope", format_sig(config.network.slope, 6)),
        ("n_mode", n_mode_name(rule.unit_count).to_string()),
    ];
    pairs.extend(extra.iter().cloned());
    let mut out = String::new();
    for (k, v) in pairs {
        let _ = writeln!(out, "{k}={v}");
    }
    let mut meta = csv_path.as_os_str().to_owned();
    meta.push(".meta");
    write_file(Path::new(&meta), &out)
}

pub(crate) fn loss_name(loss: perturbnet_core::Loss) -> &'static str {
    match loss {
        perturbnet_core::Loss::CrossEntropy => "cce",
        perturbnet_core::Loss::SquaredError => "mse",
    }
}

pub(crate) fn n_mode_name(n: perturbnet_core::UnitCount) -> &'static str {
    match n {
        perturbnet_core::UnitCount::NoisyUnits => "noisy-units",
        perturbnet_core::UnitCount::AllUnits => "all-units",
    }
}
