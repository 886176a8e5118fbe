use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use calrec::calibration::{
    collect_calibration_samples, ece_from_table, estimate_propensity, fit_with_shift, reliability_table,
    BinScheme, Calibrator, CalibratorKind, ReliabilityRow,
};
use calrec::dataset::Split;
use calrec::math::sigmoid;
use calrec::ranker::checkpoint::load_checkpoint;
use calrec::rng;
use serde::{Deserialize, Serialize};

use super::check_shape;
use crate::bundle::{create_dir, load_bundle, write_json};
use crate::config::RunConfig;

pub const CALIBRATOR_FILE: &str = "calibrator.json";
pub const RELIABILITY_FILE: &str = "reliability.csv";
pub const RELIABILITY_RAW_FILE: &str = "reliability_raw.csv";
pub const REPORT_FILE: &str = "calibration_report.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Ranker checkpoint header.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

/// Calibration summary. ECE is measured on a fresh draw from the test split,
/// the calibrator having been fitted on the validation split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub kind: CalibratorKind,
    pub unbiased: bool,
    pub fit_samples: usize,
    pub fit_iterations: usize,
    pub fit_converged: bool,
    pub fit_loss_trace: Vec<f64>,
    pub eval_split: Split,
    pub eval_samples: usize,
    pub ece_bins: usize,
    pub ece_scheme: BinScheme,
    pub ece_uncalibrated: f64,
    pub ece_calibrated: f64,
}

fn write_reliability(path: &Path, rows: &[ReliabilityRow]) -> Result<()> {
    let mut out = String::from("bin_lower,bin_upper,count,mean_p,frac_pos\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.bin_lower, r.bin_upper, r.count, r.mean_p, r.frac_pos
        ));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .with_context(|| format!("writing {}", path.display()))
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let bundle = load_bundle(&args.data)?;
    let ds = &bundle.dataset;
    let (_, params) = load_checkpoint(&args.model)?;
    check_shape(&params, ds)?;
    let c = &cfg.calib;

    let propensity = if c.unbiased {
        Some(estimate_propensity(ds.item_popularity(), c.tau, c.theta_min)?)
    } else {
        None
    };
    let seed = cfg.calib_seed();
    let fit_set = collect_calibration_samples(
        &params,
        ds,
        Split::Validation,
        c.negatives,
        propensity.as_ref(),
        &mut rng::stream(seed, 0),
    )
    .context("collecting validation samples")?;
    let fitted = fit_with_shift(c.kind, &fit_set, c.unbiased, &cfg.fit_options()).context("fitting calibrator")?;
    let cal: &Calibrator = &fitted.calibrator;

    let eval_set = collect_calibration_samples(&params, ds, Split::Test, c.negatives, None, &mut rng::stream(seed, 1))
        .context("collecting test samples")?;
    let raw: Vec<(f64, bool)> = eval_set.iter().map(|x| (sigmoid(x.s), x.y)).collect();
    let calibrated: Vec<(f64, bool)> = eval_set
        .iter()
        .map(|x| Ok((cal.apply_clamped(x.s)?, x.y)))
        .collect::<Result<_>>()?;
    let raw_table = reliability_table(&raw, c.ece_bins, c.ece_scheme)?;
    let cal_table = reliability_table(&calibrated, c.ece_bins, c.ece_scheme)?;

    let report = CalibrationReport {
        kind: c.kind,
        unbiased: c.unbiased,
        fit_samples: fit_set.len(),
        fit_iterations: fitted.iterations,
        fit_converged: fitted.converged,
        fit_loss_trace: fitted.loss_trace.clone(),
        eval_split: Split::Test,
        eval_samples: eval_set.len(),
        ece_bins: c.ece_bins,
        ece_scheme: c.ece_scheme,
        ece_uncalibrated: ece_from_table(&raw_table),
        ece_calibrated: ece_from_table(&cal_table),
    };

    create_dir(&args.out)?;
    write_json(&args.out.join(CALIBRATOR_FILE), cal)?;
    write_reliability(&args.out.join(RELIABILITY_FILE), &cal_table)?;
    write_reliability(&args.out.join(RELIABILITY_RAW_FILE), &raw_table)?;
    write_json(&args.out.join(REPORT_FILE), &report)?;
    println!(
        "ECE uncalibrated {:.4} calibrated {:.4}",
        report.ece_uncalibrated, report.ece_calibrated
    );
    Ok(())
}
