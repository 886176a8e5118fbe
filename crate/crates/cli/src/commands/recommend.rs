use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use calrec::calibration::Calibrator;
use calrec::dataset::Split;
use calrec::metrics::UserRecommendation;
use calrec::perk::{perk_recommend_all, PersonalizedCut, UtilityKind};
use calrec::ranker::checkpoint::load_checkpoint;
use calrec::ranker::rank_items;
use serde::{Deserialize, Serialize};

use super::check_shape;
use crate::bundle::{load_bundle, read_json, write_json, JsonLines};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Ranker checkpoint header.
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Output JSON-lines file, one row per user.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Fixed list length; defaults to the largest of `eval.ks`.
    #[arg(long, conflicts_with = "perk")]
    k: Option<usize>,
    /// Allow fixed-K rows shorter than K for users with fewer candidates.
    #[arg(long, conflicts_with = "perk")]
    allow_short: bool,
    /// Cut each user's list at the expected-utility maximizing K.
    #[arg(long)]
    perk: bool,
    /// Calibrator JSON (required with --perk).
    #[arg(long, value_name = "FILE")]
    calibrator: Option<PathBuf>,
    /// PerK summary; defaults to `<out>.report.json`.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerkReport {
    pub users: usize,
    pub utility: UtilityKind,
    pub k_max: usize,
    pub mean_k_star: f64,
    /// `k_star_counts[k - 1]` users were cut at `k`.
    pub k_star_counts: Vec<usize>,
    /// Mean of each user's curve at its `k_star`.
    pub mean_expected_utility: f64,
    pub truncated_users: usize,
}

pub fn report_path(out: &Path) -> PathBuf {
    out.with_extension("report.json")
}

fn perk_report(cuts: &[PersonalizedCut], cfg: &RunConfig) -> PerkReport {
    let n = cuts.len().max(1) as f64;
    let mut counts = vec![0; cfg.perk.k_max];
    for c in cuts {
        counts[c.k_star - 1] += 1;
    }
    PerkReport {
        users: cuts.len(),
        utility: cfg.perk.utility,
        k_max: cfg.perk.k_max,
        mean_k_star: cuts.iter().map(|c| c.k_star as f64).sum::<f64>() / n,
        k_star_counts: counts,
        mean_expected_utility: cuts.iter().map(|c| c.curve[c.k_star - 1]).sum::<f64>() / n,
        truncated_users: cuts.iter().filter(|c| c.truncated).count(),
    }
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let bundle = load_bundle(&args.data)?;
    let ds = &bundle.dataset;
    let (_, params) = load_checkpoint(&args.model)?;
    check_shape(&params, ds)?;
    let users: Vec<usize> = (0..ds.num_users()).collect();

    if args.perk {
        let Some(cal_path) = &args.calibrator else {
            bail!("--perk needs --calibrator");
        };
        let cal: Calibrator = read_json(cal_path)?;
        cal.validate().with_context(|| format!("checking {}", cal_path.display()))?;
        let cuts = perk_recommend_all(&params, &cal, ds, &users, &cfg.perk)?;
        let mut out = JsonLines::create(&args.out)?;
        for cut in &cuts {
            out.write(cut)?;
        }
        out.finish()?;
        let report = perk_report(&cuts, cfg);
        write_json(&args.report.clone().unwrap_or_else(|| report_path(&args.out)), &report)?;
        println!("{} users, mean k* {:.3}", report.users, report.mean_k_star);
        return Ok(());
    }

    let k = args.k.unwrap_or_else(|| cfg.eval.ks.iter().copied().max().unwrap_or(10));
    if k == 0 {
        bail!("--k must be at least 1");
    }
    let mut out = JsonLines::create(&args.out)?;
    let mut short = 0;
    for &u in &users {
        let mut items = rank_items(&params, u, ds.user_items(Split::Train, u))?;
        if items.len() < k {
            if !args.allow_short {
                bail!("user {u} has only {} candidate items (< {k}); pass --allow-short", items.len());
            }
            short += 1;
        }
        items.truncate(k);
        out.write(&UserRecommendation { user: u, items, k_star: None })?;
    }
    out.finish()?;
    println!("{} users, top-{k} lists ({short} short)", users.len());
    Ok(())
}
