use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use calrec::dataset::{Dataset, Split};
use calrec::metrics::{evaluate, Cutoff, EvalResult, UserRecommendation};

use serde::{Deserialize, Serialize};

use crate::bundle::{load_bundle, read_json_lines, write_json};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Fixed-K recommendation rows, scored at every `eval.ks` cutoff.
    #[arg(long, value_name = "FILE", required_unless_present = "perk")]
    fixed: Option<PathBuf>,
    /// PerK rows, scored at each user's own `k_star`.
    #[arg(long, value_name = "FILE")]
    perk: Option<PathBuf>,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Comparison table CSV; defaults to the report path with `.csv`.
    #[arg(long, value_name = "FILE")]
    table: Option<PathBuf>,
}

/// One comparison-table row: a fixed cutoff or the personalized one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    /// `k=<n>` or `perk`.
    pub cutoff: String,
    /// Mean list length scored.
    pub mean_k: f64,
    pub metrics: BTreeMap<String, f64>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub fixed: Option<EvalResult>,
    pub perk: Option<EvalResult>,
    pub comparison: Vec<ComparisonRow>,
}

fn rows_for(res: &EvalResult, cutoff: Cutoff, label: String, mean_k: f64) -> ComparisonRow {
    let metrics = res
        .values
        .iter()
        .filter(|v| v.cutoff == cutoff)
        .map(|v| (v.metric.name().to_owned(), v.mean))
        .collect();
    ComparisonRow {
        cutoff: label,
        mean_k,
        metrics,
        users_evaluated: res.users_evaluated,
        users_skipped: res.users_skipped,
    }
}

fn mean_k_star(recs: &[UserRecommendation], ds: &Dataset, split: Split) -> f64 {
    let ks: Vec<f64> = recs
        .iter()
        .filter(|r| !ds.user_items(split, r.user).is_empty())
        .filter_map(|r| r.k_star.map(|k| k as f64))
        .collect();
    ks.iter().sum::<f64>() / ks.len().max(1) as f64
}

fn write_table(path: &Path, rows: &[ComparisonRow], metric_names: &[&str]) -> Result<()> {
    let mut out = format!("cutoff,mean_k,{},users_evaluated,users_skipped\n", metric_names.join(","));
    for r in rows {
        let vals: Vec<String> = metric_names
            .iter()
            .map(|m| r.metrics.get(*m).map_or(String::new(), f64::to_string))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.cutoff,
            r.mean_k,
            vals.join(","),
            r.users_evaluated,
            r.users_skipped
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let bundle = load_bundle(&args.data)?;
    let ds = &bundle.dataset;
    let split = cfg.eval.split;
    let metrics = &cfg.eval.metrics;
    let mut comparison = Vec::new();

    let fixed = match &args.fixed {
        Some(path) => {
            let mut recs: Vec<UserRecommendation> = read_json_lines(path)?;
            for r in &mut recs {
                r.k_star = None;
            }
            let res = evaluate(&recs, ds, split, metrics, &cfg.eval.ks)
                .with_context(|| format!("evaluating {}", path.display()))?;
            for &k in &cfg.eval.ks {
                comparison.push(rows_for(&res, Cutoff::Fixed(k), format!("k={k}"), k as f64));
            }
            Some(res)
        }
        None => None,
    };
    let perk = match &args.perk {
        Some(path) => {
            let recs: Vec<UserRecommendation> = read_json_lines(path)?;
            if let Some(r) = recs.iter().find(|r| r.k_star.is_none()) {
                bail!("{}: user {} has no k_star; is this a PerK file?", path.display(), r.user);
            }
            let res = evaluate(&recs, ds, split, metrics, &[])
                .with_context(|| format!("evaluating {}", path.display()))?;
            comparison.push(rows_for(&res, Cutoff::Personalized, "perk".into(), mean_k_star(&recs, ds, split)));
            Some(res)
        }
        None => None,
    };

    let report = EvalReport {
        split,
        fixed,
        perk,
        comparison,
    };
    write_json(&args.out, &report)?;
    let names: Vec<&str> = metrics.iter().map(|m| m.name()).collect();
    write_table(
        &args.table.clone().unwrap_or_else(|| args.out.with_extension("csv")),
        &report.comparison,
        &names,
    )?;
    for r in &report.comparison {
        let vals: Vec<String> = names.iter().map(|m| format!("{m} {:.4}", r.metrics[*m])).collect();
        println!("{:>6}  mean_k {:>6.2}  {}", r.cutoff, r.mean_k, vals.join("  "));
    }
    Ok(())
}
