use std::path::PathBuf;

use anyhow::{Context, Result};
use calrec::dataset::{load_interactions, split_per_user, Split};

use crate::bundle::{write_bundle, Bundle};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Raw interaction file.
    #[arg(long, value_name = "FILE")]
    input: PathBuf,
    /// Output directory for the dataset bundle.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let raw = load_interactions(&args.input, cfg.data.delimiter, None)
        .with_context(|| format!("ingesting {}", args.input.display()))?;
    let dataset = split_per_user(&raw, cfg.data.ratios, cfg.data_seed())?;
    let bundle = Bundle {
        dataset,
        users: raw.users,
        items: raw.items,
    };
    write_bundle(&args.out, &bundle)?;
    let ds = &bundle.dataset;
    println!(
        "users {} items {} interactions {} (train {} validation {} test {})",
        ds.num_users(),
        ds.num_items(),
        raw.pairs.len(),
        ds.interactions(Split::Train).len(),
        ds.interactions(Split::Validation).len(),
        ds.interactions(Split::Test).len(),
    );
    Ok(())
}
