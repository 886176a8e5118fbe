use std::path::PathBuf;

use anyhow::Result;
use calrec::synthetic::{low_rank_raw, write_csv, LowRankConfig};

/// Defaults match the MovieLens-100K shape: 943 users, 1682 items, about
/// 100k interactions.
#[derive(Debug, clap::Args)]
pub struct Args {
    /// Output CSV of `user_id,item_id` lines.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, default_value_t = 943)]
    users: usize,
    #[arg(long, default_value_t = 1682)]
    items: usize,
    /// Rank of the latent structure.
    #[arg(long, default_value_t = 8)]
    rank: usize,
    /// Expected fraction of user-item pairs that interact.
    #[arg(long, default_value_t = 0.063)]
    density: f64,
    /// Scale of the latent logits; larger is more deterministic.
    #[arg(long, default_value_t = 4.0)]
    sharpness: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

pub fn run(args: Args) -> Result<()> {
    let raw = low_rank_raw(&LowRankConfig {
        num_users: args.users,
        num_items: args.items,
        rank: args.rank,
        density: args.density,
        sharpness: args.sharpness,
        seed: args.seed,
    })?;
    crate::bundle::create_parent(&args.out)?;
    write_csv(&raw, &args.out)?;
    println!("wrote {} interactions to {}", raw.pairs.len(), args.out.display());
    Ok(())
}
