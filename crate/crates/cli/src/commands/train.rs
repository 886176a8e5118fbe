use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use calrec::ranker::checkpoint::{load_checkpoint, save_checkpoint};
use calrec::ranker::{epoch_rng, init_params, train_epoch, LossKind, MfParams};
use serde::{Deserialize, Serialize};

use super::check_shape;
use crate::bundle::{create_parent, load_bundle, JsonLines};
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Checkpoint header to write (`.json`; arrays go to the `.bin` beside it).
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Training log; defaults to `train_log.jsonl` beside the checkpoint.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Continue from this checkpoint up to `train.epochs`, appending to the log.
    #[arg(long, value_name = "FILE")]
    resume: Option<PathBuf>,
}

/// One training-log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    /// Completed epochs, 1-based.
    pub epoch: usize,
    pub loss_kind: LossKind,
    pub loss: f64,
}

pub fn log_path(out: &Path) -> PathBuf {
    out.with_file_name("train_log.jsonl")
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let bundle = load_bundle(&args.data)?;
    let ds = &bundle.dataset;
    let tc = cfg.train_config();
    let log_file = args.log.clone().unwrap_or_else(|| log_path(&args.out));

    let (mut params, start) = match &args.resume {
        Some(path) => {
            let (header, params) = load_checkpoint(path)?;
            if header.seed != tc.seed || header.loss_kind != tc.loss_kind || header.dim != cfg.train.dim {
                bail!("checkpoint {} was trained with a different seed, loss or dimension", path.display());
            }
            if header.epoch > tc.epochs {
                bail!("checkpoint already has {} epochs, more than train.epochs = {}", header.epoch, tc.epochs);
            }
            (params, header.epoch)
        }
        None => (fresh(ds.num_users(), ds.num_items(), cfg.train.dim, tc.seed)?, 0),
    };
    check_shape(&params, ds)?;

    let mut log = if args.resume.is_some() {
        JsonLines::append(&log_file)?
    } else {
        JsonLines::create(&log_file)?
    };
    for epoch in start..tc.epochs {
        let loss = train_epoch(&mut params, ds, &tc, &mut epoch_rng(tc.seed, epoch))?;
        // checkpoints hold f32; rounding every epoch makes a resumed run
        // identical to an uninterrupted one
        params.round_to_f32();
        log.write(&EpochRow {
            epoch: epoch + 1,
            loss_kind: tc.loss_kind,
            loss,
        })?;
        eprintln!("epoch {:>3}  loss {loss:.6}", epoch + 1);
    }
    log.finish()?;
    create_parent(&args.out)?;
    save_checkpoint(&args.out, &params, tc.seed, tc.loss_kind, tc.epochs)?;
    println!("trained {} epochs; checkpoint {}", tc.epochs, args.out.display());
    Ok(())
}

/// Seeded initialization, rounded to what a checkpoint stores.
pub fn fresh(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<MfParams> {
    let mut p = init_params(num_users, num_items, dim, seed)?;
    p.round_to_f32();
    Ok(p)
}
