use std::path::PathBuf;

use anyhow::{Context, Result};

use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Write the reference here instead of standard output.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let text = cfg.reference();
    match args.out {
        Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
