pub mod calibrate;
pub mod distill;
pub mod eval;
pub mod ingest;
pub mod recommend;
pub mod show_config;
pub mod synth;
pub mod train;

use anyhow::{bail, Result};
use calrec::dataset::Dataset;
use calrec::ranker::MfParams;

/// Rejects a model whose shape differs from the dataset's.
pub(crate) fn check_shape(params: &MfParams, dataset: &Dataset) -> Result<()> {
    if params.num_users() != dataset.num_users() || params.num_items() != dataset.num_items() {
        bail!(
            "model covers {} users x {} items but the dataset has {} x {}",
            params.num_users(),
            params.num_items(),
            dataset.num_users(),
            dataset.num_items()
        );
    }
    Ok(())
}
