//! Ranker checkpoints: a JSON header plus a sidecar binary file holding
//! `user_emb`, `item_emb` and `item_bias` as row-major little-endian `f32`,
//! in that order.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{LossKind, MfParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub seed: u64,
    pub loss_kind: LossKind,
    /// Completed training epochs.
    #[serde(default)]
    pub epoch: usize,
    /// Sidecar file name, relative to the header's directory.
    pub data_file: String,
    pub user_emb_bytes: u64,
    pub item_emb_bytes: u64,
    pub item_bias_bytes: u64,
}

/// Sidecar path for a header path: `model.json` -> `model.bin`.
pub fn sidecar_path(header_path: &Path) -> PathBuf {
    header_path.with_extension("bin")
}

pub fn save_checkpoint(
    header_path: &Path,
    params: &MfParams,
    seed: u64,
    loss_kind: LossKind,
    epoch: usize,
) -> Result<CheckpointHeader> {
    let data_path = sidecar_path(header_path);
    let data_file = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Checkpoint(format!("bad checkpoint path {}", header_path.display())))?
        .to_owned();

    let mut bytes = Vec::with_capacity(
        4 * (params.user_emb().len() + params.item_emb().len() + params.item_bias().len()),
    );
    for v in params
        .user_emb()
        .iter()
        .chain(params.item_emb())
        .chain(params.item_bias())
    {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let header = CheckpointHeader {
        num_users: params.num_users(),
        num_items: params.num_items(),
        dim: params.dim(),
        seed,
        loss_kind,
        epoch,
        data_file,
        user_emb_bytes: 4 * params.user_emb().len() as u64,
        item_emb_bytes: 4 * params.item_emb().len() as u64,
        item_bias_bytes: 4 * params.item_bias().len() as u64,
    };
    fs::write(&data_path, &bytes).map_err(|e| Error::io(&data_path, e))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(header_path, json + "\n").map_err(|e| Error::io(header_path, e))?;
    Ok(header)
}

pub fn load_checkpoint(header_path: &Path) -> Result<(CheckpointHeader, MfParams)> {
    let text = fs::read_to_string(header_path).map_err(|e| Error::io(header_path, e))?;
    let header: CheckpointHeader = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("{}: {e}", header_path.display())))?;
    let data_path = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data_file);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;

    let (nu, ni, d) = (header.num_users, header.num_items, header.dim);
    let expect = [4 * (nu * d) as u64, 4 * (ni * d) as u64, 4 * ni as u64];
    let got = [header.user_emb_bytes, header.item_emb_bytes, header.item_bias_bytes];
    if expect != got {
        return Err(Error::Checkpoint(format!(
            "header byte lengths {got:?} disagree with shape {nu}x{ni}x{d}"
        )));
    }
    if bytes.len() as u64 != got.iter().sum::<u64>() {
        return Err(Error::Checkpoint(format!(
            "{} holds {} bytes, header expects {}",
            data_path.display(),
            bytes.len(),
            got.iter().sum::<u64>()
        )));
    }
    let mut floats = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64);
    let user_emb: Vec<f64> = floats.by_ref().take(nu * d).collect();
    let item_emb: Vec<f64> = floats.by_ref().take(ni * d).collect();
    let item_bias: Vec<f64> = floats.collect();
    let params = MfParams::from_parts(nu, ni, d, user_emb, item_emb, item_bias)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((header, params))
}
