//! Seeded synthetic implicit-feedback data with low-rank structure.
//!
//! Users and items get standard-normal latent vectors of dimension `rank`;
//! each pair interacts independently with probability
//! `sigmoid(sharpness * <u, v> / sqrt(rank) + offset)`, where `offset` is
//! solved by bisection so the mean probability equals `density`.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{IdMap, Interaction, RawInteractions};
use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowRankConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub rank: usize,
    pub density: f64,
    pub sharpness: f64,
    pub seed: u64,
}

impl Default for LowRankConfig {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 300,
            rank: 2,
            density: 0.1,
            sharpness: 4.0,
            seed: 0,
        }
    }
}

/// Ground-truth interaction probabilities, row-major `num_users x num_items`.
pub fn low_rank_probabilities(cfg: &LowRankConfig) -> Result<Vec<f64>> {
    if cfg.num_users == 0 || cfg.num_items == 0 || cfg.rank == 0 {
        return Err(Error::invalid("synthetic data needs users, items and rank >= 1"));
    }
    if !(cfg.density > 0.0 && cfg.density < 1.0) {
        return Err(Error::invalid("density must lie in (0, 1)"));
    }
    let mut rng = crate::rng::seeded(cfg.seed);
    let mut latent = |n: usize| -> Vec<f64> {
        (0..n * cfg.rank)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let users = latent(cfg.num_users);
    let items = latent(cfg.num_items);
    let scale = cfg.sharpness / (cfg.rank as f64).sqrt();
    let mut logits = Vec::with_capacity(cfg.num_users * cfg.num_items);
    for u in 0..cfg.num_users {
        let pu = &users[u * cfg.rank..(u + 1) * cfg.rank];
        for i in 0..cfg.num_items {
            let qi = &items[i * cfg.rank..(i + 1) * cfg.rank];
            logits.push(scale * crate::ranker::dot(pu, qi));
        }
    }
    let mean_at = |offset: f64| logits.iter().map(|z| sigmoid(z + offset)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-50.0, 50.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if mean_at(mid) < cfg.density {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let offset = 0.5 * (lo + hi);
    Ok(logits.into_iter().map(|z| sigmoid(z + offset)).collect())
}

/// Bernoulli draws from [`low_rank_probabilities`], in (user, item) order.
pub fn low_rank_interactions(cfg: &LowRankConfig) -> Result<Vec<Interaction>> {
    let probs = low_rank_probabilities(cfg)?;
    // separate stream so the draws do not depend on how the latents were sampled
    let mut rng = crate::rng::stream(cfg.seed, 1);
    let mut out = Vec::new();
    for (idx, p) in probs.iter().enumerate() {
        if rng.random::<f64>() < *p {
            out.push(Interaction::new(idx / cfg.num_items, idx % cfg.num_items));
        }
    }
    Ok(out)
}

/// [`low_rank_interactions`] with string ids `u<n>` / `i<n>`, every user and
/// item registered in index order.
pub fn low_rank_raw(cfg: &LowRankConfig) -> Result<RawInteractions> {
    let pairs = low_rank_interactions(cfg)?;
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let users = IdMap::from((0..cfg.num_users).map(|u| format!("u{u}")).collect::<Vec<_>>());
    let items = IdMap::from((0..cfg.num_items).map(|i| format!("i{i}")).collect::<Vec<_>>());
    Ok(RawInteractions { pairs, users, items })
}

/// Writes `user_id,item_id` lines using the raw data's external ids.
pub fn write_csv(raw: &RawInteractions, path: &Path) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for x in &raw.pairs {
        let u = raw.users.external(x.user).expect("user id");
        let i = raw.items.external(x.item).expect("item id");
        writeln!(file, "{u},{i}").map_err(|e| Error::io(path, e))?;
    }
    file.flush().map_err(|e| Error::io(path, e))
}
