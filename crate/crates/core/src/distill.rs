//! Bidirectional distillation between a large teacher and a small student.
//!
//! Both models train simultaneously. Each epoch, each model takes its usual
//! pointwise pass and then, per user, distills from its counterpart on a
//! handful of items sampled by rank discrepancy: an item is a candidate only
//! when the counterpart ranks it strictly better, and the sampling weight
//! grows (and saturates) with the rank gap. Targets are the counterpart's
//! detached start-of-epoch probabilities, so the two updates are independent
//! within an epoch.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::math::sigmoid;
use crate::ranker::{pointwise_epoch, push_score_gradient, rank_items, Gradient, LossKind, MfParams, TrainConfig};

const PROB_CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BdConfig {
    /// Weight of the teacher's distillation term (teacher learns from student).
    pub lambda_ts: f64,
    /// Weight of the student's distillation term (student learns from teacher).
    pub lambda_st: f64,
    pub sample_size: usize,
    pub eta: f64,
    pub truncate_rank: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for BdConfig {
    fn default() -> Self {
        Self {
            lambda_ts: 0.5,
            lambda_st: 1.0,
            sample_size: 10,
            eta: 0.05,
            truncate_rank: 200,
            epochs: 10,
            seed: 0,
        }
    }
}

impl BdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_ts >= 0.0 && self.lambda_st >= 0.0) {
            return Err(Error::invalid("distillation weights must be nonnegative"));
        }
        if self.sample_size == 0 {
            return Err(Error::invalid("sample_size must be at least 1"));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::invalid("eta must be positive"));
        }
        if self.truncate_rank == 0 {
            return Err(Error::invalid("truncate_rank must be at least 1"));
        }
        Ok(())
    }
}

/// One user's 1-based ranks over its candidate items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankRow {
    /// Candidate items, ascending.
    pub items: Vec<usize>,
    /// `ranks[n]` is the rank of `items[n]`.
    pub ranks: Vec<usize>,
}

impl RankRow {
    /// Row from a best-first ranked list.
    pub fn from_ranking(ranked: &[usize]) -> Self {
        let mut pairs: Vec<(usize, usize)> = ranked.iter().enumerate().map(|(r, &i)| (i, r + 1)).collect();
        pairs.sort_unstable();
        let (items, ranks) = pairs.into_iter().unzip();
        Self { items, ranks }
    }

    pub fn rank_of(&self, item: usize) -> Option<usize> {
        self.items.binary_search(&item).ok().map(|n| self.ranks[n])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankTable {
    pub rows: Vec<RankRow>,
}

/// Ranks over each user's non-train items with the usual score-then-index
/// order. Consumes no randomness.
pub fn build_rank_table(params: &MfParams, dataset: &Dataset) -> Result<RankTable> {
    use rayon::prelude::*;
    let rows = (0..dataset.num_users())
        .into_par_iter()
        .map(|u| rank_items(params, u, dataset.user_items(Split::Train, u)).map(|r| RankRow::from_ranking(&r)))
        .collect::<Result<Vec<_>>>()?;
    Ok(RankTable { rows })
}

/// Sampling weights aligned with `items`.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemWeights {
    pub items: Vec<usize>,
    pub weights: Vec<f64>,
}

/// `w_i = tanh(eta * max(0, min(r_this, T) - min(r_other, T)))`: positive
/// exactly when the other model ranks `i` strictly better after truncation.
pub fn rank_discrepancy_weights(
    rank_this: &RankRow,
    rank_other: &RankRow,
    eta: f64,
    truncate_rank: usize,
) -> Result<ItemWeights> {
    if rank_this.items != rank_other.items {
        return Err(Error::invalid("rank rows cover different candidate sets"));
    }
    let weights = rank_this
        .ranks
        .iter()
        .zip(&rank_other.ranks)
        .map(|(&rt, &ro)| {
            let gap = rt.min(truncate_rank) as f64 - ro.min(truncate_rank) as f64;
            (eta * gap.max(0.0)).tanh()
        })
        .collect();
    Ok(ItemWeights {
        items: rank_this.items.clone(),
        weights,
    })
}

/// Up to `n` distinct items, each draw proportional to the remaining weights.
/// When at most `n` items have positive weight, all of them are returned in
/// item order.
pub fn sample_distill_items<R: Rng + ?Sized>(weights: &ItemWeights, n: usize, rng: &mut R) -> Vec<usize> {
    let mut live: Vec<(usize, f64)> = weights
        .items
        .iter()
        .zip(&weights.weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|(&i, &w)| (i, w))
        .collect();
    if live.len() <= n {
        return live.into_iter().map(|(i, _)| i).collect();
    }
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let total: f64 = live.iter().map(|(_, w)| w).sum();
        let mut target = rng.random::<f64>() * total;
        let mut pick = live.len() - 1;
        for (pos, &(_, w)) in live.iter().enumerate() {
            if target < w {
                pick = pos;
                break;
            }
            target -= w;
        }
        out.push(live.swap_remove(pick).0);
    }
    out
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Mean binary cross-entropy of learner probabilities against target
/// probabilities; 0 for an empty list.
pub fn bd_loss(learner_probs: &[f64], target_probs: &[f64]) -> f64 {
    assert_eq!(learner_probs.len(), target_probs.len(), "aligned probability lists");
    if learner_probs.is_empty() {
        return 0.0;
    }
    learner_probs
        .iter()
        .zip(target_probs)
        .map(|(&q, &t)| {
            let q = clamp_prob(q);
            -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
        })
        .sum::<f64>()
        / learner_probs.len() as f64
}

/// Gradient of [`bd_loss`] with respect to the learner's raw scores
/// (`q = sigmoid(s)`); zero where the clamp is active.
pub fn bd_loss_score_gradient(learner_scores: &[f64], target_probs: &[f64]) -> Vec<f64> {
    let n = learner_scores.len() as f64;
    learner_scores
        .iter()
        .zip(target_probs)
        .map(|(&s, &t)| {
            let q = sigmoid(s);
            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&q) {
                0.0
            } else {
                (q - t) / n
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub base_loss: f64,
    /// Mean per-user distillation loss over users with a nonempty sample.
    pub distill_loss: f64,
    pub sampled_total: usize,
    pub max_sampled_per_user: usize,
    /// Users whose sample came back empty.
    pub empty_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotrainReport {
    pub teacher: ModelReport,
    pub student: ModelReport,
}

/// Independent random streams for one co-training epoch.
pub struct CotrainRngs {
    pub teacher: crate::rng::Rng,
    pub student: crate::rng::Rng,
    pub teacher_sampling: crate::rng::Rng,
    pub student_sampling: crate::rng::Rng,
}

impl CotrainRngs {
    /// Both base passes use stream `epoch` of `base_seed`, the same stream a
    /// standalone training run uses for that epoch; distillation sampling
    /// uses streams `2*epoch` and `2*epoch + 1` of `bd_seed`.
    pub fn for_epoch(base_seed: u64, bd_seed: u64, epoch: usize) -> Self {
        let e = epoch as u64;
        Self {
            teacher: crate::rng::stream(base_seed, e),
            student: crate::rng::stream(base_seed, e),
            teacher_sampling: crate::rng::stream(bd_seed, 2 * e),
            student_sampling: crate::rng::stream(bd_seed, 2 * e + 1),
        }
    }
}

/// One model's share of a co-training epoch: a pointwise pass, then one SGD
/// step per user on `lambda * bd_loss` over items sampled by rank
/// discrepancy against `target`. With `lambda == 0` the parameters end up
/// exactly as after the pointwise pass alone.
#[allow(clippy::too_many_arguments)]
pub fn distill_epoch<R: Rng + ?Sized, S: Rng + ?Sized>(
    learner: &mut MfParams,
    target: &MfParams,
    learner_ranks: &RankTable,
    target_ranks: &RankTable,
    dataset: &Dataset,
    base_cfg: &TrainConfig,
    bd_cfg: &BdConfig,
    lambda: f64,
    base_rng: &mut R,
    sampling_rng: &mut S,
) -> Result<ModelReport> {
    let base_loss = pointwise_epoch(learner, dataset, base_cfg, base_rng)?;
    let mut report = ModelReport {
        base_loss,
        ..ModelReport::default()
    };
    let mut distill_sum = 0.0;
    let mut grad = Gradient::new();
    for u in 0..dataset.num_users() {
        let weights = rank_discrepancy_weights(
            &learner_ranks.rows[u],
            &target_ranks.rows[u],
            bd_cfg.eta,
            bd_cfg.truncate_rank,
        )?;
        let items = sample_distill_items(&weights, bd_cfg.sample_size, sampling_rng);
        if items.is_empty() {
            report.empty_samples += 1;
            continue;
        }
        report.sampled_total += items.len();
        report.max_sampled_per_user = report.max_sampled_per_user.max(items.len());

        let scores: Vec<f64> = items.iter().map(|&i| learner.score_unchecked(u, i)).collect();
        let targets: Vec<f64> = items.iter().map(|&i| sigmoid(target.score_unchecked(u, i))).collect();
        let probs: Vec<f64> = scores.iter().map(|&s| sigmoid(s)).collect();
        distill_sum += bd_loss(&probs, &targets);

        if lambda != 0.0 {
            grad.clear();
            for (&i, g) in items.iter().zip(bd_loss_score_gradient(&scores, &targets)) {
                push_score_gradient(learner, u, i, lambda * g, 0.0, &mut grad);
            }
            learner.apply_gradient(&grad, base_cfg.lr);
        }
    }
    let users_with_samples = dataset.num_users() - report.empty_samples;
    if users_with_samples > 0 {
        report.distill_loss = distill_sum / users_with_samples as f64;
    }
    Ok(report)
}

/// One bidirectional epoch. Ranks and distillation targets come from the
/// start-of-epoch snapshots of both models; the two updates then run in
/// parallel.
pub fn cotrain_epoch(
    teacher: &mut MfParams,
    student: &mut MfParams,
    dataset: &Dataset,
    base_cfg: &TrainConfig,
    bd_cfg: &BdConfig,
    rngs: &mut CotrainRngs,
) -> Result<CotrainReport> {
    if base_cfg.loss_kind != LossKind::Pointwise {
        return Err(Error::invalid("co-training needs the pointwise base loss"));
    }
    bd_cfg.validate()?;
    let teacher_snapshot = teacher.clone();
    let student_snapshot = student.clone();
    let teacher_ranks = build_rank_table(&teacher_snapshot, dataset)?;
    let student_ranks = build_rank_table(&student_snapshot, dataset)?;

    let CotrainRngs {
        teacher: teacher_rng,
        student: student_rng,
        teacher_sampling,
        student_sampling,
    } = rngs;
    let (t, s) = rayon::join(
        || {
            distill_epoch(
                teacher,
                &student_snapshot,
                &teacher_ranks,
                &student_ranks,
                dataset,
                base_cfg,
                bd_cfg,
                bd_cfg.lambda_ts,
                teacher_rng,
                teacher_sampling,
            )
        },
        || {
            distill_epoch(
                student,
                &teacher_snapshot,
                &student_ranks,
                &teacher_ranks,
                dataset,
                base_cfg,
                bd_cfg,
                bd_cfg.lambda_st,
                student_rng,
                student_sampling,
            )
        },
    );
    Ok(CotrainReport {
        teacher: t?,
        student: s?,
    })
}
