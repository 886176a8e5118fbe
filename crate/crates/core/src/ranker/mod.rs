//! Matrix-factorization scoring backbone.
//!
//! `score(u, i) = <p_u, q_i> + b_i`, trained with either the pairwise BPR
//! loss or the pointwise logistic loss by plain SGD. No user bias: it cancels
//! in every within-user comparison.

pub mod checkpoint;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_excluding, sample_negative, Dataset, Split};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};

#[derive(Debug, Clone, PartialEq)]
pub struct MfParams {
    num_users: usize,
    num_items: usize,
    dim: usize,
    user_emb: Vec<f64>,
    item_emb: Vec<f64>,
    item_bias: Vec<f64>,
}

/// One scalar parameter of an [`MfParams`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Coord {
    User(usize, usize),
    Item(usize, usize),
    Bias(usize),
}

/// Sparse gradient as (coordinate, partial derivative) pairs.
pub type Gradient = Vec<(Coord, f64)>;

const INIT_STD: f64 = 0.01;

/// Zero-mean normal initialization with standard deviation 0.01, biases zero.
pub fn init_params(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Result<MfParams> {
    if num_users == 0 || num_items == 0 {
        return Err(Error::invalid("model needs at least one user and one item"));
    }
    if dim == 0 {
        return Err(Error::invalid("embedding dimension must be at least 1"));
    }
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut rng = crate::rng::seeded(seed);
    let user_emb = (0..num_users * dim).map(|_| normal.sample(&mut rng)).collect();
    let item_emb = (0..num_items * dim).map(|_| normal.sample(&mut rng)).collect();
    Ok(MfParams {
        num_users,
        num_items,
        dim,
        user_emb,
        item_emb,
        item_bias: vec![0.0; num_items],
    })
}

impl MfParams {
    /// Assembles parameters from flat row-major arrays.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        dim: usize,
        user_emb: Vec<f64>,
        item_emb: Vec<f64>,
        item_bias: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || num_users == 0 || num_items == 0 {
            return Err(Error::invalid("empty model shape"));
        }
        if user_emb.len() != num_users * dim
            || item_emb.len() != num_items * dim
            || item_bias.len() != num_items
        {
            return Err(Error::invalid("parameter arrays do not match the model shape"));
        }
        let params = Self {
            num_users,
            num_items,
            dim,
            user_emb,
            item_emb,
            item_bias,
        };
        if !params.is_finite() {
            return Err(Error::invalid("parameters contain non-finite values"));
        }
        Ok(params)
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn user_emb(&self) -> &[f64] {
        &self.user_emb
    }

    pub fn item_emb(&self) -> &[f64] {
        &self.item_emb
    }

    pub fn item_bias(&self) -> &[f64] {
        &self.item_bias
    }

    pub fn user_row(&self, u: usize) -> &[f64] {
        &self.user_emb[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_row(&self, i: usize) -> &[f64] {
        &self.item_emb[i * self.dim..(i + 1) * self.dim]
    }

    pub fn user_row_mut(&mut self, u: usize) -> &mut [f64] {
        &mut self.user_emb[u * self.dim..(u + 1) * self.dim]
    }

    pub fn item_row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.item_emb[i * self.dim..(i + 1) * self.dim]
    }

    pub fn item_bias_mut(&mut self) -> &mut [f64] {
        &mut self.item_bias
    }

    pub fn is_finite(&self) -> bool {
        self.user_emb
            .iter()
            .chain(&self.item_emb)
            .chain(&self.item_bias)
            .all(|v| v.is_finite())
    }

    /// Rounds every entry to the nearest `f32`, making a checkpoint
    /// round-trip lossless.
    pub fn round_to_f32(&mut self) {
        for v in self
            .user_emb
            .iter_mut()
            .chain(self.item_emb.iter_mut())
            .chain(self.item_bias.iter_mut())
        {
            *v = *v as f32 as f64;
        }
    }

    pub fn get(&self, c: Coord) -> f64 {
        match c {
            Coord::User(u, k) => self.user_emb[u * self.dim + k],
            Coord::Item(i, k) => self.item_emb[i * self.dim + k],
            Coord::Bias(i) => self.item_bias[i],
        }
    }

    pub fn get_mut(&mut self, c: Coord) -> &mut f64 {
        match c {
            Coord::User(u, k) => &mut self.user_emb[u * self.dim + k],
            Coord::Item(i, k) => &mut self.item_emb[i * self.dim + k],
            Coord::Bias(i) => &mut self.item_bias[i],
        }
    }

    /// `params -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &[(Coord, f64)], lr: f64) {
        for &(c, g) in grad {
            *self.get_mut(c) -= lr * g;
        }
    }

    /// Score without bounds checks beyond slice indexing.
    #[inline]
    pub fn score_unchecked(&self, u: usize, i: usize) -> f64 {
        dot(self.user_row(u), self.item_row(i)) + self.item_bias[i]
    }

    fn check(&self, u: usize, i: usize) -> Result<()> {
        if u >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: u,
                limit: self.num_users,
            });
        }
        if i >= self.num_items {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: i,
                limit: self.num_items,
            });
        }
        Ok(())
    }

    pub(crate) fn check_against(&self, dataset: &Dataset) -> Result<()> {
        if self.num_users != dataset.num_users() || self.num_items != dataset.num_items() {
            return Err(Error::invalid(format!(
                "model shape {}x{} does not match dataset {}x{}",
                self.num_users,
                self.num_items,
                dataset.num_users(),
                dataset.num_items()
            )));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn sq_norm(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn score(params: &MfParams, u: usize, i: usize) -> Result<f64> {
    params.check(u, i)?;
    Ok(params.score_unchecked(u, i))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Bpr,
    Pointwise,
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bpr" => Ok(LossKind::Bpr),
            "pointwise" => Ok(LossKind::Pointwise),
            other => Err(Error::invalid(format!("unknown loss kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    /// Positives per SGD step; every example in a batch is evaluated at the
    /// batch-start parameters.
    pub batch_size: usize,
    pub loss_kind: LossKind,
    pub negatives_per_positive: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.05,
            reg: 1e-4,
            epochs: 30,
            batch_size: 1,
            loss_kind: LossKind::Bpr,
            negatives_per_positive: 4,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Checks the values one epoch needs. A zero learning rate is accepted
    /// here (it makes an epoch a pure loss evaluation).
    pub fn validate_step(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid("learning rate must be finite and nonnegative"));
        }
        if !(self.reg >= 0.0 && self.reg.is_finite()) {
            return Err(Error::invalid("regularization must be finite and nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        Ok(())
    }
}

/// BPR loss of one (user, positive, negative) triple, including L2.
pub fn bpr_triple_loss(params: &MfParams, u: usize, pos: usize, neg: usize, reg: f64) -> f64 {
    let diff = params.score_unchecked(u, pos) - params.score_unchecked(u, neg);
    softplus(-diff)
        + reg
            * (sq_norm(params.user_row(u))
                + sq_norm(params.item_row(pos))
                + sq_norm(params.item_row(neg)))
}

/// Appends the gradient of [`bpr_triple_loss`] to `out`.
pub fn bpr_triple_gradient(
    params: &MfParams,
    u: usize,
    pos: usize,
    neg: usize,
    reg: f64,
    out: &mut Gradient,
) {
    let diff = params.score_unchecked(u, pos) - params.score_unchecked(u, neg);
    // d/dx softplus(-x) = -sigma(-x)
    let g = -sigmoid(-diff);
    let (pu, qi, qj) = (params.user_row(u), params.item_row(pos), params.item_row(neg));
    for k in 0..params.dim {
        out.push((Coord::User(u, k), g * (qi[k] - qj[k]) + 2.0 * reg * pu[k]));
        out.push((Coord::Item(pos, k), g * pu[k] + 2.0 * reg * qi[k]));
        out.push((Coord::Item(neg, k), -g * pu[k] + 2.0 * reg * qj[k]));
    }
    out.push((Coord::Bias(pos), g));
    out.push((Coord::Bias(neg), -g));
}

/// Logistic loss of one (user, item, label) example, including L2.
pub fn pointwise_example_loss(params: &MfParams, u: usize, i: usize, label: bool, reg: f64) -> f64 {
    let s = params.score_unchecked(u, i);
    let nll = if label { softplus(-s) } else { softplus(s) };
    nll + reg * (sq_norm(params.user_row(u)) + sq_norm(params.item_row(i)))
}

/// Appends the gradient of [`pointwise_example_loss`] to `out`.
pub fn pointwise_example_gradient(
    params: &MfParams,
    u: usize,
    i: usize,
    label: bool,
    reg: f64,
    out: &mut Gradient,
) {
    let s = params.score_unchecked(u, i);
    let g = sigmoid(s) - if label { 1.0 } else { 0.0 };
    push_score_gradient(params, u, i, g, reg, out);
}

/// Appends `g * d score(u,i) / d theta` plus the L2 terms on p_u and q_i.
pub(crate) fn push_score_gradient(
    params: &MfParams,
    u: usize,
    i: usize,
    g: f64,
    reg: f64,
    out: &mut Gradient,
) {
    let (pu, qi) = (params.user_row(u), params.item_row(i));
    for k in 0..params.dim {
        out.push((Coord::User(u, k), g * qi[k] + 2.0 * reg * pu[k]));
        out.push((Coord::Item(i, k), g * pu[k] + 2.0 * reg * qi[k]));
    }
    out.push((Coord::Bias(i), g));
}

fn shuffled_positions<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order
}

/// One BPR pass over the shuffled train positives. Returns the mean
/// per-triple loss, each triple's loss taken before its own update.
pub fn bpr_epoch<R: Rng + ?Sized>(
    params: &mut MfParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if cfg.loss_kind != LossKind::Bpr {
        return Err(Error::invalid("bpr_epoch needs loss_kind = bpr"));
    }
    cfg.validate_step()?;
    params.check_against(dataset)?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let order = shuffled_positions(train.len(), rng);
    let mut grad = Gradient::new();
    let mut total = 0.0;
    for batch in order.chunks(cfg.batch_size) {
        grad.clear();
        for &pos in batch {
            let x = train[pos];
            let neg = sample_negative(dataset, x.user, rng)?;
            total += bpr_triple_loss(params, x.user, x.item, neg, cfg.reg);
            bpr_triple_gradient(params, x.user, x.item, neg, cfg.reg, &mut grad);
        }
        params.apply_gradient(&grad, cfg.lr);
    }
    Ok(total / train.len() as f64)
}

/// One pointwise pass: every shuffled positive followed by
/// `negatives_per_positive` sampled negatives. Returns the mean per-example
/// loss.
pub fn pointwise_epoch<R: Rng + ?Sized>(
    params: &mut MfParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    if cfg.loss_kind != LossKind::Pointwise {
        return Err(Error::invalid("pointwise_epoch needs loss_kind = pointwise"));
    }
    cfg.validate_step()?;
    params.check_against(dataset)?;
    let train = dataset.train();
    if train.is_empty() {
        return Err(Error::EmptyInput);
    }
    let order = shuffled_positions(train.len(), rng);
    let mut grad = Gradient::new();
    let mut total = 0.0;
    let mut examples = 0usize;
    // batch_size 1 is plain SGD: every example takes its own step
    let per_example = cfg.batch_size == 1;
    for batch in order.chunks(cfg.batch_size) {
        grad.clear();
        for &pos in batch {
            let x = train[pos];
            for n in 0..=cfg.negatives_per_positive {
                let (item, label) = if n == 0 {
                    (x.item, true)
                } else {
                    (sample_negative(dataset, x.user, rng)?, false)
                };
                total += pointwise_example_loss(params, x.user, item, label, cfg.reg);
                pointwise_example_gradient(params, x.user, item, label, cfg.reg, &mut grad);
                if per_example {
                    params.apply_gradient(&grad, cfg.lr);
                    grad.clear();
                }
            }
            examples += 1 + cfg.negatives_per_positive;
        }
        params.apply_gradient(&grad, cfg.lr);
    }
    Ok(total / examples as f64)
}

/// Runs the epoch matching `cfg.loss_kind`.
pub fn train_epoch<R: Rng + ?Sized>(
    params: &mut MfParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    match cfg.loss_kind {
        LossKind::Bpr => bpr_epoch(params, dataset, cfg, rng),
        LossKind::Pointwise => pointwise_epoch(params, dataset, cfg, rng),
    }
}

/// Random stream for training epoch `epoch` (0-based) of a run seeded `seed`.
pub fn epoch_rng(seed: u64, epoch: usize) -> crate::rng::Rng {
    crate::rng::stream(seed, epoch as u64)
}

/// Non-excluded items by descending score, ties by ascending index.
pub fn rank_items(params: &MfParams, u: usize, exclude: &[usize]) -> Result<Vec<usize>> {
    params.check(u, 0)?;
    let mut excluded = vec![false; params.num_items];
    for &i in exclude {
        params.check(u, i)?;
        excluded[i] = true;
    }
    let mut scored: Vec<(usize, f64)> = (0..params.num_items)
        .filter(|&i| !excluded[i])
        .map(|i| (i, params.score_unchecked(u, i)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored.into_iter().map(|(i, _)| i).collect())
}

/// Monte Carlo AUC over users with items in `split`: fraction of sampled
/// (split positive, non-train non-split negative) pairs ordered correctly,
/// ties counting one half.
pub fn auc<R: Rng + ?Sized>(
    params: &MfParams,
    dataset: &Dataset,
    split: Split,
    rng: &mut R,
    pairs_per_user: usize,
) -> Result<f64> {
    params.check_against(dataset)?;
    if pairs_per_user == 0 {
        return Err(Error::invalid("pairs_per_user must be at least 1"));
    }
    let mut sum = 0.0;
    let mut users = 0usize;
    for u in 0..dataset.num_users() {
        let positives = dataset.user_items(split, u);
        if positives.is_empty() {
            continue;
        }
        let excluded = [dataset.user_items(Split::Train, u), positives];
        let mut hits = 0.0;
        let mut done = 0usize;
        for _ in 0..pairs_per_user {
            let pos = positives[rng.random_range(0..positives.len())];
            let neg = match sample_excluding(dataset.num_items(), &excluded, u, rng) {
                Ok(j) => j,
                Err(Error::NegativesExhausted { .. }) => break,
                Err(e) => return Err(e),
            };
            let (sp, sn) = (params.score_unchecked(u, pos), params.score_unchecked(u, neg));
            hits += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
            done += 1;
        }
        if done > 0 {
            sum += hits / done as f64;
            users += 1;
        }
    }
    if users == 0 {
        return Err(Error::invalid(format!("split `{}` is empty for every user", split.name())));
    }
    Ok(sum / users as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Interaction;
    use crate::rng;

    fn params_with(user: Vec<f64>, item: Vec<f64>, bias: Vec<f64>, dim: usize) -> MfParams {
        let nu = user.len() / dim;
        let ni = item.len() / dim;
        MfParams::from_parts(nu, ni, dim, user, item, bias).unwrap()
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = init_params(2, 3, 4, 9).unwrap();
        assert_eq!(p.user_emb().len(), 2 * 4);
        assert_eq!(p.item_emb().len(), 3 * 4);
        assert_eq!(p.item_bias(), &[0.0; 3]);
        let q = init_params(2, 3, 4, 9).unwrap();
        assert_eq!(p, q);
        assert!(init_params(0, 3, 4, 9).is_err());
        assert!(init_params(2, 0, 4, 9).is_err());
        assert!(init_params(2, 3, 0, 9).is_err());
    }

    #[test]
    fn init_standard_deviation() {
        let p = init_params(500, 500, 100, 1).unwrap();
        let xs = p.user_emb();
        assert_eq!(xs.len(), 50_000);
        let all: Vec<f64> = xs.iter().chain(p.item_emb()).copied().collect();
        let n = all.len() as f64;
        let mean = all.iter().sum::<f64>() / n;
        let sd = (all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((0.009..=0.011).contains(&sd), "sd = {sd}");
    }

    #[test]
    fn score_examples() {
        let p = params_with(vec![0.0, 0.0], vec![0.0, 0.0], vec![0.7], 2);
        assert_eq!(score(&p, 0, 0).unwrap(), 0.7);
        let p = params_with(vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0], 2);
        assert_eq!(score(&p, 0, 0).unwrap(), 0.0);
        let p = params_with(vec![1.0, 2.0], vec![3.0, 4.0], vec![0.5], 2);
        assert_eq!(score(&p, 0, 0).unwrap(), 11.5);
        assert!(matches!(score(&p, 1, 0), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(score(&p, 0, 1), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn score_is_bilinear_in_user_embedding() {
        let mut p = init_params(3, 4, 5, 2).unwrap();
        p.item_bias_mut()[2] = 0.3;
        let base = score(&p, 1, 2).unwrap() - 0.3;
        for v in p.user_row_mut(1) {
            *v *= -2.5;
        }
        let scaled = score(&p, 1, 2).unwrap() - 0.3;
        assert!((scaled + 2.5 * base).abs() < 1e-15);
    }

    #[test]
    fn rank_items_examples() {
        let p = params_with(vec![0.0], vec![0.0, 0.0, 0.0], vec![0.1, 0.9, 0.5], 1);
        assert_eq!(rank_items(&p, 0, &[]).unwrap(), vec![1, 2, 0]);
        assert_eq!(rank_items(&p, 0, &[2]).unwrap(), vec![1, 0]);
        assert!(rank_items(&p, 0, &[0, 1, 2]).unwrap().is_empty());
        let flat = params_with(vec![0.0], vec![0.0; 4], vec![0.2; 4], 1);
        assert_eq!(rank_items(&flat, 0, &[]).unwrap(), vec![0, 1, 2, 3]);
    }

    fn tiny_dataset() -> Dataset {
        let train = vec![
            Interaction::new(0, 0),
            Interaction::new(0, 1),
            Interaction::new(1, 2),
            Interaction::new(1, 3),
            Interaction::new(2, 0),
        ];
        let val = vec![Interaction::new(0, 2), Interaction::new(1, 0)];
        Dataset::from_splits(3, 6, train, val, vec![]).unwrap()
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let ds = tiny_dataset();
        let p0 = init_params(3, 6, 4, 5).unwrap();
        for kind in [LossKind::Bpr, LossKind::Pointwise] {
            let cfg = TrainConfig {
                lr: 0.0,
                reg: 0.0,
                loss_kind: kind,
                ..TrainConfig::default()
            };
            let mut p = p0.clone();
            let loss = train_epoch(&mut p, &ds, &cfg, &mut rng::seeded(3)).unwrap();
            assert_eq!(p, p0);
            assert!(loss > 0.0);
        }
    }

    #[test]
    fn bpr_zero_lr_loss_is_mean_neg_log_sigmoid() {
        // Replay the epoch's draws to recompute the expected mean loss.
        let ds = tiny_dataset();
        let p = init_params(3, 6, 4, 5).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            reg: 0.0,
            ..TrainConfig::default()
        };
        let loss = bpr_epoch(&mut p.clone(), &ds, &cfg, &mut rng::seeded(8)).unwrap();
        let mut r = rng::seeded(8);
        let order = shuffled_positions(ds.train().len(), &mut r);
        let mut expect = 0.0;
        for pos in order {
            let x = ds.train()[pos];
            let j = sample_negative(&ds, x.user, &mut r).unwrap();
            let d = p.score_unchecked(x.user, x.item) - p.score_unchecked(x.user, j);
            expect += -(1.0 / (1.0 + (-d).exp())).ln();
        }
        expect /= ds.train().len() as f64;
        assert!((loss - expect).abs() < 1e-12);
    }

    #[test]
    fn pointwise_symmetric_start_is_ln2() {
        let ds = tiny_dataset();
        let mut p = MfParams::from_parts(3, 6, 2, vec![0.0; 6], vec![0.0; 12], vec![0.0; 6]).unwrap();
        let cfg = TrainConfig {
            lr: 0.0,
            loss_kind: LossKind::Pointwise,
            ..TrainConfig::default()
        };
        let loss = pointwise_epoch(&mut p, &ds, &cfg, &mut rng::seeded(1)).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn wrong_loss_kind_is_rejected() {
        let ds = tiny_dataset();
        let mut p = init_params(3, 6, 2, 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(pointwise_epoch(&mut p, &ds, &cfg, &mut rng::seeded(0)).is_err());
    }

    #[test]
    fn epochs_are_deterministic() {
        let ds = tiny_dataset();
        for kind in [LossKind::Bpr, LossKind::Pointwise] {
            let cfg = TrainConfig {
                loss_kind: kind,
                batch_size: 2,
                ..TrainConfig::default()
            };
            let run = || {
                let mut p = init_params(3, 6, 4, 5).unwrap();
                let l = train_epoch(&mut p, &ds, &cfg, &mut epoch_rng(4, 0)).unwrap();
                (p, l)
            };
            assert_eq!(run(), run());
        }
    }

    #[test]
    fn auc_extremes() {
        let ds = tiny_dataset();
        let zero = MfParams::from_parts(3, 6, 1, vec![0.0; 3], vec![0.0; 6], vec![0.0; 6]).unwrap();
        let a = auc(&zero, &ds, Split::Validation, &mut rng::seeded(1), 50).unwrap();
        assert_eq!(a, 0.5);
        // bias favouring exactly the validation items of both users
        let mut bias = vec![0.0; 6];
        bias[2] = 1.0;
        bias[0] = 1.0;
        let good = MfParams::from_parts(3, 6, 1, vec![0.0; 3], vec![0.0; 6], bias).unwrap();
        let a = auc(&good, &ds, Split::Validation, &mut rng::seeded(1), 50).unwrap();
        assert_eq!(a, 1.0);
        assert!(auc(&good, &ds, Split::Test, &mut rng::seeded(1), 50).is_err());
    }

    #[test]
    fn round_to_f32_is_idempotent() {
        let mut p = init_params(2, 2, 3, 1).unwrap();
        p.round_to_f32();
        let q = p.clone();
        p.round_to_f32();
        assert_eq!(p, q);
    }
}
