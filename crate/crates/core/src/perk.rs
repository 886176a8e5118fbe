//! Personalized top-K cutoffs from calibrated probabilities.
//!
//! Relevance of each candidate is modelled as an independent Bernoulli trial
//! with its calibrated probability. Under that model the expected precision,
//! recall, F1 and NDCG of every list prefix are computed exactly (up to
//! floating point) from Poisson-binomial distributions, and each user gets
//! the cutoff `k*` with the highest expected utility.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibration::Calibrator;
use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::math::discount;
use crate::ranker::{rank_items, MfParams};

/// Distribution of the number of successes among independent Bernoulli
/// trials with unequal probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonBinomialPmf {
    pmf: Vec<f64>,
}

impl PoissonBinomialPmf {
    /// Zero trials: all mass on count 0.
    pub fn new() -> Self {
        Self { pmf: vec![1.0] }
    }

    /// `P(count = c)` for `c` in `0..=trials`.
    pub fn probabilities(&self) -> &[f64] {
        &self.pmf
    }

    pub fn trials(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn prob(&self, count: usize) -> f64 {
        self.pmf.get(count).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(c, p)| c as f64 * p).sum()
    }

    /// Adds one trial with success probability `p` (unchecked).
    pub fn push(&mut self, p: f64) {
        push_trial(&mut self.pmf, p);
    }
}

impl Default for PoissonBinomialPmf {
    fn default() -> Self {
        Self::new()
    }
}

fn push_trial(pmf: &mut Vec<f64>, p: f64) {
    let q = 1.0 - p;
    pmf.push(0.0);
    for c in (1..pmf.len()).rev() {
        pmf[c] = pmf[c] * q + pmf[c - 1] * p;
    }
    pmf[0] *= q;
}

fn pb_unchecked<'a>(probs: impl IntoIterator<Item = &'a f64>) -> Vec<f64> {
    let mut pmf = vec![1.0];
    for &p in probs {
        push_trial(&mut pmf, p);
    }
    pmf
}

fn check_probs(probs: &[f64]) -> Result<()> {
    for (position, &value) in probs.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidProbability { position, value });
        }
    }
    Ok(())
}

/// Exact Poisson-binomial pmf by the O(n^2) recurrence
/// `pmf'[c] = pmf[c](1-p) + pmf[c-1] p`.
pub fn pb_pmf(probs: &[f64]) -> Result<PoissonBinomialPmf> {
    check_probs(probs)?;
    Ok(PoissonBinomialPmf {
        pmf: pb_unchecked(probs),
    })
}

/// `1 / IDCG` for `relevant` relevant items placed at the top (`relevant >= 1`).
fn idcg_inv_table(k: usize) -> Vec<f64> {
    // entry r (1..=k) holds 1 / sum_{j<=r} discount(j); entry 0 unused
    let mut out = vec![0.0; k + 1];
    let mut acc = 0.0;
    for (r, slot) in out.iter_mut().enumerate().skip(1) {
        acc += discount(r);
        *slot = 1.0 / acc;
    }
    out
}

pub fn expected_precision(probs_topk: &[f64]) -> Result<f64> {
    if probs_topk.is_empty() {
        return Err(Error::invalid("expected precision needs a nonempty top-k"));
    }
    check_probs(probs_topk)?;
    Ok(probs_topk.iter().sum::<f64>() / probs_topk.len() as f64)
}

/// `E[A / (A + B)]` for `A ~ PB(topk)`, `B ~ PB(rest)`, with `0/0 = 0`.
pub fn expected_recall(probs_topk: &[f64], probs_rest: &[f64]) -> Result<f64> {
    check_probs(probs_topk)?;
    check_probs(probs_rest)?;
    Ok(recall_from_pmfs(&pb_unchecked(probs_topk), &pb_unchecked(probs_rest)))
}

fn recall_from_pmfs(a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (hits, &pa) in a.iter().enumerate().skip(1) {
        let inner: f64 = b
            .iter()
            .enumerate()
            .map(|(others, &pb)| pb * hits as f64 / (hits + others) as f64)
            .sum();
        total += pa * inner;
    }
    total
}

/// `E[2A / (k + A + B)]`, where `k = |topk|`.
pub fn expected_f1(probs_topk: &[f64], probs_rest: &[f64]) -> Result<f64> {
    if probs_topk.is_empty() {
        return Err(Error::invalid("expected F1 needs a nonempty top-k"));
    }
    check_probs(probs_topk)?;
    check_probs(probs_rest)?;
    Ok(f1_from_pmfs(
        probs_topk.len(),
        &pb_unchecked(probs_topk),
        &pb_unchecked(probs_rest),
    ))
}

fn f1_from_pmfs(k: usize, a: &[f64], b: &[f64]) -> f64 {
    let mut total = 0.0;
    for (hits, &pa) in a.iter().enumerate().skip(1) {
        let inner: f64 = b
            .iter()
            .enumerate()
            .map(|(others, &pb)| pb * 2.0 * hits as f64 / (k + hits + others) as f64)
            .sum();
        total += pa * inner;
    }
    total
}

/// `E[DCG@k / IDCG@k]` with binary gains, the ideal list built from every
/// relevant item among `topk` and `rest`, and NDCG = 0 when nothing is
/// relevant.
///
/// Conditioning on position `i` being relevant leaves the other relevant
/// items distributed as `A_{-i} + B`, where `A_{-i}` is recomputed from the
/// other `k - 1` top-k probabilities.
pub fn expected_ndcg(probs_topk: &[f64], probs_rest: &[f64]) -> Result<f64> {
    if probs_topk.is_empty() {
        return Err(Error::invalid("expected NDCG needs a nonempty top-k"));
    }
    check_probs(probs_topk)?;
    check_probs(probs_rest)?;
    let k = probs_topk.len();
    let idcg_inv = idcg_inv_table(k);
    let rest = pb_unchecked(probs_rest);
    let mut total = 0.0;
    for (i, &p) in probs_topk.iter().enumerate() {
        if p == 0.0 {
            continue;
        }
        let others = pb_unchecked(
            probs_topk
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, p)| p),
        );
        let mut inner = 0.0;
        for (a, &pa) in others.iter().enumerate() {
            for (b, &pb) in rest.iter().enumerate() {
                inner += pa * pb * idcg_inv[(1 + a + b).min(k)];
            }
        }
        total += p * discount(i + 1) * inner;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UtilityKind {
    Precision,
    Recall,
    F1,
    Ndcg,
}

impl UtilityKind {
    pub const ALL: [UtilityKind; 4] = [
        UtilityKind::Precision,
        UtilityKind::Recall,
        UtilityKind::F1,
        UtilityKind::Ndcg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UtilityKind::Precision => "precision",
            UtilityKind::Recall => "recall",
            UtilityKind::F1 => "f1",
            UtilityKind::Ndcg => "ndcg",
        }
    }
}

impl std::str::FromStr for UtilityKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precision" => Ok(UtilityKind::Precision),
            "recall" => Ok(UtilityKind::Recall),
            "f1" => Ok(UtilityKind::F1),
            "ndcg" => Ok(UtilityKind::Ndcg),
            other => Err(Error::invalid(format!("unknown utility `{other}`"))),
        }
    }
}

/// Expected utility of one top-k prefix; `rest` holds every candidate below it.
pub fn expected_utility(kind: UtilityKind, probs_topk: &[f64], probs_rest: &[f64]) -> Result<f64> {
    match kind {
        UtilityKind::Precision => expected_precision(probs_topk),
        UtilityKind::Recall => {
            if probs_topk.is_empty() {
                return Err(Error::invalid("expected recall curve needs a nonempty top-k"));
            }
            expected_recall(probs_topk, probs_rest)
        }
        UtilityKind::F1 => expected_f1(probs_topk, probs_rest),
        UtilityKind::Ndcg => expected_ndcg(probs_topk, probs_rest),
    }
}

/// Expected utility of every prefix `k = 1..=ranked.len()`.
///
/// For cutoff `k` the remaining candidates are `ranked[k..]` followed by
/// `rest` (precision ignores them). Prefix and suffix pmfs are built once and
/// shared across cutoffs; the whole curve costs
/// `O(k_max^2 * (k_max + |rest|))`.
pub fn utility_curve(ranked_probs: &[f64], rest_probs: &[f64], kind: UtilityKind) -> Result<Vec<f64>> {
    let k_max = ranked_probs.len();
    if k_max == 0 {
        return Err(Error::invalid("utility curve needs at least one ranked item"));
    }
    check_probs(ranked_probs)?;
    check_probs(rest_probs)?;

    if kind == UtilityKind::Precision {
        let mut acc = 0.0;
        return Ok(ranked_probs
            .iter()
            .enumerate()
            .map(|(k, p)| {
                acc += p;
                acc / (k + 1) as f64
            })
            .collect());
    }

    // prefix[k] = PB(ranked[..k])
    let mut prefix = Vec::with_capacity(k_max + 1);
    prefix.push(vec![1.0]);
    for &p in ranked_probs {
        let mut next = prefix.last().cloned().expect("seeded");
        push_trial(&mut next, p);
        prefix.push(next);
    }
    // suffix[k] = PB(ranked[k..] ++ rest)
    let mut suffix = vec![Vec::new(); k_max + 1];
    suffix[k_max] = pb_unchecked(rest_probs);
    for k in (0..k_max).rev() {
        let mut next = suffix[k + 1].clone();
        push_trial(&mut next, ranked_probs[k]);
        suffix[k] = next;
    }

    let curve = (1..=k_max)
        .map(|k| match kind {
            UtilityKind::Recall => recall_from_pmfs(&prefix[k], &suffix[k]),
            UtilityKind::F1 => f1_from_pmfs(k, &prefix[k], &suffix[k]),
            UtilityKind::Ndcg => ndcg_at_cutoff(&ranked_probs[..k], &prefix, &suffix[k]),
            UtilityKind::Precision => unreachable!(),
        })
        .collect();
    Ok(curve)
}

/// Expected NDCG of `top` (length k) against remaining-count pmf `rest`.
///
/// With `h(a) = sum_b P(B=b) idcg_inv(min(1+a+b, k))`, the conditional term
/// for position `i` is `sum_x P(prefix_i = x) G_{i+1}(x)`, where
/// `G_k = h` and `G_j(x) = (1-p_j) G_{j+1}(x) + p_j G_{j+1}(x+1)` folds in
/// the positions after `i` one at a time.
fn ndcg_at_cutoff(top: &[f64], prefix: &[Vec<f64>], rest: &[f64]) -> f64 {
    let k = top.len();
    let idcg_inv = idcg_inv_table(k);
    let h: Vec<f64> = (0..k)
        .map(|a| {
            rest.iter()
                .enumerate()
                .map(|(b, &pb)| pb * idcg_inv[(1 + a + b).min(k)])
                .sum()
        })
        .collect();

    let mut g = h;
    let mut total = 0.0;
    for j in (1..=k).rev() {
        // g == G_j, defined on 0..j; position i = j - 1 pairs it with prefix[i]
        let i = j - 1;
        let p = top[i];
        if p > 0.0 {
            let inner: f64 = prefix[i].iter().zip(&g).map(|(a, b)| a * b).sum();
            total += p * discount(i + 1) * inner;
        }
        g = (0..i).map(|x| (1.0 - p) * g[x] + p * g[x + 1]).collect();
    }
    total
}

/// Smallest 1-based index attaining the maximum of `curve`.
pub fn select_k(curve: &[f64]) -> Result<usize> {
    if curve.is_empty() {
        return Err(Error::invalid("cannot select a cutoff from an empty curve"));
    }
    if let Some(pos) = curve.iter().position(|v| v.is_nan()) {
        return Err(Error::invalid(format!("utility curve has NaN at k = {}", pos + 1)));
    }
    let mut best = 0;
    for (k, &v) in curve.iter().enumerate() {
        if v > curve[best] {
            best = k;
        }
    }
    Ok(best + 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerkConfig {
    pub k_max: usize,
    pub utility: UtilityKind,
    /// Candidates beyond `k_max` whose probabilities form the remaining
    /// relevant-count distribution.
    pub rest_pool: usize,
}

impl Default for PerkConfig {
    fn default() -> Self {
        Self {
            k_max: 20,
            utility: UtilityKind::F1,
            rest_pool: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalizedCut {
    pub user: usize,
    pub k_star: usize,
    /// Expected utility for `k = 1..=curve.len()`.
    pub curve: Vec<f64>,
    pub items: Vec<usize>,
    /// Set when the candidate pool was smaller than `k_max`, in which case
    /// the curve stops at the pool size.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

/// Curve and smallest-argmax cutoff for probabilities already in rank order.
pub fn cut_from_probs(ranked_probs: &[f64], rest_probs: &[f64], kind: UtilityKind) -> Result<(Vec<f64>, usize)> {
    let curve = utility_curve(ranked_probs, rest_probs, kind)?;
    let k_star = select_k(&curve)?;
    Ok((curve, k_star))
}

/// Rank the user's non-train items, calibrate the top `k_max + rest_pool`
/// scores, and cut the list where the expected utility peaks.
pub fn perk_recommend(
    params: &MfParams,
    calibrator: &Calibrator,
    dataset: &Dataset,
    user: usize,
    cfg: &PerkConfig,
) -> Result<PersonalizedCut> {
    if cfg.k_max == 0 {
        return Err(Error::invalid("k_max must be at least 1"));
    }
    if user >= dataset.num_users() {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: user,
            limit: dataset.num_users(),
        });
    }
    let ranked = rank_items(params, user, dataset.user_items(Split::Train, user))?;
    if ranked.is_empty() {
        return Err(Error::invalid(format!("user {user} has no candidate items")));
    }
    let pool = &ranked[..ranked.len().min(cfg.k_max + cfg.rest_pool)];
    let probs: Vec<f64> = pool
        .iter()
        .map(|&i| calibrator.apply_clamped(params.score_unchecked(user, i)))
        .collect::<Result<_>>()?;
    let k_eff = cfg.k_max.min(pool.len());
    let (curve, k_star) = cut_from_probs(&probs[..k_eff], &probs[k_eff..], cfg.utility)?;
    Ok(PersonalizedCut {
        user,
        k_star,
        curve,
        items: pool[..k_star].to_vec(),
        truncated: k_eff < cfg.k_max,
    })
}

/// [`perk_recommend`] for many users in parallel; output follows `users`.
pub fn perk_recommend_all(
    params: &MfParams,
    calibrator: &Calibrator,
    dataset: &Dataset,
    users: &[usize],
    cfg: &PerkConfig,
) -> Result<Vec<PersonalizedCut>> {
    users
        .par_iter()
        .map(|&u| perk_recommend(params, calibrator, dataset, u, cfg))
        .collect()
}
