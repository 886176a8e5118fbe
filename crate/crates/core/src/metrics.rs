//! Realized top-K metrics with binary relevance.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Split};
use crate::error::{Error, Result};
use crate::math::discount;
use crate::perk::PersonalizedCut;

/// The realized metrics share names with the expected utilities.
pub use crate::perk::UtilityKind as Metric;

fn hits(recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> usize {
    recommended.iter().take(k).filter(|i| relevant.contains(i)).count()
}

fn check_k(k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("cutoff k must be at least 1"));
    }
    Ok(())
}

fn check_relevant(relevant: &HashSet<usize>) -> Result<()> {
    if relevant.is_empty() {
        return Err(Error::invalid("relevant set is empty"));
    }
    Ok(())
}

/// Hits in the top `k` divided by `k`, even when fewer than `k` items were
/// recommended.
pub fn precision_at(recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_k(k)?;
    Ok(hits(recommended, relevant, k) as f64 / k as f64)
}

pub fn recall_at(recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_k(k)?;
    check_relevant(relevant)?;
    Ok(hits(recommended, relevant, k) as f64 / relevant.len() as f64)
}

/// `2 * hits / (k + |relevant|)`.
pub fn f1_at(recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_k(k)?;
    check_relevant(relevant)?;
    let h = hits(recommended, relevant, k);
    Ok(2.0 * h as f64 / (k + relevant.len()) as f64)
}

pub fn ndcg_at(recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    check_k(k)?;
    check_relevant(relevant)?;
    let dcg: f64 = recommended
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.contains(i))
        .map(|(pos, _)| discount(pos + 1))
        .sum();
    let idcg: f64 = (1..=relevant.len().min(k)).map(discount).sum();
    Ok(dcg / idcg)
}

pub fn metric_at(metric: Metric, recommended: &[usize], relevant: &HashSet<usize>, k: usize) -> Result<f64> {
    match metric {
        Metric::Precision => precision_at(recommended, relevant, k),
        Metric::Recall => recall_at(recommended, relevant, k),
        Metric::F1 => f1_at(recommended, relevant, k),
        Metric::Ndcg => ndcg_at(recommended, relevant, k),
    }
}

/// One user's ranked list, with the personalized cutoff when it came from
/// PerK.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserRecommendation {
    pub user: usize,
    pub items: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_star: Option<usize>,
}

impl From<&PersonalizedCut> for UserRecommendation {
    fn from(cut: &PersonalizedCut) -> Self {
        Self {
            user: cut.user,
            items: cut.items.clone(),
            k_star: Some(cut.k_star),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cutoff {
    Fixed(usize),
    Personalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub cutoff: Cutoff,
    pub mean: f64,
    /// `(user, value)` in the order the recommendations were given.
    pub per_user: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub split: Split,
    pub values: Vec<MetricValue>,
    pub users_evaluated: usize,
    pub users_skipped: usize,
}

impl EvalResult {
    pub fn get(&self, metric: Metric, cutoff: Cutoff) -> Option<&MetricValue> {
        self.values
            .iter()
            .find(|v| v.metric == metric && v.cutoff == cutoff)
    }
}

/// Macro-averaged metrics over users whose `split` items are nonempty.
///
/// Every metric is computed at each fixed `k` in `ks`; lists that carry a
/// `k_star` are additionally scored at their own cutoff.
pub fn evaluate(
    recommendations: &[UserRecommendation],
    dataset: &Dataset,
    split: Split,
    metrics: &[Metric],
    ks: &[usize],
) -> Result<EvalResult> {
    let mut seen = HashSet::new();
    for rec in recommendations {
        if rec.user >= dataset.num_users() {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: rec.user,
                limit: dataset.num_users(),
            });
        }
        if let Some(&bad) = rec.items.iter().find(|&&i| i >= dataset.num_items()) {
            return Err(Error::IndexOutOfRange {
                what: "item",
                index: bad,
                limit: dataset.num_items(),
            });
        }
        if !seen.insert(rec.user) {
            return Err(Error::invalid(format!("user {} listed twice", rec.user)));
        }
        if rec.k_star == Some(0) {
            return Err(Error::invalid(format!("user {} has k_star = 0", rec.user)));
        }
    }
    for &k in ks {
        check_k(k)?;
    }

    let evaluable: Vec<(&UserRecommendation, HashSet<usize>)> = recommendations
        .iter()
        .filter_map(|rec| {
            let relevant: HashSet<usize> = dataset.user_items(split, rec.user).iter().copied().collect();
            (!relevant.is_empty()).then_some((rec, relevant))
        })
        .collect();
    let users_skipped = recommendations.len() - evaluable.len();
    if evaluable.is_empty() {
        return Err(Error::NoEvaluableUsers);
    }
    let personalized = evaluable.iter().any(|(rec, _)| rec.k_star.is_some());

    let mut values = Vec::new();
    for &metric in metrics {
        let mut cutoffs: Vec<Cutoff> = ks.iter().map(|&k| Cutoff::Fixed(k)).collect();
        if personalized {
            cutoffs.push(Cutoff::Personalized);
        }
        for cutoff in cutoffs {
            let mut per_user = Vec::with_capacity(evaluable.len());
            for (rec, relevant) in &evaluable {
                let k = match cutoff {
                    Cutoff::Fixed(k) => k,
                    Cutoff::Personalized => match rec.k_star {
                        Some(k) => k,
                        None => continue,
                    },
                };
                per_user.push((rec.user, metric_at(metric, &rec.items, relevant, k)?));
            }
            let mean = per_user.iter().map(|(_, v)| v).sum::<f64>() / per_user.len() as f64;
            values.push(MetricValue {
                metric,
                cutoff,
                mean,
                per_user,
            });
        }
    }
    Ok(EvalResult {
        split,
        values,
        users_evaluated: evaluable.len(),
        users_skipped,
    })
}
