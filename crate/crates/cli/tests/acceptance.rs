//! Acceptance suite: runs every criterion, prints one PASS/FAIL line each and
//! exits nonzero if any failed.
//!
//! Each check compares the library against an oracle written here from
//! first principles (enumeration, Monte Carlo, finite differences, closed
//! forms), never against the library itself.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use calrec::calibration::{
    ece, fit, nll, BinScheme, CalibrationSample, Calibrator, CalibratorKind, FitOptions,
};
use calrec::dataset::{split_per_user, Split, SplitRatios};
use calrec::distill::{
    bd_loss, bd_loss_score_gradient, cotrain_epoch, rank_discrepancy_weights, BdConfig, CotrainRngs, RankRow,
};
use calrec::math::sigmoid;
use calrec::perk::{cut_from_probs, expected_utility, pb_pmf, UtilityKind};
use calrec::ranker::{
    auc, bpr_triple_gradient, bpr_triple_loss, epoch_rng, init_params, pointwise_epoch, pointwise_example_gradient,
    pointwise_example_loss, train_epoch, Coord, Gradient, LossKind, MfParams, TrainConfig,
};
use calrec::rng;
use calrec::synthetic::{low_rank_raw, LowRankConfig};
use proptest::prelude::{Just, Strategy};
use proptest::test_runner::{Config as PropConfig, TestCaseError, TestRunner};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let t = start.elapsed();
    ensure(t < limit, format!("took {t:.2?}, limit {limit:?}"))
}

fn normal<R: Rng>(r: &mut R) -> f64 {
    // Box-Muller keeps the oracles free of library samplers
    let u1: f64 = 1.0 - r.random::<f64>();
    let u2: f64 = r.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gain(position: usize) -> f64 {
    1.0 / ((position + 1) as f64).log2()
}

// 1. gradients ---------------------------------------------------------------

const FD_H: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

fn random_params(seed: u64) -> MfParams {
    let (nu, ni, d) = (5, 8, 4);
    let mut r = rng::seeded(seed);
    let mut draw = |n: usize| (0..n).map(|_| 0.7 * normal(&mut r)).collect::<Vec<f64>>();
    let (u, i, b) = (draw(nu * d), draw(ni * d), draw(ni));
    MfParams::from_parts(nu, ni, d, u, i, b).unwrap()
}

/// Checks `samples` random coordinates of `grad` against central differences.
fn fd_check(
    params: &MfParams,
    grad: &Gradient,
    loss: &dyn Fn(&MfParams) -> f64,
    r: &mut impl Rng,
    samples: usize,
) -> Result<usize, String> {
    let mut summed: Vec<(Coord, f64)> = Vec::new();
    for &(c, g) in grad {
        match summed.iter_mut().find(|(k, _)| *k == c) {
            Some(e) => e.1 += g,
            None => summed.push((c, g)),
        }
    }
    for _ in 0..samples {
        let (c, analytic) = summed[r.random_range(0..summed.len())];
        let mut up = params.clone();
        *up.get_mut(c) += FD_H;
        let mut down = params.clone();
        *down.get_mut(c) -= FD_H;
        let numeric = (loss(&up) - loss(&down)) / (2.0 * FD_H);
        ensure(
            rel_err(analytic, numeric) < FD_TOL,
            format!("{c:?}: analytic {analytic} numeric {numeric}"),
        )?;
    }
    Ok(samples)
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(1);
    let (mut bpr, mut pw, mut bd) = (0, 0, 0);
    for seed in 0..4 {
        let p = random_params(seed);
        let (u, i, j) = (r.random_range(0..5), r.random_range(0..4), r.random_range(4..8));
        let mut g = Gradient::new();
        bpr_triple_gradient(&p, u, i, j, 0.01, &mut g);
        bpr += fd_check(&p, &g, &|q| bpr_triple_loss(q, u, i, j, 0.01), &mut r, 5)?;
        for label in [true, false] {
            let mut g = Gradient::new();
            pointwise_example_gradient(&p, u, i, label, 0.01, &mut g);
            pw += fd_check(&p, &g, &|q| pointwise_example_loss(q, u, i, label, 0.01), &mut r, 5)?;
        }
    }
    for _ in 0..4 {
        let scores: Vec<f64> = (0..6).map(|_| r.random_range(-4.0..4.0)).collect();
        let targets: Vec<f64> = (0..6).map(|_| r.random::<f64>()).collect();
        let analytic = bd_loss_score_gradient(&scores, &targets);
        let loss = |s: &[f64]| bd_loss(&s.iter().map(|&x| sigmoid(x)).collect::<Vec<_>>(), &targets);
        for k in 0..scores.len() {
            let (mut up, mut down) = (scores.clone(), scores.clone());
            up[k] += FD_H;
            down[k] -= FD_H;
            let numeric = (loss(&up) - loss(&down)) / (2.0 * FD_H);
            ensure(
                rel_err(analytic[k], numeric) < FD_TOL,
                format!("bd coord {k}: {} vs {numeric}", analytic[k]),
            )?;
            bd += 1;
        }
    }
    ensure(bpr >= 10 && pw >= 10 && bd >= 10, "too few coordinates checked")?;
    within_time(start, Duration::from_secs(5))?;
    Ok(format!("coordinates checked: bpr {bpr}, pointwise {pw}, bd {bd}"))
}

// 2. Poisson-binomial --------------------------------------------------------

fn enumerate_pmf(probs: &[f64]) -> Vec<f64> {
    let n = probs.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u32..(1 << n) {
        let mut p = 1.0;
        for (j, &q) in probs.iter().enumerate() {
            p *= if mask >> j & 1 == 1 { q } else { 1.0 - q };
        }
        pmf[mask.count_ones() as usize] += p;
    }
    pmf
}

fn poisson_binomial_exactness() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(2);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = r.random_range(0..=12);
        let probs: Vec<f64> = (0..n)
            .map(|_| match r.random_range(0..6) {
                0 => 0.0,
                1 => 1.0,
                _ => r.random::<f64>(),
            })
            .collect();
        let got = pb_pmf(&probs).map_err(|e| e.to_string())?;
        let want = enumerate_pmf(&probs);
        ensure(got.probabilities().len() == want.len(), "pmf length")?;
        for (a, b) in got.probabilities().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst <= 1e-12, format!("max abs error {worst:e}"))?;
    within_time(start, Duration::from_secs(10))?;
    Ok(format!("200 instances, max abs error {worst:.1e}"))
}

// 3. expected utilities vs Monte Carlo ----------------------------------------

struct Realized {
    precision: f64,
    recall: f64,
    f1: f64,
    ndcg: f64,
}

fn realize(top_rel: &[bool], rest_relevant: usize) -> Realized {
    let k = top_rel.len();
    let a = top_rel.iter().filter(|&&x| x).count();
    let total = a + rest_relevant;
    let dcg: f64 = top_rel
        .iter()
        .enumerate()
        .filter(|(_, &x)| x)
        .map(|(pos, _)| gain(pos + 1))
        .sum();
    let idcg: f64 = (1..=total.min(k)).map(gain).sum();
    Realized {
        precision: a as f64 / k as f64,
        recall: if total == 0 { 0.0 } else { a as f64 / total as f64 },
        f1: if a == 0 { 0.0 } else { 2.0 * a as f64 / (k + total) as f64 },
        ndcg: if total == 0 { 0.0 } else { dcg / idcg },
    }
}

fn utility_monte_carlo() -> Outcome {
    const DRAWS: usize = 200_000;
    let start = Instant::now();
    let mut r = rng::seeded(3);
    let (mut worst_z, mut compared) = (0.0f64, 0usize);
    for inst in 0..50 {
        let k = r.random_range(1..=10);
        let rest_len = r.random_range(0..=20);
        let top: Vec<f64> = (0..k).map(|_| r.random::<f64>()).collect();
        let rest: Vec<f64> = (0..rest_len).map(|_| r.random::<f64>()).collect();
        // running sums and sums of squares per utility
        let mut acc = [[0.0f64; 2]; 4];
        let mut top_rel = vec![false; k];
        for _ in 0..DRAWS {
            for (slot, &p) in top_rel.iter_mut().zip(&top) {
                *slot = r.random::<f64>() < p;
            }
            let rest_relevant = rest.iter().filter(|&&p| r.random::<f64>() < p).count();
            let x = realize(&top_rel, rest_relevant);
            for (a, v) in acc.iter_mut().zip([x.precision, x.recall, x.f1, x.ndcg]) {
                a[0] += v;
                a[1] += v * v;
            }
        }
        let kinds = [UtilityKind::Precision, UtilityKind::Recall, UtilityKind::F1, UtilityKind::Ndcg];
        for (kind, a) in kinds.iter().zip(acc) {
            let mean = a[0] / DRAWS as f64;
            let var = (a[1] / DRAWS as f64 - mean * mean).max(0.0);
            let se = (var / DRAWS as f64).sqrt();
            let exact = expected_utility(*kind, &top, &rest).map_err(|e| e.to_string())?;
            let diff = (exact - mean).abs();
            if se == 0.0 {
                ensure(diff < 1e-12, format!("instance {inst} {}: degenerate mismatch", kind.name()))?;
            } else {
                let z = diff / se;
                worst_z = worst_z.max(z);
                ensure(
                    z <= 3.0,
                    format!("instance {inst} {}: exact {exact} mc {mean} ({z:.2} SE)", kind.name()),
                )?;
            }
            compared += 1;
        }
    }
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("{compared} comparisons, worst deviation {worst_z:.2} SE"))
}

// 4. calibrator recovery -------------------------------------------------------

fn mean_nll(p: impl Fn(f64) -> f64, samples: &[CalibrationSample]) -> f64 {
    samples
        .iter()
        .map(|x| {
            let q = p(x.s);
            if x.y { -q.ln() } else { -(1.0 - q).ln() }
        })
        .sum::<f64>()
        / samples.len() as f64
}

fn calibrator_recovery() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(4);
    let platt_set: Vec<CalibrationSample> = (0..100_000)
        .map(|_| {
            let s = 1.5 * normal(&mut r);
            let y = r.random::<f64>() < sigmoid(2.0 * s - 1.0);
            CalibrationSample::new(s, y, 1.0)
        })
        .collect();
    let platt = fit(CalibratorKind::Platt, &platt_set, false, &FitOptions::default()).map_err(|e| e.to_string())?;
    let (a, b) = (platt.calibrator.a, platt.calibrator.b);
    ensure((a - 2.0).abs() <= 0.1 && (b + 1.0).abs() <= 0.1, format!("platt (a, b) = ({a}, {b})"))?;

    let gauss_set: Vec<CalibrationSample> = (0..100_000)
        .map(|_| {
            let y = r.random::<bool>();
            let s = if y { 1.0 } else { -1.0 } + normal(&mut r);
            CalibrationSample::new(s, y, 1.0)
        })
        .collect();
    let gauss = fit(CalibratorKind::Gaussian, &gauss_set, false, &FitOptions::default()).map_err(|e| e.to_string())?;
    let cal = gauss.calibrator.clone();
    let fitted = mean_nll(|s| cal.apply(s).unwrap(), &gauss_set);
    // equal priors, unit variances, means +-1: posterior sigma(2s)
    let bayes = mean_nll(|s| sigmoid(2.0 * s), &gauss_set);
    let gap = (fitted - bayes).abs() / bayes;
    ensure(gap <= 0.01, format!("gaussian NLL {fitted} vs Bayes {bayes}"))?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "platt ({a:.3}, {b:.3}); gaussian NLL {fitted:.5} vs Bayes {bayes:.5} ({:.3}%)",
        100.0 * gap
    ))
}

// 5. unbiased estimator ----------------------------------------------------------

fn unbiasedness() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(5);

    // theta = 1 reduces the unbiased fit to the biased one, bit for bit
    let samples: Vec<CalibrationSample> = (0..5000)
        .map(|_| {
            let s = 0.5 + normal(&mut r);
            CalibrationSample::new(s, r.random::<f64>() < sigmoid(1.5 * s - 1.0), 1.0)
        })
        .collect();
    for kind in [CalibratorKind::Platt, CalibratorKind::Gaussian, CalibratorKind::Gamma, CalibratorKind::Histogram] {
        let set: Vec<CalibrationSample> = if kind == CalibratorKind::Gamma {
            samples.iter().map(|x| CalibrationSample::new(x.s.abs() + 0.01, x.y, 1.0)).collect()
        } else {
            samples.clone()
        };
        let opt = FitOptions::default();
        let biased = fit(kind, &set, false, &opt).map_err(|e| e.to_string())?;
        let unbiased = fit(kind, &set, true, &opt).map_err(|e| e.to_string())?;
        ensure(
            biased.calibrator == unbiased.calibrator && biased.loss_trace == unbiased.loss_trace,
            format!("{kind:?}: theta = 1 changed the fit"),
        )?;
    }

    // with exposure theta, E[unbiased NLL at p*] = fully observed NLL at p*
    let truth = Calibrator::platt(2.0, -1.0);
    let (seeds, n) = (200, 2000);
    let mut diffs = Vec::with_capacity(seeds);
    for seed in 0..seeds as u64 {
        let mut r = rng::stream(55, seed);
        let mut observed = Vec::with_capacity(n);
        let mut full = 0.0;
        for _ in 0..n {
            let s = normal(&mut r);
            let theta = r.random_range(0.1..1.0);
            let p = sigmoid(2.0 * s - 1.0);
            let relevant = r.random::<f64>() < p;
            let exposed = r.random::<f64>() < theta;
            full += if relevant { -p.ln() } else { -(1.0 - p).ln() };
            observed.push(CalibrationSample::new(s, relevant && exposed, theta));
        }
        let unbiased = nll(&truth, &observed, true).map_err(|e| e.to_string())?;
        diffs.push(unbiased - full / n as f64);
    }
    let mean = diffs.iter().sum::<f64>() / seeds as f64;
    let sd = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (seeds - 1) as f64).sqrt();
    let se = sd / (seeds as f64).sqrt();
    ensure(mean.abs() <= 3.0 * se, format!("mean gap {mean} with SE {se}"))?;
    within_time(start, Duration::from_secs(30))?;
    Ok(format!(
        "theta=1 fits identical for 4 kinds; unbiased - full NLL = {mean:.2e} ({:.2} SE)",
        mean.abs() / se
    ))
}

// 6. ECE -------------------------------------------------------------------------

fn ece_sanity() -> Outcome {
    let mut r = rng::seeded(6);
    let oracle: Vec<(f64, bool)> = (0..10_000)
        .map(|_| {
            let p = r.random::<f64>();
            (p, r.random::<f64>() < p)
        })
        .collect();
    let e = ece(&oracle, 15, BinScheme::EqualWidth).map_err(|e| e.to_string())?;
    ensure(e <= 0.02, format!("oracle-calibrated ECE {e}"))?;
    let constant: Vec<(f64, bool)> = (0..1000).map(|n| (0.7, n % 2 == 0)).collect();
    let c = ece(&constant, 15, BinScheme::EqualWidth).map_err(|e| e.to_string())?;
    ensure((c - 0.2).abs() <= 1e-12, format!("constant case ECE {c}"))?;
    Ok(format!("oracle ECE {e:.4}; constant case {c}"))
}

// 7. PerK dominance --------------------------------------------------------------

fn realized_f1(rel: &[bool], k: usize) -> f64 {
    let hits = rel[..k].iter().filter(|&&x| x).count();
    let total = rel.iter().filter(|&&x| x).count();
    if hits == 0 {
        0.0
    } else {
        2.0 * hits as f64 / (k + total) as f64
    }
}

fn perk_dominance() -> Outcome {
    const USERS: usize = 300;
    const CANDIDATES: usize = 60;
    const K_MAX: usize = 20;
    const DRAWS: usize = 20;
    let start = Instant::now();
    let mut r = rng::seeded(7);
    let fixed = [1usize, 5, 10, 20];
    let mut perk_sum = 0.0;
    let mut fixed_sum = [0.0; 4];
    let mut k_stars = Vec::with_capacity(USERS);
    for _ in 0..USERS {
        // per-user sharpness spreads the optimal cutoffs
        let gamma = r.random_range(0.5..12.0);
        let mut probs: Vec<f64> = (0..CANDIDATES).map(|_| r.random::<f64>().powf(gamma)).collect();
        probs.sort_by(|a, b| b.total_cmp(a));
        let (_, k_star) = cut_from_probs(&probs[..K_MAX], &probs[K_MAX..], UtilityKind::F1).map_err(|e| e.to_string())?;
        k_stars.push(k_star);
        for _ in 0..DRAWS {
            let rel: Vec<bool> = probs.iter().map(|&p| r.random::<f64>() < p).collect();
            perk_sum += realized_f1(&rel, k_star);
            for (s, &k) in fixed_sum.iter_mut().zip(&fixed) {
                *s += realized_f1(&rel, k);
            }
        }
    }
    let n = (USERS * DRAWS) as f64;
    let perk = perk_sum / n;
    let mut detail = format!("PerK F1 {perk:.4}");
    for (s, k) in fixed_sum.iter().zip(fixed) {
        let f = s / n;
        ensure(perk >= f - 0.01, format!("PerK {perk} < F1@{k} {f} - 0.01"))?;
        detail.push_str(&format!(", F1@{k} {f:.4}"));
    }
    let distinct = {
        let mut ks = k_stars.clone();
        ks.sort_unstable();
        ks.dedup();
        ks.len()
    };
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("{detail}; {distinct} distinct k*"))
}

// 8. backbone --------------------------------------------------------------------

fn backbone_sanity() -> Outcome {
    let start = Instant::now();
    let raw = low_rank_raw(&LowRankConfig {
        num_users: 200,
        num_items: 300,
        rank: 2,
        ..LowRankConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let ds = split_per_user(&raw, SplitRatios::default(), 0).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        loss_kind: LossKind::Bpr,
        epochs: 30,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut p = init_params(ds.num_users(), ds.num_items(), 16, 2).map_err(|e| e.to_string())?;
    for e in 0..cfg.epochs {
        train_epoch(&mut p, &ds, &cfg, &mut epoch_rng(cfg.seed, e)).map_err(|e| e.to_string())?;
    }
    let a = auc(&p, &ds, Split::Validation, &mut rng::seeded(3), 100).map_err(|e| e.to_string())?;
    ensure(a >= 0.85, format!("validation AUC {a}"))?;
    within_time(start, Duration::from_secs(60))?;
    Ok(format!("validation AUC {a:.4} after 30 epochs"))
}

// 9. distillation composition ------------------------------------------------------

fn distillation_composition() -> Outcome {
    let raw = low_rank_raw(&LowRankConfig {
        num_users: 80,
        num_items: 120,
        density: 0.12,
        seed: 9,
        ..LowRankConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let ds = split_per_user(&raw, SplitRatios::default(), 9).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        loss_kind: LossKind::Pointwise,
        seed: 11,
        ..TrainConfig::default()
    };
    let bd = BdConfig {
        lambda_ts: 0.0,
        lambda_st: 0.0,
        ..BdConfig::default()
    };
    let mut teacher = init_params(ds.num_users(), ds.num_items(), 16, 1).map_err(|e| e.to_string())?;
    let mut student = init_params(ds.num_users(), ds.num_items(), 4, 2).map_err(|e| e.to_string())?;
    let (mut t_alone, mut s_alone) = (teacher.clone(), student.clone());
    for epoch in 0..4 {
        let mut rngs = CotrainRngs::for_epoch(cfg.seed, 99, epoch);
        cotrain_epoch(&mut teacher, &mut student, &ds, &cfg, &bd, &mut rngs).map_err(|e| e.to_string())?;
        pointwise_epoch(&mut t_alone, &ds, &cfg, &mut epoch_rng(cfg.seed, epoch)).map_err(|e| e.to_string())?;
        pointwise_epoch(&mut s_alone, &ds, &cfg, &mut epoch_rng(cfg.seed, epoch)).map_err(|e| e.to_string())?;
    }
    ensure(teacher == t_alone && student == s_alone, "zero-weight co-training diverged from independent training")?;

    let row = |ranks: &[usize]| RankRow {
        items: (0..ranks.len()).collect(),
        ranks: ranks.to_vec(),
    };
    let strategy = (1usize..60)
        .prop_flat_map(|n| {
            let perm = Just((1..=n).collect::<Vec<_>>()).prop_shuffle();
            (perm.clone(), perm, 0.001f64..2.0, 1usize..80)
        });
    let mut runner = TestRunner::new(PropConfig {
        cases: 512,
        failure_persistence: None,
        ..PropConfig::default()
    });
    runner
        .run(&strategy, |(this, other, eta, trunc)| {
            let w = rank_discrepancy_weights(&row(&this), &row(&other), eta, trunc)
                .map_err(|e| TestCaseError::fail(e.to_string()))?;
            let gap = |n: usize| this[n].min(trunc) as f64 - other[n].min(trunc) as f64;
            for n in 0..this.len() {
                if (w.weights[n] > 0.0) != (gap(n) > 0.0) {
                    return Err(TestCaseError::fail(format!("item {n}: weight {} gap {}", w.weights[n], gap(n))));
                }
                for m in 0..this.len() {
                    if gap(n) <= gap(m) && w.weights[n] > w.weights[m] {
                        return Err(TestCaseError::fail(format!("weights not monotone in gap at {n}, {m}")));
                    }
                }
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok("zero-weight co-training bit-identical over 4 epochs; 512 random rank tables".into())
}

// 10. end-to-end smoke -------------------------------------------------------------

fn calrec(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_calrec"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        out.status.success(),
        format!("calrec {}: {}\n{}", args.join(" "), out.status, String::from_utf8_lossy(&out.stderr)),
    )
}

fn read_json(path: &Path) -> Result<serde_json::Value, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

fn end_to_end_smoke() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name).to_string_lossy().into_owned();
    // ML-100K shape: 943 users, 1682 items, ~100k interactions
    calrec(&["synth", "--out", &p("raw.csv"), "--users", "943", "--items", "1682", "--density", "0.063"])?;
    calrec(&["ingest", "--input", &p("raw.csv"), "--out", &p("data")])?;
    calrec(&["train", "--data", &p("data"), "--out", &p("model/model.json")])?;
    calrec(&["calibrate", "--data", &p("data"), "--model", &p("model/model.json"), "--out", &p("cal")])?;
    calrec(&[
        "recommend", "--data", &p("data"), "--model", &p("model/model.json"), "--out", &p("recs/fixed.jsonl"),
    ])?;
    calrec(&[
        "recommend", "--data", &p("data"), "--model", &p("model/model.json"), "--out", &p("recs/perk.jsonl"),
        "--perk", "--calibrator", &p("cal/calibrator.json"),
    ])?;
    calrec(&[
        "eval", "--data", &p("data"), "--fixed", &p("recs/fixed.jsonl"), "--perk", &p("recs/perk.jsonl"), "--out",
        &p("eval/eval.json"),
    ])?;
    let elapsed = start.elapsed();

    let report = read_json(&dir.path().join("cal/calibration_report.json"))?;
    let raw_ece = report["ece_uncalibrated"].as_f64().ok_or("missing ece_uncalibrated")?;
    let cal_ece = report["ece_calibrated"].as_f64().ok_or("missing ece_calibrated")?;
    ensure(cal_ece < raw_ece, format!("calibrated ECE {cal_ece} >= uncalibrated {raw_ece}"))?;

    let eval = read_json(&dir.path().join("eval/eval.json"))?;
    let rows = eval["comparison"].as_array().ok_or("missing comparison table")?;
    let labels: Vec<&str> = rows.iter().filter_map(|r| r["cutoff"].as_str()).collect();
    ensure(labels == ["k=1", "k=5", "k=10", "k=20", "perk"], format!("comparison rows {labels:?}"))?;
    for row in rows {
        for m in ["precision", "recall", "f1", "ndcg"] {
            ensure(row["metrics"][m].is_f64(), format!("row {} lacks {m}", row["cutoff"]))?;
        }
    }
    ensure(dir.path().join("eval/eval.csv").exists(), "comparison CSV missing")?;
    ensure(elapsed < Duration::from_secs(600), format!("pipeline took {elapsed:.1?}"))?;
    Ok(format!(
        "pipeline {elapsed:.1?}; ECE {raw_ece:.4} -> {cal_ece:.4}; comparison rows {}",
        labels.join(" ")
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("gradient correctness", gradient_correctness),
        ("Poisson-binomial exactness", poisson_binomial_exactness),
        ("expected utility vs Monte Carlo", utility_monte_carlo),
        ("calibrator recovery", calibrator_recovery),
        ("unbiasedness reduction and simulation", unbiasedness),
        ("ECE sanity", ece_sanity),
        ("PerK dominance under oracle probabilities", perk_dominance),
        ("backbone sanity", backbone_sanity),
        ("distillation composition", distillation_composition),
        ("end-to-end smoke", end_to_end_smoke),
    ];
    let mut failed = 0;
    for (n, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let t = start.elapsed();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({t:.2?}): {detail}", n + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({t:.2?}): {why}", n + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
