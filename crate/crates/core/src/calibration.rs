//! Score-to-probability calibration.
//!
//! Parametric calibrators are logistic maps of a small feature vector of the
//! raw score `s`:
//!
//! | kind     | logit                   |
//! |----------|-------------------------|
//! | platt    | `a*s + b`               |
//! | gaussian | `a*s^2 + b*s + c`       |
//! | gamma    | `a*ln(s) + b*s + c`     |
//!
//! They are fitted by minimizing a weighted negative log-likelihood with
//! projected gradient descent and backtracking. In unbiased mode each sample
//! is weighted by its observation propensity `theta`: positives contribute
//! `y/theta` to the positive term and `1 - y/theta` to the negative term, so
//! weights can turn negative and the objective is not convex in general.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_unobserved, Dataset, Split};
use crate::error::{Error, Result};
use crate::math::{sigmoid, softplus};
use crate::ranker::MfParams;

/// Offset added after shifting scores to the positive half-line for gamma.
pub const GAMMA_SHIFT_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CalibratorKind {
    Platt,
    Gaussian,
    Gamma,
    Histogram,
}

impl std::str::FromStr for CalibratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "platt" => Ok(CalibratorKind::Platt),
            "gaussian" => Ok(CalibratorKind::Gaussian),
            "gamma" => Ok(CalibratorKind::Gamma),
            "histogram" => Ok(CalibratorKind::Histogram),
            other => Err(Error::invalid(format!("unknown calibrator kind `{other}`"))),
        }
    }
}

/// A fitted map from raw score to probability.
///
/// `score_shift` is added to every raw score before the map is evaluated; it
/// is nonzero only for gamma calibrators fitted on shifted scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibrator {
    pub kind: CalibratorKind,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    #[serde(default)]
    pub score_shift: f64,
    /// `(upper_edge, value)` pairs, histogram kind only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<Vec<(f64, f64)>>,
}

impl Calibrator {
    pub fn platt(a: f64, b: f64) -> Self {
        Self::parametric(CalibratorKind::Platt, a, b, 0.0)
    }

    pub fn gaussian(a: f64, b: f64, c: f64) -> Self {
        Self::parametric(CalibratorKind::Gaussian, a, b, c)
    }

    pub fn gamma(a: f64, b: f64, c: f64) -> Self {
        Self::parametric(CalibratorKind::Gamma, a, b, c)
    }

    fn parametric(kind: CalibratorKind, a: f64, b: f64, c: f64) -> Self {
        Self {
            kind,
            a,
            b,
            c,
            score_shift: 0.0,
            bins: None,
        }
    }

    pub fn histogram(bins: Vec<(f64, f64)>) -> Result<Self> {
        let cal = Self {
            kind: CalibratorKind::Histogram,
            a: 0.0,
            b: 0.0,
            c: 0.0,
            score_shift: 0.0,
            bins: Some(bins),
        };
        cal.validate()?;
        Ok(cal)
    }

    pub fn with_score_shift(mut self, shift: f64) -> Self {
        self.score_shift = shift;
        self
    }

    /// Checks the kind's invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if ![self.a, self.b, self.c, self.score_shift].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("calibrator parameters must be finite"));
        }
        match self.kind {
            CalibratorKind::Histogram => {
                let bins = self
                    .bins
                    .as_deref()
                    .ok_or_else(|| Error::invalid("histogram calibrator without bins"))?;
                if bins.is_empty() {
                    return Err(Error::invalid("histogram calibrator without bins"));
                }
                if bins.iter().any(|&(e, v)| !e.is_finite() || !(0.0..=1.0).contains(&v)) {
                    return Err(Error::invalid("histogram bin values must lie in [0, 1]"));
                }
                if bins.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(Error::invalid("histogram edges must be strictly increasing"));
                }
            }
            CalibratorKind::Platt if self.a < 0.0 => {
                return Err(Error::invalid("platt slope must be nonnegative"));
            }
            _ => {}
        }
        Ok(())
    }

    /// Probability for raw score `s`.
    pub fn apply(&self, s: f64) -> Result<f64> {
        if s.is_nan() {
            return Err(Error::ScoreDomain {
                score: s,
                reason: "NaN score",
            });
        }
        let s = s + self.score_shift;
        match self.kind {
            CalibratorKind::Histogram => {
                let bins = self.bins.as_deref().unwrap_or(&[]);
                let idx = bins.partition_point(|&(upper, _)| upper < s).min(bins.len().saturating_sub(1));
                bins.get(idx)
                    .map(|&(_, v)| v)
                    .ok_or_else(|| Error::invalid("histogram calibrator without bins"))
            }
            kind => {
                let x = features(kind, s)?;
                Ok(sigmoid(self.a * x[0] + self.b * x[1] + self.c * x[2]))
            }
        }
    }

    /// Like [`apply`](Self::apply), but a gamma calibrator fitted with a
    /// recorded shift clamps scores that fall below its fitting range to the
    /// bottom of that range. A gamma calibrator without a shift still rejects
    /// nonpositive scores.
    pub fn apply_clamped(&self, s: f64) -> Result<f64> {
        if self.kind == CalibratorKind::Gamma && self.score_shift != 0.0 && !s.is_nan() {
            let floor = GAMMA_SHIFT_EPS - self.score_shift;
            return self.apply(s.max(floor));
        }
        self.apply(s)
    }
}

/// Logit features of a (shifted) score.
fn features(kind: CalibratorKind, s: f64) -> Result<[f64; 3]> {
    match kind {
        CalibratorKind::Platt => Ok([s, 1.0, 0.0]),
        CalibratorKind::Gaussian => Ok([s * s, s, 1.0]),
        CalibratorKind::Gamma => {
            if s <= 0.0 {
                return Err(Error::ScoreDomain {
                    score: s,
                    reason: "gamma calibration needs positive scores",
                });
            }
            Ok([s.ln(), s, 1.0])
        }
        CalibratorKind::Histogram => unreachable!("histogram has no logit features"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub s: f64,
    pub y: bool,
    pub theta: f64,
}

impl CalibrationSample {
    pub fn new(s: f64, y: bool, theta: f64) -> Self {
        Self { s, y, theta }
    }

    /// `(w_pos, w_neg)` multiplying `-ln p` and `-ln(1-p)`.
    pub fn weights(&self, unbiased: bool) -> (f64, f64) {
        let y = if self.y { 1.0 } else { 0.0 };
        if unbiased {
            let w = y / self.theta;
            (w, 1.0 - w)
        } else {
            (y, 1.0 - y)
        }
    }
}

fn check_samples(samples: &[CalibrationSample]) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    for x in samples {
        if !x.s.is_finite() {
            return Err(Error::ScoreDomain {
                score: x.s,
                reason: "non-finite score",
            });
        }
        if !(x.theta > 0.0 && x.theta <= 1.0) {
            return Err(Error::invalid(format!("propensity {} outside (0, 1]", x.theta)));
        }
    }
    let positives = samples.iter().filter(|x| x.y).count();
    if positives == 0 || positives == samples.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Mean weighted negative log-likelihood of `cal` on `samples`.
pub fn nll(cal: &Calibrator, samples: &[CalibrationSample], unbiased: bool) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut total = 0.0;
    for x in samples {
        let (wp, wn) = x.weights(unbiased);
        total += match cal.kind {
            CalibratorKind::Histogram => {
                let p = cal.apply(x.s)?.clamp(1e-12, 1.0 - 1e-12);
                -wp * p.ln() - wn * (1.0 - p).ln()
            }
            kind => {
                let f = features(kind, x.s + cal.score_shift)?;
                let z = cal.a * f[0] + cal.b * f[1] + cal.c * f[2];
                wp * softplus(-z) + wn * softplus(z)
            }
        };
    }
    Ok(total / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iters: usize,
    pub tol: f64,
    /// Equal-mass bins for the histogram kind.
    pub histogram_bins: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: 1e-8,
            histogram_bins: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub calibrator: Calibrator,
    /// Objective at the start point and after every accepted step.
    pub loss_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitReport {
    pub fn final_loss(&self) -> f64 {
        *self.loss_trace.last().expect("trace holds the start point")
    }
}

/// Maximum-likelihood fit of a calibrator of `kind`.
///
/// The objective is the mean (not the sum) of the per-sample weighted NLL;
/// scaling does not move the minimizer and keeps `tol` independent of the
/// sample count.
pub fn fit(
    kind: CalibratorKind,
    samples: &[CalibrationSample],
    unbiased: bool,
    opt: &FitOptions,
) -> Result<FitReport> {
    check_samples(samples)?;
    if kind == CalibratorKind::Histogram {
        return fit_histogram(samples, unbiased, opt.histogram_bins);
    }
    let feats: Vec<[f64; 3]> = samples
        .iter()
        .map(|x| features(kind, x.s))
        .collect::<Result<_>>()?;
    let weights: Vec<(f64, f64)> = samples.iter().map(|x| x.weights(unbiased)).collect();
    let active: [bool; 3] = match kind {
        CalibratorKind::Platt => [true, true, false],
        _ => [true, true, true],
    };
    let project = |mut t: [f64; 3]| {
        if kind == CalibratorKind::Platt {
            t[0] = t[0].max(0.0);
        }
        t
    };
    let n = samples.len() as f64;
    let objective = |t: &[f64; 3]| -> f64 {
        feats
            .iter()
            .zip(&weights)
            .map(|(f, &(wp, wn))| {
                let z = t[0] * f[0] + t[1] * f[1] + t[2] * f[2];
                wp * softplus(-z) + wn * softplus(z)
            })
            .sum::<f64>()
            / n
    };
    let gradient = |t: &[f64; 3]| -> [f64; 3] {
        let mut g = [0.0; 3];
        for (f, &(wp, wn)) in feats.iter().zip(&weights) {
            let z = t[0] * f[0] + t[1] * f[1] + t[2] * f[2];
            let dz = -wp * sigmoid(-z) + wn * sigmoid(z);
            for k in 0..3 {
                g[k] += dz * f[k];
            }
        }
        for (k, gk) in g.iter_mut().enumerate() {
            *gk = if active[k] { *gk / n } else { 0.0 };
        }
        g
    };

    let mut theta = match kind {
        CalibratorKind::Gaussian => [0.0, 1.0, 0.0],
        _ => [1.0, 0.0, 0.0],
    };
    let mut loss = objective(&theta);
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    let mut trace = vec![loss];
    let mut step = 1.0;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opt.max_iters {
        let g = gradient(&theta);
        // projected gradient: a bound coordinate pushing outward is stationary
        let mut pg = g;
        if kind == CalibratorKind::Platt && theta[0] <= 0.0 && g[0] > 0.0 {
            pg[0] = 0.0;
        }
        if pg.iter().all(|v| v.abs() < opt.tol) {
            converged = true;
            break;
        }
        iterations += 1;

        let mut accepted = None;
        step *= 2.0;
        for _ in 0..80 {
            let cand = project([
                theta[0] - step * g[0],
                theta[1] - step * g[1],
                theta[2] - step * g[2],
            ]);
            let moved: f64 = (0..3).map(|k| (theta[k] - cand[k]).powi(2)).sum();
            if moved == 0.0 {
                break;
            }
            let cand_loss = objective(&cand);
            if cand_loss.is_finite() && cand_loss <= loss - 1e-4 * moved / step {
                accepted = Some((cand, cand_loss));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, cand_loss)) => {
                if !cand.iter().all(|v| v.is_finite()) {
                    return Err(Error::NonFiniteLoss { iteration: iterations });
                }
                theta = cand;
                loss = cand_loss;
                trace.push(loss);
            }
            // no decrease available along the projected direction
            None => {
                converged = true;
                break;
            }
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: iterations });
    }

    let calibrator = Calibrator::parametric(kind, theta[0], theta[1], theta[2]);
    Ok(FitReport {
        calibrator,
        loss_trace: trace,
        iterations,
        converged,
    })
}

/// [`fit`], except that gamma calibrators are fitted on scores shifted by
/// `GAMMA_SHIFT_EPS - min(s)` and record that shift. Other kinds are fitted
/// unchanged.
pub fn fit_with_shift(
    kind: CalibratorKind,
    samples: &[CalibrationSample],
    unbiased: bool,
    opt: &FitOptions,
) -> Result<FitReport> {
    if kind != CalibratorKind::Gamma {
        return fit(kind, samples, unbiased, opt);
    }
    check_samples(samples)?;
    let min = samples.iter().map(|x| x.s).fold(f64::INFINITY, f64::min);
    let shift = GAMMA_SHIFT_EPS - min;
    let shifted: Vec<CalibrationSample> = samples
        .iter()
        .map(|x| CalibrationSample::new(x.s + shift, x.y, x.theta))
        .collect();
    let mut report = fit(kind, &shifted, unbiased, opt)?;
    report.calibrator.score_shift = shift;
    Ok(report)
}

fn fit_histogram(samples: &[CalibrationSample], unbiased: bool, num_bins: usize) -> Result<FitReport> {
    if num_bins == 0 {
        return Err(Error::invalid("histogram needs at least one bin"));
    }
    let mut sorted: Vec<&CalibrationSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.s.total_cmp(&b.s));
    let n = sorted.len();
    let mut bins = Vec::new();
    let mut start = 0;
    for size in equal_mass_sizes(n, num_bins) {
        if start >= n {
            break;
        }
        let mut end = (start + size).max(start + 1).min(n);
        // keep tied scores in one bin so edges stay strictly increasing
        while end < n && sorted[end].s == sorted[end - 1].s {
            end += 1;
        }
        if end <= start {
            continue;
        }
        let chunk = &sorted[start..end];
        let (wp, wt) = chunk.iter().fold((0.0, 0.0), |(p, t), x| {
            let (a, b) = x.weights(unbiased);
            (p + a, t + a + b)
        });
        let value = if wt > 0.0 { (wp / wt).clamp(0.0, 1.0) } else { 0.0 };
        bins.push((chunk[chunk.len() - 1].s, value));
        start = end;
    }
    let calibrator = Calibrator::histogram(bins)?;
    let loss = nll(&calibrator, samples, unbiased)?;
    Ok(FitReport {
        calibrator,
        loss_trace: vec![loss],
        iterations: 0,
        converged: true,
    })
}

/// Bin sizes for `n` sorted values in `num_bins` near-equal bins, the
/// remainder going one apiece to the leading bins.
fn equal_mass_sizes(n: usize, num_bins: usize) -> impl Iterator<Item = usize> {
    let (base, rem) = (n / num_bins, n % num_bins);
    (0..num_bins).map(move |b| base + usize::from(b < rem))
}

/// Popularity-based observation propensities,
/// `theta_i = clip((pop_i / max pop)^tau, theta_min, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub theta: Vec<f64>,
    pub tau: f64,
    pub theta_min: f64,
}

impl PropensityModel {
    pub fn theta(&self, item: usize) -> f64 {
        self.theta[item]
    }
}

pub fn estimate_propensity(item_popularity: &[u32], tau: f64, theta_min: f64) -> Result<PropensityModel> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid("tau must be finite and nonnegative"));
    }
    if !(theta_min > 0.0 && theta_min <= 1.0) {
        return Err(Error::invalid("theta_min must lie in (0, 1]"));
    }
    let max = item_popularity.iter().copied().max().unwrap_or(0);
    if max == 0 {
        return Err(Error::invalid("every item has zero popularity"));
    }
    let theta = item_popularity
        .iter()
        .map(|&p| (p as f64 / max as f64).powf(tau).clamp(theta_min, 1.0))
        .collect();
    Ok(PropensityModel {
        theta,
        tau,
        theta_min,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinScheme {
    EqualWidth,
    EqualMass,
}

impl std::str::FromStr for BinScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equal_width" => Ok(BinScheme::EqualWidth),
            "equal_mass" => Ok(BinScheme::EqualMass),
            other => Err(Error::invalid(format!("unknown binning scheme `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityRow {
    pub bin_lower: f64,
    pub bin_upper: f64,
    pub count: usize,
    pub mean_p: f64,
    pub frac_pos: f64,
}

/// Per-bin counts, mean confidence and positive fraction. Empty bins are
/// included with zero count.
pub fn reliability_table(
    pairs: &[(f64, bool)],
    num_bins: usize,
    scheme: BinScheme,
) -> Result<Vec<ReliabilityRow>> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    if num_bins == 0 {
        return Err(Error::invalid("num_bins must be at least 1"));
    }
    for (pos, &(p, _)) in pairs.iter().enumerate() {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability { position: pos, value: p });
        }
    }

    let summarize = |lower: f64, upper: f64, members: &mut dyn Iterator<Item = &(f64, bool)>| {
        let (mut count, mut sum_p, mut pos) = (0usize, 0.0, 0usize);
        for &(p, y) in members {
            count += 1;
            sum_p += p;
            pos += usize::from(y);
        }
        let (mean_p, frac_pos) = if count == 0 {
            (0.0, 0.0)
        } else {
            (sum_p / count as f64, pos as f64 / count as f64)
        };
        ReliabilityRow {
            bin_lower: lower,
            bin_upper: upper,
            count,
            mean_p,
            frac_pos,
        }
    };

    let rows = match scheme {
        BinScheme::EqualWidth => {
            let mut buckets: Vec<Vec<(f64, bool)>> = vec![Vec::new(); num_bins];
            for &(p, y) in pairs {
                let b = ((p * num_bins as f64).floor() as usize).min(num_bins - 1);
                buckets[b].push((p, y));
            }
            buckets
                .iter()
                .enumerate()
                .map(|(b, members)| {
                    summarize(
                        b as f64 / num_bins as f64,
                        (b + 1) as f64 / num_bins as f64,
                        &mut members.iter(),
                    )
                })
                .collect()
        }
        BinScheme::EqualMass => {
            let mut sorted = pairs.to_vec();
            // (p, y) order makes the table independent of input order
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut rows = Vec::with_capacity(num_bins);
            let mut start = 0;
            let mut last_upper = 0.0;
            for size in equal_mass_sizes(sorted.len(), num_bins) {
                let members = &sorted[start..start + size];
                let (lower, upper) = match (members.first(), members.last()) {
                    (Some(f), Some(l)) => (f.0, l.0),
                    _ => (last_upper, last_upper),
                };
                rows.push(summarize(lower, upper, &mut members.iter()));
                last_upper = upper;
                start += size;
            }
            rows
        }
    };
    Ok(rows)
}

/// Expected calibration error of a reliability table.
pub fn ece_from_table(rows: &[ReliabilityRow]) -> f64 {
    let n: usize = rows.iter().map(|r| r.count).sum();
    if n == 0 {
        return 0.0;
    }
    rows.iter()
        .filter(|r| r.count > 0)
        .map(|r| r.count as f64 / n as f64 * (r.frac_pos - r.mean_p).abs())
        .sum()
}

pub fn ece(pairs: &[(f64, bool)], num_bins: usize, scheme: BinScheme) -> Result<f64> {
    Ok(ece_from_table(&reliability_table(pairs, num_bins, scheme)?))
}

/// Fitting set from held-out positives: each positive `(u, i)` of `split`
/// yields `(s_ui, 1, theta_i)` followed by `negatives_per_positive` samples
/// `(s_uj, 0, theta_j)` with `j` unobserved for `u`. Without a propensity
/// model every `theta` is 1.
pub fn collect_calibration_samples<R: Rng + ?Sized>(
    params: &MfParams,
    dataset: &Dataset,
    split: Split,
    negatives_per_positive: usize,
    propensity: Option<&PropensityModel>,
    rng: &mut R,
) -> Result<Vec<CalibrationSample>> {
    let positives = dataset.interactions(split);
    if positives.is_empty() {
        return Err(Error::invalid(format!("split `{}` is empty", split.name())));
    }
    if params.num_users() != dataset.num_users() || params.num_items() != dataset.num_items() {
        return Err(Error::invalid("model shape does not match the dataset"));
    }
    if let Some(m) = propensity {
        if m.theta.len() != dataset.num_items() {
            return Err(Error::invalid("propensity model does not cover every item"));
        }
    }
    let theta = |i: usize| propensity.map_or(1.0, |m| m.theta(i));
    let mut out = Vec::with_capacity(positives.len() * (1 + negatives_per_positive));
    for x in positives {
        out.push(CalibrationSample::new(
            params.score_unchecked(x.user, x.item),
            true,
            theta(x.item),
        ));
        for _ in 0..negatives_per_positive {
            let j = sample_unobserved(dataset, x.user, rng)?;
            out.push(CalibrationSample::new(params.score_unchecked(x.user, j), false, theta(j)));
        }
    }
    Ok(out)
}
