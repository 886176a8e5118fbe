//! Flat `key = value` run configuration.
//!
//! Keys are namespaced (`data.*`, `train.*`, `calib.*`, `bd.*`, `perk.*`,
//! `eval.*`) plus the global `seed`. A config file holds one assignment per
//! line; `#` starts a comment. Command-line `--set key=value` pairs are
//! applied after the file. Unknown keys are errors.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use calrec::calibration::{BinScheme, CalibratorKind, FitOptions};
use calrec::dataset::{Split, SplitRatios};
use calrec::distill::BdConfig;
use calrec::metrics::Metric;
use calrec::perk::{PerkConfig, UtilityKind};
use calrec::ranker::{LossKind, TrainConfig};

/// Offsets added to the global seed to get each module's seed.
pub const DATA_SEED_OFFSET: u64 = 0;
pub const TRAIN_SEED_OFFSET: u64 = 1;
pub const CALIB_SEED_OFFSET: u64 = 2;
pub const BD_SEED_OFFSET: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct DataSection {
    pub delimiter: char,
    pub ratios: SplitRatios,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSection {
    pub dim: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: LossKind,
    pub negatives: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibSection {
    pub kind: CalibratorKind,
    pub unbiased: bool,
    pub tau: f64,
    pub theta_min: f64,
    pub negatives: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub histogram_bins: usize,
    pub ece_bins: usize,
    pub ece_scheme: BinScheme,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BdSection {
    pub teacher_dim: usize,
    pub student_dim: usize,
    pub lambda_ts: f64,
    pub lambda_st: f64,
    pub sample_size: usize,
    pub eta: f64,
    pub truncate_rank: usize,
    pub epochs: usize,
    pub save_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSection {
    pub split: Split,
    pub ks: Vec<usize>,
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub calib: CalibSection,
    pub bd: BdSection,
    pub perk: PerkConfig,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        let fit = FitOptions::default();
        let bd = BdConfig::default();
        Self {
            seed: 0,
            data: DataSection {
                delimiter: ',',
                ratios: SplitRatios::default(),
            },
            train: TrainSection {
                dim: 32,
                lr: train.lr,
                reg: train.reg,
                epochs: train.epochs,
                batch_size: train.batch_size,
                loss: train.loss_kind,
                negatives: train.negatives_per_positive,
            },
            calib: CalibSection {
                kind: CalibratorKind::Platt,
                unbiased: false,
                tau: 0.5,
                theta_min: 0.01,
                negatives: 4,
                max_iters: fit.max_iters,
                tol: fit.tol,
                histogram_bins: fit.histogram_bins,
                ece_bins: 15,
                ece_scheme: BinScheme::EqualWidth,
            },
            bd: BdSection {
                teacher_dim: 32,
                student_dim: 8,
                lambda_ts: bd.lambda_ts,
                lambda_st: bd.lambda_st,
                sample_size: bd.sample_size,
                eta: bd.eta,
                truncate_rank: bd.truncate_rank,
                epochs: bd.epochs,
                save_every: 1,
            },
            perk: PerkConfig::default(),
            eval: EvalSection {
                split: Split::Test,
                ks: vec![1, 5, 10, 20],
                metrics: UtilityKind::ALL.to_vec(),
            },
        }
    }
}

struct Key {
    name: &'static str,
    doc: &'static str,
    get: fn(&RunConfig) -> String,
    set: fn(&mut RunConfig, &str) -> Result<()>,
}

fn parse<T: FromStr>(v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| anyhow!("{e}"))
}

fn parse_bool(v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("expected true or false"),
    }
}

fn parse_list<T: FromStr>(v: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',').map(|x| parse(x.trim())).collect()
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn delimiter_text(c: char) -> String {
    match c {
        '\t' => "tab".into(),
        ' ' => "space".into(),
        c => c.to_string(),
    }
}

fn parse_delimiter(v: &str) -> Result<char> {
    match v {
        "tab" => return Ok('\t'),
        "space" => return Ok(' '),
        _ => {}
    }
    let mut chars = v.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) => Ok(c),
        _ => bail!("expected a single character, `tab` or `space`"),
    }
}

macro_rules! key {
    ($name:literal, $doc:literal, |$c:ident| $field:expr, $parse:expr) => {
        Key {
            name: $name,
            doc: $doc,
            get: |$c| $field.to_string(),
            set: |$c, v| {
                $field = $parse(v)?;
                Ok(())
            },
        }
    };
}

fn loss_name(k: LossKind) -> &'static str {
    match k {
        LossKind::Bpr => "bpr",
        LossKind::Pointwise => "pointwise",
    }
}

fn calibrator_name(k: CalibratorKind) -> &'static str {
    match k {
        CalibratorKind::Platt => "platt",
        CalibratorKind::Gaussian => "gaussian",
        CalibratorKind::Gamma => "gamma",
        CalibratorKind::Histogram => "histogram",
    }
}

fn scheme_name(s: BinScheme) -> &'static str {
    match s {
        BinScheme::EqualWidth => "equal_width",
        BinScheme::EqualMass => "equal_mass",
    }
}

const KEYS: &[Key] = &[
    key!("seed", "global seed; module seeds are seed+0 (data), +1 (train), +2 (calib), +3 (bd)", |c| c.seed, parse),
    Key {
        name: "data.delimiter",
        doc: "field separator of the raw interaction file (a single character, `tab` or `space`)",
        get: |c| delimiter_text(c.data.delimiter),
        set: |c, v| {
            c.data.delimiter = parse_delimiter(v)?;
            Ok(())
        },
    },
    key!("data.train_ratio", "per-user share of interactions kept for training", |c| c.data.ratios.train, parse),
    key!("data.validation_ratio", "per-user share held out for validation", |c| c.data.ratios.validation, parse),
    key!("data.test_ratio", "per-user share held out for testing", |c| c.data.ratios.test, parse),
    key!("train.dim", "embedding dimension", |c| c.train.dim, parse),
    key!("train.lr", "SGD learning rate", |c| c.train.lr, parse),
    key!("train.reg", "L2 penalty on the embeddings", |c| c.train.reg, parse),
    key!("train.epochs", "training epochs", |c| c.train.epochs, parse),
    key!("train.batch_size", "positives per SGD step", |c| c.train.batch_size, parse),
    Key {
        name: "train.loss",
        doc: "bpr or pointwise",
        get: |c| loss_name(c.train.loss).into(),
        set: |c, v| {
            c.train.loss = parse(v)?;
            Ok(())
        },
    },
    key!("train.negatives", "sampled negatives per positive (pointwise loss)", |c| c.train.negatives, parse),
    Key {
        name: "calib.kind",
        doc: "platt, gaussian, gamma or histogram",
        get: |c| calibrator_name(c.calib.kind).into(),
        set: |c, v| {
            c.calib.kind = parse(v)?;
            Ok(())
        },
    },
    key!("calib.unbiased", "weight the fit by inverse popularity propensities", |c| c.calib.unbiased, parse_bool),
    key!("calib.tau", "propensity exponent: theta = (pop / max_pop)^tau", |c| c.calib.tau, parse),
    key!("calib.theta_min", "propensity floor", |c| c.calib.theta_min, parse),
    key!("calib.negatives", "unobserved items drawn per held-out positive", |c| c.calib.negatives, parse),
    key!("calib.max_iters", "gradient-descent iteration cap", |c| c.calib.max_iters, parse),
    key!("calib.tol", "stop when the projected gradient's max-norm falls below this", |c| c.calib.tol, parse),
    key!("calib.histogram_bins", "equal-mass bins of the histogram calibrator", |c| c.calib.histogram_bins, parse),
    key!("calib.ece_bins", "bins of the reliability table and ECE", |c| c.calib.ece_bins, parse),
    Key {
        name: "calib.ece_scheme",
        doc: "equal_width or equal_mass",
        get: |c| scheme_name(c.calib.ece_scheme).into(),
        set: |c, v| {
            c.calib.ece_scheme = parse(v)?;
            Ok(())
        },
    },
    key!("bd.teacher_dim", "teacher embedding dimension", |c| c.bd.teacher_dim, parse),
    key!("bd.student_dim", "student embedding dimension", |c| c.bd.student_dim, parse),
    key!("bd.lambda_ts", "weight of the teacher's loss term distilled from the student", |c| c.bd.lambda_ts, parse),
    key!("bd.lambda_st", "weight of the student's loss term distilled from the teacher", |c| c.bd.lambda_st, parse),
    key!("bd.sample_size", "distillation items per user per epoch", |c| c.bd.sample_size, parse),
    key!("bd.eta", "sharpness of the rank-gap weight tanh(eta * gap)", |c| c.bd.eta, parse),
    key!("bd.truncate_rank", "ranks beyond this count as this", |c| c.bd.truncate_rank, parse),
    key!("bd.epochs", "co-training epochs", |c| c.bd.epochs, parse),
    key!("bd.save_every", "write both checkpoints every this many epochs (0: only at the end)", |c| c.bd.save_every, parse),
    key!("perk.k_max", "largest cutoff considered per user", |c| c.perk.k_max, parse),
    Key {
        name: "perk.utility",
        doc: "precision, recall, f1 or ndcg",
        get: |c| c.perk.utility.name().into(),
        set: |c, v| {
            c.perk.utility = parse(v)?;
            Ok(())
        },
    },
    key!("perk.rest_pool", "candidates past k_max used for the remaining-relevant distribution", |c| c.perk.rest_pool, parse),
    Key {
        name: "eval.split",
        doc: "split whose items are the relevant sets: validation or test",
        get: |c| c.eval.split.name().into(),
        set: |c, v| {
            c.eval.split = parse(v)?;
            Ok(())
        },
    },
    Key {
        name: "eval.ks",
        doc: "comma-separated fixed cutoffs",
        get: |c| join(&c.eval.ks),
        set: |c, v| {
            c.eval.ks = parse_list(v)?;
            Ok(())
        },
    },
    Key {
        name: "eval.metrics",
        doc: "comma-separated subset of precision, recall, f1, ndcg",
        get: |c| c.eval.metrics.iter().map(|m| m.name()).collect::<Vec<_>>().join(","),
        set: |c, v| {
            c.eval.metrics = parse_list(v)?;
            Ok(())
        },
    },
];

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = KEYS
            .iter()
            .find(|k| k.name == key)
            .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
        (k.set)(self, value.trim()).with_context(|| format!("bad value `{}` for `{key}`", value.trim()))
    }

    /// Applies `key = value` lines.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{origin}:{}: expected `key = value`", n + 1))?;
            self.set(k.trim(), v).with_context(|| format!("{origin}:{}", n + 1))?;
        }
        Ok(())
    }

    /// Defaults, then the optional file, then `key=value` overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut cfg = Self::default();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| anyhow!("--set expects key=value, got `{o}`"))?;
            cfg.set(k.trim(), v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.data.ratios.validate()?;
        let t = &self.train;
        if !(t.lr > 0.0 && t.lr.is_finite()) {
            bail!("train.lr must be positive");
        }
        if t.dim == 0 || self.bd.teacher_dim == 0 || self.bd.student_dim == 0 {
            bail!("embedding dimensions must be at least 1");
        }
        self.train_config().validate_step()?;
        let c = &self.calib;
        if !(c.tau >= 0.0 && c.tau.is_finite()) {
            bail!("calib.tau must be nonnegative");
        }
        if !(c.theta_min > 0.0 && c.theta_min <= 1.0) {
            bail!("calib.theta_min must lie in (0, 1]");
        }
        if c.negatives == 0 {
            bail!("calib.negatives must be at least 1");
        }
        if c.ece_bins == 0 || c.histogram_bins == 0 {
            bail!("bin counts must be at least 1");
        }
        if c.tol.is_nan() || c.tol <= 0.0 || c.max_iters == 0 {
            bail!("calib.tol must be positive and calib.max_iters at least 1");
        }
        self.bd_config().validate()?;
        if self.perk.k_max == 0 {
            bail!("perk.k_max must be at least 1");
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            bail!("eval.ks must list cutoffs of at least 1");
        }
        if self.eval.metrics.is_empty() {
            bail!("eval.metrics must name at least one metric");
        }
        Ok(())
    }

    pub fn data_seed(&self) -> u64 {
        self.seed.wrapping_add(DATA_SEED_OFFSET)
    }

    pub fn train_seed(&self) -> u64 {
        self.seed.wrapping_add(TRAIN_SEED_OFFSET)
    }

    pub fn calib_seed(&self) -> u64 {
        self.seed.wrapping_add(CALIB_SEED_OFFSET)
    }

    pub fn bd_seed(&self) -> u64 {
        self.seed.wrapping_add(BD_SEED_OFFSET)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.train.lr,
            reg: self.train.reg,
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            loss_kind: self.train.loss,
            negatives_per_positive: self.train.negatives,
            seed: self.train_seed(),
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            max_iters: self.calib.max_iters,
            tol: self.calib.tol,
            histogram_bins: self.calib.histogram_bins,
        }
    }

    pub fn bd_config(&self) -> BdConfig {
        BdConfig {
            lambda_ts: self.bd.lambda_ts,
            lambda_st: self.bd.lambda_st,
            sample_size: self.bd.sample_size,
            eta: self.bd.eta,
            truncate_rank: self.bd.truncate_rank,
            epochs: self.bd.epochs,
            seed: self.bd_seed(),
        }
    }

    /// Every key with its current value and a comment, itself a valid config
    /// file.
    pub fn reference(&self) -> String {
        self.render(|_| true)
    }

    /// [`Self::reference`] restricted to the given namespaces (`seed` names
    /// the global seed).
    pub fn reference_for(&self, namespaces: &[&str]) -> String {
        self.render(|name| {
            let ns = name.split_once('.').map_or(name, |(ns, _)| ns);
            namespaces.contains(&ns)
        })
    }

    fn render(&self, keep: impl Fn(&str) -> bool) -> String {
        let mut out = String::new();
        let mut section = "";
        for k in KEYS.iter().filter(|k| keep(k.name)) {
            let ns = k.name.split_once('.').map_or("", |(ns, _)| ns);
            if ns != section {
                out.push('\n');
                section = ns;
            }
            let _ = writeln!(out, "# {}\n{} = {}", k.doc, k.name, (k.get)(self));
        }
        out.trim_start().to_owned()
    }
}
