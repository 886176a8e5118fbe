use std::path::PathBuf;

use anyhow::{bail, Result};
use calrec::dataset::{Dataset, Split};
use calrec::distill::{cotrain_epoch, CotrainRngs, ModelReport};
use calrec::metrics::{evaluate, Cutoff, Metric, UserRecommendation};
use calrec::ranker::checkpoint::save_checkpoint;
use calrec::ranker::{rank_items, LossKind, MfParams};
use serde::{Deserialize, Serialize};

use super::train::fresh;
use crate::bundle::{create_dir, load_bundle, write_json, JsonLines};
use crate::config::RunConfig;

pub const TEACHER_FILE: &str = "teacher.json";
pub const STUDENT_FILE: &str = "student.json";
pub const LOG_FILE: &str = "cotrain_log.jsonl";
pub const SUMMARY_FILE: &str = "distill_summary.json";

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Dataset bundle directory.
    #[arg(long, value_name = "DIR")]
    data: PathBuf,
    /// Output directory for both checkpoints, the log and the summary.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Overrides `bd.save_every`.
    #[arg(long, value_name = "N")]
    save_every: Option<usize>,
}

/// One co-training log row; each epoch has a teacher row then a student row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotrainRow {
    pub epoch: usize,
    pub model: String,
    pub base_loss: f64,
    pub distill_loss: f64,
    pub sampled_total: usize,
    pub empty_samples: usize,
}

impl CotrainRow {
    fn new(epoch: usize, model: &str, r: &ModelReport) -> Self {
        Self {
            epoch,
            model: model.to_owned(),
            base_loss: r.base_loss,
            distill_loss: r.distill_loss,
            sampled_total: r.sampled_total,
            empty_samples: r.empty_samples,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub dim: usize,
    pub recall_at_10: f64,
    pub ndcg_at_10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillSummary {
    pub epochs: usize,
    pub split: Split,
    pub users_evaluated: usize,
    pub teacher: ModelSummary,
    pub student: ModelSummary,
}

fn summarize(params: &MfParams, ds: &Dataset, split: Split) -> Result<(ModelSummary, usize)> {
    let recs = (0..ds.num_users())
        .map(|u| {
            let mut items = rank_items(params, u, ds.user_items(Split::Train, u))?;
            items.truncate(10);
            Ok(UserRecommendation { user: u, items, k_star: None })
        })
        .collect::<Result<Vec<_>>>()?;
    let res = evaluate(&recs, ds, split, &[Metric::Recall, Metric::Ndcg], &[10])?;
    let get = |m| res.get(m, Cutoff::Fixed(10)).map_or(f64::NAN, |v| v.mean);
    Ok((
        ModelSummary {
            dim: params.dim(),
            recall_at_10: get(Metric::Recall),
            ndcg_at_10: get(Metric::Ndcg),
        },
        res.users_evaluated,
    ))
}

pub fn run(cfg: &RunConfig, args: Args) -> Result<()> {
    let tc = cfg.train_config();
    if tc.loss_kind != LossKind::Pointwise {
        bail!("distillation trains on the pointwise loss; set train.loss = pointwise");
    }
    let bd = cfg.bd_config();
    let save_every = args.save_every.unwrap_or(cfg.bd.save_every);
    let bundle = load_bundle(&args.data)?;
    let ds = &bundle.dataset;
    create_dir(&args.out)?;

    // same initialization and per-epoch streams as `train` with that dimension
    let mut teacher = fresh(ds.num_users(), ds.num_items(), cfg.bd.teacher_dim, tc.seed)?;
    let mut student = fresh(ds.num_users(), ds.num_items(), cfg.bd.student_dim, tc.seed)?;
    let save = |teacher: &MfParams, student: &MfParams, epoch: usize| -> Result<()> {
        save_checkpoint(&args.out.join(TEACHER_FILE), teacher, tc.seed, tc.loss_kind, epoch)?;
        save_checkpoint(&args.out.join(STUDENT_FILE), student, tc.seed, tc.loss_kind, epoch)?;
        Ok(())
    };

    let mut log = JsonLines::create(&args.out.join(LOG_FILE))?;
    for epoch in 0..bd.epochs {
        let mut rngs = CotrainRngs::for_epoch(tc.seed, bd.seed, epoch);
        let report = cotrain_epoch(&mut teacher, &mut student, ds, &tc, &bd, &mut rngs)?;
        teacher.round_to_f32();
        student.round_to_f32();
        log.write(&CotrainRow::new(epoch + 1, "teacher", &report.teacher))?;
        log.write(&CotrainRow::new(epoch + 1, "student", &report.student))?;
        eprintln!(
            "epoch {:>3}  teacher {:.5}/{:.5}  student {:.5}/{:.5}",
            epoch + 1,
            report.teacher.base_loss,
            report.teacher.distill_loss,
            report.student.base_loss,
            report.student.distill_loss
        );
        if save_every > 0 && (epoch + 1) % save_every == 0 {
            save(&teacher, &student, epoch + 1)?;
        }
    }
    log.finish()?;
    save(&teacher, &student, bd.epochs)?;

    let (t, users_evaluated) = summarize(&teacher, ds, cfg.eval.split)?;
    let (s, _) = summarize(&student, ds, cfg.eval.split)?;
    let summary = DistillSummary {
        epochs: bd.epochs,
        split: cfg.eval.split,
        users_evaluated,
        teacher: t,
        student: s,
    };
    write_json(&args.out.join(SUMMARY_FILE), &summary)?;
    println!(
        "recall@10 teacher {:.4} student {:.4}",
        summary.teacher.recall_at_10, summary.student.recall_at_10
    );
    Ok(())
}
