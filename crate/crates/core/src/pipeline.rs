//! End-to-end recipes shared by the command-line driver and the acceptance
//! suite: training the base models of an experiment and merging a pair with
//! any alignment/aggregation combination.

use std::time::Instant;

use rayon::prelude::*;

use crate::align::{align_permute, align_weight_matching, apply_alignment, PermutationSet, DEFAULT_MAX_SWEEPS};
use crate::config::{Alignment, ExperimentConfig, MergeMethod, OptBudget};
use crate::data::LabeledDataset;
use crate::error::Result;
use crate::merge::{ensemble_eval, finetune, np_optimize, uniform_merge, AlphaSet, MergeConfig, MergeReport};
use crate::nn::{bn_reset, evaluate, train_from, EpochMetrics, Evaluation, MlpSpec, ModelParams, TrainConfig};
use crate::numerics::Rng;

/// Seed of the initialisation for model `part` under experiment seed `seed`.
pub fn init_seed(seed: u64, part: usize, shared_init: bool) -> u64 {
    if shared_init {
        Rng::derive_seed(seed, 0)
    } else {
        Rng::derive_seed(seed, 1000 + part as u64)
    }
}

/// Seed of the minibatch order for model `part`.
pub fn order_seed(seed: u64, part: usize) -> u64 {
    Rng::derive_seed(seed, 2000 + part as u64)
}

/// Seed used to draw the merge-phase subsample.
pub fn budget_seed(seed: u64) -> u64 {
    Rng::derive_seed(seed, 3000)
}

pub fn train_one(
    spec: &MlpSpec,
    data: &LabeledDataset,
    cfg: &TrainConfig,
    seed: u64,
    part: usize,
    shared_init: bool,
) -> Result<(ModelParams, Vec<EpochMetrics>)> {
    let init = ModelParams::init(spec, &mut Rng::new(init_seed(seed, part, shared_init)));
    let tc = TrainConfig {
        seed: order_seed(seed, part),
        ..cfg.clone()
    };
    let out = train_from(init, data, &tc)?;
    Ok((out.params, out.metrics))
}

#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub seed: u64,
    pub part: usize,
    pub train_size: usize,
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
    pub test: Evaluation,
}

/// One model per (seed, split part), trained concurrently.
pub fn train_models(
    cfg: &ExperimentConfig,
    train: &LabeledDataset,
    test: &LabeledDataset,
) -> Result<Vec<TrainedModel>> {
    let spec = cfg.architecture.spec()?;
    let parts = match &cfg.task.split {
        Some(split) => split.apply(train)?,
        None => vec![train.clone()],
    };
    let jobs: Vec<(u64, usize)> = cfg
        .seeds
        .iter()
        .flat_map(|&s| (0..parts.len()).map(move |p| (s, p)))
        .collect();
    jobs.par_iter()
        .map(|&(seed, part)| {
            let data = &parts[part];
            let (params, metrics) = train_one(&spec, data, &cfg.train, seed, part, cfg.shared_init)?;
            let test = evaluate(&params, test)?;
            Ok(TrainedModel {
                seed,
                part,
                train_size: data.len(),
                params,
                metrics,
                test,
            })
        })
        .collect()
}

/// Aligns `b` onto `a`. Activation matching uses `probe`; weight matching
/// uses `seed` for its sweep order.
pub fn align_pair(
    a: &ModelParams,
    b: &ModelParams,
    alignment: Alignment,
    probe: &LabeledDataset,
    batch_size: usize,
    seed: u64,
) -> Result<(ModelParams, Option<PermutationSet>)> {
    let perms = match alignment {
        Alignment::None => return Ok((b.clone(), None)),
        Alignment::Permute => align_permute(a, b, probe, batch_size)?,
        Alignment::WeightMatching => align_weight_matching(a, b, DEFAULT_MAX_SWEEPS, seed)?,
    };
    Ok((apply_alignment(b, &perms)?, Some(perms)))
}

#[derive(Clone, Debug)]
pub struct MergeJob<'a> {
    pub a: &'a ModelParams,
    pub b: &'a ModelParams,
    pub alignment: Alignment,
    pub method: MergeMethod,
    /// Weight on A for `uniform`; `direct_avg` always uses 1/2.
    pub alpha: f64,
    pub opt_data: &'a LabeledDataset,
    pub eval_data: &'a LabeledDataset,
    pub cfg: &'a MergeConfig,
    pub budget: OptBudget,
    pub config_hash: String,
}

#[derive(Clone, Debug)]
pub struct MergeResult {
    /// `None` for the ensemble, which has no single parameter set.
    pub model: Option<ModelParams>,
    pub perms: Option<PermutationSet>,
    pub alphas: Option<AlphaSet>,
    pub report: MergeReport,
}

pub fn merge_pair(job: &MergeJob<'_>) -> Result<MergeResult> {
    let start = Instant::now();
    job.cfg.validate()?;
    let (b_aligned, perms) = align_pair(
        job.a,
        job.b,
        job.alignment,
        job.opt_data,
        job.cfg.batch_size,
        job.cfg.seed,
    )?;
    let reset = |m: ModelParams| bn_reset(&m, job.opt_data.features(), job.cfg.batch_size).map(|r| r.0);
    let mut alphas = None;
    let mut invariants = None;
    let mut loss_curve = Vec::new();
    let model = match job.method {
        MergeMethod::DirectAvg => Some(reset(uniform_merge(job.a, &b_aligned, 0.5)?)?),
        MergeMethod::Uniform => Some(reset(uniform_merge(job.a, &b_aligned, job.alpha)?)?),
        MergeMethod::Np => {
            let out = np_optimize(job.a, &b_aligned, job.opt_data, job.cfg)?;
            loss_curve = out.loss_curve;
            invariants = Some(out.invariants);
            alphas = Some(out.alphas);
            Some(out.merged)
        }
        MergeMethod::Finetune => {
            let out = finetune(&uniform_merge(job.a, &b_aligned, 0.5)?, job.opt_data, job.cfg)?;
            loss_curve = out.metrics.iter().map(|m| m.loss).collect();
            Some(out.params)
        }
        MergeMethod::Ensemble => None,
    };
    let post = match &model {
        Some(m) => evaluate(m, job.eval_data)?,
        None => ensemble_eval(&[job.a.clone(), b_aligned.clone()], job.eval_data)?,
    };
    let report = MergeReport {
        method: job.method.label().into(),
        prior: job.alignment.label().into(),
        seed: job.cfg.seed,
        opt_budget: job.budget.to_string(),
        pre_accuracy: vec![
            evaluate(job.a, job.eval_data)?.accuracy,
            evaluate(job.b, job.eval_data)?.accuracy,
        ],
        accuracy: post.accuracy,
        loss: post.loss,
        loss_curve,
        alpha: alphas.as_ref().map(AlphaSet::stats),
        invariants,
        config_hash: job.config_hash.clone(),
        wall_time: start.elapsed().as_secs_f64(),
    };
    Ok(MergeResult {
        model,
        perms,
        alphas,
        report,
    })
}
