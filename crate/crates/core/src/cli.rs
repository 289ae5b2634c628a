//! The `npmerge` command-line driver.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::checkpoint::{self, hex, load_model, save_model, Checkpoint, Payload, Provenance};
use crate::config::{idx_paths, load_prefix, Alignment, ExperimentConfig, MergeMethod, OptBudget};
use crate::data::{save_idx, synth_mixture, LabeledDataset, MixtureSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::merge::report::{append_csv, write_csv, ReportRow};
use crate::merge::{barrier, MergeConfig, MergeReport, DEFAULT_BARRIER_POINTS};
use crate::multimerge::{all_to_one_average, pairwise_merge_tree};
use crate::nn::{evaluate, ModelParams};
use crate::pipeline::{align_pair, budget_seed, merge_pair, train_models, MergeJob};

#[derive(Parser, Debug)]
#[command(name = "npmerge", version, about = "Align and merge MLP classifiers")]
pub struct Cli {
    /// Worker threads (overrides NPMK_THREADS).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train one model per (seed, split part) from a config.
    Train(TrainArgs),
    /// Align and merge two checkpoints.
    Merge(MergeArgs),
    /// Loss/accuracy along the linear path between two checkpoints.
    Barrier(BarrierArgs),
    /// Merge many checkpoints by a pairwise tree and the all-to-one baseline.
    Multimerge(MultimergeArgs),
    /// Accuracy and loss of a checkpoint.
    Eval(EvalArgs),
    /// Split or subsample an IDX dataset.
    SplitData(SplitArgs),
    /// Collect merge reports into one table.
    Report(ReportArgs),
    /// Write a synthetic Gaussian-mixture dataset as IDX files.
    Synth(SynthArgs),
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: the config's output_dir).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AlignArg {
    None,
    Permute,
    WeightMatching,
}

impl From<AlignArg> for Alignment {
    fn from(a: AlignArg) -> Self {
        match a {
            AlignArg::None => Alignment::None,
            AlignArg::Permute => Alignment::Permute,
            AlignArg::WeightMatching => Alignment::WeightMatching,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum MethodArg {
    DirectAvg,
    Uniform,
    Np,
    Finetune,
    Ensemble,
}

impl From<MethodArg> for MergeMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::DirectAvg => MergeMethod::DirectAvg,
            MethodArg::Uniform => MergeMethod::Uniform,
            MethodArg::Np => MergeMethod::Np,
            MethodArg::Finetune => MergeMethod::Finetune,
            MethodArg::Ensemble => MergeMethod::Ensemble,
        }
    }
}

/// Merge-phase settings shared by `merge` and `multimerge`. Values not given
/// on the command line come from `--config`, then from the built-in
/// defaults.
#[derive(Args, Debug)]
pub struct MergeSettings {
    /// Experiment config supplying defaults and the provenance hash.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Accept checkpoints whose config hash differs from `--config`.
    #[arg(long)]
    pub force: bool,
    /// Optimisation data (IDX prefix: PREFIX-images.idx, PREFIX-labels.idx).
    #[arg(long)]
    pub opt_data: PathBuf,
    /// Evaluation data prefix (default: the optimisation data).
    #[arg(long)]
    pub eval_data: Option<PathBuf>,
    /// `full` or examples per class drawn from the optimisation data.
    #[arg(long)]
    pub budget: Option<OptBudget>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Skip pixel standardisation when loading integer IDX images.
    #[arg(long)]
    pub raw: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MergeArgs {
    pub ckpt_a: PathBuf,
    pub ckpt_b: PathBuf,
    #[arg(long, value_enum)]
    pub align: Option<AlignArg>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    /// Weight on model A for `--method uniform`.
    #[arg(long, default_value_t = 0.5)]
    pub alpha: f64,
    #[command(flatten)]
    pub settings: MergeSettings,
}

#[derive(Args, Debug)]
pub struct BarrierArgs {
    pub ckpt_a: PathBuf,
    pub ckpt_b: PathBuf,
    #[arg(long, value_enum, default_value = "none")]
    pub align: AlignArg,
    #[arg(long, default_value_t = DEFAULT_BARRIER_POINTS)]
    pub points: usize,
    /// Evaluation data prefix.
    #[arg(long)]
    pub data: PathBuf,
    /// Data for alignment probes and BatchNorm resets (default: `--data`).
    #[arg(long)]
    pub probe_data: Option<PathBuf>,
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Curve CSV (columns alpha, loss, accuracy).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct MultimergeArgs {
    #[arg(required = true, num_args = 2..)]
    pub ckpts: Vec<PathBuf>,
    /// Model counts for the accuracy table; each uses the first m checkpoints.
    #[arg(long, value_delimiter = ',', default_values_t = vec![2usize, 4, 8])]
    pub sizes: Vec<usize>,
    /// Seed of the random pairing.
    #[arg(long, default_value_t = 0)]
    pub pairing_seed: u64,
    #[command(flatten)]
    pub settings: MergeSettings,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub ckpt: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub raw: bool,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SplitKind {
    EightyTwenty,
    Dirichlet,
    PerClass,
}

#[derive(Args, Debug)]
pub struct SplitArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Take the split from this config's `task.split` instead of flags.
    #[arg(long, conflicts_with = "kind")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub kind: Option<SplitKind>,
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub raw: bool,
    /// Output prefix; part j is written to OUT-partJ-{images,labels}.idx.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    pub dir: PathBuf,
    /// Output CSV (default: DIR/summary.csv).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 1)]
    pub modes: usize,
    #[arg(long, default_value_t = 100)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 16)]
    pub dims: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes OUT-train-* and OUT-test-* IDX pairs.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` and runs the selected command.
pub fn run<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            std::process::exit(code);
        }
    };
    configure_threads(cli.jobs)?;
    match cli.command {
        Command::Train(a) => cmd_train(&a),
        Command::Merge(a) => cmd_merge(&a),
        Command::Barrier(a) => cmd_barrier(&a),
        Command::Multimerge(a) => cmd_multimerge(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::SplitData(a) => cmd_split(&a),
        Command::Report(a) => cmd_report(&a),
        Command::Synth(a) => cmd_synth(&a),
    }
}

fn configure_threads(jobs: Option<usize>) -> Result<()> {
    let from_env = match std::env::var("NPMK_THREADS") {
        Ok(v) => Some(v.trim().parse::<usize>().map_err(|_| Error::Config {
            field: "NPMK_THREADS".into(),
            message: format!("expected a positive integer, got `{v}`"),
        })?),
        Err(_) => None,
    };
    if let Some(n) = jobs.or(from_env) {
        if n == 0 {
            return Err(Error::input("thread count must be at least 1"));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct TrainRow {
    seed: u64,
    part: usize,
    checkpoint: String,
    train_size: usize,
    train_loss: f64,
    train_accuracy: f64,
    test_loss: f64,
    test_accuracy: f64,
}

pub fn checkpoint_name(seed: u64, part: usize) -> String {
    format!("model-s{seed}-p{part}.npmk")
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = ExperimentConfig::load(&args.config)?;
    cfg.check_files()?;
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    create_dir(&out)?;
    let (train, test) = cfg.task.source.load()?;
    let hash = cfg.hash();
    let models = train_models(&cfg, &train, &test)?;
    let mut rows = Vec::with_capacity(models.len());
    for m in &models {
        let name = checkpoint_name(m.seed, m.part);
        let prov = Provenance::new(m.seed, hash, format!("train seed={} part={}", m.seed, m.part));
        save_model(&out.join(&name), &m.params, prov)?;
        let last = m.metrics.last();
        rows.push(TrainRow {
            seed: m.seed,
            part: m.part,
            checkpoint: name,
            train_size: m.train_size,
            train_loss: last.map_or(f64::NAN, |e| e.loss),
            train_accuracy: last.map_or(f64::NAN, |e| e.accuracy),
            test_loss: m.test.loss,
            test_accuracy: m.test.accuracy,
        });
    }
    let path = out.join("train_metrics.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    fs::write(out.join("config.toml"), cfg.canonical()).map_err(|e| Error::io(out.join("config.toml"), e))?;
    println!("trained {} models into {}", rows.len(), out.display());
    Ok(())
}

struct MergeContext {
    cfg: MergeConfig,
    budget: OptBudget,
    opt_data: LabeledDataset,
    eval_data: LabeledDataset,
    hash: Option<[u8; 32]>,
    experiment: Option<ExperimentConfig>,
}

fn merge_context(s: &MergeSettings) -> Result<MergeContext> {
    let experiment = s.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let mut cfg = experiment.as_ref().map(|e| e.merge.clone()).unwrap_or_default();
    if let Some(v) = s.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = s.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = s.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = s.seed {
        cfg.seed = v;
    }
    cfg.validate()?;
    let budget = s
        .budget
        .or(experiment.as_ref().map(|e| e.opt_budget))
        .unwrap_or_default();
    let pool = load_prefix(&s.opt_data, !s.raw)?;
    let opt_data = budget.select(&pool, budget_seed(cfg.seed))?;
    let eval_data = match &s.eval_data {
        Some(p) => load_prefix(p, !s.raw)?,
        None => pool,
    };
    Ok(MergeContext {
        hash: experiment.as_ref().map(ExperimentConfig::hash),
        cfg,
        budget,
        opt_data,
        eval_data,
        experiment,
    })
}

fn load_checked(path: &Path, ctx: &MergeContext, force: bool) -> Result<ModelParams> {
    let (model, prov) = load_model(path)?;
    if let Some(h) = &ctx.hash {
        prov.check_hash(h, force).map_err(|e| match e {
            Error::Input(m) => Error::input(format!("{}: {m}", path.display())),
            other => other,
        })?;
    }
    Ok(model)
}

fn cmd_merge(args: &MergeArgs) -> Result<()> {
    let s = &args.settings;
    let ctx = merge_context(s)?;
    let a = load_checked(&args.ckpt_a, &ctx, s.force)?;
    let b = load_checked(&args.ckpt_b, &ctx, s.force)?;
    a.check_congruent(&b)?;
    let alignment = args
        .align
        .map(Alignment::from)
        .or(ctx.experiment.as_ref().map(|e| e.alignment))
        .unwrap_or(Alignment::Permute);
    let method = args
        .method
        .map(MergeMethod::from)
        .or(ctx.experiment.as_ref().map(|e| e.method))
        .unwrap_or(MergeMethod::Np);
    let hash = ctx.hash.unwrap_or_default();
    let result = merge_pair(&MergeJob {
        a: &a,
        b: &b,
        alignment,
        method,
        alpha: args.alpha,
        opt_data: &ctx.opt_data,
        eval_data: &ctx.eval_data,
        cfg: &ctx.cfg,
        budget: ctx.budget,
        config_hash: hex(&hash),
    })?;
    create_dir(&s.out)?;
    let note = format!(
        "merge {} {} + {}",
        method.label(),
        args.ckpt_a.display(),
        args.ckpt_b.display()
    );
    let prov = Provenance::new(ctx.cfg.seed, hash, note);
    if let Some(m) = &result.model {
        save_model(&s.out.join("merged.npmk"), m, prov.clone())?;
    }
    if let Some(perms) = result.perms {
        let payload = Payload::Permutations {
            spec: a.spec().clone(),
            perms,
        };
        checkpoint::save(
            &s.out.join("perms.npmk"),
            &Checkpoint {
                payload,
                provenance: prov.clone(),
            },
        )?;
    }
    if let Some(alphas) = result.alphas {
        let payload = Payload::Alphas {
            spec: a.spec().clone(),
            alphas,
        };
        checkpoint::save(
            &s.out.join("alphas.npmk"),
            &Checkpoint {
                payload,
                provenance: prov,
            },
        )?;
    }
    result.report.save_json(&s.out.join("report.json"))?;
    append_csv(&s.out.join("report.csv"), &result.report.row())?;
    let r = &result.report;
    println!(
        "{} ({}): accuracy {:.4} loss {:.4} [endpoints {:.4} / {:.4}]",
        r.method, r.prior, r.accuracy, r.loss, r.pre_accuracy[0], r.pre_accuracy[1]
    );
    if let Some(alpha) = r.alpha {
        println!(
            "alpha mean {:.4} std {:.4} within [0.4, 0.6]: {:.3}",
            alpha.mean, alpha.std, alpha.frac_near_half
        );
    }
    Ok(())
}

fn cmd_barrier(args: &BarrierArgs) -> Result<()> {
    let (a, _) = load_model(&args.ckpt_a)?;
    let (b, _) = load_model(&args.ckpt_b)?;
    a.check_congruent(&b)?;
    let data = load_prefix(&args.data, !args.raw)?;
    let probe = match &args.probe_data {
        Some(p) => load_prefix(p, !args.raw)?,
        None => data.clone(),
    };
    let (b_aligned, _) = align_pair(&a, &b, args.align.into(), &probe, 256, args.seed)?;
    let r = barrier(&a, &b_aligned, &data, args.points, Some(probe.features()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    let mut w = csv::Writer::from_path(&args.out)?;
    for p in &r.curve {
        w.serialize(p)?;
    }
    w.flush().map_err(|e| Error::io(&args.out, e))?;
    println!(
        "loss max {:.6} barrier {:.6}; accuracy min {:.4} barrier {:.4}",
        r.loss_max, r.loss_barrier, r.acc_min, r.acc_barrier
    );
    Ok(())
}

#[derive(Serialize)]
struct SizeRow {
    m: usize,
    method: String,
    accuracy: f64,
    loss: f64,
    alpha_epochs: usize,
}

fn cmd_multimerge(args: &MultimergeArgs) -> Result<()> {
    let s = &args.settings;
    let ctx = merge_context(s)?;
    let models = args
        .ckpts
        .iter()
        .map(|p| load_checked(p, &ctx, s.force))
        .collect::<Result<Vec<_>>>()?;
    if let Some(i) = models.iter().position(|m| m.spec() != models[0].spec()) {
        return Err(Error::dim(format!(
            "{} has a different architecture from {}",
            args.ckpts[i].display(),
            args.ckpts[0].display()
        )));
    }
    create_dir(&s.out)?;
    let hash = ctx.hash.unwrap_or_default();
    let mut sizes: Vec<usize> = args
        .sizes
        .iter()
        .copied()
        .filter(|&m| m >= 2 && m <= models.len())
        .collect();
    if !sizes.contains(&models.len()) {
        sizes.push(models.len());
    }
    sizes.sort_unstable();
    sizes.dedup();
    let rows: Vec<Vec<SizeRow>> = sizes
        .par_iter()
        .map(|&m| {
            let subset = &models[..m];
            let tree = pairwise_merge_tree(subset, &ctx.opt_data, &ctx.cfg, args.pairing_seed)?;
            let baseline = all_to_one_average(subset, 0, &ctx.opt_data, true, ctx.cfg.batch_size)?;
            let te = evaluate(&tree.model, &ctx.eval_data)?;
            let be = evaluate(&baseline, &ctx.eval_data)?;
            if m == models.len() {
                let prov = Provenance::new(ctx.cfg.seed, hash, format!("multimerge m={m}"));
                save_model(&s.out.join("final.npmk"), &tree.model, prov.clone())?;
                save_model(&s.out.join("all_to_one.npmk"), &baseline, prov)?;
                let mut t = tree.tree.clone();
                for (i, node) in t.nodes.iter_mut().enumerate() {
                    if i < m {
                        node.checkpoint = Some(args.ckpts[i].display().to_string());
                    } else if i == t.root {
                        node.checkpoint = Some("final.npmk".into());
                    }
                }
                write_json(&s.out.join("tree.json"), &t)?;
                write_json(&s.out.join("pair_reports.json"), &tree.reports)?;
            }
            Ok(vec![
                SizeRow {
                    m,
                    method: "np_tree".into(),
                    accuracy: te.accuracy,
                    loss: te.loss,
                    alpha_epochs: tree.tree.total_alpha_epochs,
                },
                SizeRow {
                    m,
                    method: "all_to_one".into(),
                    accuracy: be.accuracy,
                    loss: be.loss,
                    alpha_epochs: 0,
                },
            ])
        })
        .collect::<Result<_>>()?;
    let path = s.out.join("accuracy_vs_m.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in rows.iter().flatten() {
        w.serialize(r)?;
        println!("m={} {:<10} accuracy {:.4}", r.m, r.method, r.accuracy);
    }
    w.flush().map_err(|e| Error::io(&path, e))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (model, _) = load_model(&args.ckpt)?;
    let data = load_prefix(&args.data, !args.raw)?;
    let e = evaluate(&model, &data)?;
    println!("{}", serde_json::to_string(&e)?);
    Ok(())
}

fn cmd_split(args: &SplitArgs) -> Result<()> {
    let data = load_prefix(&args.data, !args.raw)?;
    let spec = match (&args.config, args.kind) {
        (Some(path), _) => ExperimentConfig::load(path)?.task.split.ok_or_else(|| Error::Config {
            field: "task.split".into(),
            message: "the config defines no split".into(),
        })?,
        (None, Some(SplitKind::EightyTwenty)) => SplitSpec::EightyTwenty {
            majority_fraction: 0.8,
            seed: args.seed,
        },
        (None, Some(SplitKind::Dirichlet)) => SplitSpec::Dirichlet {
            alphas: args.alphas.clone(),
            seed: args.seed,
        },
        (None, Some(SplitKind::PerClass)) => SplitSpec::PerClassSubsample {
            k: args.k.ok_or_else(|| Error::input("--kind per-class needs --k"))?,
            seed: args.seed,
        },
        (None, None) => return Err(Error::input("give --kind or --config")),
    };
    let parts = spec.apply(&data)?;
    for (j, part) in parts.iter().enumerate() {
        let (images, labels) = idx_paths(&PathBuf::from(format!("{}-part{j}", args.out.display())));
        if let Some(dir) = images.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        save_idx(part, &images, &labels)?;
        println!(
            "part {j}: {} examples, class counts {:?}",
            part.len(),
            part.class_counts()
        );
    }
    Ok(())
}

/// Every `MergeReport` JSON below `dir`, sorted by (method, seed, prior,
/// budget).
pub fn collect_reports(dir: &Path) -> Result<Vec<MergeReport>> {
    fn walk(dir: &Path, out: &mut Vec<MergeReport>) -> Result<()> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
            .collect::<Result<_>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.extension().is_some_and(|e| e == "json") {
                let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                if let Ok(r) = serde_json::from_str::<MergeReport>(&text) {
                    out.push(r);
                }
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, &mut out)?;
    out.sort_by(|x, y| (&x.method, x.seed, &x.prior, &x.opt_budget).cmp(&(&y.method, y.seed, &y.prior, &y.opt_budget)));
    Ok(out)
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let reports = collect_reports(&args.dir)?;
    let rows: Vec<ReportRow> = reports.iter().map(MergeReport::row).collect();
    let out = args.out.clone().unwrap_or_else(|| args.dir.join("summary.csv"));
    write_csv(&out, &rows)?;
    print!("{}", fs::read_to_string(&out).map_err(|e| Error::io(&out, e))?);
    Ok(())
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = MixtureSpec {
        classes: args.classes,
        modes_per_class: args.modes,
        per_class: args.train_per_class + args.test_per_class,
        dims: args.dims,
        spread: args.spread,
        seed: args.seed,
    };
    if args.train_per_class == 0 || args.test_per_class == 0 {
        return Err(Error::input("train and test sizes per class must be positive"));
    }
    let all = synth_mixture(&spec)?;
    let total = spec.per_class;
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for c in 0..args.classes {
        tr.extend(c * total..c * total + args.train_per_class);
        te.extend(c * total + args.train_per_class..(c + 1) * total);
    }
    for (name, idx) in [("train", tr), ("test", te)] {
        let part = all.subset(&idx, name)?;
        let (images, labels) = idx_paths(&PathBuf::from(format!("{}-{name}", args.out.display())));
        if let Some(dir) = images.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        save_idx(&part, &images, &labels)?;
    }
    println!("wrote {}-train and {}-test", args.out.display(), args.out.display());
    Ok(())
}
