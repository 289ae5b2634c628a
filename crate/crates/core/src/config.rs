//! Experiment configuration files (TOML).
//!
//! Every section except `task` and `architecture` is optional; omitted
//! values fall back to the defaults of the respective types, so a bare
//! config reproduces the reference protocol (Adam, learning rate 0.01,
//! 10 coefficient epochs, α initialised at 0.5).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::sha256;
use crate::data::{load_idx, synth_mixture, LabeledDataset, MixtureSpec, SplitSpec};
use crate::error::{Error, Result};
use crate::merge::MergeConfig;
use crate::nn::{MlpSpec, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    None,
    Permute,
    WeightMatching,
}

impl Alignment {
    pub fn label(self) -> &'static str {
        match self {
            Alignment::None => "none",
            Alignment::Permute => "permute",
            Alignment::WeightMatching => "weight_matching",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MergeMethod {
    DirectAvg,
    Uniform,
    Np,
    Finetune,
    Ensemble,
}

impl MergeMethod {
    pub fn label(self) -> &'static str {
        match self {
            MergeMethod::DirectAvg => "direct_avg",
            MergeMethod::Uniform => "uniform",
            MergeMethod::Np => "np",
            MergeMethod::Finetune => "finetune",
            MergeMethod::Ensemble => "ensemble",
        }
    }
}

/// How much labelled data the merge phase may use.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BudgetRepr", into = "BudgetRepr")]
pub enum OptBudget {
    #[default]
    Full,
    PerClass(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BudgetRepr {
    Label(String),
    PerClass(usize),
}

impl TryFrom<BudgetRepr> for OptBudget {
    type Error = String;

    fn try_from(r: BudgetRepr) -> std::result::Result<Self, String> {
        match r {
            BudgetRepr::PerClass(0) => Err("per-class budget must be at least 1".into()),
            BudgetRepr::PerClass(k) => Ok(OptBudget::PerClass(k)),
            BudgetRepr::Label(s) => s.parse(),
        }
    }
}

impl From<OptBudget> for BudgetRepr {
    fn from(b: OptBudget) -> Self {
        match b {
            OptBudget::Full => BudgetRepr::Label("full".into()),
            OptBudget::PerClass(k) => BudgetRepr::PerClass(k),
        }
    }
}

impl std::str::FromStr for OptBudget {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "full" {
            return Ok(OptBudget::Full);
        }
        match s.parse::<usize>() {
            Ok(k) if k > 0 => Ok(OptBudget::PerClass(k)),
            _ => Err(format!(
                "budget must be `full` or a positive per-class count, got `{s}`"
            )),
        }
    }
}

impl std::fmt::Display for OptBudget {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OptBudget::Full => f.write_str("full"),
            OptBudget::PerClass(k) => write!(f, "{k}"),
        }
    }
}

impl OptBudget {
    /// The merge-phase dataset drawn from `pool`.
    pub fn select(self, pool: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
        match self {
            OptBudget::Full => Ok(pool.clone()),
            OptBudget::PerClass(k) => crate::data::subsample_per_class(pool, k, seed),
        }
    }
}

/// Where the train and test sets come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// IDX pairs `PREFIX-images.idx` / `PREFIX-labels.idx`.
    Idx {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "yes")]
        normalize: bool,
    },
    /// Gaussian mixture; the first `mixture.per_class` draws of every class
    /// form the training set and the next `test_per_class` the test set.
    Synthetic {
        mixture: MixtureSpec,
        test_per_class: usize,
    },
}

fn yes() -> bool {
    true
}

pub fn idx_paths(prefix: &Path) -> (PathBuf, PathBuf) {
    let p = prefix.display();
    (
        PathBuf::from(format!("{p}-images.idx")),
        PathBuf::from(format!("{p}-labels.idx")),
    )
}

/// Loads the IDX pair behind `prefix`, naming the first missing file.
pub fn load_prefix(prefix: &Path, normalize: bool) -> Result<LabeledDataset> {
    let (images, labels) = idx_paths(prefix);
    for p in [&images, &labels] {
        if !p.exists() {
            return Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
            ));
        }
    }
    load_idx(&images, &labels, normalize)
}

impl DataSource {
    pub fn load(&self) -> Result<(LabeledDataset, LabeledDataset)> {
        match self {
            DataSource::Idx { train, test, normalize } => {
                let tr = load_prefix(train, *normalize)?;
                let te = load_prefix(test, *normalize)?;
                let classes = tr.num_classes().max(te.num_classes());
                Ok((tr.with_num_classes(classes)?, te.with_num_classes(classes)?))
            }
            DataSource::Synthetic {
                mixture,
                test_per_class,
            } => {
                let all = synth_mixture(&MixtureSpec {
                    per_class: mixture.per_class + test_per_class,
                    ..mixture.clone()
                })?;
                let total = mixture.per_class + test_per_class;
                let (mut tr, mut te) = (Vec::new(), Vec::new());
                for c in 0..mixture.classes {
                    tr.extend(c * total..c * total + mixture.per_class);
                    te.extend(c * total + mixture.per_class..(c + 1) * total);
                }
                Ok((all.subset(&tr, "train")?, all.subset(&te, "test")?))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub source: DataSource,
    /// How the training set is divided between models; absent means every
    /// model sees the full training set.
    #[serde(default)]
    pub split: Option<SplitSpec>,
}

/// BatchNorm on all hidden layers, none, or per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchNormSetting {
    All(bool),
    PerLayer(Vec<bool>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub widths: Vec<usize>,
    #[serde(default = "no_bn")]
    pub batchnorm: BatchNormSetting,
}

fn no_bn() -> BatchNormSetting {
    BatchNormSetting::All(false)
}

impl ArchitectureConfig {
    pub fn spec(&self) -> Result<MlpSpec> {
        let r = match &self.batchnorm {
            BatchNormSetting::All(b) => MlpSpec::uniform(&self.widths, *b),
            BatchNormSetting::PerLayer(v) => MlpSpec::new(self.widths.clone(), v.clone()),
        };
        r.map_err(|e| Error::Config {
            field: "architecture".into(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_alignment")]
    pub alignment: Alignment,
    #[serde(default = "default_method")]
    pub method: MergeMethod,
    #[serde(default)]
    pub merge: MergeConfig,
    #[serde(default)]
    pub opt_budget: OptBudget,
    /// Every model starts from the same initialisation (per seed).
    #[serde(default)]
    pub shared_init: bool,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
}

fn default_alignment() -> Alignment {
    Alignment::Permute
}

fn default_method() -> MergeMethod {
    MergeMethod::Np
}

fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config {
            field: e
                .span()
                .map(|s| locate_field(text, s.start))
                .unwrap_or_else(|| "<document>".into()),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates a config file; relative dataset paths are taken
    /// relative to the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        if let (DataSource::Idx { train, test, .. }, Some(dir)) = (&mut cfg.task.source, path.parent()) {
            for p in [train, test] {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        if cfg.output_dir.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.output_dir = dir.join(&cfg.output_dir);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str, m: String| Error::Config {
            field: f.into(),
            message: m,
        };
        if self.seeds.is_empty() {
            return Err(field("seeds", "at least one seed is required".into()));
        }
        self.architecture.spec()?;
        self.train.validate()?;
        self.merge.validate()?;
        if let Some(split) = &self.task.split {
            split.validate().map_err(|e| match e {
                Error::Config { field: f, message } => field(&format!("task.{f}"), message),
                other => other,
            })?;
        }
        if let DataSource::Synthetic {
            mixture,
            test_per_class,
        } = &self.task.source
        {
            if *test_per_class == 0 {
                return Err(field("task.source.test_per_class", "must be at least 1".into()));
            }
            if mixture.classes != self.architecture.widths.last().copied().unwrap_or(0) {
                return Err(field(
                    "architecture.widths",
                    format!("output width must equal the {} classes of the mixture", mixture.classes),
                ));
            }
        }
        Ok(())
    }

    /// Checks that every referenced dataset file exists.
    pub fn check_files(&self) -> Result<()> {
        if let DataSource::Idx { train, test, .. } = &self.task.source {
            for prefix in [train, test] {
                let (images, labels) = idx_paths(prefix);
                for p in [images, labels] {
                    if !p.exists() {
                        return Err(Error::io(
                            p,
                            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset file not found"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Canonical serialisation; its SHA-256 is the config hash stamped into
    /// checkpoints and reports.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> [u8; 32] {
        sha256(self.canonical().as_bytes())
    }
}

/// Dotted path of the table and key enclosing byte `offset`.
fn locate_field(text: &str, offset: usize) -> String {
    let mut table = String::new();
    let mut key = String::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        if pos > offset {
            break;
        }
        let t = line.trim();
        if t.starts_with('[') {
            table = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            key.clear();
        } else if let Some((k, _)) = t.split_once('=') {
            key = k.trim().to_string();
        }
        pos += line.len();
    }
    match (table.is_empty(), key.is_empty()) {
        (true, _) => key,
        (false, true) => table,
        (false, false) => format!("{table}.{key}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BARE: &str = r#"
seeds = [0, 1]

[task.source]
kind = "synthetic"
test_per_class = 10

[task.source.mixture]
classes = 3
modes_per_class = 2
per_class = 20
dims = 4
spread = 0.5
seed = 1

[architecture]
widths = [4, 8, 3]
batchnorm = true
"#;

    #[test]
    fn bare_config_gets_reference_defaults() {
        let cfg = ExperimentConfig::parse(BARE).unwrap();
        assert_eq!(cfg.merge, MergeConfig::default());
        assert_eq!(cfg.merge.learning_rate, 0.01);
        assert_eq!(cfg.merge.epochs, 10);
        assert_eq!(cfg.merge.alpha_init, 0.5);
        assert_eq!(cfg.alignment, Alignment::Permute);
        assert_eq!(cfg.method, MergeMethod::Np);
        assert_eq!(cfg.opt_budget, OptBudget::Full);
        assert!(cfg.architecture.spec().unwrap().has_batchnorm());
    }

    #[test]
    fn canonical_form_round_trips_and_hash_is_stable() {
        let cfg = ExperimentConfig::parse(BARE).unwrap();
        let again = ExperimentConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again, cfg);
        assert_eq!(again.hash(), cfg.hash());
        let other = ExperimentConfig::parse(&BARE.replace("seeds = [0, 1]", "seeds = [0]")).unwrap();
        assert_ne!(other.hash(), cfg.hash());
    }

    #[test]
    fn errors_name_the_field() {
        let cases = [
            (BARE.replace("seeds = [0, 1]", "seeds = []"), "seeds"),
            (
                format!("{BARE}\n[merge]\nlearning_rate = -1.0\n"),
                "merge.learning_rate",
            ),
            (format!("{BARE}\n[merge]\nlearnig_rate = 0.1\n"), "merge.learnig_rate"),
            (format!("{BARE}\n[merge]\nalpha_init = 1.5\n"), "merge.alpha_init"),
            (
                BARE.replace("widths = [4, 8, 3]", "widths = [4, 8, 5]"),
                "architecture.widths",
            ),
            (
                format!("{BARE}\n[task.split]\nkind = \"dirichlet\"\nalphas = [0.5]\nseed = 0\n"),
                "task.split.alphas",
            ),
        ];
        for (text, want) in cases {
            match ExperimentConfig::parse(&text) {
                Err(Error::Config { field, .. }) => assert_eq!(field, want, "{text}"),
                other => panic!("{want}: {other:?}"),
            }
        }
    }

    #[test]
    fn budget_forms() {
        assert_eq!("full".parse::<OptBudget>().unwrap(), OptBudget::Full);
        assert_eq!("5".parse::<OptBudget>().unwrap(), OptBudget::PerClass(5));
        assert!("0".parse::<OptBudget>().is_err());
        let cfg = ExperimentConfig::parse(&format!("opt_budget = 10\n{BARE}")).unwrap();
        assert_eq!(cfg.opt_budget, OptBudget::PerClass(10));
    }

    #[test]
    fn synthetic_source_splits_train_and_test() {
        let cfg = ExperimentConfig::parse(BARE).unwrap();
        let (tr, te) = cfg.task.source.load().unwrap();
        assert_eq!((tr.len(), te.len()), (60, 30));
        assert_eq!(tr.class_counts(), vec![20; 3]);
        assert_eq!(te.class_counts(), vec![10; 3]);
    }

    #[test]
    fn missing_files_are_reported() {
        let text = BARE.replace(
            "kind = \"synthetic\"\ntest_per_class = 10",
            "kind = \"idx\"\ntrain = \"/nonexistent/train\"\ntest = \"/nonexistent/test\"",
        );
        let text = text.replace("\n[task.source.mixture]\nclasses = 3\nmodes_per_class = 2\nper_class = 20\ndims = 4\nspread = 0.5\nseed = 1\n", "");
        let cfg = ExperimentConfig::parse(&text).unwrap();
        match cfg.check_files() {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("train-images.idx")),
            other => panic!("{other:?}"),
        }
    }
}
