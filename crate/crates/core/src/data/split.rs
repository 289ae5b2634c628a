//! Partitioning a dataset between models, and per-class subsampling of the
//! optimisation data.
//!
//! Every splitter works on row indices first ([`Partition`]) and only then
//! materialises datasets, so rows are moved, never transformed.

use serde::{Deserialize, Serialize};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// Disjoint index sets, each sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub parts: Vec<Vec<usize>>,
}

impl Partition {
    /// True when the parts are disjoint and together cover `0..n`.
    pub fn covers(&self, n: usize) -> bool {
        let mut seen = vec![false; n];
        for &i in self.parts.iter().flatten() {
            if i >= n || seen[i] {
                return false;
            }
            seen[i] = true;
        }
        seen.into_iter().all(|s| s)
    }

    pub fn materialize(&self, ds: &LabeledDataset, label: &str) -> Result<Vec<LabeledDataset>> {
        self.parts
            .iter()
            .enumerate()
            .map(|(j, idx)| {
                if idx.is_empty() {
                    return Err(Error::input(format!("{label}: part {j} received no examples")));
                }
                ds.subset(idx, &format!("{label} part {j}"))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SplitSpec {
    /// The first ⌈C/2⌉ classes send `majority_fraction` of their examples to
    /// part 0, the remaining classes send `1 − majority_fraction`; part 1
    /// receives the complement.
    EightyTwenty {
        #[serde(default = "default_majority")]
        majority_fraction: f64,
        seed: u64,
    },
    /// Per-class proportions drawn from Dirichlet(alphas), one fresh draw per
    /// class; one part per alpha.
    Dirichlet { alphas: Vec<f64>, seed: u64 },
    /// Exactly `k` examples per class, a single part.
    PerClassSubsample { k: usize, seed: u64 },
}

fn default_majority() -> f64 {
    0.8
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("split.{field}"),
                message: message.into(),
            })
        };
        match self {
            SplitSpec::EightyTwenty { majority_fraction, .. } => {
                if !(*majority_fraction > 0.0 && *majority_fraction < 1.0) {
                    return bad("majority_fraction", "must lie in (0, 1)");
                }
            }
            SplitSpec::Dirichlet { alphas, .. } => {
                if alphas.len() < 2 {
                    return bad("alphas", "need at least two parts");
                }
                if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
                    return bad("alphas", "every alpha must be positive and finite");
                }
            }
            SplitSpec::PerClassSubsample { k, .. } => {
                if *k == 0 {
                    return bad("k", "must be at least 1");
                }
            }
        }
        Ok(())
    }

    pub fn num_parts(&self) -> usize {
        match self {
            SplitSpec::EightyTwenty { .. } => 2,
            SplitSpec::Dirichlet { alphas, .. } => alphas.len(),
            SplitSpec::PerClassSubsample { .. } => 1,
        }
    }

    pub fn partition(&self, ds: &LabeledDataset) -> Result<Partition> {
        self.validate()?;
        match self {
            SplitSpec::EightyTwenty {
                majority_fraction,
                seed,
            } => eighty_twenty_partition(ds, *majority_fraction, *seed),
            SplitSpec::Dirichlet { alphas, seed } => dirichlet_partition(ds, alphas, *seed),
            SplitSpec::PerClassSubsample { k, seed } => subsample_partition(ds, *k, *seed),
        }
    }

    pub fn apply(&self, ds: &LabeledDataset) -> Result<Vec<LabeledDataset>> {
        let label = match self {
            SplitSpec::EightyTwenty { seed, .. } => format!("80/20 seed={seed}"),
            SplitSpec::Dirichlet { alphas, seed } => format!("dirichlet{alphas:?} seed={seed}"),
            SplitSpec::PerClassSubsample { k, seed } => format!("{k}/class seed={seed}"),
        };
        self.partition(ds)?.materialize(ds, &label)
    }
}

/// Shuffled copy of each class's row indices.
fn shuffled_classes(ds: &LabeledDataset, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut classes = ds.class_indices();
    for c in classes.iter_mut() {
        rng.shuffle(c);
    }
    classes
}

fn finish(mut parts: Vec<Vec<usize>>) -> Partition {
    parts.iter_mut().for_each(|p| p.sort_unstable());
    Partition { parts }
}

pub fn eighty_twenty_partition(ds: &LabeledDataset, majority_fraction: f64, seed: u64) -> Result<Partition> {
    let counts = ds.class_counts();
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < 5) {
        return Err(Error::input(format!(
            "class {c} has {n} examples; the 80/20 split needs at least 5"
        )));
    }
    let mut rng = Rng::new(seed);
    let majority = ds.num_classes().div_ceil(2);
    let mut parts = vec![Vec::new(), Vec::new()];
    for (c, idx) in shuffled_classes(ds, &mut rng).into_iter().enumerate() {
        let frac = if c < majority {
            majority_fraction
        } else {
            1.0 - majority_fraction
        };
        let take = ((frac * idx.len() as f64) + 1e-9).floor() as usize;
        parts[0].extend_from_slice(&idx[..take]);
        parts[1].extend_from_slice(&idx[take..]);
    }
    Ok(finish(parts))
}

pub fn split_eighty_twenty(ds: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    let mut parts = SplitSpec::EightyTwenty {
        majority_fraction: 0.8,
        seed,
    }
    .apply(ds)?;
    let b = parts.pop().unwrap();
    let a = parts.pop().unwrap();
    Ok((a, b))
}

pub fn dirichlet_partition(ds: &LabeledDataset, alphas: &[f64], seed: u64) -> Result<Partition> {
    if alphas.len() < 2 || alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
        return Err(Error::input("dirichlet split needs at least two positive alphas"));
    }
    let mut rng = Rng::new(seed);
    let m = alphas.len();
    let mut parts = vec![Vec::new(); m];
    for idx in shuffled_classes(ds, &mut rng) {
        let p = rng.dirichlet(alphas);
        let n = idx.len();
        let mut start = 0;
        for (j, part) in parts.iter_mut().enumerate() {
            let take = if j + 1 == m {
                n - start
            } else {
                ((p[j] * n as f64).floor() as usize).min(n - start)
            };
            part.extend_from_slice(&idx[start..start + take]);
            start += take;
        }
    }
    Ok(finish(parts))
}

pub fn split_dirichlet(ds: &LabeledDataset, alphas: &[f64], seed: u64) -> Result<Vec<LabeledDataset>> {
    SplitSpec::Dirichlet {
        alphas: alphas.to_vec(),
        seed,
    }
    .apply(ds)
}

pub fn subsample_partition(ds: &LabeledDataset, k: usize, seed: u64) -> Result<Partition> {
    if k == 0 {
        return Err(Error::input("k must be at least 1"));
    }
    let counts = ds.class_counts();
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n < k) {
        return Err(Error::input(format!("class {c} has only {n} examples, {k} requested")));
    }
    let mut rng = Rng::new(seed);
    let mut chosen = Vec::with_capacity(k * counts.len());
    for idx in shuffled_classes(ds, &mut rng) {
        chosen.extend_from_slice(&idx[..k]);
    }
    Ok(finish(vec![chosen]))
}

/// `k` examples of every class, chosen uniformly without replacement.
pub fn subsample_per_class(ds: &LabeledDataset, k: usize, seed: u64) -> Result<LabeledDataset> {
    let p = subsample_partition(ds, k, seed)?;
    ds.subset(&p.parts[0], &format!("{k}/class seed={seed}"))
}
