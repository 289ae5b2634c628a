//! Merging more than two models: successive pairwise merges arranged as a
//! binary tree, and the all-to-one averaging baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::align::{align_permute, apply_alignment};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::merge::{np_optimize, AlphaStats, InvariantCounts, MergeConfig};
use crate::nn::{bn_reset, ModelParams};
use crate::numerics::Rng;

/// A leaf (input model) or the result of merging two earlier nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeNode {
    pub id: usize,
    /// Reference side of the merge; the right child is aligned onto it.
    pub left: Option<usize>,
    pub right: Option<usize>,
    /// 0 for leaves, otherwise the round that produced the node.
    pub round: usize,
    pub method: String,
    pub seed: u64,
    pub checkpoint: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeTree {
    pub leaves: usize,
    /// Leaves first (ids `0..leaves`), then internal nodes in creation order.
    pub nodes: Vec<MergeNode>,
    /// Per round, the node ids in the order the seeded shuffle produced.
    pub pairings: Vec<Vec<usize>>,
    pub pairing_seed: u64,
    pub root: usize,
    pub total_alpha_epochs: usize,
}

impl MergeTree {
    pub fn rounds(&self) -> usize {
        self.pairings.len()
    }

    /// Leaf ids reachable from `id`, ascending.
    pub fn leaves_under(&self, id: usize) -> Vec<usize> {
        let node = &self.nodes[id];
        match (node.left, node.right) {
            (Some(l), Some(r)) => {
                let mut v = self.leaves_under(l);
                v.extend(self.leaves_under(r));
                v.sort_unstable();
                v
            }
            _ => vec![id],
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Diagnostics of one internal node's coefficient search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub node: usize,
    pub loss_curve: Vec<f64>,
    pub alpha: AlphaStats,
    pub invariants: InvariantCounts,
}

#[derive(Clone, Debug)]
pub struct TreeOutcome {
    pub model: ModelParams,
    pub tree: MergeTree,
    pub reports: Vec<PairReport>,
}

fn check_models(models: &[ModelParams]) -> Result<()> {
    if models.len() < 2 {
        return Err(Error::input(format!("need at least two models, got {}", models.len())));
    }
    if let Some(i) = models.iter().position(|m| m.spec() != models[0].spec()) {
        return Err(Error::input(format!(
            "model {i} has a different architecture from model 0"
        )));
    }
    Ok(())
}

/// Aligns `b` onto `a` by activation matching on `opt_data`, then learns
/// per-parameter coefficients.
pub fn align_and_np(
    a: &ModelParams,
    b: &ModelParams,
    opt_data: &LabeledDataset,
    cfg: &MergeConfig,
) -> Result<crate::merge::NpOutcome> {
    let perms = align_permute(a, b, opt_data, cfg.batch_size)?;
    let aligned = apply_alignment(b, &perms)?;
    np_optimize(a, &aligned, opt_data, cfg)
}

/// Rounds of seeded random pairing; each pair is aligned and merged with the
/// same `cfg` and `opt_data`. With an odd count the last model of the
/// shuffled round is carried forward unmerged. Within a pair the node with
/// the lower id is the reference.
pub fn pairwise_merge_tree(
    models: &[ModelParams],
    opt_data: &LabeledDataset,
    cfg: &MergeConfig,
    seed: u64,
) -> Result<TreeOutcome> {
    check_models(models)?;
    cfg.validate()?;
    let m = models.len();
    let mut nodes: Vec<MergeNode> = (0..m)
        .map(|id| MergeNode {
            id,
            left: None,
            right: None,
            round: 0,
            method: "input".into(),
            seed,
            checkpoint: None,
        })
        .collect();
    let mut current: Vec<(usize, ModelParams)> = models.iter().cloned().enumerate().collect();
    let mut rng = Rng::new(seed);
    let mut pairings = Vec::new();
    let mut reports = Vec::new();
    while current.len() > 1 {
        let round = pairings.len() + 1;
        rng.shuffle(&mut current);
        pairings.push(current.iter().map(|(id, _)| *id).collect());
        let carry = if current.len() % 2 == 1 { current.pop() } else { None };
        let pairs: Vec<_> = current
            .chunks(2)
            .map(|p| {
                let (x, y) = (&p[0], &p[1]);
                if x.0 < y.0 {
                    (x, y)
                } else {
                    (y, x)
                }
            })
            .collect();
        let merged = pairs
            .par_iter()
            .map(|(a, b)| align_and_np(&a.1, &b.1, opt_data, cfg))
            .collect::<Result<Vec<_>>>()?;
        let mut next = Vec::with_capacity(pairs.len() + 1);
        for ((a, b), out) in pairs.iter().zip(merged) {
            let id = nodes.len();
            nodes.push(MergeNode {
                id,
                left: Some(a.0),
                right: Some(b.0),
                round,
                method: "np".into(),
                seed: cfg.seed,
                checkpoint: None,
            });
            reports.push(PairReport {
                node: id,
                alpha: out.alphas.stats(),
                loss_curve: out.loss_curve,
                invariants: out.invariants,
            });
            next.push((id, out.merged));
        }
        next.extend(carry);
        current = next;
    }
    let (root, model) = current.pop().expect("one model remains");
    let tree = MergeTree {
        leaves: m,
        total_alpha_epochs: (m - 1) * cfg.epochs,
        nodes,
        pairings,
        pairing_seed: seed,
        root,
    };
    Ok(TreeOutcome { model, tree, reports })
}

/// Aligns every model onto `models[reference]` and averages all of them with
/// equal weight; optionally recomputes BatchNorm statistics on `probe`.
pub fn all_to_one_average(
    models: &[ModelParams],
    reference: usize,
    probe: &LabeledDataset,
    with_bn_reset: bool,
    batch_size: usize,
) -> Result<ModelParams> {
    check_models(models)?;
    let anchor = models.get(reference).ok_or_else(|| {
        Error::input(format!(
            "reference index {reference} out of range for {} models",
            models.len()
        ))
    })?;
    let mut ordered = models
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != reference)
        .map(|(_, b)| align_permute(anchor, b, probe, batch_size).and_then(|p| apply_alignment(b, &p)))
        .collect::<Result<Vec<_>>>()?;
    ordered.push(anchor.clone());
    let mut mean = ordered[0].clone();
    for (c, next) in ordered.iter().enumerate().skip(1) {
        // running mean: new = old + (x − old)/(c + 1), as a two-point merge
        mean = crate::merge::uniform_merge(next, &mean, 1.0 / (c + 1) as f64)?;
    }
    if with_bn_reset {
        mean = bn_reset(&mean, probe.features(), batch_size)?.0;
    }
    Ok(mean)
}
