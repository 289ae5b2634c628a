use super::activation::check_same_arch;
use super::permset::{apply_alignment, PermutationSet};
use crate::error::Result;
use crate::nn::ModelParams;
use crate::numerics::{lap_solve, Permutation, Rng, Sense, Tensor};

pub const DEFAULT_MAX_SWEEPS: usize = 100;

/// Minimum gain for a layer's new assignment to replace the current one.
/// Rejecting ties and round-off wins keeps the objective monotone and
/// guarantees termination.
const IMPROVEMENT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatching {
    pub perms: PermutationSet,
    /// Objective before the first sweep, then after each sweep.
    pub objective: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

/// `Σ ⟨θ_A, θ_B⟩` over weights, biases and BatchNorm scale/shift; equals the
/// sum of the per-layer assignment scores maximised by weight matching.
pub fn weight_inner_product(a: &ModelParams, b: &ModelParams) -> Result<f64> {
    a.check_congruent(b)?;
    a.trainable().iter().zip(b.trainable()).map(|(x, y)| x.dot(y)).sum()
}

/// Score `S[i, j]` of giving B-neuron `j` slot `i` in hidden layer `l`,
/// holding every other layer's permutation fixed.
fn layer_score(a: &ModelParams, b: &ModelParams, perms: &[Permutation], l: usize) -> Result<Tensor> {
    let (la, lb) = (&a.layers()[l], &b.layers()[l]);
    let w_in_b = match l {
        0 => lb.weight.clone(),
        _ => lb.weight.permute_cols(&perms[l - 1])?,
    };
    let mut s = la.weight.matmul_nt(&w_in_b)?;

    let (na, nb) = (&a.layers()[l + 1], &b.layers()[l + 1]);
    let w_out_b = match perms.get(l + 1) {
        Some(next) => nb.weight.permute_rows(next)?,
        None => nb.weight.clone(),
    };
    let out = na.weight.matmul_tn(&w_out_b)?;

    let mut vectors = vec![(&la.bias, &lb.bias)];
    if let (Some(ba), Some(bb)) = (&la.bn, &lb.bn) {
        vectors.push((&ba.gamma, &bb.gamma));
        vectors.push((&ba.beta, &bb.beta));
    }
    let n = s.rows();
    let data = s.data_mut();
    for (idx, v) in data.iter_mut().enumerate() {
        let (i, j) = (idx / n, idx % n);
        *v += out.data()[idx];
        for (va, vb) in &vectors {
            *v += va.data()[i] * vb.data()[j];
        }
    }
    Ok(s)
}

/// Coordinate ascent over hidden-layer permutations maximising the weight
/// inner product between A and the permuted B. Layers are visited in a
/// fresh seeded random order each sweep; the search stops after a sweep
/// that changes nothing or after `max_sweeps`.
pub fn weight_matching(a: &ModelParams, b: &ModelParams, max_sweeps: usize, seed: u64) -> Result<WeightMatching> {
    check_same_arch(a, b)?;
    let mut perms = PermutationSet::identity(b).perms().to_vec();
    let mut rng = Rng::new(seed);
    let mut objective = vec![weight_inner_product(a, b)?];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_sweeps {
        sweeps += 1;
        let mut order: Vec<usize> = (0..perms.len()).collect();
        rng.shuffle(&mut order);
        let mut changed = false;
        for l in order {
            let s = layer_score(a, b, &perms, l)?;
            let current: f64 = perms[l].as_slice().iter().enumerate().map(|(i, &j)| s.at(i, j)).sum();
            let best = lap_solve(&s, Sense::Maximize)?;
            if best.value > current + IMPROVEMENT_TOL * current.abs().max(1.0) {
                perms[l] = best.mapping;
                changed = true;
            }
        }
        let set = PermutationSet::new(perms.clone());
        objective.push(weight_inner_product(a, &apply_alignment(b, &set)?)?);
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(WeightMatching {
        perms: PermutationSet::new(perms),
        objective,
        sweeps,
        converged,
    })
}

pub fn align_weight_matching(a: &ModelParams, b: &ModelParams, max_sweeps: usize, seed: u64) -> Result<PermutationSet> {
    Ok(weight_matching(a, b, max_sweeps, seed)?.perms)
}
