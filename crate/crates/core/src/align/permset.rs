use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::numerics::{Permutation, Rng};

/// One permutation per hidden layer. The output layer is never permuted.
///
/// Serialised as a JSON object keyed by 1-based layer index.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "BTreeMap<usize, Permutation>", try_from = "BTreeMap<usize, Permutation>")]
pub struct PermutationSet {
    perms: Vec<Permutation>,
}

impl PermutationSet {
    pub fn new(perms: Vec<Permutation>) -> Self {
        Self { perms }
    }

    pub fn identity(model: &ModelParams) -> Self {
        let w = &model.spec().widths;
        Self::new(w[1..w.len() - 1].iter().map(|&n| Permutation::identity(n)).collect())
    }

    pub fn random(model: &ModelParams, rng: &mut Rng) -> Self {
        let w = &model.spec().widths;
        Self::new(w[1..w.len() - 1].iter().map(|&n| Permutation::random(n, rng)).collect())
    }

    pub fn perms(&self) -> &[Permutation] {
        &self.perms
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.perms.iter().all(Permutation::is_identity)
    }

    pub fn inverse(&self) -> Self {
        Self::new(self.perms.iter().map(Permutation::inverse).collect())
    }

    /// Layer-wise `self ∘ inner`: applying the result equals applying
    /// `inner` and then `self`.
    pub fn compose(&self, inner: &PermutationSet) -> Result<Self> {
        if self.len() != inner.len() {
            return Err(Error::dim(format!(
                "composing {} with {} layer permutations",
                self.len(),
                inner.len()
            )));
        }
        let perms = self
            .perms
            .iter()
            .zip(&inner.perms)
            .map(|(p, q)| p.compose(q))
            .collect::<Result<_>>()?;
        Ok(Self::new(perms))
    }

    pub fn check_fits(&self, model: &ModelParams) -> Result<()> {
        let w = &model.spec().widths;
        let hidden = &w[1..w.len() - 1];
        if self.len() != hidden.len() {
            return Err(Error::dim(format!(
                "{} layer permutations for a model with {} hidden layers",
                self.len(),
                hidden.len()
            )));
        }
        for (i, (p, &n)) in self.perms.iter().zip(hidden).enumerate() {
            if p.len() != n {
                return Err(Error::dim(format!(
                    "layer {}: permutation of length {} for width {n}",
                    i + 1,
                    p.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl From<PermutationSet> for BTreeMap<usize, Permutation> {
    fn from(set: PermutationSet) -> Self {
        set.perms.into_iter().enumerate().map(|(i, p)| (i + 1, p)).collect()
    }
}

impl TryFrom<BTreeMap<usize, Permutation>> for PermutationSet {
    type Error = String;

    fn try_from(map: BTreeMap<usize, Permutation>) -> std::result::Result<Self, String> {
        let mut perms = Vec::with_capacity(map.len());
        for (expected, (layer, p)) in (1..).zip(map) {
            if layer != expected {
                return Err(format!(
                    "layer keys must be 1, 2, …; found {layer} where {expected} was expected"
                ));
            }
            perms.push(p);
        }
        Ok(Self { perms })
    }
}

/// Relabels the hidden neurons of `model`: neuron `i` of layer `l` in the
/// result is neuron `perms[l][i]` of the input. Incoming rows, biases and
/// BatchNorm vectors move with their neuron and the next layer's columns are
/// permuted to match, so the function is unchanged.
pub fn apply_alignment(model: &ModelParams, perms: &PermutationSet) -> Result<ModelParams> {
    perms.check_fits(model)?;
    let mut out = model.clone();
    let hidden = perms.len();
    for (l, layer) in out.layers_mut().iter_mut().enumerate() {
        if l > 0 {
            layer.weight = layer.weight.permute_cols(&perms.perms[l - 1])?;
        }
        if l < hidden {
            let p = &perms.perms[l];
            layer.weight = layer.weight.permute_rows(p)?;
            layer.bias = layer.bias.permute_rows(p)?;
            if let Some(bn) = layer.bn.as_mut() {
                bn.gamma = bn.gamma.permute_rows(p)?;
                bn.beta = bn.beta.permute_rows(p)?;
                bn.running_mean = bn.running_mean.permute_rows(p)?;
                bn.running_var = bn.running_var.permute_rows(p)?;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{predict, MlpSpec};
    use crate::numerics::Tensor;

    fn model(bn: bool, seed: u64) -> ModelParams {
        let spec = MlpSpec::uniform(&[5, 7, 6, 3], bn).unwrap();
        let mut rng = Rng::new(seed);
        let mut m = ModelParams::init(&spec, &mut rng);
        // non-trivial BN state so that permuting it matters
        for layer in m.layers_mut() {
            if let Some(bn) = layer.bn.as_mut() {
                for t in [&mut bn.gamma, &mut bn.beta, &mut bn.running_mean] {
                    t.data_mut().iter_mut().for_each(|v| *v += rng.normal());
                }
                bn.running_var
                    .data_mut()
                    .iter_mut()
                    .for_each(|v| *v = 0.5 + rng.uniform());
            }
        }
        m
    }

    #[test]
    fn identity_is_bitwise_noop() {
        let m = model(true, 1);
        let out = apply_alignment(&m, &PermutationSet::identity(&m)).unwrap();
        assert_eq!(out, m);
    }

    #[test]
    fn inverse_restores_bitwise() {
        let m = model(true, 2);
        let p = PermutationSet::random(&m, &mut Rng::new(3));
        let there = apply_alignment(&m, &p).unwrap();
        assert_ne!(there, m);
        assert_eq!(apply_alignment(&there, &p.inverse()).unwrap(), m);
    }

    #[test]
    fn composition_matches_sequential_application() {
        let m = model(false, 4);
        let mut rng = Rng::new(5);
        let p = PermutationSet::random(&m, &mut rng);
        let q = PermutationSet::random(&m, &mut rng);
        let seq = apply_alignment(&apply_alignment(&m, &q).unwrap(), &p).unwrap();
        // applying q then p: neuron i of the result is neuron q[p[i]]
        assert_eq!(apply_alignment(&m, &p.compose(&q).unwrap()).unwrap(), seq);
    }

    #[test]
    fn function_preserved_with_and_without_bn() {
        for bn in [false, true] {
            let m = model(bn, 6);
            let mut rng = Rng::new(7);
            let x = Tensor::new(vec![64, 5], (0..320).map(|_| rng.normal()).collect()).unwrap();
            let p = PermutationSet::random(&m, &mut rng);
            let aligned = apply_alignment(&m, &p).unwrap();
            let diff = predict(&m, &x)
                .unwrap()
                .max_abs_diff(&predict(&aligned, &x).unwrap())
                .unwrap();
            assert!(diff <= 1e-9, "bn={bn}: {diff}");
        }
    }

    #[test]
    fn wrong_lengths_are_dimension_errors() {
        let m = model(false, 8);
        let short = PermutationSet::new(vec![Permutation::identity(7)]);
        assert!(matches!(apply_alignment(&m, &short), Err(Error::Dimension(_))));
        let wrong = PermutationSet::new(vec![Permutation::identity(7), Permutation::identity(5)]);
        assert!(matches!(apply_alignment(&m, &wrong), Err(Error::Dimension(_))));
    }

    #[test]
    fn json_keyed_by_layer() {
        let set = PermutationSet::new(vec![Permutation::new(vec![1, 0, 2]).unwrap(), Permutation::identity(2)]);
        let json = serde_json::to_value(&set).unwrap();
        assert_eq!(json, serde_json::json!({"1": [1, 0, 2], "2": [0, 1]}));
        assert_eq!(PermutationSet::from_json(&set.to_json().unwrap()).unwrap(), set);
        assert!(PermutationSet::from_json(r#"{"2": [0, 1]}"#).is_err());
        assert!(PermutationSet::from_json(r#"{"1": [0, 0]}"#).is_err());
    }
}
