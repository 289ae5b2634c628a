use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

pub const DEFAULT_BN_EPS: f64 = 1e-5;
pub const DEFAULT_BN_MOMENTUM: f64 = 0.1;

/// Architecture of a ReLU MLP: `widths = [n_0, n_1, …, n_L]`, with an
/// optional BatchNorm on each of the `L − 1` hidden layers (between the
/// affine map and the ReLU). The output layer is affine only.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    pub batchnorm: Vec<bool>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, batchnorm: Vec<bool>) -> Result<Self> {
        let spec = Self { widths, batchnorm };
        spec.validate()?;
        Ok(spec)
    }

    /// Same BatchNorm setting on every hidden layer.
    pub fn uniform(widths: &[usize], batchnorm: bool) -> Result<Self> {
        let hidden = widths.len().saturating_sub(2);
        Self::new(widths.to_vec(), vec![batchnorm; hidden])
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::input(format!(
                "an MLP needs at least one hidden layer, widths = {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::input("layer widths must be positive"));
        }
        if self.batchnorm.len() != self.widths.len() - 2 {
            return Err(Error::input(format!(
                "{} batchnorm flags for {} hidden layers",
                self.batchnorm.len(),
                self.widths.len() - 2
            )));
        }
        Ok(())
    }

    /// Number of affine layers `L`.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn num_hidden(&self) -> usize {
        self.widths.len() - 2
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn has_batchnorm(&self) -> bool {
        self.batchnorm.iter().any(|&b| b)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Tensor,
    pub beta: Tensor,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Tensor::filled(&[width], 1.0),
            beta: Tensor::zeros(&[width]),
            running_mean: Tensor::zeros(&[width]),
            running_var: Tensor::filled(&[width], 1.0),
            momentum: DEFAULT_BN_MOMENTUM,
            eps: DEFAULT_BN_EPS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[n_out × n_in]`
    pub weight: Tensor,
    /// `[n_out]`
    pub bias: Tensor,
    pub bn: Option<BatchNorm>,
}

/// Parameters of one MLP. Trainable tensors are enumerated in a fixed
/// order (per layer: weight, bias, then BatchNorm γ and β), which every
/// shape-congruent companion (gradients, optimiser moments, merge
/// coefficients) shares.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    spec: MlpSpec,
    layers: Vec<Layer>,
}

impl ModelParams {
    /// Checks every tensor against `spec`.
    pub fn from_layers(spec: MlpSpec, layers: Vec<Layer>) -> Result<Self> {
        spec.validate()?;
        if layers.len() != spec.num_layers() {
            return Err(Error::dim(format!(
                "{} layers for spec with {}",
                layers.len(),
                spec.num_layers()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
            if layer.weight.shape() != [n_out, n_in] {
                return Err(Error::dim(format!(
                    "layer {}: weight shape {:?}, expected [{n_out}, {n_in}]",
                    i + 1,
                    layer.weight.shape()
                )));
            }
            if layer.bias.shape() != [n_out] {
                return Err(Error::dim(format!(
                    "layer {}: bias shape {:?}",
                    i + 1,
                    layer.bias.shape()
                )));
            }
            let wants_bn = i < spec.num_hidden() && spec.batchnorm[i];
            match (&layer.bn, wants_bn) {
                (Some(bn), true) => {
                    for t in [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var] {
                        if t.shape() != [n_out] {
                            return Err(Error::dim(format!(
                                "layer {}: batchnorm vector shape {:?}",
                                i + 1,
                                t.shape()
                            )));
                        }
                    }
                    if bn.running_var.data().iter().any(|&v| v <= 0.0) {
                        return Err(Error::input(format!(
                            "layer {}: running variance must be positive",
                            i + 1
                        )));
                    }
                    if bn.eps.is_nan() || bn.eps <= 0.0 || !(0.0..=1.0).contains(&bn.momentum) {
                        return Err(Error::input(format!("layer {}: bad batchnorm scalars", i + 1)));
                    }
                }
                (None, false) => {}
                _ => {
                    return Err(Error::dim(format!(
                        "layer {}: batchnorm presence disagrees with spec",
                        i + 1
                    )))
                }
            }
            for t in layer_tensors(layer) {
                if !t.all_finite() {
                    return Err(Error::Numeric(format!("layer {}: non-finite parameter", i + 1)));
                }
            }
        }
        Ok(Self { spec, layers })
    }

    /// All-zero weights and biases, identity BatchNorm.
    pub fn zeros(spec: &MlpSpec) -> Self {
        let layers = (0..spec.num_layers())
            .map(|i| {
                let (n_in, n_out) = (spec.widths[i], spec.widths[i + 1]);
                Layer {
                    weight: Tensor::zeros(&[n_out, n_in]),
                    bias: Tensor::zeros(&[n_out]),
                    bn: (i < spec.num_hidden() && spec.batchnorm[i]).then(|| BatchNorm::identity(n_out)),
                }
            })
            .collect();
        Self {
            spec: spec.clone(),
            layers,
        }
    }

    /// He-style initialisation: weights `N(0, 2 / fan_in)` on hidden
    /// layers, `N(0, 1 / fan_in)` on the output layer; zero biases;
    /// identity BatchNorm.
    pub fn init(spec: &MlpSpec, rng: &mut Rng) -> Self {
        let mut params = Self::zeros(spec);
        let last = spec.num_layers() - 1;
        for (i, layer) in params.layers.iter_mut().enumerate() {
            let fan_in = spec.widths[i] as f64;
            let gain = if i == last { 1.0 } else { 2.0 };
            let sd = (gain / fan_in).sqrt();
            layer.weight.data_mut().iter_mut().for_each(|w| *w = sd * rng.normal());
        }
        params
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn has_batchnorm(&self) -> bool {
        self.spec.has_batchnorm()
    }

    /// Trainable tensors in canonical order.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        for layer in &self.layers {
            out.push(&layer.weight);
            out.push(&layer.bias);
            if let Some(bn) = &layer.bn {
                out.push(&bn.gamma);
                out.push(&bn.beta);
            }
        }
        out
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
            if let Some(bn) = &mut layer.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
            }
        }
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.trainable().iter().map(|t| t.len()).sum()
    }

    /// Every stored tensor with a stable name, in declaration order
    /// (weight, bias, γ, β, running mean, running variance per layer).
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            let n = i + 1;
            out.push((format!("layer{n}.weight"), &layer.weight));
            out.push((format!("layer{n}.bias"), &layer.bias));
            if let Some(bn) = &layer.bn {
                out.push((format!("layer{n}.bn.gamma"), &bn.gamma));
                out.push((format!("layer{n}.bn.beta"), &bn.beta));
                out.push((format!("layer{n}.bn.running_mean"), &bn.running_mean));
                out.push((format!("layer{n}.bn.running_var"), &bn.running_var));
            }
        }
        out
    }

    pub(crate) fn all_tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            out.push(&mut layer.weight);
            out.push(&mut layer.bias);
            if let Some(bn) = &mut layer.bn {
                out.push(&mut bn.gamma);
                out.push(&mut bn.beta);
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn all_tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    /// Errors unless `other` has the same architecture.
    pub fn check_congruent(&self, other: &ModelParams) -> Result<()> {
        if self.spec != other.spec {
            return Err(Error::dim(format!(
                "architectures differ: {:?} vs {:?}",
                self.spec, other.spec
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.all_tensors().iter().all(|t| t.all_finite())
    }

    /// Largest absolute difference over every stored tensor.
    pub fn max_abs_diff(&self, other: &ModelParams) -> Result<f64> {
        self.check_congruent(other)?;
        let mut m: f64 = 0.0;
        for (a, b) in self.all_tensors().iter().zip(other.all_tensors()) {
            m = m.max(a.max_abs_diff(b)?);
        }
        Ok(m)
    }

    /// Euclidean distance between the trainable parameter vectors.
    pub fn trainable_distance(&self, other: &ModelParams) -> Result<f64> {
        self.check_congruent(other)?;
        let mut s = 0.0;
        for (a, b) in self.trainable().iter().zip(other.trainable()) {
            s += a.sub(b)?.sum_sq();
        }
        Ok(s.sqrt())
    }

    /// Order-sensitive 64-bit fingerprint of every stored bit; used to
    /// detect mutation of models that must stay frozen.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xCBF2_9CE4_8422_2325;
        for t in self.all_tensors() {
            for v in t.data() {
                h ^= v.to_bits();
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
        }
        h
    }

    /// Replaces the trainable tensors, keeping running statistics.
    pub fn with_trainable(&self, tensors: Vec<Tensor>) -> Result<ModelParams> {
        let mut out = self.clone();
        let slots = out.trainable_mut();
        if slots.len() != tensors.len() {
            return Err(Error::dim(format!(
                "{} tensors for {} trainable slots",
                tensors.len(),
                slots.len()
            )));
        }
        for (slot, t) in slots.into_iter().zip(tensors) {
            slot.expect_shape(&t, "with_trainable")?;
            *slot = t;
        }
        Ok(out)
    }
}

fn layer_tensors(layer: &Layer) -> Vec<&Tensor> {
    let mut v = vec![&layer.weight, &layer.bias];
    if let Some(bn) = &layer.bn {
        v.extend([&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]);
    }
    v
}

/// Tensors shape-congruent with a model's trainable list.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            tensors: params.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().fold(0.0, |m, t| m.max(t.max_abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(MlpSpec::uniform(&[4, 2], false).is_err());
        assert!(MlpSpec::uniform(&[4, 0, 2], false).is_err());
        assert!(MlpSpec::new(vec![4, 3, 2], vec![]).is_err());
        let s = MlpSpec::uniform(&[4, 3, 3, 2], true).unwrap();
        assert_eq!(s.num_layers(), 3);
        assert_eq!(s.num_hidden(), 2);
    }

    #[test]
    fn trainable_order_and_counts() {
        let spec = MlpSpec::new(vec![3, 4, 5, 2], vec![true, false]).unwrap();
        let p = ModelParams::init(&spec, &mut Rng::new(0));
        let shapes: Vec<Vec<usize>> = p.trainable().iter().map(|t| t.shape().to_vec()).collect();
        assert_eq!(
            shapes,
            vec![
                vec![4, 3],
                vec![4],
                vec![4],
                vec![4],
                vec![5, 4],
                vec![5],
                vec![2, 5],
                vec![2]
            ]
        );
        assert_eq!(p.num_parameters(), 12 + 4 + 8 + 20 + 5 + 10 + 2);
        assert_eq!(p.named_tensors().len(), 10);
    }

    #[test]
    fn from_layers_rejects_bad_shapes() {
        let spec = MlpSpec::uniform(&[2, 3, 2], false).unwrap();
        let mut layers = ModelParams::zeros(&spec).layers().to_vec();
        layers[0].weight = Tensor::zeros(&[2, 3]);
        assert!(ModelParams::from_layers(spec.clone(), layers).is_err());

        let mut layers = ModelParams::zeros(&spec).layers().to_vec();
        layers[0].bn = Some(BatchNorm::identity(3));
        assert!(ModelParams::from_layers(spec, layers).is_err());
    }

    #[test]
    fn fingerprint_detects_single_bit() {
        let spec = MlpSpec::uniform(&[2, 3, 2], true).unwrap();
        let p = ModelParams::init(&spec, &mut Rng::new(1));
        let mut q = p.clone();
        assert_eq!(p.fingerprint(), q.fingerprint());
        let v = &mut q.layers_mut()[1].bias.data_mut()[0];
        *v = f64::from_bits(v.to_bits() ^ 1);
        assert_ne!(p.fingerprint(), q.fingerprint());
    }
}
