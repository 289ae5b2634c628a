use serde::{Deserialize, Serialize};

use super::forward::{affine, forward, inv_std, normalize, relu, Mode};
use super::forward::{backward, predict};
use super::loss::{argmax, loss_xent};
use super::model::{MlpSpec, ModelParams};
use super::optim::{Optimizer, OptimizerKind};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

const EVAL_BATCH: usize = 512;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for TrainConfig {
    /// Base-model defaults: Adam, lr 1e-3, batch 64, 30 epochs, no decay.
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 30,
            batch_size: 64,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: field.into(),
                message: message.into(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be positive");
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return bad("weight_decay", "must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean minibatch loss over the epoch.
    pub loss: f64,
    /// Minibatch accuracy accumulated during the epoch.
    pub accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub metrics: Vec<EpochMetrics>,
}

/// Initialises a model from `config.seed` and trains it.
pub fn train_model(spec: &MlpSpec, data: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    let mut init_rng = Rng::new(Rng::derive_seed(config.seed, 0));
    let params = ModelParams::init(spec, &mut init_rng);
    train_from(params, data, config)
}

/// Trains every parameter of `params`, updating BatchNorm running
/// statistics by momentum. The minibatch order is drawn from `config.seed`.
pub fn train_from(mut params: ModelParams, data: &LabeledDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    check_data(&params, data)?;
    let mut order_rng = Rng::new(Rng::derive_seed(config.seed, 1));
    let mut opt = Optimizer::new(config.optimizer, config.learning_rate, config.weight_decay);
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 1..=config.epochs {
        order_rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let (x, y) = data.gather(chunk);
            let (logits, cache) = forward(&params, &x, Mode::Train)?;
            let cache = cache.expect("train mode yields a cache");
            let (loss, grad) = loss_xent(&logits, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("loss diverged in epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            correct += count_correct(&logits, &y);
            let grads = backward(&params, &cache, &grad)?;
            params.absorb_batch_stats(&cache);
            opt.step(&mut params.trainable_mut(), &grads.tensors)?;
        }
        metrics.push(EpochMetrics {
            epoch,
            loss: loss_sum / data.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    if !params.all_finite() {
        return Err(Error::Numeric("training produced non-finite parameters".into()));
    }
    Ok(TrainOutcome { params, metrics })
}

pub(crate) fn check_data(params: &ModelParams, data: &LabeledDataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::input("dataset is empty"));
    }
    if data.dims() != params.spec().input_width() {
        return Err(Error::dim(format!(
            "dataset has {} features, model expects {}",
            data.dims(),
            params.spec().input_width()
        )));
    }
    if let Some(&bad) = data.labels().iter().find(|&&y| y >= params.spec().output_width()) {
        return Err(Error::input(format!(
            "label {bad} exceeds model output width {}",
            params.spec().output_width()
        )));
    }
    Ok(())
}

pub(crate) fn count_correct(logits: &Tensor, labels: &[usize]) -> usize {
    labels
        .iter()
        .enumerate()
        .filter(|(r, &y)| argmax(logits.row(*r)) == y)
        .count()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub loss: f64,
}

/// Eval-mode accuracy (lowest-index argmax) and mean cross-entropy.
pub fn evaluate(params: &ModelParams, data: &LabeledDataset) -> Result<Evaluation> {
    check_data(params, data)?;
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for (x, y) in data.batches(EVAL_BATCH) {
        let logits = predict(params, &x)?;
        loss_sum += loss_xent(&logits, &y)?.0 * y.len() as f64;
        correct += count_correct(&logits, &y);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss_sum / data.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BnResetStatus {
    Reset,
    /// The model has no BatchNorm layers; it was returned unchanged.
    NoBatchNorm,
}

/// Recomputes every BatchNorm running mean and variance as the exact
/// population statistics of that layer's pre-normalisation input over all
/// of `data`, layer by layer (later layers see the refreshed earlier ones).
/// Sums run over rows in order, so the result does not depend on
/// `batch_size`. γ and β are untouched.
pub fn bn_reset(params: &ModelParams, data: &Tensor, batch_size: usize) -> Result<(ModelParams, BnResetStatus)> {
    if data.ndim() != 2 || data.cols() != params.spec().input_width() {
        return Err(Error::dim(format!(
            "reset data shape {:?} does not match input width {}",
            data.shape(),
            params.spec().input_width()
        )));
    }
    if !params.has_batchnorm() {
        return Ok((params.clone(), BnResetStatus::NoBatchNorm));
    }
    let bs = batch_size.max(1);
    let mut out = params.clone();
    let last = out.spec().num_layers() - 1;
    let mut acts: Vec<Tensor> = (0..data.rows())
        .step_by(bs)
        .map(|s| {
            let idx: Vec<usize> = (s..(s + bs).min(data.rows())).collect();
            let d = data.cols();
            let mut v = Vec::with_capacity(idx.len() * d);
            idx.iter().for_each(|&i| v.extend_from_slice(data.row(i)));
            Tensor::from_parts(vec![idx.len(), d], v)
        })
        .collect();
    let n = data.rows() as f64;
    for layer in &mut out.layers_mut()[..last] {
        let zs: Vec<Tensor> = acts
            .iter()
            .map(|a| affine(a, &layer.weight, &layer.bias))
            .collect::<Result<_>>()?;
        if let Some(bn) = &mut layer.bn {
            let width = layer.weight.rows();
            let mut mean = vec![0.0; width];
            for z in &zs {
                for r in 0..z.rows() {
                    mean.iter_mut().zip(z.row(r)).for_each(|(m, v)| *m += v);
                }
            }
            mean.iter_mut().for_each(|m| *m /= n);
            let mut var = vec![0.0; width];
            for z in &zs {
                for r in 0..z.rows() {
                    for ((s, v), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
                        let d = v - m;
                        *s += d * d;
                    }
                }
            }
            var.iter_mut().for_each(|s| *s /= n);
            // a constant unit has zero variance; eps keeps normalisation finite
            bn.running_mean = Tensor::from_parts(vec![width], mean);
            bn.running_var = Tensor::from_parts(vec![width], var.iter().map(|&v| v.max(0.0)).collect());
        }
        acts = zs
            .iter()
            .map(|z| match &layer.bn {
                Some(bn) => {
                    let istd = inv_std(bn.running_var.data(), bn.eps);
                    let mut y = normalize(z, bn.running_mean.data(), &istd);
                    for r in 0..y.rows() {
                        for ((v, g), b) in y.row_mut(r).iter_mut().zip(bn.gamma.data()).zip(bn.beta.data()) {
                            *v = *v * g + b;
                        }
                    }
                    relu(&y)
                }
                None => relu(z),
            })
            .collect();
    }
    Ok((out, BnResetStatus::Reset))
}
