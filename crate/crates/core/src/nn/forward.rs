//! Forward pass and exact reverse-mode gradients for [`ModelParams`].

use super::model::{Gradients, ModelParams};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// BatchNorm normalises with the statistics of the current batch.
    Train,
    /// BatchNorm uses running statistics; no cache is produced.
    Eval,
}

#[derive(Clone, Debug)]
pub struct BnCache {
    pub normalized: Tensor,
    pub batch_mean: Vec<f64>,
    pub batch_var: Vec<f64>,
    pub inv_std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input: Tensor,
    /// Value fed to the ReLU (after BatchNorm when present). For the
    /// output layer, the logits.
    pub pre_activation: Tensor,
    pub bn: Option<BnCache>,
}

/// Everything backprop needs from a train-mode forward.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub layers: Vec<LayerCache>,
    pub batch: usize,
}

/// `x Wᵀ + b` for a batch `x: [batch × n_in]`.
pub(crate) fn affine(x: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let mut z = x.matmul_nt(weight)?;
    let b = bias.data();
    for r in 0..z.rows() {
        z.row_mut(r).iter_mut().zip(b).for_each(|(v, bb)| *v += bb);
    }
    Ok(z)
}

/// Per-column mean and (biased) variance, accumulated in row order.
pub(crate) fn column_stats(z: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, c) = (z.rows(), z.cols());
    let mut mean = vec![0.0; c];
    for r in 0..n {
        mean.iter_mut().zip(z.row(r)).for_each(|(m, v)| *m += v);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; c];
    for r in 0..n {
        for ((s, v), m) in var.iter_mut().zip(z.row(r)).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n as f64);
    (mean, var)
}

pub(crate) fn inv_std(var: &[f64], eps: f64) -> Vec<f64> {
    var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect()
}

/// `(z − mean) · inv_std`, shared by the train and eval paths so the two
/// agree bit for bit when given equal statistics.
pub(crate) fn normalize(z: &Tensor, mean: &[f64], inv_std: &[f64]) -> Tensor {
    let mut out = z.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(mean).zip(inv_std) {
            *v = (*v - m) * s;
        }
    }
    out
}

fn scale_shift(x: &Tensor, gamma: &Tensor, beta: &Tensor) -> Tensor {
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, g), b) in out.row_mut(r).iter_mut().zip(gamma.data()).zip(beta.data()) {
            *v = *v * g + b;
        }
    }
    out
}

pub(crate) fn relu(x: &Tensor) -> Tensor {
    x.map(|v| if v > 0.0 { v } else { 0.0 })
}

fn check_input(params: &ModelParams, x: &Tensor) -> Result<()> {
    if x.ndim() != 2 || x.cols() != params.spec().input_width() {
        return Err(Error::dim(format!(
            "input shape {:?} does not match input width {}",
            x.shape(),
            params.spec().input_width()
        )));
    }
    Ok(())
}

/// Runs the network on `x: [batch × n_0]`, returning logits `[batch × n_L]`
/// and, in train mode, the cache for [`backward`]. Running BatchNorm
/// statistics are never touched here; see
/// [`ModelParams::absorb_batch_stats`].
pub fn forward(params: &ModelParams, x: &Tensor, mode: Mode) -> Result<(Tensor, Option<ForwardCache>)> {
    check_input(params, x)?;
    let last = params.spec().num_layers() - 1;
    let mut cache = Vec::with_capacity(last + 1);
    let mut h = x.clone();
    for (i, layer) in params.layers().iter().enumerate() {
        let z = affine(&h, &layer.weight, &layer.bias)?;
        if i == last {
            if mode == Mode::Train {
                cache.push(LayerCache {
                    input: h,
                    pre_activation: z.clone(),
                    bn: None,
                });
            }
            h = z;
            break;
        }
        let (pre, bn_cache) = match &layer.bn {
            Some(bn) => match mode {
                Mode::Train => {
                    let (mean, var) = column_stats(&z);
                    let istd = inv_std(&var, bn.eps);
                    let normalized = normalize(&z, &mean, &istd);
                    let y = scale_shift(&normalized, &bn.gamma, &bn.beta);
                    (
                        y,
                        Some(BnCache {
                            normalized,
                            batch_mean: mean,
                            batch_var: var,
                            inv_std: istd,
                        }),
                    )
                }
                Mode::Eval => {
                    let istd = inv_std(bn.running_var.data(), bn.eps);
                    let normalized = normalize(&z, bn.running_mean.data(), &istd);
                    (scale_shift(&normalized, &bn.gamma, &bn.beta), None)
                }
            },
            None => (z, None),
        };
        let out = relu(&pre);
        if mode == Mode::Train {
            cache.push(LayerCache {
                input: h,
                pre_activation: pre,
                bn: bn_cache,
            });
        }
        h = out;
    }
    if !h.all_finite() {
        return Err(Error::Numeric("forward produced non-finite logits".into()));
    }
    let cache = (mode == Mode::Train).then(|| ForwardCache {
        layers: cache,
        batch: x.rows(),
    });
    Ok((h, cache))
}

/// Eval-mode logits.
pub fn predict(params: &ModelParams, x: &Tensor) -> Result<Tensor> {
    Ok(forward(params, x, Mode::Eval)?.0)
}

/// Post-ReLU activations of every hidden layer, eval mode.
pub fn hidden_activations(params: &ModelParams, x: &Tensor) -> Result<Vec<Tensor>> {
    check_input(params, x)?;
    let last = params.spec().num_layers() - 1;
    let mut out = Vec::with_capacity(last);
    let mut h = x.clone();
    for layer in &params.layers()[..last] {
        let z = affine(&h, &layer.weight, &layer.bias)?;
        let pre = match &layer.bn {
            Some(bn) => {
                let istd = inv_std(bn.running_var.data(), bn.eps);
                scale_shift(&normalize(&z, bn.running_mean.data(), &istd), &bn.gamma, &bn.beta)
            }
            None => z,
        };
        h = relu(&pre);
        out.push(h.clone());
    }
    Ok(out)
}

/// Gradients of the loss with respect to every trainable tensor, given
/// `grad_logits = ∂loss/∂logits` for the cached batch.
pub fn backward(params: &ModelParams, cache: &ForwardCache, grad_logits: &Tensor) -> Result<Gradients> {
    let layers = params.layers();
    if cache.layers.len() != layers.len() {
        return Err(Error::State(format!(
            "cache has {} layers, model has {}",
            cache.layers.len(),
            layers.len()
        )));
    }
    if grad_logits.shape() != [cache.batch, params.spec().output_width()] {
        return Err(Error::State(format!(
            "grad_logits shape {:?} does not match cached batch {}",
            grad_logits.shape(),
            cache.batch
        )));
    }
    let last = layers.len() - 1;
    let mut per_layer: Vec<Vec<Tensor>> = vec![Vec::new(); layers.len()];
    let mut upstream = grad_logits.clone();
    for i in (0..layers.len()).rev() {
        let layer = &layers[i];
        let lc = &cache.layers[i];
        if lc.input.cols() != layer.weight.cols() || lc.pre_activation.cols() != layer.weight.rows() {
            return Err(Error::State(format!("layer {} cache does not match parameters", i + 1)));
        }
        let mut bn_grads = None;
        let dz = if i == last {
            upstream
        } else {
            // ReLU gate
            let dy = upstream.zip_map(&lc.pre_activation, |g, y| if y > 0.0 { g } else { 0.0 })?;
            match (&layer.bn, &lc.bn) {
                (Some(bn), Some(bc)) => {
                    let (dz, dgamma, dbeta) = bn_backward(&dy, bc, &bn.gamma);
                    bn_grads = Some((dgamma, dbeta));
                    dz
                }
                (None, None) => dy,
                _ => return Err(Error::State(format!("layer {}: batchnorm cache mismatch", i + 1))),
            }
        };
        let dw = dz.matmul_tn(&lc.input)?;
        let db = column_sums(&dz);
        if i > 0 {
            upstream = dz.matmul(&layer.weight)?;
        } else {
            upstream = Tensor::zeros(&[1]);
        }
        let mut g = vec![dw, db];
        if let Some((dg, dbt)) = bn_grads {
            g.push(dg);
            g.push(dbt);
        }
        per_layer[i] = g;
    }
    Ok(Gradients {
        tensors: per_layer.into_iter().flatten().collect(),
    })
}

fn column_sums(t: &Tensor) -> Tensor {
    let mut s = vec![0.0; t.cols()];
    for r in 0..t.rows() {
        s.iter_mut().zip(t.row(r)).for_each(|(a, v)| *a += v);
    }
    Tensor::from_parts(vec![t.cols()], s)
}

/// Backprop through `y = γ · (z − μ_B) / σ_B + β` with batch statistics.
fn bn_backward(dy: &Tensor, bc: &BnCache, gamma: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, c) = (dy.rows(), dy.cols());
    let nf = n as f64;
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for r in 0..n {
        for j in 0..c {
            let g = dy.row(r)[j];
            dgamma[j] += g * bc.normalized.row(r)[j];
            dbeta[j] += g;
        }
    }
    // dx̂ = dy ⊙ γ, so Σ dx̂ = γ Σ dy and Σ dx̂ x̂ = γ dγ
    let mut dz = dy.clone();
    for r in 0..n {
        let xr = bc.normalized.row(r);
        let row = dz.row_mut(r);
        for j in 0..c {
            let g = gamma.data()[j];
            let dxhat = row[j] * g;
            row[j] = bc.inv_std[j] / nf * (nf * dxhat - g * dbeta[j] - xr[j] * g * dgamma[j]);
        }
    }
    (
        dz,
        Tensor::from_parts(vec![c], dgamma),
        Tensor::from_parts(vec![c], dbeta),
    )
}

impl ModelParams {
    /// Folds the batch statistics of a train-mode forward into the running
    /// estimates: `running ← (1 − momentum)·running + momentum·batch`.
    pub fn absorb_batch_stats(&mut self, cache: &ForwardCache) {
        for (layer, lc) in self.layers_mut().iter_mut().zip(&cache.layers) {
            if let (Some(bn), Some(bc)) = (&mut layer.bn, &lc.bn) {
                let m = bn.momentum;
                for (r, b) in bn.running_mean.data_mut().iter_mut().zip(&bc.batch_mean) {
                    *r = (1.0 - m) * *r + m * b;
                }
                for (r, b) in bn.running_var.data_mut().iter_mut().zip(&bc.batch_var) {
                    *r = (1.0 - m) * *r + m * b;
                }
            }
        }
    }
}
