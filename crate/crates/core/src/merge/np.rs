use serde::{Deserialize, Serialize};

use super::interp::{containment_violations, np_compose, AlphaSet};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::train::check_data;
use crate::nn::{
    backward, bn_reset, forward, loss_xent, train_from, Mode, ModelParams, Optimizer, OptimizerKind, TrainConfig,
    TrainOutcome,
};
use crate::numerics::{Rng, Tensor};

/// Settings of the coefficient search (and of the fine-tuning baseline,
/// which gets the same budget).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergeConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// Initial effective coefficient; α_pre starts at its logit.
    pub alpha_init: f64,
    pub seed: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 10,
            batch_size: 64,
            optimizer: OptimizerKind::Adam,
            alpha_init: 0.5,
            seed: 0,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, message: &str| {
            Err(Error::Config {
                field: format!("merge.{field}"),
                message: message.into(),
            })
        };
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate", "must be positive and finite");
        }
        if self.batch_size == 0 {
            return bad("batch_size", "must be at least 1");
        }
        if !(self.alpha_init > 0.0 && self.alpha_init < 1.0) {
            return bad("alpha_init", "must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            weight_decay: 0.0,
        }
    }
}

/// Counts of invariant checks that failed during a coefficient search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantCounts {
    pub steps_checked: u64,
    /// Merged entries outside the interval of their two sources.
    pub containment: u64,
    /// Coefficients that were non-finite or reached 0 or 1.
    pub alpha_range: u64,
    /// Steps after which an endpoint model no longer matched its fingerprint.
    pub frozen_endpoints: u64,
}

impl InvariantCounts {
    pub fn violations(&self) -> u64 {
        self.containment + self.alpha_range + self.frozen_endpoints
    }

    pub fn absorb(&mut self, other: &InvariantCounts) {
        self.steps_checked += other.steps_checked;
        self.containment += other.containment;
        self.alpha_range += other.alpha_range;
        self.frozen_endpoints += other.frozen_endpoints;
    }
}

#[derive(Clone, Debug)]
pub struct NpOutcome {
    pub alphas: AlphaSet,
    /// Final composition with BatchNorm statistics recomputed on the
    /// optimisation data.
    pub merged: ModelParams,
    /// Loss of the initial composition, then the mean minibatch loss of
    /// every epoch.
    pub loss_curve: Vec<f64>,
    pub invariants: InvariantCounts,
}

/// Train-mode loss of the composition on one batch and its gradient with
/// respect to every α_pre: `G ⊙ (A − B) ⊙ σ'(α_pre)` where `G` is the
/// gradient with respect to the merged parameters.
pub fn alpha_gradient(
    a: &ModelParams,
    b: &ModelParams,
    alphas: &AlphaSet,
    x: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<Tensor>)> {
    let merged = np_compose(a, b, alphas)?;
    let (loss, grads, _) = alpha_step_grad(a, b, alphas, &merged, x, labels)?;
    Ok((loss, grads))
}

fn alpha_step_grad(
    a: &ModelParams,
    b: &ModelParams,
    alphas: &AlphaSet,
    merged: &ModelParams,
    x: &Tensor,
    labels: &[usize],
) -> Result<(f64, Vec<Tensor>, Tensor)> {
    let (logits, cache) = forward(merged, x, Mode::Train)?;
    let cache = cache.expect("train mode yields a cache");
    let (loss, grad_logits) = loss_xent(&logits, labels)?;
    let g = backward(merged, &cache, &grad_logits)?;
    let grads = g
        .tensors
        .iter()
        .zip(a.trainable())
        .zip(b.trainable())
        .zip(alphas.tensors())
        .map(|(((gw, ta), tb), pre)| {
            let data = gw
                .data()
                .iter()
                .zip(ta.data())
                .zip(tb.data())
                .zip(pre.data())
                .map(|(((&gv, &av), &bv), &p)| {
                    let s = crate::numerics::sigmoid(p);
                    gv * (av - bv) * s * (1.0 - s)
                })
                .collect();
            Tensor::new(gw.shape().to_vec(), data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((loss, grads, logits))
}

/// Learns one coefficient per trainable scalar with A and B held fixed,
/// then recomputes BatchNorm statistics on `opt_data`.
pub fn np_optimize(
    a: &ModelParams,
    b: &ModelParams,
    opt_data: &LabeledDataset,
    cfg: &MergeConfig,
) -> Result<NpOutcome> {
    cfg.validate()?;
    a.check_congruent(b)?;
    check_data(a, opt_data)?;
    let (print_a, print_b) = (a.fingerprint(), b.fingerprint());
    let mut alphas = AlphaSet::filled(a, cfg.alpha_init)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate, 0.0);
    let mut inv = InvariantCounts::default();
    let n = opt_data.len();

    let initial = np_compose(a, b, &alphas)?;
    let mut start_loss = 0.0;
    for (x, y) in opt_data.batches(cfg.batch_size) {
        let (logits, _) = forward(&initial, &x, Mode::Train)?;
        start_loss += loss_xent(&logits, &y)?.0 * y.len() as f64;
    }
    let mut loss_curve = vec![start_loss / n as f64];

    let mut order_rng = Rng::new(Rng::derive_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        order_rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let (x, y) = opt_data.gather(chunk);
            let merged = np_compose(a, b, &alphas)?;
            inv.containment += containment_violations(a, b, &merged) as u64;
            let (loss, grads, _) = alpha_step_grad(a, b, &alphas, &merged, &x, &y)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!("merge loss diverged in epoch {epoch}")));
            }
            loss_sum += loss * chunk.len() as f64;
            opt.step(&mut alphas.tensors_mut(), &grads)?;
            inv.steps_checked += 1;
            if !alphas.in_range() {
                inv.alpha_range += 1;
            }
            if a.fingerprint() != print_a || b.fingerprint() != print_b {
                inv.frozen_endpoints += 1;
            }
        }
        loss_curve.push(loss_sum / n as f64);
    }
    if alphas.tensors().iter().any(|t| !t.all_finite()) {
        return Err(Error::Numeric("merge coefficients became non-finite".into()));
    }
    let composed = np_compose(a, b, &alphas)?;
    inv.containment += containment_violations(a, b, &composed) as u64;
    let (merged, _) = bn_reset(&composed, opt_data.features(), cfg.batch_size)?;
    Ok(NpOutcome {
        alphas,
        merged,
        loss_curve,
        invariants: inv,
    })
}

/// Baseline: trains every parameter of `start` with the same optimiser,
/// learning rate, epochs and batch size as the coefficient search.
pub fn finetune(start: &ModelParams, opt_data: &LabeledDataset, cfg: &MergeConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    train_from(start.clone(), opt_data, &cfg.train_config())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::merge::uniform_merge;
    use crate::nn::{evaluate, train_model, Layer, MlpSpec};

    fn random_model(spec: &MlpSpec, seed: u64) -> ModelParams {
        let mut rng = Rng::new(seed);
        let mut m = ModelParams::init(spec, &mut rng);
        for t in m.trainable_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += 0.2 * rng.normal());
        }
        m
    }

    fn random_alphas(m: &ModelParams, rng: &mut Rng) -> AlphaSet {
        AlphaSet::from_tensors(
            m.trainable()
                .iter()
                .map(|t| Tensor::new(t.shape().to_vec(), (0..t.len()).map(|_| rng.normal()).collect()).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn alpha_gradient_matches_finite_differences() {
        for (seed, bn) in [(0, false), (1, true), (2, false), (3, true)] {
            let spec = MlpSpec::uniform(&[4, 6, 5, 3], bn).unwrap();
            let (a, b) = (random_model(&spec, seed), random_model(&spec, seed + 10));
            let mut rng = Rng::new(seed + 20);
            let alphas = random_alphas(&a, &mut rng);
            let x = Tensor::new(vec![8, 4], (0..32).map(|_| rng.normal()).collect()).unwrap();
            let y: Vec<usize> = (0..8).map(|i| i % 3).collect();
            let (_, g) = alpha_gradient(&a, &b, &alphas, &x, &y).unwrap();
            let h = 1e-5;
            let (mut num, mut den) = (0.0f64, 0.0f64);
            for (t, gt) in g.iter().enumerate() {
                for i in 0..gt.len() {
                    let mut plus = alphas.clone();
                    plus.tensors_mut()[t].data_mut()[i] += h;
                    let mut minus = alphas.clone();
                    minus.tensors_mut()[t].data_mut()[i] -= h;
                    let lp = alpha_gradient(&a, &b, &plus, &x, &y).unwrap().0;
                    let lm = alpha_gradient(&a, &b, &minus, &x, &y).unwrap().0;
                    let fd = (lp - lm) / (2.0 * h);
                    num = num.max((fd - gt.data()[i]).abs());
                    den = den.max(fd.abs().max(gt.data()[i].abs()));
                }
            }
            assert!(num <= 1e-4 * den, "bn={bn}: {num} vs scale {den}");
        }
    }

    #[test]
    fn identical_endpoints_have_zero_gradient() {
        let data = synth_blobs(3, 20, 4, 0.5, 1).unwrap();
        let spec = MlpSpec::uniform(&[4, 8, 3], true).unwrap();
        let a = random_model(&spec, 4);
        let cfg = MergeConfig {
            epochs: 2,
            batch_size: 16,
            ..MergeConfig::default()
        };
        let out = np_optimize(&a, &a, &data, &cfg).unwrap();
        assert_eq!(out.alphas, AlphaSet::filled(&a, 0.5).unwrap());
        assert_eq!(out.invariants.violations(), 0);
    }

    #[test]
    fn zero_epochs_is_uniform_merge_with_reset() {
        let data = synth_blobs(3, 20, 4, 0.5, 1).unwrap();
        let spec = MlpSpec::uniform(&[4, 8, 3], true).unwrap();
        let (a, b) = (random_model(&spec, 5), random_model(&spec, 6));
        let cfg = MergeConfig {
            epochs: 0,
            ..MergeConfig::default()
        };
        let out = np_optimize(&a, &b, &data, &cfg).unwrap();
        let (expected, _) = bn_reset(&uniform_merge(&a, &b, 0.5).unwrap(), data.features(), 64).unwrap();
        assert_eq!(out.merged, expected);
        assert_eq!(out.loss_curve.len(), 1);
    }

    /// One input, one hidden unit, one output per "class": the merged
    /// hidden weight is the only thing that differs between A and B.
    fn scalar_model(w: f64) -> ModelParams {
        let spec = MlpSpec::uniform(&[1, 1, 2], false).unwrap();
        let layers = vec![
            Layer {
                weight: Tensor::new(vec![1, 1], vec![w]).unwrap(),
                bias: Tensor::zeros(&[1]),
                bn: None,
            },
            Layer {
                weight: Tensor::new(vec![2, 1], vec![1.0, -1.0]).unwrap(),
                bias: Tensor::zeros(&[2]),
                bn: None,
            },
        ];
        ModelParams::from_layers(spec, layers).unwrap()
    }

    #[test]
    fn scalar_toy_matches_grid_search() {
        // inputs 1 and 2 with labels 0 and 1: the loss is minimised by a
        // specific hidden weight w* ∈ (b, a); the learned coefficient must
        // land where the grid search does.
        let (a, b) = (scalar_model(3.0), scalar_model(-1.0));
        let x = Tensor::new(vec![4, 1], vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let data = LabeledDataset::new(x, vec![0, 0, 0, 1], 2, "toy").unwrap();
        let loss_at = |alpha: f64| {
            let m = uniform_merge(&a, &b, alpha).unwrap();
            evaluate(&m, &data).unwrap().loss
        };
        let grid_best = (0..=1000)
            .map(|k| k as f64 / 1000.0)
            .min_by(|p, q| loss_at(*p).total_cmp(&loss_at(*q)))
            .unwrap();
        let cfg = MergeConfig {
            epochs: 3000,
            batch_size: 4,
            learning_rate: 0.05,
            ..MergeConfig::default()
        };
        let out = np_optimize(&a, &b, &data, &cfg).unwrap();
        let learned = crate::numerics::sigmoid(out.alphas.tensors()[0].data()[0]);
        assert!((learned - grid_best).abs() <= 0.01, "{learned} vs {grid_best}");
    }

    #[test]
    fn optimisation_reduces_loss_and_keeps_invariants() {
        let data = synth_blobs(3, 40, 4, 0.8, 2).unwrap();
        let spec = MlpSpec::uniform(&[4, 16, 3], true).unwrap();
        let tc = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-2,
            ..TrainConfig::default()
        };
        let a = train_model(&spec, &data, &TrainConfig { seed: 1, ..tc.clone() })
            .unwrap()
            .params;
        let b = train_model(&spec, &data, &TrainConfig { seed: 2, ..tc })
            .unwrap()
            .params;
        let (fa, fb) = (a.fingerprint(), b.fingerprint());
        let cfg = MergeConfig {
            batch_size: 16,
            ..MergeConfig::default()
        };
        let out = np_optimize(&a, &b, &data, &cfg).unwrap();
        assert_eq!(out.loss_curve.len(), 11);
        assert!(out.loss_curve[10] < out.loss_curve[0]);
        assert_eq!(out.invariants.violations(), 0);
        assert!(out.invariants.steps_checked > 0);
        assert_eq!((a.fingerprint(), b.fingerprint()), (fa, fb));
        let again = np_optimize(&a, &b, &data, &cfg).unwrap();
        assert_eq!(again.merged, out.merged);
    }

    #[test]
    fn finetune_zero_epochs_and_determinism() {
        let data = synth_blobs(3, 20, 4, 0.5, 3).unwrap();
        let spec = MlpSpec::uniform(&[4, 8, 3], true).unwrap();
        let c = random_model(&spec, 7);
        let zero = MergeConfig {
            epochs: 0,
            ..MergeConfig::default()
        };
        assert_eq!(finetune(&c, &data, &zero).unwrap().params, c);
        let cfg = MergeConfig::default();
        assert_eq!(
            finetune(&c, &data, &cfg).unwrap().params,
            finetune(&c, &data, &cfg).unwrap().params
        );
    }

    #[test]
    fn config_validation_and_errors() {
        let bad = MergeConfig {
            alpha_init: 1.0,
            ..MergeConfig::default()
        };
        match bad.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "merge.alpha_init"),
            other => panic!("{other:?}"),
        }
        let data = synth_blobs(3, 5, 4, 0.5, 3).unwrap();
        let a = random_model(&MlpSpec::uniform(&[4, 8, 3], false).unwrap(), 1);
        let b = random_model(&MlpSpec::uniform(&[4, 9, 3], false).unwrap(), 1);
        assert!(matches!(
            np_optimize(&a, &b, &data, &MergeConfig::default()),
            Err(Error::Dimension(_))
        ));
    }
}
