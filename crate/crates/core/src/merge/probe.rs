use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::interp::uniform_merge;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::train::{check_data, count_correct};
use crate::nn::{bn_reset, evaluate, loss_xent, predict, Evaluation, ModelParams};
use crate::numerics::Tensor;

pub const DEFAULT_BARRIER_POINTS: usize = 11;

/// Accuracy and loss of the mean of the models' logits.
pub fn ensemble_eval(models: &[ModelParams], data: &LabeledDataset) -> Result<Evaluation> {
    let first = models
        .first()
        .ok_or_else(|| Error::input("ensemble needs at least one model"))?;
    for m in models {
        check_data(m, data)?;
        if m.spec().output_width() != first.spec().output_width() {
            return Err(Error::dim("ensemble members disagree on the number of outputs"));
        }
    }
    let k = models.len() as f64;
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for (x, y) in data.batches(512) {
        let mut sum: Option<Tensor> = None;
        for m in models {
            let z = predict(m, &x)?;
            sum = Some(match sum {
                None => z,
                Some(s) => s.zip_map(&z, |p, q| p + q)?,
            });
        }
        let mean = sum.expect("nonempty ensemble").map(|v| v / k);
        loss_sum += loss_xent(&mean, &y)?.0 * y.len() as f64;
        correct += count_correct(&mean, &y);
    }
    Ok(Evaluation {
        accuracy: correct as f64 / data.len() as f64,
        loss: loss_sum / data.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierPoint {
    /// Weight on model A; 0 is model B.
    pub alpha: f64,
    pub loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Barrier {
    pub curve: Vec<BarrierPoint>,
    /// Highest loss on the path.
    pub loss_max: f64,
    /// `loss_max − max(loss(0), loss(1))`.
    pub loss_barrier: f64,
    /// Lowest accuracy on the path.
    pub acc_min: f64,
    /// `min(acc(0), acc(1)) − acc_min`.
    pub acc_barrier: f64,
}

/// Evaluates `uniform_merge(A, B, α)` at `num_points` evenly spaced α from 0
/// to 1. Models with BatchNorm get their statistics recomputed on
/// `reset_data` (default: the evaluation data) at every point.
pub fn barrier(
    a: &ModelParams,
    b: &ModelParams,
    data: &LabeledDataset,
    num_points: usize,
    reset_data: Option<&Tensor>,
) -> Result<Barrier> {
    if num_points < 3 {
        return Err(Error::input(format!(
            "a barrier curve needs at least 3 points, got {num_points}"
        )));
    }
    a.check_congruent(b)?;
    let reset = reset_data.unwrap_or(data.features());
    let curve = (0..num_points)
        .into_par_iter()
        .map(|i| {
            let alpha = i as f64 / (num_points - 1) as f64;
            let (merged, _) = bn_reset(&uniform_merge(a, b, alpha)?, reset, 512)?;
            let e = evaluate(&merged, data)?;
            Ok(BarrierPoint {
                alpha,
                loss: e.loss,
                accuracy: e.accuracy,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (first, last) = (curve[0], curve[num_points - 1]);
    let loss_max = curve.iter().map(|p| p.loss).fold(f64::NEG_INFINITY, f64::max);
    let acc_min = curve.iter().map(|p| p.accuracy).fold(f64::INFINITY, f64::min);
    Ok(Barrier {
        loss_max,
        loss_barrier: loss_max - first.loss.max(last.loss),
        acc_min,
        acc_barrier: first.accuracy.min(last.accuracy) - acc_min,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs;
    use crate::nn::{Layer, MlpSpec};
    use crate::numerics::Rng;

    /// Identity-like 2-2-2 net whose output layer is `scale · I`.
    fn scaled(scale: f64) -> ModelParams {
        let spec = MlpSpec::uniform(&[2, 2, 2], false).unwrap();
        let eye = |s: f64| Tensor::from_rows(&[vec![s, 0.0], vec![0.0, s]]).unwrap();
        let layers = vec![
            Layer {
                weight: eye(1.0),
                bias: Tensor::zeros(&[2]),
                bn: None,
            },
            Layer {
                weight: eye(scale),
                bias: Tensor::zeros(&[2]),
                bn: None,
            },
        ];
        ModelParams::from_layers(spec, layers).unwrap()
    }

    #[test]
    fn duplicated_ensemble_equals_member() {
        let data = synth_blobs(3, 10, 4, 1.0, 0).unwrap();
        let m = ModelParams::init(&MlpSpec::uniform(&[4, 8, 3], false).unwrap(), &mut Rng::new(1));
        let single = evaluate(&m, &data).unwrap();
        let pair = ensemble_eval(&[m.clone(), m], &data).unwrap();
        assert_eq!(pair.accuracy, single.accuracy);
        assert!((pair.loss - single.loss).abs() <= 1e-12);
        assert!(ensemble_eval(&[], &data).is_err());
    }

    #[test]
    fn opposite_logits_tie_to_class_zero() {
        let x = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let data = LabeledDataset::new(x, vec![0, 1, 1], 2, "").unwrap();
        let e = ensemble_eval(&[scaled(1.0), scaled(-1.0)], &data).unwrap();
        // mean logits are zero, so every prediction is class 0
        assert!((e.accuracy - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn three_model_hand_average() {
        // sample rows map to logits scale · relu(x); mean scale = (1 + 2 − 6)/3 = −1
        let x = Tensor::from_rows(&[vec![1.0, 0.5], vec![0.2, 0.9], vec![3.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let data = LabeledDataset::new(x, vec![1, 0, 1, 0], 2, "").unwrap();
        let e = ensemble_eval(&[scaled(1.0), scaled(2.0), scaled(-6.0)], &data).unwrap();
        // averaged logits: −x, so argmax picks the smaller coordinate;
        // row 4 ties at 0 and goes to class 0
        assert_eq!(e.accuracy, 1.0);
    }

    #[test]
    fn self_barrier_is_flat() {
        let data = synth_blobs(3, 15, 4, 1.0, 2).unwrap();
        let m = ModelParams::init(&MlpSpec::uniform(&[4, 8, 3], true).unwrap(), &mut Rng::new(3));
        let r = barrier(&m, &m, &data, 11, None).unwrap();
        assert_eq!(r.curve.len(), 11);
        assert!(r.curve.windows(2).all(|w| w[0].alpha < w[1].alpha));
        assert_eq!((r.curve[0].alpha, r.curve[10].alpha), (0.0, 1.0));
        assert!(r.loss_barrier.abs() <= 1e-9);
        assert!(r.acc_barrier.abs() <= 1e-9);
        assert!(barrier(&m, &m, &data, 2, None).is_err());
    }
}
