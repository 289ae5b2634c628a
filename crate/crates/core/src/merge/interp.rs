use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::numerics::{sigmoid, Tensor};

/// `b + α(a − b)`, clamped into the closed interval spanned by `a` and `b`
/// so that round-off can never leave it. Equal sources, and α of exactly
/// 0 or 1, reproduce the source bitwise.
#[inline]
pub(crate) fn lerp(a: f64, b: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        return a;
    }
    let v = b + alpha * (a - b);
    v.clamp(a.min(b), a.max(b))
}

fn lerp_tensor(a: &Tensor, b: &Tensor, alpha: f64) -> Result<Tensor> {
    a.zip_map(b, |x, y| lerp(x, y, alpha))
}

/// `α·A + (1 − α)·B` on every stored tensor, BatchNorm running statistics
/// included (they are meant to be recomputed afterwards).
pub fn uniform_merge(a: &ModelParams, b: &ModelParams, alpha: f64) -> Result<ModelParams> {
    a.check_congruent(b)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::input(format!("interpolation weight {alpha} outside [0, 1]")));
    }
    let mut out = a.clone();
    for ((slot, ta), tb) in out
        .all_tensors_mut()
        .into_iter()
        .zip(a.all_tensors())
        .zip(b.all_tensors())
    {
        *slot = lerp_tensor(ta, tb, alpha)?;
    }
    Ok(out)
}

/// Pre-sigmoid merge coefficients, one tensor per trainable tensor of the
/// model (weights, biases, BatchNorm γ and β) in the model's trainable order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSet {
    tensors: Vec<Tensor>,
}

/// Summary of the effective coefficients `σ(α_pre)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaStats {
    pub mean: f64,
    pub std: f64,
    /// Fraction of coefficients in `[0.4, 0.6]`.
    pub frac_near_half: f64,
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl AlphaSet {
    /// Every coefficient starts at `alpha_init ∈ (0, 1)`.
    pub fn filled(model: &ModelParams, alpha_init: f64) -> Result<Self> {
        if !(alpha_init > 0.0 && alpha_init < 1.0) {
            return Err(Error::input(format!("alpha_init {alpha_init} outside (0, 1)")));
        }
        let pre = logit(alpha_init);
        Ok(Self {
            tensors: model
                .trainable()
                .iter()
                .map(|t| Tensor::filled(t.shape(), pre))
                .collect(),
        })
    }

    pub fn from_tensors(tensors: Vec<Tensor>) -> Result<Self> {
        if tensors.iter().any(|t| !t.all_finite()) {
            return Err(Error::Numeric("alpha_pre must be finite".into()));
        }
        Ok(Self { tensors })
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub(crate) fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        self.tensors.iter_mut().collect()
    }

    pub fn check_fits(&self, model: &ModelParams) -> Result<()> {
        let slots = model.trainable();
        if slots.len() != self.tensors.len() {
            return Err(Error::dim(format!(
                "{} alpha tensors for {} trainable tensors",
                self.tensors.len(),
                slots.len()
            )));
        }
        for (t, s) in self.tensors.iter().zip(slots) {
            t.expect_shape(s, "alpha set")?;
        }
        Ok(())
    }

    /// Effective coefficients `σ(α_pre)`.
    pub fn coefficients(&self) -> Vec<Tensor> {
        self.tensors.iter().map(Tensor::sigmoid).collect()
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> AlphaStats {
        let n = self.len() as f64;
        let values = || self.tensors.iter().flat_map(|t| t.data().iter().map(|&v| sigmoid(v)));
        let mean = values().sum::<f64>() / n;
        let var = values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let near = values().filter(|v| (0.4..=0.6).contains(v)).count() as f64 / n;
        AlphaStats {
            mean,
            std: var.sqrt(),
            frac_near_half: near,
        }
    }

    /// True when every α_pre is finite and every σ(α_pre) lies strictly
    /// inside (0, 1).
    pub fn in_range(&self) -> bool {
        self.tensors.iter().flat_map(|t| t.data()).all(|&v| {
            let s = sigmoid(v);
            v.is_finite() && s > 0.0 && s < 1.0
        })
    }
}

/// Elementwise `σ(α_pre) ⊙ A + (1 − σ(α_pre)) ⊙ B` on the trainable tensors.
/// BatchNorm running statistics are averaged with weight 1/2 as a
/// placeholder; callers recompute them with `bn_reset`.
pub fn np_compose(a: &ModelParams, b: &ModelParams, alphas: &AlphaSet) -> Result<ModelParams> {
    a.check_congruent(b)?;
    alphas.check_fits(a)?;
    let mut out = uniform_merge(a, b, 0.5)?;
    let coeffs = alphas.coefficients();
    for (((slot, ta), tb), c) in out
        .trainable_mut()
        .into_iter()
        .zip(a.trainable())
        .zip(b.trainable())
        .zip(&coeffs)
    {
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .zip(c.data())
            .map(|((&x, &y), &alpha)| lerp(x, y, alpha))
            .collect();
        *slot = Tensor::new(ta.shape().to_vec(), data)?;
    }
    Ok(out)
}

/// Number of entries of `merged`'s trainable tensors that fall outside the
/// closed interval of their two sources.
pub fn containment_violations(a: &ModelParams, b: &ModelParams, merged: &ModelParams) -> usize {
    merged
        .trainable()
        .iter()
        .zip(a.trainable())
        .zip(b.trainable())
        .map(|((m, x), y)| {
            m.data()
                .iter()
                .zip(x.data())
                .zip(y.data())
                .filter(|((&v, &p), &q)| !(v >= p.min(q) && v <= p.max(q)))
                .count()
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Layer, MlpSpec};
    use crate::numerics::Rng;

    fn model(seed: u64, bn: bool) -> ModelParams {
        let spec = MlpSpec::uniform(&[3, 4, 2], bn).unwrap();
        ModelParams::init(&spec, &mut Rng::new(seed))
    }

    /// 2-2-2 net whose first weight matrix is `w`; everything else zero.
    fn with_first_weight(w: [[f64; 2]; 2]) -> ModelParams {
        let spec = MlpSpec::uniform(&[2, 2, 2], false).unwrap();
        let layers = vec![
            Layer {
                weight: Tensor::from_rows(&[w[0].to_vec(), w[1].to_vec()]).unwrap(),
                bias: Tensor::zeros(&[2]),
                bn: None,
            },
            Layer {
                weight: Tensor::zeros(&[2, 2]),
                bias: Tensor::zeros(&[2]),
                bn: None,
            },
        ];
        ModelParams::from_layers(spec, layers).unwrap()
    }

    #[test]
    fn uniform_hand_arithmetic() {
        let a = with_first_weight([[0.0, 2.0], [4.0, 6.0]]);
        let b = with_first_weight([[2.0, 0.0], [0.0, 2.0]]);
        let c = uniform_merge(&a, &b, 0.5).unwrap();
        assert_eq!(c.layers()[0].weight.data(), &[1.0, 1.0, 2.0, 4.0]);
    }

    #[test]
    fn uniform_idempotent_and_endpoint() {
        let a = model(1, true);
        for alpha in [0.0, 0.1, 0.5, 0.77, 1.0] {
            assert_eq!(uniform_merge(&a, &a, alpha).unwrap(), a);
        }
        let b = model(2, true);
        let c = uniform_merge(&a, &b, 1.0 - 1e-12).unwrap();
        let spread = a.max_abs_diff(&b).unwrap();
        assert!(c.max_abs_diff(&a).unwrap() <= 1e-9 * spread);
        assert_eq!(uniform_merge(&a, &b, 1.0).unwrap(), a);
        assert_eq!(uniform_merge(&a, &b, 0.0).unwrap(), b);
        assert!(uniform_merge(&a, &b, 1.5).is_err());
    }

    #[test]
    fn uniform_rejects_incongruent() {
        let other = ModelParams::init(&MlpSpec::uniform(&[3, 5, 2], false).unwrap(), &mut Rng::new(0));
        assert!(matches!(
            uniform_merge(&model(1, false), &other, 0.5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn zero_alpha_pre_is_uniform_half() {
        let (a, b) = (model(3, true), model(4, true));
        let alphas = AlphaSet::filled(&a, 0.5).unwrap();
        assert!(alphas.tensors().iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
        assert_eq!(
            np_compose(&a, &b, &alphas).unwrap(),
            uniform_merge(&a, &b, 0.5).unwrap()
        );
    }

    #[test]
    fn saturated_alpha_recovers_a() {
        let (a, b) = (model(5, false), model(6, false));
        let pre = a.trainable().iter().map(|t| Tensor::filled(t.shape(), 50.0)).collect();
        let c = np_compose(&a, &b, &AlphaSet::from_tensors(pre).unwrap()).unwrap();
        for (x, y) in c.trainable().iter().zip(a.trainable()) {
            for (p, q) in x.data().iter().zip(y.data()) {
                assert!((p - q).abs() <= 1e-9 * q.abs().max(1.0));
            }
        }
    }

    #[test]
    fn mixed_alpha_hand_fixture() {
        // σ table: σ(0) = 1/2, σ(ln 3) = 3/4, σ(−ln 3) = 1/4, σ(ln 9) = 9/10
        let a = with_first_weight([[4.0, 8.0], [0.0, 10.0]]);
        let b = with_first_weight([[0.0, 0.0], [4.0, -10.0]]);
        let l3 = 3f64.ln();
        let mut pre: Vec<Tensor> = a.trainable().iter().map(|t| Tensor::zeros(t.shape())).collect();
        pre[0] = Tensor::from_rows(&[vec![0.0, l3], vec![-l3, 9f64.ln()]]).unwrap();
        let c = np_compose(&a, &b, &AlphaSet::from_tensors(pre).unwrap()).unwrap();
        let expected = [2.0, 6.0, 3.0, 8.0];
        for (got, want) in c.layers()[0].weight.data().iter().zip(expected) {
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn containment_is_exact() {
        let mut rng = Rng::new(7);
        for seed in 0..20 {
            let (a, b) = (model(seed, true), model(seed + 100, true));
            let pre = a
                .trainable()
                .iter()
                .map(|t| Tensor::new(t.shape().to_vec(), (0..t.len()).map(|_| 8.0 * rng.normal()).collect()).unwrap())
                .collect();
            let c = np_compose(&a, &b, &AlphaSet::from_tensors(pre).unwrap()).unwrap();
            assert_eq!(containment_violations(&a, &b, &c), 0);
        }
    }

    #[test]
    fn stats_of_uniform_init() {
        let a = model(1, true);
        let s = AlphaSet::filled(&a, 0.5).unwrap().stats();
        assert_eq!((s.mean, s.std, s.frac_near_half), (0.5, 0.0, 1.0));
        let s = AlphaSet::filled(&a, 0.9).unwrap().stats();
        assert!((s.mean - 0.9).abs() < 1e-12 && s.frac_near_half == 0.0);
        assert!(AlphaSet::filled(&a, 1.0).is_err());
    }

    #[test]
    fn range_detects_saturation() {
        let a = model(1, false);
        let mut set = AlphaSet::filled(&a, 0.5).unwrap();
        assert!(set.in_range());
        set.tensors_mut()[0].data_mut()[0] = 40.0;
        assert!(!set.in_range());
    }
}
