use rayon::prelude::*;

use super::permset::PermutationSet;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{hidden_activations, ModelParams};
use crate::numerics::{lap_solve, Sense, Tensor};

/// Post-ReLU features of every hidden layer over `probe`, in eval mode,
/// one `[N × n_l]` matrix per layer.
pub fn collect_activations(model: &ModelParams, probe: &LabeledDataset, batch_size: usize) -> Result<Vec<Tensor>> {
    collect_feature_activations(model, probe.features(), batch_size)
}

pub fn collect_feature_activations(model: &ModelParams, x: &Tensor, batch_size: usize) -> Result<Vec<Tensor>> {
    if x.ndim() != 2 || x.rows() == 0 {
        return Err(Error::input("probe data must be a nonempty matrix"));
    }
    if batch_size == 0 {
        return Err(Error::input("batch_size must be positive"));
    }
    let n = x.rows();
    let widths = &model.spec().widths[1..model.spec().widths.len() - 1];
    let mut out: Vec<Vec<f64>> = widths.iter().map(|&w| Vec::with_capacity(n * w)).collect();
    let d = x.cols();
    for start in (0..n).step_by(batch_size) {
        let end = (start + batch_size).min(n);
        let batch = Tensor::new(vec![end - start, d], x.data()[start * d..end * d].to_vec())?;
        for (acc, h) in out.iter_mut().zip(hidden_activations(model, &batch)?) {
            acc.extend_from_slice(h.data());
        }
    }
    out.into_iter()
        .zip(widths)
        .map(|(data, &w)| Tensor::new(vec![n, w], data))
        .collect()
}

/// Column means and population standard deviations.
fn moments(acts: &Tensor) -> (Vec<f64>, Vec<f64>) {
    let (n, k) = (acts.rows(), acts.cols());
    let mut mean = vec![0.0; k];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(acts.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; k];
    for i in 0..n {
        for ((s, v), m) in var.iter_mut().zip(acts.row(i)).zip(&mean) {
            *s += (v - m) * (v - m);
        }
    }
    (mean, var.into_iter().map(|s| (s / n as f64).sqrt()).collect())
}

fn centered(acts: &Tensor, mean: &[f64]) -> Tensor {
    let mut c = acts.clone();
    let k = acts.cols();
    for (idx, v) in c.data_mut().iter_mut().enumerate() {
        *v -= mean[idx % k];
    }
    c
}

/// Per-layer statistics of A's and B's hidden features over a probe.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerCorrelation {
    pub mean_a: Vec<f64>,
    pub std_a: Vec<f64>,
    pub mean_b: Vec<f64>,
    pub std_b: Vec<f64>,
    /// Entry `(i, j)`: Pearson correlation of A-neuron `i` with B-neuron `j`.
    pub correlation: Tensor,
}

pub fn correlate(acts_a: &Tensor, acts_b: &Tensor) -> Result<LayerCorrelation> {
    if acts_a.ndim() != 2 || acts_b.ndim() != 2 || acts_a.rows() != acts_b.rows() {
        return Err(Error::input(format!(
            "activation matrices must share their row count, got {:?} and {:?}",
            acts_a.shape(),
            acts_b.shape()
        )));
    }
    let n = acts_a.rows();
    if n < 2 {
        return Err(Error::input(format!("correlation needs at least 2 samples, got {n}")));
    }
    let (mean_a, std_a) = moments(acts_a);
    let (mean_b, std_b) = moments(acts_b);
    let mut corr = centered(acts_a, &mean_a).matmul_tn(&centered(acts_b, &mean_b))?;
    let k = corr.cols();
    for (idx, v) in corr.data_mut().iter_mut().enumerate() {
        let (sa, sb) = (std_a[idx / k], std_b[idx % k]);
        *v = if sa > 0.0 && sb > 0.0 {
            (*v / n as f64 / (sa * sb)).clamp(-1.0, 1.0)
        } else {
            0.0
        };
    }
    Ok(LayerCorrelation {
        mean_a,
        std_a,
        mean_b,
        std_b,
        correlation: corr,
    })
}

/// Pearson cross-correlation `[n_a × n_b]`; neurons with zero variance
/// correlate 0 with everything.
pub fn cross_correlation(acts_a: &Tensor, acts_b: &Tensor) -> Result<Tensor> {
    Ok(correlate(acts_a, acts_b)?.correlation)
}

pub(crate) fn check_same_arch(a: &ModelParams, b: &ModelParams) -> Result<()> {
    if a.spec() != b.spec() {
        return Err(Error::input(format!(
            "architectures differ: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )));
    }
    Ok(())
}

/// Every hidden layer's correlation statistics between A and B.
pub fn activation_stats(
    model_a: &ModelParams,
    model_b: &ModelParams,
    probe: &LabeledDataset,
    batch_size: usize,
) -> Result<Vec<LayerCorrelation>> {
    check_same_arch(model_a, model_b)?;
    let acts_a = collect_activations(model_a, probe, batch_size)?;
    let acts_b = collect_activations(model_b, probe, batch_size)?;
    acts_a.par_iter().zip(&acts_b).map(|(a, b)| correlate(a, b)).collect()
}

/// Matches B's neurons to A's layer by layer, maximising the summed
/// correlation of paired neurons.
pub fn align_permute(
    model_a: &ModelParams,
    model_b: &ModelParams,
    probe: &LabeledDataset,
    batch_size: usize,
) -> Result<PermutationSet> {
    let stats = activation_stats(model_a, model_b, probe, batch_size)?;
    let perms = stats
        .par_iter()
        .map(|s| lap_solve(&s.correlation, Sense::Maximize).map(|a| a.mapping))
        .collect::<Result<Vec<_>>>()?;
    Ok(PermutationSet::new(perms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::align::apply_alignment;
    use crate::data::synth_blobs;
    use crate::nn::{train_model, MlpSpec, TrainConfig};
    use crate::numerics::{Permutation, Rng};

    fn random_matrix(r: usize, c: usize, rng: &mut Rng) -> Tensor {
        Tensor::new(vec![r, c], (0..r * c).map(|_| rng.normal()).collect()).unwrap()
    }

    fn pearson(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len() as f64;
        let mx = x.iter().sum::<f64>() / n;
        let my = y.iter().sum::<f64>() / n;
        let mut sxy = 0.0;
        let mut sxx = 0.0;
        let mut syy = 0.0;
        for (a, b) in x.iter().zip(y) {
            sxy += (a - mx) * (b - my);
            sxx += (a - mx) * (a - mx);
            syy += (b - my) * (b - my);
        }
        sxy / (sxx * syy).sqrt()
    }

    fn column(t: &Tensor, j: usize) -> Vec<f64> {
        (0..t.rows()).map(|i| t.at(i, j)).collect()
    }

    #[test]
    fn matches_two_pass_pearson() {
        let mut rng = Rng::new(1);
        let a = random_matrix(50, 4, &mut rng);
        let b = random_matrix(50, 4, &mut rng);
        let c = cross_correlation(&a, &b).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = pearson(&column(&a, i), &column(&b, j));
                assert!((c.at(i, j) - expected).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn self_and_permuted_correlation() {
        let mut rng = Rng::new(2);
        let a = random_matrix(30, 5, &mut rng);
        let c = cross_correlation(&a, &a).unwrap();
        (0..5).for_each(|i| assert!((c.at(i, i) - 1.0).abs() <= 1e-12));
        let m = Permutation::random(5, &mut rng);
        let b = a.permute_cols(&m).unwrap();
        let c = cross_correlation(&a, &b).unwrap();
        // B column j is A column m[j], so A neuron m[j] pairs with B neuron j
        for j in 0..5 {
            assert!((c.at(m.as_slice()[j], j) - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn zero_variance_is_zero_and_entries_bounded() {
        let mut rng = Rng::new(3);
        let mut a = random_matrix(20, 3, &mut rng);
        (0..20).for_each(|i| a.row_mut(i)[1] = 4.0);
        let c = cross_correlation(&a, &a).unwrap();
        assert!(c.data().iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        (0..3).for_each(|j| assert_eq!(c.at(1, j), 0.0));
    }

    #[test]
    fn needs_two_samples() {
        let a = Tensor::zeros(&[1, 3]);
        assert!(matches!(cross_correlation(&a, &a), Err(Error::Input(_))));
    }

    #[test]
    fn activations_zero_model_and_recompute_oracle() {
        let spec = MlpSpec::uniform(&[3, 4, 2], false).unwrap();
        let probe = synth_blobs(2, 5, 3, 1.0, 0).unwrap();
        let zero = collect_activations(&ModelParams::zeros(&spec), &probe, 3).unwrap();
        assert!(zero[0].data().iter().all(|&v| v == 0.0));

        let m = ModelParams::init(&spec, &mut Rng::new(4));
        let acts = collect_activations(&m, &probe, 3).unwrap();
        assert_eq!(acts, collect_activations(&m, &probe, 7).unwrap());
        let layer = &m.layers()[0];
        for i in 0..probe.len() {
            let x = probe.features().row(i);
            for j in 0..4 {
                let mut z = layer.bias.data()[j];
                for (k, xv) in x.iter().enumerate() {
                    z += layer.weight.at(j, k) * xv;
                }
                assert_eq!(acts[0].at(i, j), z.max(0.0));
            }
        }
    }

    fn trained(seed: u64) -> (ModelParams, crate::data::LabeledDataset) {
        let data = synth_blobs(3, 40, 4, 0.6, 11).unwrap();
        let spec = MlpSpec::uniform(&[4, 12, 10, 3], true).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 16,
            learning_rate: 1e-2,
            seed,
            ..TrainConfig::default()
        };
        (train_model(&spec, &data, &cfg).unwrap().params, data)
    }

    #[test]
    fn self_alignment_is_identity() {
        let (m, data) = trained(1);
        assert!(align_permute(&m, &m, &data, 32).unwrap().is_identity());
    }

    #[test]
    fn planted_permutation_is_inverted() {
        let (m, data) = trained(2);
        let planted = PermutationSet::random(&m, &mut Rng::new(9));
        let shuffled = apply_alignment(&m, &planted).unwrap();
        let found = align_permute(&m, &shuffled, &data, 32).unwrap();
        assert_eq!(found, planted.inverse());
        assert_eq!(apply_alignment(&shuffled, &found).unwrap(), m);
    }

    #[test]
    fn matched_correlation_dominates_diagonal() {
        let (a, data) = trained(3);
        let (b, _) = trained(4);
        let stats = activation_stats(&a, &b, &data, 32).unwrap();
        let perms = align_permute(&a, &b, &data, 32).unwrap();
        for (s, p) in stats.iter().zip(perms.perms()) {
            let n = p.len();
            let diag: f64 = (0..n).map(|i| s.correlation.at(i, i)).sum();
            let matched: f64 = (0..n).map(|i| s.correlation.at(i, p.as_slice()[i])).sum();
            assert!(matched >= diag - 1e-12);
        }
    }

    #[test]
    fn architecture_mismatch_is_input_error() {
        let (a, data) = trained(5);
        let other = ModelParams::zeros(&MlpSpec::uniform(&[4, 11, 10, 3], true).unwrap());
        assert!(matches!(align_permute(&a, &other, &data, 8), Err(Error::Input(_))));
    }
}
