//! Seeded synthetic classification corpora.

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::numerics::{Rng, Tensor};

/// One isotropic Gaussian per class. Centers are standard normal in `d`
/// dimensions; points are `center + spread · N(0, I)`. Rows are grouped by
/// class.
pub fn synth_blobs(classes: usize, per_class: usize, dims: usize, spread: f64, seed: u64) -> Result<LabeledDataset> {
    synth_mixture(&MixtureSpec {
        classes,
        modes_per_class: 1,
        per_class,
        dims,
        spread,
        seed,
    })
}

/// Gaussian mixture with several modes per class; a harder, non-linearly
/// separable variant of [`synth_blobs`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub classes: usize,
    pub modes_per_class: usize,
    pub per_class: usize,
    pub dims: usize,
    pub spread: f64,
    pub seed: u64,
}

pub fn synth_mixture(spec: &MixtureSpec) -> Result<LabeledDataset> {
    if spec.classes < 2 {
        return Err(Error::input("need at least two classes"));
    }
    if spec.per_class == 0 || spec.dims == 0 || spec.modes_per_class == 0 {
        return Err(Error::input("per_class, dims and modes_per_class must be positive"));
    }
    if !(spec.spread >= 0.0 && spec.spread.is_finite()) {
        return Err(Error::input("spread must be a nonnegative finite number"));
    }
    let mut center_rng = Rng::new(Rng::derive_seed(spec.seed, 0));
    let centers: Vec<Vec<Vec<f64>>> = (0..spec.classes)
        .map(|_| {
            (0..spec.modes_per_class)
                .map(|_| (0..spec.dims).map(|_| center_rng.normal()).collect())
                .collect()
        })
        .collect();
    let mut rng = Rng::new(Rng::derive_seed(spec.seed, 1));
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.dims);
    let mut labels = Vec::with_capacity(n);
    for (c, modes) in centers.iter().enumerate() {
        for i in 0..spec.per_class {
            let center = &modes[i % modes.len()];
            for &mu in center {
                let noise = if spec.spread > 0.0 {
                    spec.spread * rng.normal()
                } else {
                    0.0
                };
                data.push(mu + noise);
            }
            labels.push(c);
        }
    }
    LabeledDataset::new(
        Tensor::new(vec![n, spec.dims], data)?,
        labels,
        spec.classes,
        format!(
            "synth:classes={},modes={},per_class={},dims={},spread={},seed={}",
            spec.classes, spec.modes_per_class, spec.per_class, spec.dims, spec.spread, spec.seed
        ),
    )
}
