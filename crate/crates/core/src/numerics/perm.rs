use serde::{Deserialize, Serialize};

use super::rng::Rng;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// A bijection on `0..n`. Applied to a vector, output index `i` takes input
/// index `mapping[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &m in &mapping {
            if m >= n || seen[m] {
                return Err(Error::input(format!("{mapping:?} is not a permutation")));
            }
            seen[m] = true;
        }
        Ok(Self(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Self((0..n).collect())
    }

    /// Uniformly random permutation (Fisher–Yates).
    pub fn random(n: usize, rng: &mut Rng) -> Self {
        let mut m: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut m);
        Self(m)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &m)| i == m)
    }

    pub fn inverse(&self) -> Self {
        let mut inv = vec![0; self.0.len()];
        for (i, &m) in self.0.iter().enumerate() {
            inv[m] = i;
        }
        Self(inv)
    }

    /// `self ∘ inner`: applying the result equals applying `inner` first and
    /// then `self`. In matrix form, `P(self) · P(inner)`.
    pub fn compose(&self, inner: &Permutation) -> Result<Self> {
        if self.len() != inner.len() {
            return Err(Error::dim(format!(
                "cannot compose permutations of length {} and {}",
                self.len(),
                inner.len()
            )));
        }
        Ok(Self(self.0.iter().map(|&i| inner.0[i]).collect()))
    }

    /// Permutation matrix `P` with `(P x)[i] = x[mapping[i]]`.
    pub fn to_matrix(&self) -> Tensor {
        let n = self.len();
        let mut t = Tensor::zeros(&[n, n]);
        for (i, &m) in self.0.iter().enumerate() {
            t.data_mut()[i * n + m] = 1.0;
        }
        t
    }
}

impl TryFrom<Vec<usize>> for Permutation {
    type Error = Error;

    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Permutation> for Vec<usize> {
    fn from(p: Permutation) -> Self {
        p.0
    }
}
