use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Feature matrix with one integer label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    provenance: String,
}

impl LabeledDataset {
    pub fn new(
        features: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if features.ndim() != 2 {
            return Err(Error::dim(format!(
                "features must be a matrix, got {:?}",
                features.shape()
            )));
        }
        if features.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::input("num_classes must be positive"));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::input(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if !features.all_finite() {
            return Err(Error::Numeric("dataset features contain NaN or infinity".into()));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            provenance: provenance.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize], note: &str) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::input(format!("empty subset ({note})")));
        }
        let (features, labels) = self.gather(indices);
        Ok(Self {
            features,
            labels,
            num_classes: self.num_classes,
            provenance: format!("{} | {note}", self.provenance),
        })
    }

    /// Features and labels for a batch of row indices.
    pub fn gather(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let d = self.dims();
        let mut data = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(self.features.row(i));
            labels.push(self.labels[i]);
        }
        (Tensor::from_parts(vec![indices.len(), d], data), labels)
    }

    /// Row indices of each class, ascending.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes];
        for (i, &y) in self.labels.iter().enumerate() {
            out[y].push(i);
        }
        out
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut out = vec![0; self.num_classes];
        self.labels.iter().for_each(|&y| out[y] += 1);
        out
    }

    /// Contiguous batches of at most `batch_size` rows in index order.
    pub fn batches(&self, batch_size: usize) -> impl Iterator<Item = (Tensor, Vec<usize>)> + '_ {
        let n = self.len();
        let bs = batch_size.max(1);
        (0..n).step_by(bs).map(move |start| {
            let idx: Vec<usize> = (start..(start + bs).min(n)).collect();
            self.gather(&idx)
        })
    }

    /// Same rows, with the class count widened (e.g. to a model's output width).
    pub fn with_num_classes(mut self, num_classes: usize) -> Result<Self> {
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::input(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        self.num_classes = num_classes;
        Ok(self)
    }
}
