//! Labelled datasets: IDX loading, synthetic corpora, and splitting.

mod dataset;
pub mod idx;
pub mod split;
mod synth;

pub use dataset::LabeledDataset;
pub use idx::{load_idx, load_idx_with_classes, save_idx};
pub use split::{split_dirichlet, split_eighty_twenty, subsample_per_class, Partition, SplitSpec};
pub use synth::{synth_blobs, synth_mixture, MixtureSpec};
