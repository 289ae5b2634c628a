//! Neuron alignment: matching model B's hidden units to model A's and
//! relabelling B accordingly.

mod activation;
mod permset;
mod weight_matching;

pub use activation::{
    activation_stats, align_permute, collect_activations, collect_feature_activations, correlate, cross_correlation,
    LayerCorrelation,
};
pub use permset::{apply_alignment, PermutationSet};
pub use weight_matching::{
    align_weight_matching, weight_inner_product, weight_matching, WeightMatching, DEFAULT_MAX_SWEEPS,
};
