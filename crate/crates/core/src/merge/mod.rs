//! Aggregation of aligned models: uniform interpolation, learned
//! per-parameter coefficients, the fine-tuning and ensemble baselines, and
//! interpolation barriers.

mod interp;
mod np;
mod probe;
pub mod report;

pub use interp::{containment_violations, logit, np_compose, uniform_merge, AlphaSet, AlphaStats};
pub use np::{alpha_gradient, finetune, np_optimize, InvariantCounts, MergeConfig, NpOutcome};
pub use probe::{barrier, ensemble_eval, Barrier, BarrierPoint, DEFAULT_BARRIER_POINTS};
pub use report::MergeReport;
