//! Deterministic approximation of the volume of restricted independent-set
//! polytopes.
//!
//! The pipeline discretizes the polytope onto an integer lattice, estimates
//! lattice-point marginals with a correlation-decay recursion, telescopes the
//! marginals into a count estimate, and converts the count into a volume
//! estimate with certified sandwich bounds. Exact big-integer enumeration is
//! available on small instances as an oracle for every approximate path.

mod error;
pub mod counting;
pub mod decay;
pub mod graph;
pub mod lattice;
pub mod marginals;
pub mod verify;
pub mod volume;

pub use counting::{choose_depth, Approximator, DepthBudget, LogEstimate};
pub use decay::{alpha_threshold, gradient_bound, AlphaThreshold, ContractionBound};
pub use error::{Error, Result};
pub use graph::{ConstraintSet, Graph};
pub use lattice::{
    exact_count, exact_count_with_budget, exact_marginal, exact_marginal_distribution, is_feasible,
    s_set, BigCount, ExactMarginal, Params,
};
pub use marginals::{
    exact_child_table, random_fmd, EffectiveCap, FeasibleProbabilityDistribution, MarginalTable,
    Weight,
};
pub use verify::{run_suite, PropertyOutcome, Suite, SuiteReport};
pub use volume::{
    count_lower, count_upper, exact_volume_small, mc_volume, sandwich, volume_estimate,
    volume_estimate_exact, GridParams, UpperBoundSet, VolumeRun, VolumeSandwich, VolumeWarning,
};
