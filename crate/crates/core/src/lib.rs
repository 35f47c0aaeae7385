//! Sortability statistics for multivariate time series.
//!
//! The crate measures how well marginal variance or the coefficient of
//! determination orders the nodes of a ground-truth summary graph, generates
//! Erdős–Rényi SVAR benchmark data, and ships the structure learners used to
//! probe how much of their accuracy such orderings explain: the
//! sort-and-regress family and a DYNOTEARS-style continuous optimizer.

pub mod baselines;
pub mod datasets;
pub mod dynotears;
pub mod error;
pub mod graphs;
pub mod harness;
pub mod metrics;
pub mod regression;
pub mod rng;
pub mod sortability;
pub mod svar;

pub use baselines::{binarize, sortnregress_ts, EstimatedTsGraph, OrderKind, OrderStrategy};
pub use datasets::{GraphDocument, LabeledDataset};
pub use dynotears::{h_dagness, DynoConfig, DynoFit};
pub use error::{Error, Result};
pub use graphs::{AdjacencyStack, GraphGenConfig, SummaryGraph, WeightedTsGraph};
pub use harness::{BinnedBenchConfig, GridConfig, MethodRegistry, ScalingConfig};
pub use metrics::{evaluate, EvalMode, EvalReport};
pub use regression::{lasso_bic, ols, LassoConfig, LassoFit};
pub use sortability::{
    increasing, marginal_variance, r2_scores, sortability_score, CriterionKind, CriterionVector,
    PairMode, SortabilityReport,
};
pub use svar::{is_stable, simulate, standardize, Panel, SimConfig};
