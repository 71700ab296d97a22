//! Covariate-adaptive randomization and robust inference for the average
//! treatment effect in two-arm stratified experiments.
//!
//! The crate covers the full workflow:
//!
//! - [`data`]: the trial data model and per-stratum sample moments;
//! - [`assign`]: simple, stratified block, permuted block, minimization,
//!   and Hu-Hu treatment assignment;
//! - [`estimate`]: the stratified difference in means and its unweighted /
//!   weighted regression-adjusted refinements;
//! - [`variance`]: degrees-of-freedom-adjusted variance estimators, their
//!   legacy counterparts, the exact gap between the two, and normal
//!   confidence intervals;
//! - [`sparse`]: complete-case and cluster-imputation handling for designs
//!   with very many, very small strata;
//! - [`dgp`] and [`sim`]: data-generating processes and a deterministic
//!   parallel replication engine for coverage studies;
//! - [`pipeline`]: the glue that runs any estimator / variance / sparse
//!   combination on one dataset;
//! - [`csv_io`]: the CSV formats shared with the command-line tool.

pub mod assign;
pub mod csv_io;
pub mod data;
pub mod dgp;
pub mod error;
pub mod estimate;
pub mod pipeline;
pub mod rng;
pub mod sim;
pub mod solve;
pub mod sparse;
pub mod variance;

pub use assign::{RandomizerConfig, Scheme};
pub use data::{
    assignment_proportions, summarize, summarize_values, Arm, BalanceDiagnostics, Dataset,
    DatasetBuilder, DesignTargets, StratumLabel, StratumSummary, ValueCell, ValueSummary,
};
pub use dgp::{Model, ModelSpec, PiRegime, Setting};
pub use error::{Error, ErrorClass, Result};
pub use estimate::{EstimatorKind, PointEstimate, RegressionCoefficients};
pub use pipeline::{analyze, AnalysisOptions, AnalysisResult, SparseMode};
pub use sim::{run_cell, run_cell_detailed, run_extreme_sweep, CanonicalPi, MetricsRow, SimulationSpec, SweepConfig};
pub use sparse::{ClusterMap, FlagMode, ImputeWeightRule, StratumFlags};
pub use variance::{
    confidence_interval, normal_quantile, ConfidenceInterval, VarianceFamily, VarianceReport,
    VarianceTarget,
};
