//! The estimator pipeline: one entry point that takes a dataset plus
//! options and produces point estimates, variance reports, and confidence
//! intervals for every requested (estimator, variance family) pair,
//! routed through the chosen sparse-strata handling.

use serde::Serialize;

use crate::data::{outcome_values, summarize, summarize_values, Dataset, DesignTargets, ValueSummary};
use crate::error::{Error, Result};
use crate::estimate::{
    fit_unweighted_beta, fit_unweighted_beta_sparse, fit_weighted_beta, fit_weighted_beta_sparse,
    residuals, strat_diff_in_means, EstimatorKind, PointEstimate, RegressionCoefficients,
};
use crate::sparse::{
    complete_case_estimate, flag_strata, impute_summaries, imputed_estimate, ClusterMap, FlagMode,
};
use crate::variance::{
    assemble_report, confidence_interval, ConfidenceInterval, VarianceFamily, VarianceReport,
    VarianceTarget,
};

/// How strata too small for estimation are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SparseMode {
    /// Any cell below the variance threshold is an error.
    Strict,
    /// Drop deficient strata, renormalizing weights.
    CompleteCase,
    /// Borrow cluster-weighted donor statistics for deficient cells.
    Imputation,
}

impl SparseMode {
    pub fn label(self) -> &'static str {
        match self {
            SparseMode::Strict => "strict",
            SparseMode::CompleteCase => "complete_case",
            SparseMode::Imputation => "imputation",
        }
    }
}

/// What to compute and how.
#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub estimators: Vec<EstimatorKind>,
    pub families: Vec<VarianceFamily>,
    pub sparse: SparseMode,
    pub level: f64,
    /// Cluster map for imputation; one global cluster when absent.
    pub clusters: Option<ClusterMap>,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions {
            estimators: vec![
                EstimatorKind::DiM,
                EstimatorKind::AdjUnweighted,
                EstimatorKind::AdjWeighted,
            ],
            families: vec![VarianceFamily::NewDf],
            sparse: SparseMode::Strict,
            level: 0.95,
            clusters: None,
        }
    }
}

/// One (estimator, family) result.
#[derive(Debug, Clone, Serialize)]
pub struct AnalysisResult {
    pub estimator: EstimatorKind,
    pub family: VarianceFamily,
    pub point: PointEstimate,
    pub report: VarianceReport,
    pub ci: ConfidenceInterval,
}

/// Run the full pipeline on one dataset.
///
/// `targets`, when supplied, provide the overall treated probability used
/// to mix the per-arm unweighted coefficients; otherwise the observed
/// proportion stands in.
pub fn analyze(
    data: &Dataset,
    targets: Option<&DesignTargets>,
    opts: &AnalysisOptions,
) -> Result<Vec<AnalysisResult>> {
    let needs_adjustment = opts
        .estimators
        .iter()
        .any(|e| *e != EstimatorKind::DiM);
    if needs_adjustment && data.p() == 0 {
        return Err(Error::Config(
            "adjusted estimators need at least one covariate column".into(),
        ));
    }
    let summaries = summarize(data);
    let y_values = outcome_values(&summaries);
    let pi1_overall = match targets {
        Some(t) => {
            let n = data.n() as f64;
            let weights: Vec<f64> = y_values.iter().map(|v| v.n as f64 / n).collect();
            t.overall_pi1(&weights)?
        }
        None => data.observed_pi1(),
    };

    let mut results = Vec::with_capacity(opts.estimators.len() * opts.families.len());
    for &estimator in &opts.estimators {
        let beta = fit_for(estimator, &summaries, pi1_overall, opts.sparse)?;
        let values: Vec<ValueSummary> = match &beta {
            None => y_values.clone(),
            Some(b) => summarize_values(data, &residuals(data, b)),
        };
        match opts.sparse {
            SparseMode::Strict => {
                let mut point = strat_diff_in_means(&values)?;
                point.method = estimator;
                for &family in &opts.families {
                    let report = assemble_report(
                        &values,
                        point.tau_hat,
                        family,
                        VarianceTarget::for_estimator(estimator),
                    )?;
                    let ci = confidence_interval(&point, &report, opts.level);
                    results.push(AnalysisResult {
                        estimator,
                        family,
                        point,
                        report,
                        ci,
                    });
                }
            }
            SparseMode::CompleteCase => {
                let flags = flag_strata(&values, FlagMode::PerStratum);
                for &family in &opts.families {
                    let (point, report) =
                        complete_case_estimate(&values, &flags, family, estimator)?;
                    let ci = confidence_interval(&point, &report, opts.level);
                    results.push(AnalysisResult {
                        estimator,
                        family,
                        point,
                        report,
                        ci,
                    });
                }
            }
            SparseMode::Imputation => {
                let flags = flag_strata(&values, FlagMode::PerStratumArm);
                let owned;
                let clusters = match &opts.clusters {
                    Some(c) => c,
                    None => {
                        owned = ClusterMap::single_cluster(&values)?;
                        &owned
                    }
                };
                let imputed = impute_summaries(&values, &flags, clusters)?;
                for &family in &opts.families {
                    let (point, report) = imputed_estimate(&imputed, family, estimator)?;
                    let ci = confidence_interval(&point, &report, opts.level);
                    results.push(AnalysisResult {
                        estimator,
                        family,
                        point,
                        report,
                        ci,
                    });
                }
            }
        }
    }
    Ok(results)
}

fn fit_for(
    estimator: EstimatorKind,
    summaries: &[crate::data::StratumSummary],
    pi1_overall: f64,
    sparse: SparseMode,
) -> Result<Option<RegressionCoefficients>> {
    let strict = matches!(sparse, SparseMode::Strict);
    Ok(match estimator {
        EstimatorKind::DiM => None,
        EstimatorKind::AdjUnweighted => Some(if strict {
            fit_unweighted_beta(summaries, pi1_overall)?
        } else {
            fit_unweighted_beta_sparse(summaries, pi1_overall)?
        }),
        EstimatorKind::AdjWeighted => Some(if strict {
            fit_weighted_beta(summaries)?
        } else {
            fit_weighted_beta_sparse(summaries)?
        }),
    })
}
