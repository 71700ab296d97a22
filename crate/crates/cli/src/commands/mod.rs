pub mod analyze;
pub mod diagnose;
pub mod randomize;
pub mod simulate;

use crate::CliError;
use strata_infer::estimate::EstimatorKind;
use strata_infer::pipeline::SparseMode;
use strata_infer::variance::VarianceFamily;

pub fn parse_estimators(s: &str) -> Result<Vec<EstimatorKind>, CliError> {
    if s == "all" {
        return Ok(vec![
            EstimatorKind::DiM,
            EstimatorKind::AdjUnweighted,
            EstimatorKind::AdjWeighted,
        ]);
    }
    s.split(',')
        .map(|tok| match tok.trim() {
            "dim" => Ok(EstimatorKind::DiM),
            "adj" | "adj-unweighted" => Ok(EstimatorKind::AdjUnweighted),
            "adjw" | "adj-weighted" => Ok(EstimatorKind::AdjWeighted),
            other => Err(CliError::data(format!(
                "unknown estimator `{other}` (expected dim, adj, adjw, or all)"
            ))),
        })
        .collect()
}

pub fn parse_families(s: &str) -> Result<Vec<VarianceFamily>, CliError> {
    if s == "both" {
        return Ok(vec![VarianceFamily::NewDf, VarianceFamily::LegacyMa]);
    }
    s.split(',')
        .map(|tok| match tok.trim() {
            "new" | "new-df" => Ok(VarianceFamily::NewDf),
            "legacy" | "legacy-ma" => Ok(VarianceFamily::LegacyMa),
            other => Err(CliError::data(format!(
                "unknown variance family `{other}` (expected new, legacy, or both)"
            ))),
        })
        .collect()
}

pub fn parse_sparse(s: &str) -> Result<SparseMode, CliError> {
    match s {
        "strict" => Ok(SparseMode::Strict),
        "complete-case" | "complete" => Ok(SparseMode::CompleteCase),
        "impute" | "imputation" => Ok(SparseMode::Imputation),
        other => Err(CliError::data(format!(
            "unknown sparse mode `{other}` (expected strict, complete-case, or impute)"
        ))),
    }
}
