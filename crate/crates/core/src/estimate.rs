//! Point estimation of the average treatment effect: the stratified
//! difference-in-means and its unweighted / weighted regression-adjusted
//! refinements.
//!
//! The adjustment regressions have no intercept; the stratified contrast
//! absorbs it, which is why every pooled covariance is centered within its
//! stratum-arm cell. Estimators never drop sparse strata on their own;
//! explicit handling lives in the sparse-strata module.

use serde::{Deserialize, Serialize};

use crate::data::{Arm, Dataset, StratumSummary, ValueSummary};
use crate::error::{Error, Result};
use crate::solve::{solve_spd, SmallMat};

/// Which point estimator produced a value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorKind {
    /// Stratified difference in means.
    DiM,
    /// Unweighted regression adjustment.
    AdjUnweighted,
    /// Weighted regression adjustment.
    AdjWeighted,
}

impl EstimatorKind {
    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::DiM => "dim",
            EstimatorKind::AdjUnweighted => "adj_unweighted",
            EstimatorKind::AdjWeighted => "adj_weighted",
        }
    }
}

/// A point estimate of the average treatment effect.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PointEstimate {
    pub tau_hat: f64,
    pub method: EstimatorKind,
    /// Units contributing to the estimate.
    pub n_used: usize,
    /// Strata contributing to the estimate.
    pub strata_used: usize,
}

/// Which pooled-covariance construction produced a coefficient vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BetaVariant {
    UnweightedPooled,
    WeightedPooled,
}

/// Fitted adjustment coefficients.
#[derive(Debug, Clone, Serialize)]
pub struct RegressionCoefficients {
    pub beta: Vec<f64>,
    pub variant: BetaVariant,
    /// Per-arm coefficients (control, treated); only the unweighted fit
    /// produces them.
    pub per_arm: Option<(Vec<f64>, Vec<f64>)>,
}

/// Stratified difference in means over all summarized strata, weighted by
/// `n(s)/n`.
///
/// Fails with `EmptyArm` if any stratum lacks units in one arm; callers
/// with sparse strata must route through the sparse-strata pass first.
pub fn strat_diff_in_means(values: &[ValueSummary]) -> Result<PointEstimate> {
    let include = vec![true; values.len()];
    let (tau, n_used, strata_used) = weighted_diff_in_means(values, &include)?;
    Ok(PointEstimate {
        tau_hat: tau,
        method: EstimatorKind::DiM,
        n_used,
        strata_used,
    })
}

/// Difference in means over the included strata, weights renormalized to
/// the included mass. Shared by the strict and complete-case paths.
pub(crate) fn weighted_diff_in_means(
    values: &[ValueSummary],
    include: &[bool],
) -> Result<(f64, usize, usize)> {
    let n_used: usize = values
        .iter()
        .zip(include)
        .filter(|(_, inc)| **inc)
        .map(|(v, _)| v.n)
        .sum();
    if n_used == 0 {
        return Err(Error::NoUsableStrata("estimate"));
    }
    let mut tau = 0.0;
    let mut strata_used = 0;
    for (s, v) in values.iter().enumerate() {
        if !include[s] {
            continue;
        }
        let w = v.n as f64 / n_used as f64;
        let m1 = v.cells[1].mean.ok_or(Error::EmptyArm { stratum: s, arm: 1 })?;
        let m0 = v.cells[0].mean.ok_or(Error::EmptyArm { stratum: s, arm: 0 })?;
        tau += w * (m1 - m0);
        strata_used += 1;
    }
    Ok((tau, n_used, strata_used))
}

fn total_n(summaries: &[StratumSummary]) -> usize {
    summaries.iter().map(|s| s.n).sum()
}

fn p_of(summaries: &[StratumSummary]) -> usize {
    summaries
        .iter()
        .flat_map(|s| s.arms.iter())
        .find_map(|a| a.mean_x.as_ref().map(|m| m.len()))
        .unwrap_or(0)
}

/// Pool `sum_s (n(s)/n) * extra(s,a) * cov(s,a)` into `(Sxx, Sxy)` for one
/// arm, skipping or rejecting cells with fewer than two units.
fn pooled_arm(
    summaries: &[StratumSummary],
    arm: Arm,
    weighted: bool,
    skip_deficient: bool,
) -> Result<(SmallMat, Vec<f64>, usize)> {
    let n = total_n(summaries) as f64;
    let p = p_of(summaries);
    let mut sxx = SmallMat::zeros(p);
    let mut sxy = vec![0.0; p];
    let mut used = 0usize;
    for (s, summary) in summaries.iter().enumerate() {
        let cell = summary.arm(arm);
        if cell.y.n < 2 {
            if skip_deficient {
                continue;
            }
            return Err(Error::InsufficientCell {
                stratum: s,
                arm: arm as u8,
                n: cell.y.n,
                need: 2,
            });
        }
        let mut w = summary.n as f64 / n;
        if weighted {
            w *= summary.n as f64 / cell.y.n as f64;
        }
        let cov_xx = cell.cov_xx.as_ref().expect("n >= 2 has covariances");
        let cov_xy = cell.cov_xy.as_ref().expect("n >= 2 has covariances");
        sxx.add_scaled(w, cov_xx);
        for (acc, v) in sxy.iter_mut().zip(cov_xy) {
            *acc += w * v;
        }
        used += 1;
    }
    Ok((sxx, sxy, used))
}

fn fit_unweighted(
    summaries: &[StratumSummary],
    pi1_overall: f64,
    skip_deficient: bool,
) -> Result<RegressionCoefficients> {
    let (sxx0, sxy0, used0) = pooled_arm(summaries, Arm::Control, false, skip_deficient)?;
    let (sxx1, sxy1, used1) = pooled_arm(summaries, Arm::Treated, false, skip_deficient)?;
    if used0 == 0 || used1 == 0 {
        return Err(Error::NoUsableStrata("regression"));
    }
    let beta0 = solve_spd(&sxx0, &sxy0)?;
    let beta1 = solve_spd(&sxx1, &sxy1)?;
    let pi0 = 1.0 - pi1_overall;
    let beta = beta0
        .iter()
        .zip(&beta1)
        .map(|(b0, b1)| pi1_overall * b0 + pi0 * b1)
        .collect();
    Ok(RegressionCoefficients {
        beta,
        variant: BetaVariant::UnweightedPooled,
        per_arm: Some((beta0, beta1)),
    })
}

fn fit_weighted(summaries: &[StratumSummary], skip_deficient: bool) -> Result<RegressionCoefficients> {
    let (mut kxx, mut kxy, used0) = pooled_arm(summaries, Arm::Control, true, skip_deficient)?;
    let (kxx1, kxy1, used1) = pooled_arm(summaries, Arm::Treated, true, skip_deficient)?;
    if used0 == 0 || used1 == 0 {
        return Err(Error::NoUsableStrata("regression"));
    }
    kxx.add_scaled(1.0, kxx1.as_slice());
    for (acc, v) in kxy.iter_mut().zip(&kxy1) {
        *acc += v;
    }
    let beta = solve_spd(&kxx, &kxy)?;
    Ok(RegressionCoefficients {
        beta,
        variant: BetaVariant::WeightedPooled,
        per_arm: None,
    })
}

/// Unweighted pooled-covariance fit: per-arm coefficients mixed as
/// `pi1 * beta(0) + pi0 * beta(1)`.
///
/// Requires at least two units per arm in every stratum.
pub fn fit_unweighted_beta(
    summaries: &[StratumSummary],
    pi1_overall: f64,
) -> Result<RegressionCoefficients> {
    fit_unweighted(summaries, pi1_overall, false)
}

/// As [`fit_unweighted_beta`], pooling only the cells with at least two
/// units. Used by the sparse-strata pipelines.
pub fn fit_unweighted_beta_sparse(
    summaries: &[StratumSummary],
    pi1_overall: f64,
) -> Result<RegressionCoefficients> {
    fit_unweighted(summaries, pi1_overall, true)
}

/// Weighted pooled-covariance fit with the extra `n(s)/n_a(s)` cell weight;
/// both arms share one solve.
pub fn fit_weighted_beta(summaries: &[StratumSummary]) -> Result<RegressionCoefficients> {
    fit_weighted(summaries, false)
}

/// As [`fit_weighted_beta`], pooling only cells with at least two units.
pub fn fit_weighted_beta_sparse(summaries: &[StratumSummary]) -> Result<RegressionCoefficients> {
    fit_weighted(summaries, true)
}

/// Unit-level residuals `y_i - x_i' beta`.
pub fn residuals(data: &Dataset, beta: &RegressionCoefficients) -> Vec<f64> {
    assert_eq!(beta.beta.len(), data.p());
    (0..data.n())
        .map(|i| {
            let x = data.covariates(i);
            let fitted: f64 = x.iter().zip(&beta.beta).map(|(a, b)| a * b).sum();
            data.outcome(i) - fitted
        })
        .collect()
}

/// Regression-adjusted estimate: the stratified difference in means of the
/// residuals `y_i - x_i' beta`.
pub fn adjusted_estimate(data: &Dataset, beta: &RegressionCoefficients) -> Result<PointEstimate> {
    let r = residuals(data, beta);
    let values = crate::data::summarize_values(data, &r);
    let mut est = strat_diff_in_means(&values)?;
    est.method = match beta.variant {
        BetaVariant::UnweightedPooled => EstimatorKind::AdjUnweighted,
        BetaVariant::WeightedPooled => EstimatorKind::AdjWeighted,
    };
    Ok(est)
}
