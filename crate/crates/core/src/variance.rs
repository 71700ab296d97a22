//! Degrees-of-freedom-adjusted variance estimation, the legacy unadjusted
//! estimators, the exact identity linking the two, and normal-approximation
//! confidence intervals.
//!
//! All variance estimators target the asymptotic variance of
//! `sqrt(n) * (tau_hat - tau)`; the reported standard error divides by
//! `sqrt(n)` once. The between-strata component can come out slightly
//! negative in finite samples; the assembled total truncates it at zero
//! while the raw value stays visible in the report.

use serde::{Deserialize, Serialize};

use crate::data::{summarize_values, Arm, Dataset, ValueSummary};
use crate::error::{Error, Result};
use crate::estimate::{EstimatorKind, PointEstimate, RegressionCoefficients};

/// Variance estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VarianceFamily {
    /// Cell variances with divisor `n_a(s) - 1` and the plain `n(s)/n_a(s)`
    /// within-stratum inflation.
    NewDf,
    /// The earlier estimators without the degrees-of-freedom adjustment.
    LegacyMa,
}

impl VarianceFamily {
    pub fn label(self) -> &'static str {
        match self {
            VarianceFamily::NewDf => "new_df",
            VarianceFamily::LegacyMa => "legacy_ma",
        }
    }
}

/// Which unit-level variable the variance was computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceTarget {
    Outcome,
    ResidUnweighted,
    ResidWeighted,
}

impl VarianceTarget {
    pub fn label(self) -> &'static str {
        match self {
            VarianceTarget::Outcome => "y",
            VarianceTarget::ResidUnweighted => "resid_unweighted",
            VarianceTarget::ResidWeighted => "resid_weighted",
        }
    }

    pub fn for_estimator(kind: EstimatorKind) -> VarianceTarget {
        match kind {
            EstimatorKind::DiM => VarianceTarget::Outcome,
            EstimatorKind::AdjUnweighted => VarianceTarget::ResidUnweighted,
            EstimatorKind::AdjWeighted => VarianceTarget::ResidWeighted,
        }
    }
}

/// Variance decomposition and standard error for one estimator.
#[derive(Debug, Clone, Serialize)]
pub struct VarianceReport {
    /// Between-strata component before truncation (may be negative).
    pub v_between_raw: f64,
    /// Between-strata component entering the total (truncated at zero).
    pub v_between_used: f64,
    /// Within-stratum components for arms 0 and 1.
    pub v_within: [f64; 2],
    /// `v_between_used + v_within[0] + v_within[1]`.
    pub v_total: f64,
    /// `sqrt(v_total / n)`.
    pub se: f64,
    pub family: VarianceFamily,
    pub target: VarianceTarget,
    /// Units backing the variance estimate.
    pub n: usize,
    /// Strata backing the variance estimate.
    pub strata: usize,
}

fn included_n(values: &[ValueSummary], include: &[bool]) -> usize {
    values
        .iter()
        .zip(include)
        .filter(|(_, inc)| **inc)
        .map(|(v, _)| v.n)
        .sum()
}

fn var_or_insufficient(v: &ValueSummary, s: usize, arm: usize) -> Result<f64> {
    v.cells[arm].var.ok_or(Error::InsufficientCell {
        stratum: s,
        arm: arm as u8,
        n: v.cells[arm].n,
        need: 2,
    })
}

/// Within-stratum component for one arm over the included strata:
/// `sum_s w_s * (n(s)/n_a(s)) * var(f,a,s)` with `w_s = n(s)/n_included`.
pub(crate) fn v_within_masked(
    values: &[ValueSummary],
    arm: Arm,
    include: &[bool],
) -> Result<f64> {
    let n = included_n(values, include) as f64;
    let a = arm.index();
    let mut total = 0.0;
    for (s, v) in values.iter().enumerate() {
        if !include[s] {
            continue;
        }
        let var = var_or_insufficient(v, s, a)?;
        let w = v.n as f64 / n;
        total += w * (v.n as f64 / v.cells[a].n as f64) * var;
    }
    Ok(total)
}

/// Between-strata component over the included strata, using the raw second
/// moments: `sum_s w_s sum_a (mu2 - var) - 2 sum_s w_s mu0 mu1 - tau^2`.
pub(crate) fn v_between_masked(
    values: &[ValueSummary],
    tau: f64,
    include: &[bool],
) -> Result<f64> {
    let n = included_n(values, include) as f64;
    let mut total = 0.0;
    for (s, v) in values.iter().enumerate() {
        if !include[s] {
            continue;
        }
        let w = v.n as f64 / n;
        let mut cross = 1.0;
        for a in 0..2 {
            let mean2 = v.cells[a].mean2.ok_or(Error::EmptyArm {
                stratum: s,
                arm: a as u8,
            })?;
            let var = var_or_insufficient(v, s, a)?;
            total += w * (mean2 - var);
            cross *= v.cells[a].mean.expect("mean defined when mean2 is");
        }
        total -= 2.0 * w * cross;
    }
    Ok(total - tau * tau)
}

fn legacy_within_masked(values: &[ValueSummary], arm: Arm, include: &[bool]) -> Result<f64> {
    let n = included_n(values, include) as f64;
    let a = arm.index();
    let mut total = 0.0;
    for (s, v) in values.iter().enumerate() {
        if !include[s] {
            continue;
        }
        let var = var_or_insufficient(v, s, a)?;
        let na = v.cells[a].n as f64;
        let w = v.n as f64 / n;
        total += w * ((na - 1.0) / na) * (v.n as f64 / na) * var;
    }
    Ok(total)
}

fn legacy_between_masked(values: &[ValueSummary], tau: f64, include: &[bool]) -> Result<f64> {
    let n = included_n(values, include) as f64;
    let mut total = 0.0;
    for (s, v) in values.iter().enumerate() {
        if !include[s] {
            continue;
        }
        // Means must exist; require the same cell support as the new family
        // so the two are comparable term by term.
        for a in 0..2 {
            var_or_insufficient(v, s, a)?;
        }
        let w = v.n as f64 / n;
        let d = v.cells[1].mean.unwrap() - v.cells[0].mean.unwrap() - tau;
        total += w * d * d;
    }
    Ok(total)
}

/// Within-stratum component for one arm (all strata).
pub fn v_within(values: &[ValueSummary], arm: Arm) -> Result<f64> {
    v_within_masked(values, arm, &vec![true; values.len()])
}

/// Between-strata component (all strata); `tau` is the stratified
/// difference in means of the same variable.
pub fn v_between(values: &[ValueSummary], tau: f64) -> Result<f64> {
    v_between_masked(values, tau, &vec![true; values.len()])
}

pub(crate) fn assemble_masked(
    values: &[ValueSummary],
    tau: f64,
    family: VarianceFamily,
    target: VarianceTarget,
    include: &[bool],
) -> Result<VarianceReport> {
    let (raw_b, w0, w1) = match family {
        VarianceFamily::NewDf => (
            v_between_masked(values, tau, include)?,
            v_within_masked(values, Arm::Control, include)?,
            v_within_masked(values, Arm::Treated, include)?,
        ),
        VarianceFamily::LegacyMa => (
            legacy_between_masked(values, tau, include)?,
            legacy_within_masked(values, Arm::Control, include)?,
            legacy_within_masked(values, Arm::Treated, include)?,
        ),
    };
    let used_b = raw_b.max(0.0);
    let v_total = used_b + w0 + w1;
    let n = included_n(values, include);
    Ok(VarianceReport {
        v_between_raw: raw_b,
        v_between_used: used_b,
        v_within: [w0, w1],
        v_total,
        se: (v_total / n as f64).sqrt(),
        family,
        target,
        n,
        strata: include.iter().filter(|b| **b).count(),
    })
}

/// Assemble a full report for a variable summarized per stratum; `tau` is
/// that variable's stratified difference in means.
pub fn assemble_report(
    values: &[ValueSummary],
    tau: f64,
    family: VarianceFamily,
    target: VarianceTarget,
) -> Result<VarianceReport> {
    assemble_masked(values, tau, family, target, &vec![true; values.len()])
}

/// The estimators without the degrees-of-freedom adjustment.
pub fn legacy_variance(
    values: &[ValueSummary],
    tau: f64,
    target: VarianceTarget,
) -> Result<VarianceReport> {
    assemble_report(values, tau, VarianceFamily::LegacyMa, target)
}

/// Closed-form gap between the adjusted and legacy totals:
/// `sum_s w_s [ var(1,s) n0/n1^2 + var(0,s) n1/n0^2 ]`.
pub fn df_adjustment_gap(values: &[ValueSummary]) -> Result<f64> {
    let n: usize = values.iter().map(|v| v.n).sum();
    let mut gap = 0.0;
    for (s, v) in values.iter().enumerate() {
        let w = v.n as f64 / n as f64;
        let v1 = var_or_insufficient(v, s, 1)?;
        let v0 = var_or_insufficient(v, s, 0)?;
        let n1 = v.cells[1].n as f64;
        let n0 = v.cells[0].n as f64;
        gap += w * (v1 * n0 / (n1 * n1) + v0 * n1 / (n0 * n0));
    }
    Ok(gap)
}

/// Full report for a point estimate on a dataset, recomputing the matching
/// target variable (outcome or residuals) from `beta` when needed.
pub fn variance_report(
    data: &Dataset,
    estimate: &PointEstimate,
    family: VarianceFamily,
    beta: Option<&RegressionCoefficients>,
) -> Result<VarianceReport> {
    let target = VarianceTarget::for_estimator(estimate.method);
    let values = match estimate.method {
        EstimatorKind::DiM => summarize_values(data, data.outcomes()),
        _ => {
            let beta = beta.ok_or_else(|| {
                Error::Config("adjusted variance requires the fitted coefficients".into())
            })?;
            let r = crate::estimate::residuals(data, beta);
            summarize_values(data, &r)
        }
    };
    assemble_report(&values, estimate.tau_hat, family, target)
}

/// Two-sided normal confidence interval.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }
}

/// `tau_hat +- z_{(1+level)/2} * se`.
pub fn confidence_interval(
    estimate: &PointEstimate,
    report: &VarianceReport,
    level: f64,
) -> ConfidenceInterval {
    let z = normal_quantile(0.5 + level / 2.0);
    ConfidenceInterval {
        lower: estimate.tau_hat - z * report.se,
        upper: estimate.tau_hat + z * report.se,
        level,
    }
}

/// Standard normal quantile function (inverse CDF).
///
/// Wichura's rational approximation; absolute error well below 1e-9 over
/// the open unit interval.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "p must lie in (0,1), got {p}");
    const A: [f64; 8] = [
        3.3871328727963666080e0,
        1.3314166789178437745e2,
        1.9715909503065514427e3,
        1.3731693765509461125e4,
        4.5921953931549871457e4,
        6.7265770927008700853e4,
        3.3430575583588128105e4,
        2.5090809287301226727e3,
    ];
    const B: [f64; 8] = [
        1.0,
        4.2313330701600911252e1,
        6.8718700749205790830e2,
        5.3941960214247511077e3,
        2.1213794301586595867e4,
        3.9307895800092710610e4,
        2.8729085735721942674e4,
        5.2264952788528545610e3,
    ];
    const C: [f64; 8] = [
        1.42343711074968357734e0,
        4.63033784615654529590e0,
        5.76949722146069140550e0,
        3.64784832476320460504e0,
        1.27045825245236838258e0,
        2.41780725177450611770e-1,
        2.27238449892691845833e-2,
        7.74545014278341407640e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.05319162663775882187e0,
        1.67638483018380384940e0,
        6.89767334985100004550e-1,
        1.48103976427480074590e-1,
        1.51986665636164571966e-2,
        5.47593808499534494600e-4,
        1.05075007164441684324e-9,
    ];
    const E: [f64; 8] = [
        6.65790464350110377720e0,
        5.46378491116411436990e0,
        1.78482653991729133580e0,
        2.96560571828504891230e-1,
        2.65321895265761230930e-2,
        1.24266094738807843860e-3,
        2.71155556874348757815e-5,
        2.01033439929228813265e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        5.99832206555887937690e-1,
        1.36929880922735805310e-1,
        1.48753612908506148525e-2,
        7.86869131145613259100e-4,
        1.84631831751005468180e-5,
        1.42151175831644588870e-7,
        2.04426310338993978564e-15,
    ];
    fn poly(c: &[f64; 8], r: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &ci| acc * r + ci)
    }
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-r.ln()).sqrt();
    let value = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -value
    } else {
        value
    }
}
