//! Handling for extremely many strata, where cells with fewer than one or
//! two units per arm are common: complete-case filtering and cluster-based
//! imputation of cell statistics.
//!
//! When every cell holds at least two units per arm, both pipelines reduce
//! to the standard estimators on the same floating-point path.

use serde::Serialize;

use crate::data::ValueSummary;
use crate::error::{Error, Result};
use crate::estimate::{weighted_diff_in_means, EstimatorKind, PointEstimate};
use crate::variance::{
    assemble_masked, v_between_masked, VarianceFamily, VarianceReport, VarianceTarget,
};

/// Whether flags are taken per stratum (complete case) or per stratum-arm
/// cell (imputation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FlagMode {
    PerStratum,
    PerStratumArm,
}

/// Usability indicators: `est` marks cells able to support a mean,
/// `se` cells able to support a variance.
#[derive(Debug, Clone, Serialize)]
pub struct StratumFlags {
    pub mode: FlagMode,
    pub est: Vec<[bool; 2]>,
    pub se: Vec<[bool; 2]>,
}

impl StratumFlags {
    /// Stratum-level estimate flag (both arms usable).
    pub fn est_stratum(&self, s: usize) -> bool {
        self.est[s][0] && self.est[s][1]
    }

    /// Stratum-level variance flag (both arms usable).
    pub fn se_stratum(&self, s: usize) -> bool {
        self.se[s][0] && self.se[s][1]
    }

    fn est_mask(&self) -> Vec<bool> {
        (0..self.est.len()).map(|s| self.est_stratum(s)).collect()
    }

    fn se_mask(&self) -> Vec<bool> {
        (0..self.se.len()).map(|s| self.se_stratum(s)).collect()
    }
}

/// Mark which cells can support estimation (at least one unit) and
/// variance estimation (at least two units).
///
/// In `PerStratum` mode a stratum is flagged as a whole: usable only when
/// both arms pass.
pub fn flag_strata(values: &[ValueSummary], mode: FlagMode) -> StratumFlags {
    let mut est = Vec::with_capacity(values.len());
    let mut se = Vec::with_capacity(values.len());
    for v in values {
        let cell_est = [v.cells[0].n >= 1, v.cells[1].n >= 1];
        let cell_se = [v.cells[0].n >= 2, v.cells[1].n >= 2];
        match mode {
            FlagMode::PerStratumArm => {
                est.push(cell_est);
                se.push(cell_se);
            }
            FlagMode::PerStratum => {
                let e = cell_est[0] && cell_est[1];
                let s = cell_se[0] && cell_se[1];
                est.push([e, e]);
                se.push([s, s]);
            }
        }
    }
    StratumFlags { mode, est, se }
}

/// Complete-case analysis: the effect uses strata whose arms both hold at
/// least one unit, the variance those with at least two, each with weights
/// renormalized over the retained strata.
pub fn complete_case_estimate(
    values: &[ValueSummary],
    flags: &StratumFlags,
    family: VarianceFamily,
    method: EstimatorKind,
) -> Result<(PointEstimate, VarianceReport)> {
    let est_mask = flags.est_mask();
    let se_mask = flags.se_mask();
    if !est_mask.iter().any(|b| *b) {
        return Err(Error::NoUsableStrata("estimate"));
    }
    if !se_mask.iter().any(|b| *b) {
        return Err(Error::NoUsableStrata("variance"));
    }
    let (tau, n_used, strata_used) = weighted_diff_in_means(values, &est_mask)?;
    // The variance is assembled on its own subset; its internal difference
    // in means keeps the between-strata term centered.
    let (tau_se, _, _) = weighted_diff_in_means(values, &se_mask)?;
    let report = assemble_masked(
        values,
        tau_se,
        family,
        VarianceTarget::for_estimator(method),
        &se_mask,
    )?;
    Ok((
        PointEstimate {
            tau_hat: tau,
            method,
            n_used,
            strata_used,
        },
        report,
    ))
}

/// Stratum-to-cluster assignment plus per-arm donor weights.
#[derive(Debug, Clone)]
pub struct ClusterMap {
    pub cluster: Vec<u32>,
    pub weights: [Vec<f64>; 2],
}

impl ClusterMap {
    pub fn new(cluster: Vec<u32>, weights: [Vec<f64>; 2]) -> Result<Self> {
        if weights[0].len() != cluster.len() || weights[1].len() != cluster.len() {
            return Err(Error::Config("cluster and weight lengths differ".into()));
        }
        for w in weights.iter().flatten() {
            if *w < 0.0 || !w.is_finite() {
                return Err(Error::Config(format!("donor weight {w} must be >= 0")));
            }
        }
        Ok(ClusterMap { cluster, weights })
    }

    /// Default donor weights `w_a[s] = n(s)/n`, both arms alike.
    pub fn with_stratum_share_weights(cluster: Vec<u32>, values: &[ValueSummary]) -> Result<Self> {
        let n: usize = values.iter().map(|v| v.n).sum();
        let w: Vec<f64> = values.iter().map(|v| v.n as f64 / n as f64).collect();
        ClusterMap::new(cluster, [w.clone(), w])
    }

    /// Alternative weights `w_a[s] = n_a(s)/n_a`; with these, an imputed
    /// cell mean equals the pooled mean of its cluster-arm donors.
    pub fn with_arm_share_weights(cluster: Vec<u32>, values: &[ValueSummary]) -> Result<Self> {
        let totals: [usize; 2] = [0, 1].map(|a| values.iter().map(|v| v.cells[a].n).sum());
        let weights = [0usize, 1].map(|a| {
            values
                .iter()
                .map(|v| {
                    if totals[a] == 0 {
                        0.0
                    } else {
                        v.cells[a].n as f64 / totals[a] as f64
                    }
                })
                .collect::<Vec<f64>>()
        });
        ClusterMap::new(cluster, weights)
    }

    /// Everything in one cluster.
    pub fn single_cluster(values: &[ValueSummary]) -> Result<Self> {
        ClusterMap::with_stratum_share_weights(vec![0; values.len()], values)
    }
}

/// Rule used to build default donor weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ImputeWeightRule {
    /// `w_a[s] = n(s)/n`
    StratumShare,
    /// `w_a[s] = n_a(s)/n_a`
    ArmShare,
}

/// Summaries after imputation, plus the replacement within-stratum
/// inflation factor for cells that had no units at all.
#[derive(Debug, Clone)]
pub struct ImputedSummaries {
    pub values: Vec<ValueSummary>,
    /// `n(s)/n_a(s)` substitute per (stratum, arm) when `n_a(s) = 0`:
    /// the donor-pooled `sum n(s') / sum n_a(s')`.
    pub within_factor: Vec<[Option<f64>; 2]>,
}

struct DonorAverage {
    value: f64,
    pooled_factor: f64,
}

/// Weighted average of `stat` over same-cluster donors (strata where
/// `donor_ok` holds). Recipients contribute nothing.
fn donor_average(
    values: &[ValueSummary],
    clusters: &ClusterMap,
    s: usize,
    arm: usize,
    donor_ok: impl Fn(&ValueSummary) -> bool,
    stat: impl Fn(&ValueSummary) -> f64,
    statistic: &'static str,
) -> Result<DonorAverage> {
    let cid = clusters.cluster[s];
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pooled_n = 0usize;
    let mut pooled_na = 0usize;
    for (t, v) in values.iter().enumerate() {
        if clusters.cluster[t] != cid || !donor_ok(v) {
            continue;
        }
        let w = clusters.weights[arm][t];
        if w <= 0.0 {
            continue;
        }
        num += w * stat(v);
        den += w;
        pooled_n += v.n;
        pooled_na += v.cells[arm].n;
    }
    if den <= 0.0 {
        return Err(Error::NoDonor {
            cluster: cid,
            stratum: s,
            arm: arm as u8,
            statistic,
        });
    }
    Ok(DonorAverage {
        value: num / den,
        pooled_factor: pooled_n as f64 / pooled_na as f64,
    })
}

/// Fill deficient cells with cluster-weighted donor statistics.
///
/// For each `(arm, stratum)` cell without a variance (`se` flag off) the
/// variance is replaced by the cluster-weighted average over donors; cells
/// without any unit also receive donor means and second moments.
pub fn impute_summaries(
    values: &[ValueSummary],
    flags: &StratumFlags,
    clusters: &ClusterMap,
) -> Result<ImputedSummaries> {
    if clusters.cluster.len() != values.len() {
        return Err(Error::Config(
            "cluster map does not cover every stratum".into(),
        ));
    }
    let mut out = values.to_vec();
    let mut within_factor = vec![[None, None]; values.len()];
    for s in 0..values.len() {
        for a in 0..2 {
            if !flags.se[s][a] {
                let avg = donor_average(
                    values,
                    clusters,
                    s,
                    a,
                    |v| v.cells[a].var.is_some(),
                    |v| v.cells[a].var.unwrap(),
                    "variance",
                )?;
                out[s].cells[a].var = Some(avg.value);
                if values[s].cells[a].n == 0 {
                    within_factor[s][a] = Some(avg.pooled_factor);
                }
            }
            if !flags.est[s][a] {
                let mean = donor_average(
                    values,
                    clusters,
                    s,
                    a,
                    |v| v.cells[a].mean.is_some(),
                    |v| v.cells[a].mean.unwrap(),
                    "mean",
                )?;
                let mean2 = donor_average(
                    values,
                    clusters,
                    s,
                    a,
                    |v| v.cells[a].mean2.is_some(),
                    |v| v.cells[a].mean2.unwrap(),
                    "second moment",
                )?;
                out[s].cells[a].mean = Some(mean.value);
                out[s].cells[a].mean2 = Some(mean2.value);
            }
        }
    }
    Ok(ImputedSummaries {
        values: out,
        within_factor,
    })
}

fn imputed_within(imputed: &ImputedSummaries, arm: usize, family: VarianceFamily) -> Result<f64> {
    let values = &imputed.values;
    let n: usize = values.iter().map(|v| v.n).sum();
    let mut total = 0.0;
    for (s, v) in values.iter().enumerate() {
        let w = v.n as f64 / n as f64;
        let var = v.cells[arm].var.ok_or(Error::InsufficientCell {
            stratum: s,
            arm: arm as u8,
            n: v.cells[arm].n,
            need: 2,
        })?;
        let na = v.cells[arm].n;
        let factor = if na >= 1 {
            v.n as f64 / na as f64
        } else {
            imputed.within_factor[s][arm].ok_or(Error::InsufficientCell {
                stratum: s,
                arm: arm as u8,
                n: na,
                need: 1,
            })?
        };
        let deflate = match family {
            VarianceFamily::NewDf => 1.0,
            // The legacy deflation (n_a - 1)/n_a; empty cells keep the
            // donor-pooled factor undeflated.
            VarianceFamily::LegacyMa if na >= 1 => (na as f64 - 1.0) / na as f64,
            VarianceFamily::LegacyMa => 1.0,
        };
        total += w * factor * deflate * var;
    }
    Ok(total)
}

/// Estimate and variance over all strata with original `n(s)/n` weights,
/// using imputed cell statistics where flagged.
pub fn imputed_estimate(
    imputed: &ImputedSummaries,
    family: VarianceFamily,
    method: EstimatorKind,
) -> Result<(PointEstimate, VarianceReport)> {
    let values = &imputed.values;
    let include = vec![true; values.len()];
    let (tau, n_used, strata_used) = weighted_diff_in_means(values, &include)?;
    let v_between = match family {
        VarianceFamily::NewDf => v_between_masked(values, tau, &include)?,
        VarianceFamily::LegacyMa => {
            let n = n_used as f64;
            let mut total = 0.0;
            for v in values.iter() {
                let w = v.n as f64 / n;
                let d = v.cells[1].mean.unwrap() - v.cells[0].mean.unwrap() - tau;
                total += w * d * d;
            }
            total
        }
    };
    let w0 = imputed_within(imputed, 0, family)?;
    let w1 = imputed_within(imputed, 1, family)?;
    let used_b = v_between.max(0.0);
    let v_total = used_b + w0 + w1;
    let report = VarianceReport {
        v_between_raw: v_between,
        v_between_used: used_b,
        v_within: [w0, w1],
        v_total,
        se: (v_total / n_used as f64).sqrt(),
        family,
        target: VarianceTarget::for_estimator(method),
        n: n_used,
        strata: values.len(),
    };
    Ok((
        PointEstimate {
            tau_hat: tau,
            method,
            n_used,
            strata_used,
        },
        report,
    ))
}
