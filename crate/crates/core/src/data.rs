//! Canonical data model for a two-arm stratified trial and the per-stratum
//! sample moments every estimator consumes.
//!
//! Stratum labels are interned to dense indices `0..K-1` in order of first
//! appearance; the original labels are retained for reporting. All moments
//! use a two-pass scheme (means first, then centered sums) so second
//! moments do not cancel catastrophically at large outcome scales. Cells
//! that are too small to support a statistic carry an explicit `None`
//! rather than a NaN; the sparse-strata algorithms branch on that.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Treatment arm of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Arm {
    Control = 0,
    Treated = 1,
}

impl Arm {
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_u8(v: u8) -> Option<Arm> {
        match v {
            0 => Some(Arm::Control),
            1 => Some(Arm::Treated),
            _ => None,
        }
    }

    /// The opposite arm.
    pub fn other(self) -> Arm {
        match self {
            Arm::Control => Arm::Treated,
            Arm::Treated => Arm::Control,
        }
    }
}

/// Interned stratum label: a dense index `0..K-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumLabel(pub u32);

impl StratumLabel {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// One experimental unit, as seen by a builder.
#[derive(Debug, Clone)]
pub struct Unit<'a> {
    pub stratum: StratumLabel,
    pub arm: Arm,
    pub outcome: f64,
    pub covariates: &'a [f64],
}

/// An observed two-arm stratified trial.
///
/// Immutable after construction; columns are stored contiguously with the
/// covariate matrix in row-major order.
#[derive(Debug, Clone)]
pub struct Dataset {
    strata: Vec<StratumLabel>,
    arms: Vec<Arm>,
    y: Vec<f64>,
    x: Vec<f64>,
    p: usize,
    names: Vec<String>,
}

impl Dataset {
    /// Number of units.
    pub fn n(&self) -> usize {
        self.y.len()
    }

    /// Number of observed strata.
    pub fn n_strata(&self) -> usize {
        self.names.len()
    }

    /// Covariate dimension.
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn stratum(&self, i: usize) -> StratumLabel {
        self.strata[i]
    }

    pub fn arm(&self, i: usize) -> Arm {
        self.arms[i]
    }

    pub fn outcome(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.y
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    /// Original (pre-interning) label of a stratum.
    pub fn stratum_name(&self, label: StratumLabel) -> &str {
        &self.names[label.index()]
    }

    pub fn stratum_names(&self) -> &[String] {
        &self.names
    }

    pub fn units(&self) -> impl Iterator<Item = Unit<'_>> {
        (0..self.n()).map(move |i| Unit {
            stratum: self.strata[i],
            arm: self.arms[i],
            outcome: self.y[i],
            covariates: self.covariates(i),
        })
    }

    /// Observed overall treated proportion `n_1 / n`.
    pub fn observed_pi1(&self) -> f64 {
        let n1 = self.arms.iter().filter(|a| **a == Arm::Treated).count();
        n1 as f64 / self.n() as f64
    }

    /// Replace the arm column, e.g. after re-randomizing the same roster.
    pub fn with_arms(&self, arms: Vec<Arm>) -> Dataset {
        assert_eq!(arms.len(), self.n());
        Dataset {
            arms,
            ..self.clone()
        }
    }
}

/// Incremental [`Dataset`] constructor that interns labels by first
/// appearance and validates units as they arrive.
#[derive(Debug, Default)]
pub struct DatasetBuilder {
    lookup: HashMap<String, u32>,
    names: Vec<String>,
    strata: Vec<StratumLabel>,
    arms: Vec<Arm>,
    y: Vec<f64>,
    x: Vec<f64>,
    p: Option<usize>,
}

impl DatasetBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, raw_label: &str, arm: Arm, outcome: f64, covariates: &[f64]) -> Result<()> {
        let index = self.strata.len();
        if !outcome.is_finite() {
            return Err(Error::InvalidUnit {
                index,
                reason: format!("outcome {outcome} is not finite"),
            });
        }
        if let Some(bad) = covariates.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidUnit {
                index,
                reason: format!("covariate {bad} is not finite"),
            });
        }
        match self.p {
            None => self.p = Some(covariates.len()),
            Some(p) if p != covariates.len() => {
                return Err(Error::CovariateDim {
                    index,
                    expected: p,
                    got: covariates.len(),
                })
            }
            _ => {}
        }
        let id = match self.lookup.get(raw_label) {
            Some(&id) => id,
            None => {
                let id = self.names.len() as u32;
                self.lookup.insert(raw_label.to_string(), id);
                self.names.push(raw_label.to_string());
                id
            }
        };
        self.strata.push(StratumLabel(id));
        self.arms.push(arm);
        self.y.push(outcome);
        self.x.extend_from_slice(covariates);
        Ok(())
    }

    pub fn finish(self) -> Result<Dataset> {
        if self.strata.is_empty() {
            return Err(Error::EmptyDataset);
        }
        Ok(Dataset {
            strata: self.strata,
            arms: self.arms,
            y: self.y,
            x: self.x,
            p: self.p.unwrap_or(0),
            names: self.names,
        })
    }
}

/// Build a dataset from numeric raw labels without string formatting in the
/// per-unit path; also returns the raw label behind each interned index.
/// Used by the simulation engine.
pub fn dataset_from_numeric(
    raw_labels: &[u32],
    arms: &[Arm],
    outcomes: &[f64],
    covariates: &[f64],
    p: usize,
) -> Result<(Dataset, Vec<u32>)> {
    let n = raw_labels.len();
    assert_eq!(arms.len(), n);
    assert_eq!(outcomes.len(), n);
    assert_eq!(covariates.len(), n * p);
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut lookup: HashMap<u32, u32> = HashMap::new();
    let mut raw_order: Vec<u32> = Vec::new();
    let mut strata = Vec::with_capacity(n);
    for &r in raw_labels {
        let id = match lookup.get(&r) {
            Some(&id) => id,
            None => {
                let id = raw_order.len() as u32;
                lookup.insert(r, id);
                raw_order.push(r);
                id
            }
        };
        strata.push(StratumLabel(id));
    }
    let dataset = Dataset {
        strata,
        arms: arms.to_vec(),
        y: outcomes.to_vec(),
        x: covariates.to_vec(),
        p,
        names: raw_order.iter().map(|r| r.to_string()).collect(),
    };
    Ok((dataset, raw_order))
}

/// Sample moments of a single scalar variable within one stratum-arm cell.
///
/// `mean`/`mean2` require at least one unit, `var` (divisor `n-1`) at least
/// two; otherwise the fields are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValueCell {
    pub n: usize,
    pub mean: Option<f64>,
    pub mean2: Option<f64>,
    pub var: Option<f64>,
}

impl ValueCell {
    pub fn empty() -> Self {
        ValueCell {
            n: 0,
            mean: None,
            mean2: None,
            var: None,
        }
    }
}

/// Per-stratum scalar moments for both arms.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueSummary {
    /// Stratum size `n(s)`.
    pub n: usize,
    pub cells: [ValueCell; 2],
}

impl ValueSummary {
    pub fn cell(&self, arm: Arm) -> &ValueCell {
        &self.cells[arm.index()]
    }
}

/// Covariate moments of one stratum-arm cell. `cov_xx` is a row-major
/// `p x p` matrix with divisor `n-1`; `cov_xy` pairs the covariates with the
/// outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmMoments {
    pub y: ValueCell,
    pub mean_x: Option<Vec<f64>>,
    pub cov_xx: Option<Vec<f64>>,
    pub cov_xy: Option<Vec<f64>>,
}

/// Full per-stratum summary: outcome and covariate moments for both arms.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumSummary {
    pub n: usize,
    pub arms: [ArmMoments; 2],
}

impl StratumSummary {
    pub fn arm(&self, arm: Arm) -> &ArmMoments {
        &self.arms[arm.index()]
    }

    pub fn n_arm(&self, arm: Arm) -> usize {
        self.arms[arm.index()].y.n
    }
}

/// Extract the scalar outcome moments from full summaries.
pub fn outcome_values(summaries: &[StratumSummary]) -> Vec<ValueSummary> {
    summaries
        .iter()
        .map(|s| ValueSummary {
            n: s.n,
            cells: [s.arms[0].y, s.arms[1].y],
        })
        .collect()
}

/// Per-cell scalar moments of an arbitrary unit-level variable (outcome,
/// residual, ...), two-pass.
pub fn summarize_values(data: &Dataset, values: &[f64]) -> Vec<ValueSummary> {
    assert_eq!(values.len(), data.n());
    let k = data.n_strata();
    let mut count = vec![[0usize; 2]; k];
    let mut sum = vec![[0.0f64; 2]; k];
    for i in 0..data.n() {
        let s = data.stratum(i).index();
        let a = data.arm(i).index();
        count[s][a] += 1;
        sum[s][a] += values[i];
    }
    let mut css = vec![[0.0f64; 2]; k];
    for i in 0..data.n() {
        let s = data.stratum(i).index();
        let a = data.arm(i).index();
        let d = values[i] - sum[s][a] / count[s][a] as f64;
        css[s][a] += d * d;
    }
    (0..k)
        .map(|s| {
            let mut cells = [ValueCell::empty(); 2];
            for a in 0..2 {
                let n = count[s][a];
                if n == 0 {
                    continue;
                }
                let mean = sum[s][a] / n as f64;
                // Raw second moment reconstructed from the centered sum.
                let mean2 = css[s][a] / n as f64 + mean * mean;
                let var = (n >= 2).then(|| css[s][a] / (n - 1) as f64);
                cells[a] = ValueCell {
                    n,
                    mean: Some(mean),
                    mean2: Some(mean2),
                    var,
                };
            }
            ValueSummary {
                n: count[s][0] + count[s][1],
                cells,
            }
        })
        .collect()
}

/// Compute every per-stratum, per-arm moment the estimators consume.
///
/// One summary per observed stratum, indexed by interned label. Sparse
/// cells are reported, not rejected; downstream modules decide what to do
/// with them.
pub fn summarize(data: &Dataset) -> Vec<StratumSummary> {
    let k = data.n_strata();
    let p = data.p();
    let mut count = vec![[0usize; 2]; k];
    let mut sum_y = vec![[0.0f64; 2]; k];
    let mut sum_x = vec![vec![0.0f64; p]; 2 * k];
    for i in 0..data.n() {
        let s = data.stratum(i).index();
        let a = data.arm(i).index();
        count[s][a] += 1;
        sum_y[s][a] += data.outcome(i);
        let sx = &mut sum_x[2 * s + a];
        for (acc, v) in sx.iter_mut().zip(data.covariates(i)) {
            *acc += v;
        }
    }
    let mut css_y = vec![[0.0f64; 2]; k];
    let mut css_xx = vec![vec![0.0f64; p * p]; 2 * k];
    let mut css_xy = vec![vec![0.0f64; p]; 2 * k];
    let mut dx = vec![0.0f64; p];
    for i in 0..data.n() {
        let s = data.stratum(i).index();
        let a = data.arm(i).index();
        let n = count[s][a] as f64;
        let dy = data.outcome(i) - sum_y[s][a] / n;
        css_y[s][a] += dy * dy;
        let mx = &sum_x[2 * s + a];
        for (j, v) in data.covariates(i).iter().enumerate() {
            dx[j] = v - mx[j] / n;
        }
        let xx = &mut css_xx[2 * s + a];
        for r in 0..p {
            for c in 0..p {
                xx[r * p + c] += dx[r] * dx[c];
            }
        }
        let xy = &mut css_xy[2 * s + a];
        for (acc, v) in xy.iter_mut().zip(&dx) {
            *acc += v * dy;
        }
    }
    (0..k)
        .map(|s| {
            let arms = [0usize, 1].map(|a| {
                let n = count[s][a];
                if n == 0 {
                    return ArmMoments {
                        y: ValueCell::empty(),
                        mean_x: None,
                        cov_xx: None,
                        cov_xy: None,
                    };
                }
                let nf = n as f64;
                let mean = sum_y[s][a] / nf;
                let mean2 = css_y[s][a] / nf + mean * mean;
                let var = (n >= 2).then(|| css_y[s][a] / (n - 1) as f64);
                let mean_x = Some(sum_x[2 * s + a].iter().map(|v| v / nf).collect());
                let (cov_xx, cov_xy) = if n >= 2 {
                    let d = (n - 1) as f64;
                    (
                        Some(css_xx[2 * s + a].iter().map(|v| v / d).collect()),
                        Some(css_xy[2 * s + a].iter().map(|v| v / d).collect()),
                    )
                } else {
                    (None, None)
                };
                ArmMoments {
                    y: ValueCell {
                        n,
                        mean: Some(mean),
                        mean2: Some(mean2),
                        var,
                    },
                    mean_x,
                    cov_xx,
                    cov_xy,
                }
            });
            StratumSummary {
                n: count[s][0] + count[s][1],
                arms,
            }
        })
        .collect()
}

/// Target assignment probabilities per stratum, plus (for simulation) the
/// stratum probabilities themselves.
#[derive(Debug, Clone)]
pub struct DesignTargets {
    pi1: Vec<f64>,
    p_s: Option<Vec<f64>>,
}

impl DesignTargets {
    /// Per-stratum treated probabilities, indexed by interned label.
    pub fn new(pi1: Vec<f64>) -> Result<Self> {
        for (s, &pi) in pi1.iter().enumerate() {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(Error::InvalidTarget { stratum: s, pi });
            }
        }
        Ok(DesignTargets { pi1, p_s: None })
    }

    /// Uniform target across `k` strata.
    pub fn uniform(pi1: f64, k: usize) -> Result<Self> {
        DesignTargets::new(vec![pi1; k])
    }

    pub fn with_stratum_probs(mut self, p_s: Vec<f64>) -> Result<Self> {
        let total: f64 = p_s.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::StratumProbSum(total));
        }
        self.p_s = Some(p_s);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.pi1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi1.is_empty()
    }

    /// Treated target for a stratum; `MissingTarget` if not covered.
    pub fn pi1(&self, label: StratumLabel) -> Result<f64> {
        self.pi1
            .get(label.index())
            .copied()
            .ok_or(Error::MissingTarget {
                stratum: label.index(),
            })
    }

    pub fn stratum_probs(&self) -> Option<&[f64]> {
        self.p_s.as_deref()
    }

    /// Overall treated target mixed with the given stratum weights
    /// (typically the observed `n(s)/n`).
    pub fn overall_pi1(&self, weights: &[f64]) -> Result<f64> {
        if weights.len() > self.pi1.len() {
            return Err(Error::MissingTarget {
                stratum: self.pi1.len(),
            });
        }
        Ok(weights
            .iter()
            .zip(&self.pi1)
            .map(|(w, pi)| w * pi)
            .sum())
    }
}

/// How far the realized allocation sits from its design targets.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceDiagnostics {
    /// `max_s |pi_hat_a(s) - pi_a(s)|` for arms 0 and 1.
    pub max_abs_dev: [f64; 2],
    /// `min_s n_a(s)` for arms 0 and 1.
    pub min_arm_count: [usize; 2],
    /// Fraction of observed strata with `n(s) >= 4`.
    pub frac_n_ge4: f64,
}

/// Realized-versus-target allocation diagnostics.
pub fn assignment_proportions(
    data: &Dataset,
    targets: &DesignTargets,
) -> Result<BalanceDiagnostics> {
    let values = summarize_values(data, data.outcomes());
    let mut max_dev = [0.0f64; 2];
    let mut min_count = [usize::MAX; 2];
    let mut ge4 = 0usize;
    for (s, summary) in values.iter().enumerate() {
        let pi1 = targets.pi1(StratumLabel(s as u32))?;
        let n = summary.n as f64;
        let pi_hat1 = summary.cells[1].n as f64 / n;
        max_dev[1] = max_dev[1].max((pi_hat1 - pi1).abs());
        max_dev[0] = max_dev[0].max(((1.0 - pi_hat1) - (1.0 - pi1)).abs());
        min_count[0] = min_count[0].min(summary.cells[0].n);
        min_count[1] = min_count[1].min(summary.cells[1].n);
        if summary.n >= 4 {
            ge4 += 1;
        }
    }
    Ok(BalanceDiagnostics {
        max_abs_dev: max_dev,
        min_arm_count: min_count,
        frac_n_ge4: ge4 as f64 / values.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dataset(rows: &[(&str, u8, f64, &[f64])]) -> Dataset {
        let mut b = DatasetBuilder::new();
        for (s, a, y, x) in rows {
            b.push(s, Arm::from_u8(*a).unwrap(), *y, x).unwrap();
        }
        b.finish().unwrap()
    }

    #[test]
    fn treated_pair_moments() {
        // treated outcomes {0, 2}: mean 1, second moment 2, var 2 (divisor 1)
        let d = dataset(&[("s", 1, 0.0, &[]), ("s", 1, 2.0, &[]), ("s", 0, 5.0, &[])]);
        let m = summarize(&d);
        let t = &m[0].arms[1].y;
        assert_eq!(t.mean, Some(1.0));
        assert_eq!(t.mean2, Some(2.0));
        assert_eq!(t.var, Some(2.0));
    }

    #[test]
    fn singleton_cell_has_undefined_variance() {
        let d = dataset(&[("s", 0, 7.0, &[]), ("s", 1, 1.0, &[]), ("s", 1, 2.0, &[])]);
        let m = summarize(&d);
        let c = &m[0].arms[0].y;
        assert_eq!(c.mean, Some(7.0));
        assert_eq!(c.var, None);
        assert!(m[0].arms[0].cov_xx.is_none());
    }

    #[test]
    fn constant_outcomes_have_zero_variance() {
        let c = 3.25;
        let d = dataset(&[
            ("a", 0, c, &[]),
            ("a", 0, c, &[]),
            ("a", 1, c, &[]),
            ("a", 1, c, &[]),
            ("b", 0, c, &[]),
            ("b", 0, c, &[]),
            ("b", 1, c, &[]),
            ("b", 1, c, &[]),
        ]);
        for s in summarize(&d) {
            for a in 0..2 {
                assert_eq!(s.arms[a].y.var, Some(0.0));
                assert_eq!(s.arms[a].y.mean, Some(c));
            }
        }
    }

    #[test]
    fn moment_identity() {
        // mean2 - mean^2 = var * (n-1)/n
        let d = dataset(&[
            ("s", 1, 1.5, &[]),
            ("s", 1, -2.0, &[]),
            ("s", 1, 0.25, &[]),
            ("s", 0, 9.0, &[]),
            ("s", 0, 3.0, &[]),
        ]);
        for s in summarize(&d) {
            for a in 0..2 {
                let c = &s.arms[a].y;
                let n = c.n as f64;
                let lhs = c.mean2.unwrap() - c.mean.unwrap().powi(2);
                let rhs = c.var.unwrap() * (n - 1.0) / n;
                assert_relative_eq!(lhs, rhs, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn covariance_matches_brute_force() {
        let rows: Vec<(&str, u8, f64, Vec<f64>)> = vec![
            ("s", 1, 1.0, vec![0.2, -1.0]),
            ("s", 1, 2.0, vec![1.4, 0.5]),
            ("s", 1, -0.5, vec![-0.7, 2.0]),
            ("s", 1, 3.0, vec![0.9, 1.1]),
        ];
        let mut b = DatasetBuilder::new();
        for (s, a, y, x) in &rows {
            b.push(s, Arm::from_u8(*a).unwrap(), *y, x).unwrap();
        }
        let d = b.finish().unwrap();
        let m = summarize(&d);
        let cell = &m[0].arms[1];
        let n = rows.len() as f64;
        let mx: Vec<f64> = (0..2)
            .map(|j| rows.iter().map(|r| r.3[j]).sum::<f64>() / n)
            .collect();
        let my = rows.iter().map(|r| r.2).sum::<f64>() / n;
        for r in 0..2 {
            for c in 0..2 {
                let brute: f64 = rows
                    .iter()
                    .map(|row| (row.3[r] - mx[r]) * (row.3[c] - mx[c]))
                    .sum::<f64>()
                    / (n - 1.0);
                assert_relative_eq!(
                    cell.cov_xx.as_ref().unwrap()[r * 2 + c],
                    brute,
                    max_relative = 1e-12
                );
            }
        }
        for r in 0..2 {
            let brute: f64 = rows
                .iter()
                .map(|row| (row.3[r] - mx[r]) * (row.2 - my))
                .sum::<f64>()
                / (n - 1.0);
            assert_relative_eq!(
                cell.cov_xy.as_ref().unwrap()[r],
                brute,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn balanced_stratum_diagnostics() {
        let d = dataset(&[
            ("s", 1, 0.0, &[]),
            ("s", 1, 0.0, &[]),
            ("s", 0, 0.0, &[]),
            ("s", 0, 0.0, &[]),
        ]);
        let t = DesignTargets::uniform(0.5, 1).unwrap();
        let diag = assignment_proportions(&d, &t).unwrap();
        assert_eq!(diag.max_abs_dev, [0.0, 0.0]);
        assert_eq!(diag.min_arm_count, [2, 2]);
        assert_eq!(diag.frac_n_ge4, 1.0);
    }

    #[test]
    fn deviation_of_two_fifths() {
        let d = dataset(&[
            ("s", 1, 0.0, &[]),
            ("s", 1, 0.0, &[]),
            ("s", 0, 0.0, &[]),
            ("s", 0, 0.0, &[]),
            ("s", 0, 0.0, &[]),
        ]);
        let t = DesignTargets::uniform(0.5, 1).unwrap();
        let diag = assignment_proportions(&d, &t).unwrap();
        assert_relative_eq!(diag.max_abs_dev[1], 0.1, max_relative = 1e-12);
    }

    #[test]
    fn fraction_of_big_strata() {
        let mut rows: Vec<(&str, u8, f64, &[f64])> = Vec::new();
        for _ in 0..3 {
            rows.push(("a", 0, 0.0, &[]));
        }
        for _ in 0..8 {
            rows.push(("b", 1, 0.0, &[]));
        }
        let d = dataset(&rows);
        let t = DesignTargets::uniform(0.5, 2).unwrap();
        let diag = assignment_proportions(&d, &t).unwrap();
        assert_eq!(diag.frac_n_ge4, 0.5);
    }

    #[test]
    fn missing_target_reported() {
        let d = dataset(&[("a", 0, 0.0, &[]), ("b", 1, 0.0, &[])]);
        let t = DesignTargets::uniform(0.5, 1).unwrap();
        assert!(matches!(
            assignment_proportions(&d, &t),
            Err(Error::MissingTarget { stratum: 1 })
        ));
    }

    #[test]
    fn interning_is_first_appearance() {
        let d = dataset(&[("b", 0, 0.0, &[]), ("a", 1, 1.0, &[]), ("b", 1, 2.0, &[])]);
        assert_eq!(d.stratum_names(), &["b".to_string(), "a".to_string()]);
        assert_eq!(d.stratum(0), StratumLabel(0));
        assert_eq!(d.stratum(2), StratumLabel(0));
    }

    #[test]
    fn builder_rejects_mixed_dimensions() {
        let mut b = DatasetBuilder::new();
        b.push("s", Arm::Control, 0.0, &[1.0]).unwrap();
        assert!(matches!(
            b.push("s", Arm::Treated, 0.0, &[1.0, 2.0]),
            Err(Error::CovariateDim { .. })
        ));
    }

    #[test]
    fn builder_rejects_non_finite() {
        let mut b = DatasetBuilder::new();
        assert!(b.push("s", Arm::Control, f64::NAN, &[]).is_err());
        assert!(b.push("s", Arm::Control, 0.0, &[f64::INFINITY]).is_err());
    }

    #[test]
    fn targets_validate_range() {
        assert!(DesignTargets::new(vec![0.5, 1.0]).is_err());
        assert!(DesignTargets::new(vec![0.5, 0.0]).is_err());
        assert!(DesignTargets::new(vec![0.5, 0.999]).is_ok());
    }

    #[test]
    fn stratum_probs_must_sum_to_one() {
        let t = DesignTargets::uniform(0.5, 2).unwrap();
        assert!(t.clone().with_stratum_probs(vec![0.5, 0.5]).is_ok());
        let t = DesignTargets::uniform(0.5, 2).unwrap();
        assert!(t.with_stratum_probs(vec![0.6, 0.5]).is_err());
    }
}
