//! Naive reference implementations used as independent oracles.
//!
//! Everything here recomputes the estimators from raw unit lists with
//! plain double loops and its own full-pivot Gauss-Jordan solve; none of
//! it shares code with the library paths it checks.

#![allow(dead_code)]

use rand::Rng;
use strata_infer::data::{summarize, summarize_values, Arm, Dataset, DatasetBuilder};
use strata_infer::estimate::{
    adjusted_estimate, fit_unweighted_beta, fit_weighted_beta, strat_diff_in_means,
};
use strata_infer::variance::{df_adjustment_gap, v_between, v_within};

#[derive(Debug, Clone)]
pub struct RawUnit {
    pub stratum: usize,
    pub arm: u8,
    pub y: f64,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MicroInstance {
    pub units: Vec<RawUnit>,
    pub k: usize,
    pub p: usize,
}

impl MicroInstance {
    pub fn dataset(&self) -> Dataset {
        let mut b = DatasetBuilder::new();
        for u in &self.units {
            b.push(
                &format!("s{}", u.stratum),
                Arm::from_u8(u.arm).unwrap(),
                u.y,
                &u.x,
            )
            .unwrap();
        }
        b.finish().unwrap()
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn cell(&self, s: usize, a: u8) -> Vec<&RawUnit> {
        self.units
            .iter()
            .filter(|u| u.stratum == s && u.arm == a)
            .collect()
    }

    pub fn stratum_size(&self, s: usize) -> usize {
        self.units.iter().filter(|u| u.stratum == s).count()
    }

    pub fn values_of(&self, f: impl Fn(&RawUnit) -> f64) -> Vec<f64> {
        self.units.iter().map(f).collect()
    }
}

/// Random instance with every stratum-arm cell holding at least `min_cell`
/// units. Strata appear in index order so interning matches `stratum`.
pub fn random_instance(
    rng: &mut impl Rng,
    k_range: std::ops::RangeInclusive<usize>,
    p_range: std::ops::RangeInclusive<usize>,
    cell_range: std::ops::RangeInclusive<usize>,
) -> MicroInstance {
    let k = rng.random_range(k_range);
    let p = rng.random_range(p_range);
    let mut units = Vec::new();
    for s in 0..k {
        for a in 0..2u8 {
            let m = rng.random_range(cell_range.clone());
            for _ in 0..m {
                let x: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
                let y = rng.random_range(-5.0..5.0)
                    + x.iter().sum::<f64>() * rng.random_range(0.0..2.0)
                    + s as f64;
                units.push(RawUnit {
                    stratum: s,
                    arm: a,
                    y,
                    x,
                });
            }
        }
    }
    MicroInstance { units, k, p }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn mean2(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64
}

pub fn var(values: &[f64]) -> f64 {
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

fn cell_values(inst: &MicroInstance, values: &[f64], s: usize, a: u8) -> Vec<f64> {
    inst.units
        .iter()
        .zip(values)
        .filter(|(u, _)| u.stratum == s && u.arm == a)
        .map(|(_, v)| *v)
        .collect()
}

/// Stratified difference in means of an arbitrary per-unit variable.
pub fn naive_tau(inst: &MicroInstance, values: &[f64]) -> f64 {
    let n = inst.n() as f64;
    (0..inst.k)
        .map(|s| {
            let w = inst.stratum_size(s) as f64 / n;
            w * (mean(&cell_values(inst, values, s, 1)) - mean(&cell_values(inst, values, s, 0)))
        })
        .sum()
}

/// Full-pivot Gauss-Jordan solve, independent of the library's solver.
pub fn gauss_solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(*bi);
            r
        })
        .collect();
    let mut col_of: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (mut pr, mut pc, mut best) = (k, k, 0.0f64);
        for i in k..n {
            for j in k..n {
                if m[i][j].abs() > best {
                    best = m[i][j].abs();
                    pr = i;
                    pc = j;
                }
            }
        }
        assert!(best > 0.0, "singular oracle system");
        m.swap(k, pr);
        for row in m.iter_mut() {
            row.swap(k, pc);
        }
        col_of.swap(k, pc);
        let piv = m[k][k];
        for j in 0..=n {
            m[k][j] /= piv;
        }
        for i in 0..n {
            if i != k {
                let f = m[i][k];
                for j in 0..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in 0..n {
        x[col_of[i]] = m[i][n];
    }
    x
}

fn pooled_sums(
    inst: &MicroInstance,
    arm: u8,
    extra_weight: impl Fn(usize, usize) -> f64,
) -> (Vec<Vec<f64>>, Vec<f64>) {
    let n = inst.n() as f64;
    let p = inst.p;
    let mut sxx = vec![vec![0.0; p]; p];
    let mut sxy = vec![0.0; p];
    for s in 0..inst.k {
        let cell = inst.cell(s, arm);
        let na = cell.len();
        let w = inst.stratum_size(s) as f64 / n * extra_weight(inst.stratum_size(s), na)
            / (na as f64 - 1.0);
        let mx: Vec<f64> = (0..p)
            .map(|j| cell.iter().map(|u| u.x[j]).sum::<f64>() / na as f64)
            .collect();
        let my = cell.iter().map(|u| u.y).sum::<f64>() / na as f64;
        for u in &cell {
            for r in 0..p {
                for c in 0..p {
                    sxx[r][c] += w * (u.x[r] - mx[r]) * (u.x[c] - mx[c]);
                }
                sxy[r] += w * (u.x[r] - mx[r]) * (u.y - my);
            }
        }
    }
    (sxx, sxy)
}

/// Unweighted pooled fit: beta = pi1 * beta(0) + pi0 * beta(1).
pub fn naive_beta_unweighted(inst: &MicroInstance, pi1: f64) -> Vec<f64> {
    let (sxx0, sxy0) = pooled_sums(inst, 0, |_, _| 1.0);
    let (sxx1, sxy1) = pooled_sums(inst, 1, |_, _| 1.0);
    let b0 = gauss_solve(&sxx0, &sxy0);
    let b1 = gauss_solve(&sxx1, &sxy1);
    b0.iter()
        .zip(&b1)
        .map(|(b0, b1)| pi1 * b0 + (1.0 - pi1) * b1)
        .collect()
}

/// Weighted pooled fit with the extra n(s)/n_a(s) factor per cell.
pub fn naive_beta_weighted(inst: &MicroInstance) -> Vec<f64> {
    let p = inst.p;
    let w = |ns: usize, na: usize| ns as f64 / na as f64;
    let (sxx0, sxy0) = pooled_sums(inst, 0, w);
    let (sxx1, sxy1) = pooled_sums(inst, 1, w);
    let mut sxx = vec![vec![0.0; p]; p];
    let mut sxy = vec![0.0; p];
    for r in 0..p {
        for c in 0..p {
            sxx[r][c] = sxx0[r][c] + sxx1[r][c];
        }
        sxy[r] = sxy0[r] + sxy1[r];
    }
    gauss_solve(&sxx, &sxy)
}

pub fn naive_residuals(inst: &MicroInstance, beta: &[f64]) -> Vec<f64> {
    inst.units
        .iter()
        .map(|u| u.y - u.x.iter().zip(beta).map(|(x, b)| x * b).sum::<f64>())
        .collect()
}

/// Within-stratum variance component for one arm.
pub fn naive_v_within(inst: &MicroInstance, values: &[f64], arm: u8) -> f64 {
    let n = inst.n() as f64;
    (0..inst.k)
        .map(|s| {
            let ns = inst.stratum_size(s) as f64;
            let cell = cell_values(inst, values, s, arm);
            (ns / n) * (ns / cell.len() as f64) * var(&cell)
        })
        .sum()
}

/// Between-strata variance component.
pub fn naive_v_between(inst: &MicroInstance, values: &[f64]) -> f64 {
    let n = inst.n() as f64;
    let tau = naive_tau(inst, values);
    let mut total = 0.0;
    for s in 0..inst.k {
        let w = inst.stratum_size(s) as f64 / n;
        let c0 = cell_values(inst, values, s, 0);
        let c1 = cell_values(inst, values, s, 1);
        total += w * (mean2(&c0) - var(&c0) + mean2(&c1) - var(&c1));
        total -= 2.0 * w * mean(&c0) * mean(&c1);
    }
    total - tau * tau
}

/// Legacy (unadjusted) between component.
pub fn naive_legacy_between(inst: &MicroInstance, values: &[f64]) -> f64 {
    let n = inst.n() as f64;
    let tau = naive_tau(inst, values);
    (0..inst.k)
        .map(|s| {
            let w = inst.stratum_size(s) as f64 / n;
            let d = mean(&cell_values(inst, values, s, 1))
                - mean(&cell_values(inst, values, s, 0))
                - tau;
            w * d * d
        })
        .sum()
}

/// Legacy within component for one arm.
pub fn naive_legacy_within(inst: &MicroInstance, values: &[f64], arm: u8) -> f64 {
    let n = inst.n() as f64;
    (0..inst.k)
        .map(|s| {
            let ns = inst.stratum_size(s) as f64;
            let cell = cell_values(inst, values, s, arm);
            let na = cell.len() as f64;
            (ns / n) * ((na - 1.0) / na) * (ns / na) * var(&cell)
        })
        .sum()
}

/// The closed-form difference between the adjusted and legacy totals.
pub fn naive_gap(inst: &MicroInstance, values: &[f64]) -> f64 {
    let n = inst.n() as f64;
    (0..inst.k)
        .map(|s| {
            let ns = inst.stratum_size(s) as f64;
            let c0 = cell_values(inst, values, s, 0);
            let c1 = cell_values(inst, values, s, 1);
            let (n0, n1) = (c0.len() as f64, c1.len() as f64);
            (ns / n) * (var(&c1) * n0 / (n1 * n1) + var(&c0) * n1 / (n0 * n0))
        })
        .sum()
}

/// Relative closeness helper: |a - b| <= tol * max(1, |a|, |b|).
pub fn close_rel(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * 1.0f64.max(a.abs()).max(b.abs())
}

/// Tolerance for the estimator-versus-oracle cross checks.
pub const ORACLE_TOL: f64 = 1e-12;

/// One full cross-check of every estimator and variance estimator on one
/// instance; `tol` is relative to max(1, |values|).
pub fn check_instance(inst: &MicroInstance, tol: f64) {
    let data = inst.dataset();
    let summaries = summarize(&data);
    let y = inst.values_of(|u| u.y);
    let values = summarize_values(&data, data.outcomes());

    // Stratified difference in means.
    let tau = strat_diff_in_means(&values).unwrap().tau_hat;
    assert!(close_rel(tau, naive_tau(inst, &y), tol), "tau");

    // Variance components on the outcome.
    for (arm, a) in [(Arm::Control, 0u8), (Arm::Treated, 1u8)] {
        let got = v_within(&values, arm).unwrap();
        assert!(close_rel(got, naive_v_within(inst, &y, a), tol), "v_within {a}");
    }
    let got_b = v_between(&values, tau).unwrap();
    assert!(close_rel(got_b, naive_v_between(inst, &y), tol), "v_between");
    let legacy =
        strata_infer::variance::legacy_variance(&values, tau, strata_infer::VarianceTarget::Outcome)
            .unwrap();
    assert!(
        close_rel(legacy.v_between_raw, naive_legacy_between(inst, &y), tol),
        "legacy between"
    );
    for a in 0..2u8 {
        assert!(
            close_rel(
                legacy.v_within[a as usize],
                naive_legacy_within(inst, &y, a),
                tol
            ),
            "legacy within {a}"
        );
    }
    assert!(
        close_rel(df_adjustment_gap(&values).unwrap(), naive_gap(inst, &y), tol),
        "gap"
    );

    if inst.p == 0 {
        return;
    }

    // Unweighted adjustment.
    let pi1 = 0.5;
    let beta_u = fit_unweighted_beta(&summaries, pi1).unwrap();
    let oracle_u = naive_beta_unweighted(inst, pi1);
    for (g, o) in beta_u.beta.iter().zip(&oracle_u) {
        assert!(close_rel(*g, *o, tol), "beta_u {g} vs {o}");
    }
    let adj_u = adjusted_estimate(&data, &beta_u).unwrap();
    let r_u = naive_residuals(inst, &oracle_u);
    assert!(close_rel(adj_u.tau_hat, naive_tau(inst, &r_u), tol), "tau_adj");

    // Weighted adjustment.
    let beta_w = fit_weighted_beta(&summaries).unwrap();
    let oracle_w = naive_beta_weighted(inst);
    for (g, o) in beta_w.beta.iter().zip(&oracle_w) {
        assert!(close_rel(*g, *o, tol), "beta_w {g} vs {o}");
    }
    let adj_w = adjusted_estimate(&data, &beta_w).unwrap();
    let r_w = naive_residuals(inst, &oracle_w);
    assert!(close_rel(adj_w.tau_hat, naive_tau(inst, &r_w), tol), "tau_adj_w");

    // Residual-target variance estimators.
    let rv = summarize_values(&data, &strata_infer::estimate::residuals(&data, &beta_w));
    for (arm, a) in [(Arm::Control, 0u8), (Arm::Treated, 1u8)] {
        let got = v_within(&rv, arm).unwrap();
        assert!(
            close_rel(got, naive_v_within(inst, &r_w, a), tol),
            "resid v_within {a}"
        );
    }
    let got_rb = v_between(&rv, adj_w.tau_hat).unwrap();
    assert!(
        close_rel(got_rb, naive_v_between(inst, &r_w), tol),
        "resid v_between"
    );
}
