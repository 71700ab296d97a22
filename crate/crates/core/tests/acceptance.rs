//! Acceptance suite: one test per criterion, each printing a pass line
//! with the measured quantities. Simulation-backed criteria pin their
//! seeds, so every run is reproducible.

mod common;

use std::collections::HashMap;
use std::sync::LazyLock;

use common::*;
use rand::Rng;
use strata_infer::assign::{
    permuted_block_randomize, stratified_block_randomize, snapped_floor, RandomizerConfig, Scheme,
};
use strata_infer::data::{summarize, summarize_values, Arm};
use strata_infer::dgp::{Model, ModelSpec, PiRegime, Setting};
use strata_infer::estimate::{
    adjusted_estimate, fit_unweighted_beta, fit_weighted_beta, strat_diff_in_means, EstimatorKind,
};
use strata_infer::pipeline::SparseMode;
use strata_infer::rng::{indexed_uniform, substream};
use strata_infer::sim::{
    run_cell_detailed, run_extreme_sweep, MetricsRow, ReplicateRecord, SimulationSpec, SweepConfig,
    SweepPoint,
};
use strata_infer::sparse::{
    complete_case_estimate, flag_strata, impute_summaries, imputed_estimate, ClusterMap, FlagMode,
};
use strata_infer::variance::{assemble_report, VarianceFamily, VarianceTarget};

const MASTER_SEED: u64 = 0x5eed_2024;

fn sr() -> RandomizerConfig {
    RandomizerConfig {
        scheme: Scheme::SimpleStratified,
        ..Default::default()
    }
}

/// Model 1, setting 1, simple randomization, 2000 replications; shared by
/// criteria 1, 2, and 5.
static M1S1_CELL: LazyLock<(Vec<MetricsRow>, Vec<ReplicateRecord>)> = LazyLock::new(|| {
    let model = ModelSpec::standard(Model::M1, Setting::S1);
    let mut spec = SimulationSpec::new(model, sr());
    spec.estimators = vec![
        EstimatorKind::DiM,
        EstimatorKind::AdjUnweighted,
        EstimatorKind::AdjWeighted,
    ];
    spec.families = vec![VarianceFamily::NewDf, VarianceFamily::LegacyMa];
    spec.sparse_mode = SparseMode::Strict;
    spec.replications = 2000;
    spec.master_seed = MASTER_SEED;
    run_cell_detailed(&spec).expect("M1-S1 cell")
});

fn row<'a>(rows: &'a [MetricsRow], estimator: &str, family: &str) -> &'a MetricsRow {
    rows.iter()
        .find(|r| r.estimator == estimator && r.family == family)
        .unwrap_or_else(|| panic!("missing row {estimator}/{family}"))
}

#[test]
fn criterion_1_table1_reproduction() {
    let (rows, _) = &*M1S1_CELL;
    let r = row(rows, "dim", "new_df");
    assert!(r.bias.abs() <= 0.05, "bias {}", r.bias);
    let sd = r.sd.unwrap();
    assert!((0.68..=0.78).contains(&sd), "sd {sd}");
    assert!((0.68..=0.78).contains(&r.mean_se), "mean se {}", r.mean_se);
    assert!((0.93..=0.96).contains(&r.cp), "cp {}", r.cp);
    println!(
        "criterion 1 (M1-S1 SR reproduction): PASS  bias={:.3} sd={:.3} se={:.3} cp={:.3} failed={}",
        r.bias, sd, r.mean_se, r.cp, r.n_failed
    );
}

#[test]
fn criterion_2_degrees_of_freedom_effect() {
    let (rows, records) = &*M1S1_CELL;
    // Aggregate ordering for every estimator.
    for est in ["dim", "adj_unweighted", "adj_weighted"] {
        let new = row(rows, est, "new_df").mean_se;
        let old = row(rows, est, "legacy_ma").mean_se;
        assert!(old < new, "{est}: legacy {old} !< new {new}");
    }
    // Per-dataset totals: the adjusted family is strictly larger whenever
    // any cell variance is positive, which holds almost surely here.
    let mut per_rep: HashMap<usize, (Option<f64>, Option<f64>)> = HashMap::new();
    for rec in records.iter().filter(|r| r.estimator == "dim") {
        let slot = per_rep.entry(rec.replicate).or_default();
        match rec.family.as_str() {
            "new_df" => slot.0 = Some(rec.se),
            "legacy_ma" => slot.1 = Some(rec.se),
            _ => {}
        }
    }
    let mut checked = 0usize;
    for (rep, (new, old)) in &per_rep {
        let (new, old) = (new.unwrap(), old.unwrap());
        assert!(new > old, "replicate {rep}: V_new {new} !> V_legacy {old}");
        checked += 1;
    }
    assert!(checked >= 1500);
    let new = row(rows, "dim", "new_df").mean_se;
    let old = row(rows, "dim", "legacy_ma").mean_se;
    println!(
        "criterion 2 (d.f. adjustment effect): PASS  mean SE new={new:.3} legacy={old:.3}, strict per-dataset ordering on {checked} replicates"
    );
}

#[test]
fn criterion_3_exact_variance_gap_identity() {
    let mut rng = substream(MASTER_SEED, &[3]);
    let mut max_err: f64 = 0.0;
    for _ in 0..1000 {
        let inst = random_instance(&mut rng, 1..=8, 0..=0, 2..=12);
        let data = inst.dataset();
        let values = summarize_values(&data, data.outcomes());
        let tau = strat_diff_in_means(&values).unwrap().tau_hat;
        let new =
            assemble_report(&values, tau, VarianceFamily::NewDf, VarianceTarget::Outcome).unwrap();
        let old = assemble_report(
            &values,
            tau,
            VarianceFamily::LegacyMa,
            VarianceTarget::Outcome,
        )
        .unwrap();
        let new_total = new.v_between_raw + new.v_within[0] + new.v_within[1];
        let old_total = old.v_between_raw + old.v_within[0] + old.v_within[1];
        let gap = strata_infer::variance::df_adjustment_gap(&values).unwrap();
        let err = ((new_total - old_total) - gap).abs();
        max_err = max_err.max(err);
        assert!(err <= 1e-10, "identity violated by {err}");
    }
    println!(
        "criterion 3 (exact d.f. gap identity, 1000 datasets): PASS  max |error| = {max_err:.2e}"
    );
}

#[test]
fn criterion_4_weighted_adjustment_under_varying_pi() {
    let model = ModelSpec::standard(Model::M2, Setting::S2).with_pi(PiRegime::OddEven);
    let mut spec = SimulationSpec::new(model, sr());
    spec.estimators = vec![EstimatorKind::AdjUnweighted, EstimatorKind::AdjWeighted];
    spec.families = vec![VarianceFamily::NewDf];
    // Sporadic cells fall below two units per arm under simple
    // randomization at these probabilities; complete-case handling keeps
    // the replicate while reducing to the standard estimator elsewhere.
    spec.sparse_mode = SparseMode::CompleteCase;
    spec.replications = 2000;
    spec.master_seed = MASTER_SEED;
    let (rows, _) = run_cell_detailed(&spec).expect("M2-S2 cell");
    let adj = row(&rows, "adj_unweighted", "new_df");
    let adj_w = row(&rows, "adj_weighted", "new_df");
    let (sd_u, sd_w) = (adj.sd.unwrap(), adj_w.sd.unwrap());
    assert!(sd_w < sd_u, "sd* {sd_w} !< sd {sd_u}");
    assert!((0.38..=0.46).contains(&sd_w), "sd* {sd_w}");
    assert!((0.45..=0.53).contains(&sd_u), "sd {sd_u}");
    assert!((0.93..=0.97).contains(&adj_w.cp), "cp* {}", adj_w.cp);
    println!(
        "criterion 4 (M2-S2 odd-even pi): PASS  sd_adj={:.3} sd_adj*={:.3} cp*={:.3} failed={}",
        sd_u, sd_w, adj_w.cp, adj_w.n_failed
    );
}

#[test]
fn criterion_5_equal_pi_equivalence_tendency() {
    let (_, records) = &*M1S1_CELL;
    let mut per_rep: HashMap<usize, (Option<f64>, Option<f64>)> = HashMap::new();
    for rec in records.iter().filter(|r| r.family == "new_df") {
        let slot = per_rep.entry(rec.replicate).or_default();
        match rec.estimator.as_str() {
            "adj_unweighted" => slot.0 = Some(rec.tau_hat),
            "adj_weighted" => slot.1 = Some(rec.tau_hat),
            _ => {}
        }
    }
    let diffs: Vec<f64> = per_rep
        .values()
        .map(|(u, w)| (u.unwrap() - w.unwrap()).abs())
        .collect();
    let mean_diff = diffs.iter().sum::<f64>() / diffs.len() as f64;
    assert!(mean_diff < 0.02, "mean |adj - adj*| = {mean_diff}");
    println!(
        "criterion 5 (equal-pi equivalence): PASS  mean |tau_adj - tau_adj*| = {mean_diff:.4} over {} replicates",
        diffs.len()
    );
}

static SWEEP: LazyLock<Vec<SweepPoint>> = LazyLock::new(|| {
    let config = SweepConfig {
        randomizer: sr(),
        estimators: vec![EstimatorKind::DiM, EstimatorKind::AdjWeighted],
        families: vec![VarianceFamily::NewDf],
        replications: 1000,
        level: 0.95,
        master_seed: MASTER_SEED,
    };
    run_extreme_sweep(1..=10, &config).expect("extreme sweep")
});

#[test]
fn criterion_6_extreme_strata_sweep() {
    let points = &*SWEEP;
    assert_eq!(points.len(), 10);

    let at_50 = points.iter().find(|p| p.strata == 50).unwrap();
    let frac = at_50.occupancy.frac_n_ge4;
    assert!((0.89..=0.95).contains(&frac), "P(n(s) >= 4) = {frac}");

    // With ten strata and n = 500 the median stratum size sits near 50.
    let at_10 = points.iter().find(|p| p.strata == 10).unwrap();
    let med = at_10.occupancy.median_stratum_size;
    assert!((45.0..=55.0).contains(&med), "median stratum size {med}");

    let mut imp_cps = Vec::new();
    for p in points {
        let imp = p
            .rows
            .iter()
            .find(|r| {
                r.sparse_mode == "imputation" && r.estimator == "adj_weighted" && r.family == "new_df"
            })
            .unwrap();
        assert!(
            (0.92..=0.97).contains(&imp.cp),
            "imputation cp {} at {} strata",
            imp.cp,
            p.strata
        );
        imp_cps.push((p.strata, imp.cp));
    }

    let at_100 = points.iter().find(|p| p.strata == 100).unwrap();
    let cc = at_100
        .rows
        .iter()
        .find(|r| {
            r.sparse_mode == "complete_case" && r.estimator == "adj_weighted" && r.family == "new_df"
        })
        .unwrap();
    let imp = at_100
        .rows
        .iter()
        .find(|r| {
            r.sparse_mode == "imputation" && r.estimator == "adj_weighted" && r.family == "new_df"
        })
        .unwrap();
    assert!(
        cc.cp < imp.cp,
        "complete-case cp {} !< imputation cp {} at 100 strata",
        cc.cp,
        imp.cp
    );
    println!(
        "criterion 6 (extreme sweep): PASS  P(n>=4)@50={frac:.3}, imputation cp range [{:.3}, {:.3}], cc@100={:.3} < imp@100={:.3}",
        imp_cps.iter().map(|x| x.1).fold(f64::INFINITY, f64::min),
        imp_cps.iter().map(|x| x.1).fold(0.0, f64::max),
        cc.cp,
        imp.cp
    );
}

#[test]
fn stratified_block_bias_stays_ignorable_in_sweep() {
    // Strong balance keeps the complete-case and imputation biases small
    // under stratified block randomization even at high strata counts.
    let config = SweepConfig {
        randomizer: RandomizerConfig {
            scheme: Scheme::StratifiedBlockBatch,
            ..Default::default()
        },
        estimators: vec![EstimatorKind::DiM, EstimatorKind::AdjWeighted],
        families: vec![VarianceFamily::NewDf],
        replications: 400,
        level: 0.95,
        master_seed: MASTER_SEED,
    };
    let points = run_extreme_sweep([1usize, 5, 10], &config).expect("sbr sweep");
    for p in &points {
        for r in &p.rows {
            let sd = r.sd.unwrap();
            assert!(
                r.bias.abs() <= 0.2 * sd,
                "{} strata, {} {}: bias {} vs sd {}",
                p.strata,
                r.sparse_mode,
                r.estimator,
                r.bias,
                sd
            );
        }
    }
    println!(
        "sbr extreme sweep: PASS  |bias| <= 0.2 sd for both estimators and both sparse modes at 10/50/100 strata"
    );
}

#[test]
fn criterion_7_oracle_equivalence_micro_instances() {
    let mut rng = substream(MASTER_SEED, &[7]);
    for i in 0..200 {
        let inst = random_instance(&mut rng, 2..=3, 0..=2, 2..=4);
        assert!(inst.n() <= 24, "instance {i} too large");
        check_instance(&inst, ORACLE_TOL);
    }
    println!(
        "criterion 7 (oracle equivalence): PASS  200 micro-instances matched the naive oracle to 1e-12 relative"
    );
}

#[test]
fn criterion_8_design_balance() {
    let mut rng = substream(MASTER_SEED, &[8]);
    // Stratified block randomization: exact floor counts on 10^4 rosters.
    for roster in 0..10_000u64 {
        let k = rng.random_range(1..=6usize);
        let sizes: Vec<usize> = (0..k).map(|_| rng.random_range(1..=30)).collect();
        let pis: Vec<f64> = (0..k)
            .map(|_| 0.05 * rng.random_range(1..=19) as f64)
            .collect();
        let mut strata = Vec::new();
        for (s, size) in sizes.iter().enumerate() {
            strata.extend(std::iter::repeat(s as u32).take(*size));
        }
        let arms = stratified_block_randomize(&strata, &pis, roster).unwrap();
        for (s, size) in sizes.iter().enumerate() {
            let n1 = strata
                .iter()
                .zip(&arms)
                .filter(|(st, a)| **st == s as u32 && **a == Arm::Treated)
                .count();
            let expected = snapped_floor(pis[s] * *size as f64);
            assert_eq!(n1, expected, "roster {roster}, stratum {s}");
        }
    }

    // Permuted blocks: prefix imbalance within the intra-block bound
    // t(B - t)/B for every prefix of every stratum.
    for roster in 0..2000u64 {
        let block = *[2usize, 4, 8].get(rng.random_range(0..3)).unwrap();
        let t = rng.random_range(1..block);
        let pi = t as f64 / block as f64;
        let k = rng.random_range(1..=3usize);
        let n = rng.random_range(10..=60usize);
        let strata: Vec<u32> = (0..n).map(|_| rng.random_range(0..k) as u32).collect();
        let pis = vec![pi; k];
        let arms = permuted_block_randomize(&strata, &pis, block, roster).unwrap();
        let bound = (t * (block - t)) as f64 / block as f64 + 1e-9;
        let mut count1 = vec![0usize; k];
        let mut total = vec![0usize; k];
        for (st, a) in strata.iter().zip(&arms) {
            let s = *st as usize;
            total[s] += 1;
            if *a == Arm::Treated {
                count1[s] += 1;
            }
            let dev = (count1[s] as f64 - pi * total[s] as f64).abs();
            assert!(dev <= bound, "roster {roster}: deviation {dev} > {bound}");
        }
    }
    println!(
        "criterion 8 (design balance): PASS  floor counts exact on 10000 rosters; permuted-block prefixes within t(B-t)/B on 2000 rosters"
    );
}

#[test]
fn criterion_9_invariance_suite() {
    let mut rng = substream(MASTER_SEED, &[9]);
    for _ in 0..60 {
        let inst = random_instance(&mut rng, 2..=4, 1..=2, 2..=5);
        let data = inst.dataset();
        let summaries = summarize(&data);
        let values = summarize_values(&data, data.outcomes());
        let tau = strat_diff_in_means(&values).unwrap().tau_hat;
        let beta_u = fit_unweighted_beta(&summaries, 0.5).unwrap();
        let beta_w = fit_weighted_beta(&summaries).unwrap();
        let tau_u = adjusted_estimate(&data, &beta_u).unwrap().tau_hat;
        let tau_w = adjusted_estimate(&data, &beta_w).unwrap().tau_hat;

        // Location invariance.
        let c = 3.75;
        let shifted = MicroInstance {
            units: inst
                .units
                .iter()
                .map(|u| {
                    let mut u = u.clone();
                    for x in &mut u.x {
                        *x += c;
                    }
                    u
                })
                .collect(),
            k: inst.k,
            p: inst.p,
        };
        let sd = shifted.dataset();
        let sm = summarize(&sd);
        let sb_u = fit_unweighted_beta(&sm, 0.5).unwrap();
        let sb_w = fit_weighted_beta(&sm).unwrap();
        for (a, b) in beta_u.beta.iter().zip(&sb_u.beta) {
            assert!(close_rel(*a, *b, 1e-10), "location beta");
        }
        assert!(close_rel(tau_u, adjusted_estimate(&sd, &sb_u).unwrap().tau_hat, 1e-10));
        assert!(close_rel(tau_w, adjusted_estimate(&sd, &sb_w).unwrap().tau_hat, 1e-10));

        // Scale equivariance.
        let d: Vec<f64> = (0..inst.p).map(|j| if j % 2 == 0 { 2.5 } else { -0.4 }).collect();
        let scaled = MicroInstance {
            units: inst
                .units
                .iter()
                .map(|u| {
                    let mut u = u.clone();
                    for (x, dj) in u.x.iter_mut().zip(&d) {
                        *x *= dj;
                    }
                    u
                })
                .collect(),
            k: inst.k,
            p: inst.p,
        };
        let cd = scaled.dataset();
        let cm = summarize(&cd);
        let cb_u = fit_unweighted_beta(&cm, 0.5).unwrap();
        for j in 0..inst.p {
            assert!(
                close_rel(cb_u.beta[j], beta_u.beta[j] / d[j], 1e-10),
                "scale beta"
            );
        }
        assert!(close_rel(tau_u, adjusted_estimate(&cd, &cb_u).unwrap().tau_hat, 1e-10));

        // Outcome shift invariance.
        let yshift = MicroInstance {
            units: inst
                .units
                .iter()
                .map(|u| {
                    let mut u = u.clone();
                    u.y += 11.25;
                    u
                })
                .collect(),
            k: inst.k,
            p: inst.p,
        };
        let yd = yshift.dataset();
        let yv = summarize_values(&yd, yd.outcomes());
        assert!((strat_diff_in_means(&yv).unwrap().tau_hat - tau).abs() < 1e-10);

        // Arm-swap antisymmetry.
        let swapped = MicroInstance {
            units: inst
                .units
                .iter()
                .map(|u| {
                    let mut u = u.clone();
                    u.arm = 1 - u.arm;
                    u
                })
                .collect(),
            k: inst.k,
            p: inst.p,
        };
        let wd = swapped.dataset();
        let wv = summarize_values(&wd, wd.outcomes());
        assert!(close_rel(strat_diff_in_means(&wv).unwrap().tau_hat, -tau, 1e-10));

        // Reduction of both sparse pipelines on complete data.
        let direct_rep =
            assemble_report(&values, tau, VarianceFamily::NewDf, VarianceTarget::Outcome).unwrap();
        let f1 = flag_strata(&values, FlagMode::PerStratum);
        let (cc, cc_rep) =
            complete_case_estimate(&values, &f1, VarianceFamily::NewDf, EstimatorKind::DiM)
                .unwrap();
        assert_eq!(cc.tau_hat, tau);
        assert_eq!(cc_rep.se, direct_rep.se);
        let f2 = flag_strata(&values, FlagMode::PerStratumArm);
        let clusters = ClusterMap::single_cluster(&values).unwrap();
        let imp = impute_summaries(&values, &f2, &clusters).unwrap();
        let (ie, ie_rep) =
            imputed_estimate(&imp, VarianceFamily::NewDf, EstimatorKind::DiM).unwrap();
        assert_eq!(ie.tau_hat, tau);
        assert!(close_rel(ie_rep.se, direct_rep.se, 1e-12));
    }
    // Spot check that the counter-based uniform behind simple
    // randomization is exercised by the suite's seed.
    assert!(indexed_uniform(MASTER_SEED, 0) < 1.0);
    println!(
        "criterion 9 (invariance suite): PASS  location/scale/shift/swap/reduction on 60 instances"
    );
}
