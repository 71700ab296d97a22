//! Replication driver producing bias / SD / RMSE / mean-SE / coverage for
//! every (DGP x randomizer x estimator x variance family) cell, plus the
//! many-small-strata sweep.
//!
//! Replicates are independent work items on the rayon pool. Every random
//! decision is keyed by `(master_seed, replicate, purpose)`, and the
//! aggregation is an ordered fold over the replicate index, so output is
//! bit-identical for any worker count. All estimators within a replicate
//! share one drawn dataset and one assignment.

use rayon::prelude::*;
use serde::Serialize;

use crate::assign::{
    permuted_block_randomize, simple_randomize, stratified_block_randomize, Pi1Source,
    RandomizerConfig, Scheme, SequentialAssigner,
};
use crate::data::{dataset_from_numeric, Arm, DesignTargets};
use crate::dgp::{Model, ModelSpec, PiRegime, PotentialDraw};
use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;
use crate::pipeline::{analyze, AnalysisOptions, SparseMode};
use crate::rng::{derive_seed, substream};
use crate::sparse::ClusterMap;
use crate::variance::VarianceFamily;

const TAG_DATA: u64 = 0xD0;
const TAG_ASSIGN: u64 = 0xA0;

/// Fraction of failed replicates above which a cell is abandoned.
pub const MAX_FAILURE_RATE: f64 = 0.10;

/// Everything needed to run one simulation cell.
#[derive(Debug, Clone)]
pub struct SimulationSpec {
    pub model: ModelSpec,
    pub randomizer: RandomizerConfig,
    pub estimators: Vec<EstimatorKind>,
    pub families: Vec<VarianceFamily>,
    pub sparse_mode: SparseMode,
    pub replications: usize,
    pub level: f64,
    pub master_seed: u64,
    /// Margin indices whose levels define imputation clusters; `None`
    /// falls back to one global cluster.
    pub cluster_margins: Option<Vec<usize>>,
}

impl SimulationSpec {
    pub fn new(model: ModelSpec, randomizer: RandomizerConfig) -> SimulationSpec {
        SimulationSpec {
            model,
            randomizer,
            estimators: vec![EstimatorKind::DiM],
            families: vec![VarianceFamily::NewDf],
            sparse_mode: SparseMode::Strict,
            replications: 2000,
            level: 0.95,
            master_seed: 20240501,
            cluster_margins: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.randomizer.validate()?;
        if self.replications == 0 {
            return Err(Error::Config("replications must be >= 1".into()));
        }
        if !(0.0 < self.level && self.level < 1.0) {
            return Err(Error::Config(format!("level {} outside (0,1)", self.level)));
        }
        // The biased-coin rule targets equal allocation; the sequential
        // schemes are only run under pi = 1/2.
        if matches!(self.randomizer.scheme, Scheme::Minimization | Scheme::HuHu)
            && self.model.pi_regime != PiRegime::Equal(0.5)
        {
            return Err(Error::Config(
                "minimization-type schemes require the equal pi = 0.5 regime".into(),
            ));
        }
        Ok(())
    }

    fn cell_id(&self) -> String {
        match self.model.model {
            Model::Extreme => format!("extreme-{}", self.model.sites),
            Model::M1 => format!("m1-{}", setting_label(self.model.setting)),
            Model::M2 => format!("m2-{}", setting_label(self.model.setting)),
            Model::M3 => format!("m3-{}", setting_label(self.model.setting)),
        }
    }
}

fn setting_label(s: crate::dgp::Setting) -> &'static str {
    match s {
        crate::dgp::Setting::S1 => "s1",
        crate::dgp::Setting::S2 => "s2",
        crate::dgp::Setting::S3 => "s3",
    }
}

fn scheme_label(s: Scheme) -> &'static str {
    match s {
        Scheme::SimpleStratified => "sr",
        Scheme::StratifiedBlockBatch => "sbr",
        Scheme::PermutedBlockSequential => "pb",
        Scheme::Minimization => "min",
        Scheme::HuHu => "huhu",
    }
}

fn pi_label(r: PiRegime) -> String {
    match r {
        PiRegime::Equal(pi) => format!("equal:{pi}"),
        PiRegime::GridVarying { lo, hi } => format!("grid:{lo}:{hi}"),
        PiRegime::OddEven => "odd-even".into(),
    }
}

/// Aggregated performance metrics for one (estimator, family) in a cell.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsRow {
    pub cell: String,
    pub n: usize,
    pub strata: usize,
    pub randomizer: String,
    pub pi: String,
    pub sparse_mode: String,
    pub estimator: String,
    pub family: String,
    pub replications: usize,
    pub reps_used: usize,
    pub n_failed: usize,
    pub true_tau: f64,
    pub bias: f64,
    /// Sample standard deviation over replicates (divisor R-1); absent for
    /// a single replicate.
    pub sd: Option<f64>,
    /// Root mean squared error (divisor R).
    pub rmse: f64,
    pub mean_se: f64,
    pub cp: f64,
    /// Binomial Monte Carlo standard error of `cp`.
    pub cp_mc_se: f64,
}

/// Per-replicate audit record.
#[derive(Debug, Clone, Serialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub estimator: String,
    pub family: String,
    pub tau_hat: f64,
    pub se: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    pub covered: bool,
}

struct RepOutcome {
    estimator: EstimatorKind,
    family: VarianceFamily,
    tau_hat: f64,
    se: f64,
    ci: (f64, f64),
    covered: bool,
}

/// Adapter exposing a `design_pi` vector (indexed from zero) under the
/// 1-based canonical stratum labels the models emit.
pub struct CanonicalPi<'a>(pub &'a [f64]);

impl Pi1Source for CanonicalPi<'_> {
    fn pi1_for(&self, stratum: u32) -> Result<f64> {
        if stratum == 0 {
            return Err(Error::MissingTarget { stratum: 0 });
        }
        self.0
            .get(stratum as usize - 1)
            .copied()
            .ok_or(Error::MissingTarget {
                stratum: stratum as usize,
            })
    }
}

fn assign_arms(
    spec: &SimulationSpec,
    draws: &[PotentialDraw],
    raw: &[u32],
    design_pi: &[f64],
    seed: u64,
) -> Result<Vec<Arm>> {
    let pi = CanonicalPi(design_pi);
    match spec.randomizer.scheme {
        Scheme::SimpleStratified => simple_randomize(raw, &pi, seed),
        Scheme::StratifiedBlockBatch => stratified_block_randomize(raw, &pi, seed),
        Scheme::PermutedBlockSequential => {
            permuted_block_randomize(raw, &pi, spec.randomizer.block_size, seed)
        }
        Scheme::Minimization | Scheme::HuHu => {
            let m = spec.model.margin_count();
            let mut assigner = SequentialAssigner::new(spec.randomizer.clone(), m, seed)?;
            Ok(draws
                .iter()
                .map(|d| assigner.assign(d.margin_levels(m), d.stratum1 as u64))
                .collect())
        }
    }
}

fn run_replicate(spec: &SimulationSpec, design_pi: &[f64], rep: usize) -> Result<Vec<RepOutcome>> {
    let model = &spec.model;
    let n = model.n;
    let p = model.adjust_dim();
    let mut data_rng = substream(spec.master_seed, &[TAG_DATA, rep as u64]);
    let draws: Vec<PotentialDraw> = (0..n).map(|_| model.draw_unit(&mut data_rng)).collect();
    let raw: Vec<u32> = draws.iter().map(|d| d.stratum1).collect();

    let assign_seed = derive_seed(spec.master_seed, &[TAG_ASSIGN, rep as u64]);
    let arms = assign_arms(spec, &draws, &raw, design_pi, assign_seed)?;

    let mut y = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * p);
    for (d, a) in draws.iter().zip(&arms) {
        y.push(match a {
            Arm::Treated => d.y1,
            Arm::Control => d.y0,
        });
        x.extend_from_slice(d.x_adjust(p));
    }
    let (data, raw_of_label) = dataset_from_numeric(&raw, &arms, &y, &x, p)?;
    let targets = DesignTargets::new(
        raw_of_label
            .iter()
            .map(|r| model.pi_for_stratum(*r))
            .collect(),
    )?;

    let clusters = match (&spec.sparse_mode, &spec.cluster_margins) {
        (SparseMode::Imputation, Some(margins)) => Some(cluster_by_margins(
            model,
            &draws,
            &raw_of_label,
            &data,
            margins,
        )?),
        _ => None,
    };

    let opts = AnalysisOptions {
        estimators: spec.estimators.clone(),
        families: spec.families.clone(),
        sparse: spec.sparse_mode,
        level: spec.level,
        clusters,
    };
    let tau = model.true_tau_exact();
    let results = analyze(&data, Some(&targets), &opts)?;
    Ok(results
        .into_iter()
        .map(|r| RepOutcome {
            estimator: r.estimator,
            family: r.family,
            tau_hat: r.point.tau_hat,
            se: r.report.se,
            ci: (r.ci.lower, r.ci.upper),
            covered: r.ci.contains(tau),
        })
        .collect())
}

/// Strata sharing levels on the designated margins form a cluster.
fn cluster_by_margins(
    model: &ModelSpec,
    draws: &[PotentialDraw],
    raw_of_label: &[u32],
    data: &crate::data::Dataset,
    margins: &[usize],
) -> Result<ClusterMap> {
    let m = model.margin_count();
    for &j in margins {
        if j >= m {
            return Err(Error::Config(format!(
                "cluster margin index {j} out of range (model has {m})"
            )));
        }
    }
    // The stratum label determines the margin tuple; grab it from the first
    // unit seen in each stratum.
    let mut margin_of_label: Vec<Option<Vec<u32>>> = vec![None; raw_of_label.len()];
    for (i, d) in draws.iter().enumerate() {
        let label = data.stratum(i).index();
        if margin_of_label[label].is_none() {
            margin_of_label[label] =
                Some(margins.iter().map(|&j| d.margin_levels(m)[j]).collect());
        }
    }
    let mut keys: Vec<Vec<u32>> = Vec::new();
    let cluster: Vec<u32> = margin_of_label
        .into_iter()
        .map(|key| {
            let key = key.expect("every interned label has at least one unit");
            match keys.iter().position(|k| *k == key) {
                Some(i) => i as u32,
                None => {
                    keys.push(key);
                    (keys.len() - 1) as u32
                }
            }
        })
        .collect();
    let values = crate::data::summarize_values(data, data.outcomes());
    ClusterMap::with_stratum_share_weights(cluster, &values)
}

struct Accumulator {
    estimator: EstimatorKind,
    family: VarianceFamily,
    taus: Vec<f64>,
    ses: Vec<f64>,
    covered: usize,
}

fn aggregate(
    spec: &SimulationSpec,
    outcomes: Vec<Option<Vec<RepOutcome>>>,
) -> Result<Vec<MetricsRow>> {
    let total = outcomes.len();
    let n_failed = outcomes.iter().filter(|o| o.is_none()).count();
    if n_failed as f64 > MAX_FAILURE_RATE * total as f64 {
        return Err(Error::SimulationFailure {
            failed: n_failed,
            total,
            limit_pct: MAX_FAILURE_RATE * 100.0,
        });
    }
    let mut accs: Vec<Accumulator> = spec
        .estimators
        .iter()
        .flat_map(|e| {
            spec.families.iter().map(|f| Accumulator {
                estimator: *e,
                family: *f,
                taus: Vec::new(),
                ses: Vec::new(),
                covered: 0,
            })
        })
        .collect();
    for rep in outcomes.into_iter().flatten() {
        debug_assert_eq!(rep.len(), accs.len());
        for (acc, out) in accs.iter_mut().zip(rep) {
            debug_assert_eq!(acc.estimator, out.estimator);
            debug_assert_eq!(acc.family, out.family);
            acc.taus.push(out.tau_hat);
            acc.ses.push(out.se);
            if out.covered {
                acc.covered += 1;
            }
        }
    }
    let tau = spec.model.true_tau_exact();
    let rows = accs
        .into_iter()
        .map(|acc| {
            let r = acc.taus.len();
            let rf = r as f64;
            let mean = acc.taus.iter().sum::<f64>() / rf;
            let bias = mean - tau;
            let sd = (r >= 2).then(|| {
                let ss: f64 = acc.taus.iter().map(|t| (t - mean).powi(2)).sum();
                (ss / (rf - 1.0)).sqrt()
            });
            let rmse = (acc.taus.iter().map(|t| (t - tau).powi(2)).sum::<f64>() / rf).sqrt();
            let mean_se = acc.ses.iter().sum::<f64>() / rf;
            let cp = acc.covered as f64 / rf;
            MetricsRow {
                cell: spec.cell_id(),
                n: spec.model.n,
                strata: spec.model.stratum_count(),
                randomizer: scheme_label(spec.randomizer.scheme).to_string(),
                pi: pi_label(spec.model.pi_regime),
                sparse_mode: spec.sparse_mode.label().to_string(),
                estimator: acc.estimator.label().to_string(),
                family: acc.family.label().to_string(),
                replications: total,
                reps_used: r,
                n_failed,
                true_tau: tau,
                bias,
                sd,
                rmse,
                mean_se,
                cp,
                cp_mc_se: (cp * (1.0 - cp) / rf).sqrt(),
            }
        })
        .collect();
    Ok(rows)
}

/// Run one cell, returning a row per (estimator, family).
pub fn run_cell(spec: &SimulationSpec) -> Result<Vec<MetricsRow>> {
    Ok(run_cell_detailed(spec)?.0)
}

/// As [`run_cell`], also returning the per-replicate audit records.
pub fn run_cell_detailed(
    spec: &SimulationSpec,
) -> Result<(Vec<MetricsRow>, Vec<ReplicateRecord>)> {
    spec.validate()?;
    let design_pi = spec.model.design_pi();
    let outcomes: Vec<Option<Vec<RepOutcome>>> = (0..spec.replications)
        .into_par_iter()
        .map(|rep| run_replicate(spec, &design_pi, rep).ok())
        .collect();
    let mut records = Vec::new();
    for (rep, out) in outcomes.iter().enumerate() {
        if let Some(out) = out {
            for o in out {
                records.push(ReplicateRecord {
                    replicate: rep,
                    estimator: o.estimator.label().to_string(),
                    family: o.family.label().to_string(),
                    tau_hat: o.tau_hat,
                    se: o.se,
                    ci_lower: o.ci.0,
                    ci_upper: o.ci.1,
                    covered: o.covered,
                });
            }
        }
    }
    let rows = aggregate(spec, outcomes)?;
    Ok((rows, records))
}

/// Stratum-occupancy statistics of one sweep point, averaged over
/// replicates; the denominator is the declared stratum count.
#[derive(Debug, Clone, Serialize)]
pub struct OccupancyStats {
    pub median_stratum_size: f64,
    pub frac_n_ge4: f64,
}

/// One site count in the many-small-strata sweep.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub sites: usize,
    pub strata: usize,
    pub occupancy: OccupancyStats,
    pub rows: Vec<MetricsRow>,
}

/// Configuration shared by all sweep points.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub randomizer: RandomizerConfig,
    pub estimators: Vec<EstimatorKind>,
    pub families: Vec<VarianceFamily>,
    pub replications: usize,
    pub level: f64,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            randomizer: RandomizerConfig::default(),
            estimators: vec![EstimatorKind::DiM, EstimatorKind::AdjWeighted],
            families: vec![VarianceFamily::NewDf],
            replications: 1000,
            level: 0.95,
            master_seed: 20240501,
        }
    }
}

fn occupancy_stats(model: &ModelSpec, reps: usize, master_seed: u64) -> OccupancyStats {
    let k = model.stratum_count();
    let stats: Vec<(f64, f64)> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = substream(master_seed, &[TAG_DATA, rep as u64]);
            let mut counts = vec![0usize; k];
            for _ in 0..model.n {
                let d = model.draw_unit(&mut rng);
                counts[d.stratum1 as usize - 1] += 1;
            }
            counts.sort_unstable();
            let median = if k % 2 == 1 {
                counts[k / 2] as f64
            } else {
                (counts[k / 2 - 1] + counts[k / 2]) as f64 / 2.0
            };
            let ge4 = counts.iter().filter(|c| **c >= 4).count() as f64 / k as f64;
            (median, ge4)
        })
        .collect();
    let r = stats.len() as f64;
    OccupancyStats {
        median_stratum_size: stats.iter().map(|s| s.0).sum::<f64>() / r,
        frac_n_ge4: stats.iter().map(|s| s.1).sum::<f64>() / r,
    }
}

/// Sweep the many-small-strata model over a range of site counts, running
/// both the complete-case and imputation pipelines on shared draws.
///
/// Imputation clusters pool the strata that share the two prognostic
/// margins across sites.
pub fn run_extreme_sweep(
    sites: impl IntoIterator<Item = usize>,
    config: &SweepConfig,
) -> Result<Vec<SweepPoint>> {
    let mut points = Vec::new();
    for s in sites {
        let model = ModelSpec::extreme(s);
        let occupancy = occupancy_stats(&model, config.replications, config.master_seed);
        let mut rows = Vec::new();
        for mode in [SparseMode::CompleteCase, SparseMode::Imputation] {
            let spec = SimulationSpec {
                model: model.clone(),
                randomizer: config.randomizer.clone(),
                estimators: config.estimators.clone(),
                families: config.families.clone(),
                sparse_mode: mode,
                replications: config.replications,
                level: config.level,
                master_seed: config.master_seed,
                cluster_margins: Some(vec![0, 1]),
            };
            rows.extend(run_cell(&spec)?);
        }
        points.push(SweepPoint {
            sites: s,
            strata: model.stratum_count(),
            occupancy,
            rows,
        });
    }
    Ok(points)
}
