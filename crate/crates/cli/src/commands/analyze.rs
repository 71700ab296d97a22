//! `analyze`: estimate the treatment effect from a trial CSV and emit a
//! JSON report with variance decompositions and variance reductions.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use strata_infer::csv_io::{self, describe_stratum};
use strata_infer::data::{summarize_values, Dataset, DesignTargets};
use strata_infer::estimate::EstimatorKind;
use strata_infer::pipeline::{analyze, AnalysisOptions, AnalysisResult, SparseMode};
use strata_infer::sparse::ImputeWeightRule;
use strata_infer::variance::VarianceFamily;

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct AnalyzeArgs {
    /// Trial CSV (`stratum,arm,y,x1..xp`).
    #[arg(long = "in")]
    input: PathBuf,

    /// Optional targets CSV (`stratum,pi1`); without it the observed
    /// proportions stand in.
    #[arg(long)]
    targets: Option<PathBuf>,

    /// Comma-separated estimators: dim, adj, adjw, or all.
    #[arg(long, default_value = "all")]
    estimators: String,

    /// Variance families: new, legacy, or both.
    #[arg(long, default_value = "new")]
    families: String,

    /// Sparse-strata handling: strict, complete-case, or impute.
    #[arg(long, default_value = "strict")]
    sparse: String,

    /// Cluster CSV (`stratum,cluster`) for imputation.
    #[arg(long)]
    clusters: Option<PathBuf>,

    /// Donor-weight CSV (`stratum,w0,w1`).
    #[arg(long)]
    cluster_weights: Option<PathBuf>,

    /// Default donor-weight rule: stratum-share (n(s)/n) or arm-share
    /// (n_a(s)/n_a).
    #[arg(long, default_value = "stratum-share")]
    weight_rule: String,

    /// Confidence level.
    #[arg(long, default_value_t = 0.95)]
    level: f64,

    /// Output JSON path (stdout when absent).
    #[arg(long = "out")]
    output: Option<PathBuf>,
}

fn result_json(r: &AnalysisResult, vr_pct: Option<f64>) -> serde_json::Value {
    json!({
        "estimator": r.estimator.label(),
        "family": r.report.family.label(),
        "target": r.report.target.label(),
        "estimate": r.point.tau_hat,
        "se": r.report.se,
        "ci_lower": r.ci.lower,
        "ci_upper": r.ci.upper,
        "ci_length": r.ci.length(),
        "level": r.ci.level,
        "v_between_raw": r.report.v_between_raw,
        "v_between_used": r.report.v_between_used,
        "v_within_0": r.report.v_within[0],
        "v_within_1": r.report.v_within[1],
        "v_total": r.report.v_total,
        "n": r.report.n,
        "strata": r.report.strata,
        "n_used": r.point.n_used,
        "strata_used": r.point.strata_used,
        "vr_pct": vr_pct,
    })
}

fn decorate(e: strata_infer::Error, data: &Dataset) -> CliError {
    let suffix = match e.stratum_index() {
        Some(s) => format!(" [stratum {}]", describe_stratum(data, s)),
        None => String::new(),
    };
    let mut cli = CliError::from(e);
    cli.message.push_str(&suffix);
    cli
}

pub fn run(args: AnalyzeArgs) -> CliResult {
    let data = csv_io::read_units_path(&args.input)?;
    let targets: Option<DesignTargets> = match &args.targets {
        Some(path) => Some(csv_io::read_targets_path(path, &data)?),
        None => None,
    };
    let estimators = super::parse_estimators(&args.estimators)?;
    let families = super::parse_families(&args.families)?;
    let sparse = super::parse_sparse(&args.sparse)?;
    let weight_rule = match args.weight_rule.as_str() {
        "stratum-share" => ImputeWeightRule::StratumShare,
        "arm-share" => ImputeWeightRule::ArmShare,
        other => return Err(CliError::data(format!("unknown weight rule `{other}`"))),
    };
    let clusters = match (&args.clusters, sparse) {
        (Some(path), _) => {
            let values = summarize_values(&data, data.outcomes());
            let weights_file = args
                .cluster_weights
                .as_ref()
                .map(File::open)
                .transpose()?;
            Some(csv_io::read_cluster_map(
                File::open(path)?,
                weights_file,
                &data,
                &values,
                weight_rule,
            )?)
        }
        (None, SparseMode::Imputation) => None, // single global cluster
        _ => None,
    };

    let opts = AnalysisOptions {
        estimators,
        families: families.clone(),
        sparse,
        level: args.level,
        clusters,
    };
    let results = analyze(&data, targets.as_ref(), &opts).map_err(|e| decorate(e, &data))?;

    // Variance reduction relative to the unadjusted estimator, per family.
    let dim_v = |family: VarianceFamily| -> Option<f64> {
        results
            .iter()
            .find(|r| r.estimator == EstimatorKind::DiM && r.family == family)
            .map(|r| r.report.v_total)
    };
    let rendered: Vec<serde_json::Value> = results
        .iter()
        .map(|r| {
            let vr = if r.estimator == EstimatorKind::DiM {
                None
            } else {
                dim_v(r.family).map(|v_dim| 100.0 * (1.0 - r.report.v_total / v_dim))
            };
            result_json(r, vr)
        })
        .collect();

    let document = json!({
        "n": data.n(),
        "strata": data.n_strata(),
        "p": data.p(),
        "level": args.level,
        "sparse_mode": sparse.label(),
        "pi_source": if targets.is_some() { "targets" } else { "observed" },
        "results": rendered,
    });
    let text = serde_json::to_string_pretty(&document).expect("serializable report");
    match &args.output {
        Some(path) => {
            let mut f = File::create(path)?;
            f.write_all(text.as_bytes())?;
            f.write_all(b"\n")?;
        }
        None => println!("{text}"),
    }
    Ok(())
}
