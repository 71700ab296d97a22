//! `simulate`: run one Monte Carlo cell or the extreme-strata sweep,
//! writing raw metrics CSV, a metadata sidecar echoing the effective
//! configuration, and a two-decimal table to stdout.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use strata_infer::assign::{RandomizerConfig, Scheme};
use strata_infer::dgp::{parse_model, parse_pi_regime, parse_setting, Model, ModelSpec};
use strata_infer::sim::{run_cell_detailed, run_extreme_sweep, MetricsRow, SimulationSpec, SweepConfig};

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct SimulateArgs {
    /// Model: m1, m2, m3, extreme.
    #[arg(long)]
    model: Option<String>,

    /// Setting for m1/m2/m3: s1, s2, s3 (default s1).
    #[arg(long)]
    setting: Option<String>,

    /// Site count for the extreme model.
    #[arg(long)]
    sites: Option<usize>,

    /// Sweep the extreme model over an inclusive site range `lo:hi`.
    #[arg(long)]
    sweep_sites: Option<String>,

    /// Model config file (key=value); explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Assignment regime: equal:PI, grid:LO:HI, or odd-even.
    #[arg(long)]
    pi: Option<String>,

    /// Sample size override.
    #[arg(long)]
    n: Option<usize>,

    #[arg(long)]
    mu0: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,

    /// Randomizer: sr, sbr, pb, min, huhu.
    #[arg(long = "rand", default_value = "sr")]
    randomizer: String,

    #[arg(long, default_value_t = 0.75)]
    lambda: f64,

    #[arg(long, default_value_t = 4)]
    block_size: usize,

    /// Estimators: dim, adj, adjw, or all.
    #[arg(long, default_value = "all")]
    estimators: String,

    /// Variance families: new, legacy, or both.
    #[arg(long, default_value = "both")]
    families: String,

    /// Sparse handling: strict, complete-case, impute.
    #[arg(long, default_value = "strict")]
    sparse: String,

    #[arg(long, default_value_t = 2000)]
    reps: usize,

    #[arg(long, default_value_t = 0.95)]
    level: f64,

    #[arg(long, default_value_t = 20240501)]
    seed: u64,

    /// Metrics CSV output path.
    #[arg(long = "out")]
    output: PathBuf,

    /// Optional per-replicate dump CSV (single-cell runs).
    #[arg(long)]
    dump_reps: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, CliError> {
    Ok(match s {
        "sr" => Scheme::SimpleStratified,
        "sbr" => Scheme::StratifiedBlockBatch,
        "pb" => Scheme::PermutedBlockSequential,
        "min" => Scheme::Minimization,
        "huhu" => Scheme::HuHu,
        other => {
            return Err(CliError::data(format!(
                "unknown randomizer `{other}` (expected sr, sbr, pb, min, huhu)"
            )))
        }
    })
}

fn model_spec(args: &SimulateArgs) -> Result<ModelSpec, CliError> {
    let mut spec = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            ModelSpec::from_kv(&text)?
        }
        None => {
            let model = parse_model(
                args.model
                    .as_deref()
                    .ok_or_else(|| CliError::data("--model is required without --config"))?,
            )?;
            if model == Model::Extreme {
                ModelSpec::extreme(args.sites.unwrap_or(5))
            } else {
                ModelSpec::standard(model, parse_setting(args.setting.as_deref().unwrap_or("s1"))?)
            }
        }
    };
    // Explicit flags win over the config file.
    if let Some(model) = &args.model {
        if args.config.is_some() {
            let parsed = parse_model(model)?;
            if parsed != spec.model {
                spec = if parsed == Model::Extreme {
                    ModelSpec::extreme(args.sites.unwrap_or(5))
                } else {
                    ModelSpec::standard(
                        parsed,
                        parse_setting(args.setting.as_deref().unwrap_or("s1"))?,
                    )
                };
            }
        }
    }
    if let Some(setting) = &args.setting {
        if spec.model != Model::Extreme {
            let parsed = parse_setting(setting)?;
            if parsed != spec.setting {
                spec = ModelSpec::standard(spec.model, parsed)
                    .with_pi(spec.pi_regime);
            }
        }
    }
    if let Some(sites) = args.sites {
        if spec.model == Model::Extreme {
            spec.sites = sites;
        }
    }
    if let Some(pi) = &args.pi {
        spec.pi_regime = parse_pi_regime(pi)?;
    }
    if let Some(n) = args.n {
        spec.n = n;
    }
    if let Some(mu0) = args.mu0 {
        spec.mu0 = mu0;
    }
    if let Some(mu1) = args.mu1 {
        spec.mu1 = mu1;
    }
    spec.validate()?;
    Ok(spec)
}

fn write_rows(path: &PathBuf, rows: &[RowOut]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(File::create(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// Metrics row with the sweep occupancy columns appended (empty for
/// single-cell runs). The csv writer needs a flat struct.
#[derive(serde::Serialize)]
struct RowOut {
    cell: String,
    n: usize,
    strata: usize,
    randomizer: String,
    pi: String,
    sparse_mode: String,
    estimator: String,
    family: String,
    replications: usize,
    reps_used: usize,
    n_failed: usize,
    true_tau: f64,
    bias: f64,
    sd: Option<f64>,
    rmse: f64,
    mean_se: f64,
    cp: f64,
    cp_mc_se: f64,
    sites: Option<usize>,
    median_stratum_size: Option<f64>,
    frac_n_ge4: Option<f64>,
}

impl RowOut {
    fn new(
        row: MetricsRow,
        sweep: Option<(usize, f64, f64)>,
    ) -> RowOut {
        RowOut {
            cell: row.cell,
            n: row.n,
            strata: row.strata,
            randomizer: row.randomizer,
            pi: row.pi,
            sparse_mode: row.sparse_mode,
            estimator: row.estimator,
            family: row.family,
            replications: row.replications,
            reps_used: row.reps_used,
            n_failed: row.n_failed,
            true_tau: row.true_tau,
            bias: row.bias,
            sd: row.sd,
            rmse: row.rmse,
            mean_se: row.mean_se,
            cp: row.cp,
            cp_mc_se: row.cp_mc_se,
            sites: sweep.map(|s| s.0),
            median_stratum_size: sweep.map(|s| s.1),
            frac_n_ge4: sweep.map(|s| s.2),
        }
    }
}

fn print_table(rows: &[RowOut]) {
    println!(
        "{:<12} {:<10} {:<14} {:<15} {:<10} {:>7} {:>7} {:>7} {:>7} {:>7}",
        "cell", "rand", "estimator", "family", "sparse", "bias", "sd", "rmse", "se", "cp"
    );
    for m in rows {
        println!(
            "{:<12} {:<10} {:<14} {:<15} {:<10} {:>7.2} {:>7} {:>7.2} {:>7.2} {:>7.2}",
            m.cell,
            m.randomizer,
            m.estimator,
            m.family,
            m.sparse_mode,
            m.bias,
            m.sd.map_or("-".to_string(), |v| format!("{v:.2}")),
            m.rmse,
            m.mean_se,
            m.cp
        );
    }
}

pub fn run(args: SimulateArgs) -> CliResult {
    let randomizer = RandomizerConfig {
        scheme: parse_scheme(&args.randomizer)?,
        lambda: args.lambda,
        block_size: args.block_size,
        ..Default::default()
    };
    let estimators = super::parse_estimators(&args.estimators)?;
    let families = super::parse_families(&args.families)?;
    let sparse = super::parse_sparse(&args.sparse)?;

    let (rows, meta_extra) = match &args.sweep_sites {
        Some(range) => {
            let (lo, hi) = range
                .split_once(':')
                .ok_or_else(|| CliError::data("--sweep-sites expects lo:hi"))?;
            let lo: usize = lo
                .parse()
                .map_err(|_| CliError::data("bad --sweep-sites lower bound"))?;
            let hi: usize = hi
                .parse()
                .map_err(|_| CliError::data("bad --sweep-sites upper bound"))?;
            if lo == 0 || hi < lo {
                return Err(CliError::data("--sweep-sites needs 1 <= lo <= hi"));
            }
            let config = SweepConfig {
                randomizer: randomizer.clone(),
                estimators: estimators.clone(),
                families: families.clone(),
                replications: args.reps,
                level: args.level,
                master_seed: args.seed,
            };
            let points = run_extreme_sweep(lo..=hi, &config)?;
            let rows: Vec<RowOut> = points
                .iter()
                .flat_map(|p| {
                    p.rows.iter().map(|r| {
                        RowOut::new(
                            r.clone(),
                            Some((
                                p.sites,
                                p.occupancy.median_stratum_size,
                                p.occupancy.frac_n_ge4,
                            )),
                        )
                    })
                })
                .collect();
            (rows, json!({ "sweep_sites": [lo, hi] }))
        }
        None => {
            let model = model_spec(&args)?;
            let model_kv = model.to_kv();
            // For the site-driven model, imputation clusters pool the
            // strata sharing the two prognostic margins across sites.
            let cluster_margins = (model.model == Model::Extreme
                && matches!(sparse, strata_infer::pipeline::SparseMode::Imputation))
            .then(|| vec![0, 1]);
            let spec = SimulationSpec {
                model,
                randomizer: randomizer.clone(),
                estimators: estimators.clone(),
                families: families.clone(),
                sparse_mode: sparse,
                replications: args.reps,
                level: args.level,
                master_seed: args.seed,
                cluster_margins,
            };
            let (rows, records) = run_cell_detailed(&spec)?;
            if let Some(path) = &args.dump_reps {
                let mut w = csv::Writer::from_writer(File::create(path)?);
                for rec in &records {
                    w.serialize(rec)?;
                }
                w.flush()?;
            }
            let rows: Vec<RowOut> = rows.into_iter().map(|row| RowOut::new(row, None)).collect();
            (rows, json!({ "model_config": model_kv }))
        }
    };

    write_rows(&args.output, &rows)?;

    // Echo the effective configuration and conventions next to the data.
    let meta = json!({
        "randomizer": args.randomizer,
        "lambda": args.lambda,
        "block_size": args.block_size,
        "estimators": args.estimators,
        "families": args.families,
        "sparse": args.sparse,
        "replications": args.reps,
        "level": args.level,
        "seed": args.seed,
        "conventions": {
            "sd_divisor": "R-1",
            "rmse_divisor": "R",
            "se": "sqrt(v_total / n)",
            "csv_values": "full precision; printed table rounds to 2 decimals"
        },
        "extra": meta_extra,
    });
    let meta_path = args.output.with_extension("meta.json");
    let mut f = File::create(&meta_path)?;
    f.write_all(serde_json::to_string_pretty(&meta).expect("meta").as_bytes())?;
    f.write_all(b"\n")?;

    print_table(&rows);
    Ok(())
}
