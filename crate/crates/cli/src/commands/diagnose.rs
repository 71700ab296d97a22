//! `diagnose`: design balance diagnostics plus a per-stratum occupancy
//! table with the estimation / variance usability flags.

use std::fs::File;
use std::io::Write;
use std::path::PathBuf;

use clap::Args;
use serde_json::json;
use strata_infer::csv_io;
use strata_infer::data::{assignment_proportions, summarize_values, DesignTargets, StratumLabel};
use strata_infer::sparse::{flag_strata, FlagMode};

use crate::CliResult;

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Trial CSV (`stratum,arm,y,...`).
    #[arg(long = "in")]
    input: PathBuf,

    /// Optional targets CSV; without it deviations are measured against
    /// the observed overall proportion.
    #[arg(long)]
    targets: Option<PathBuf>,

    /// Output JSON path (stdout when absent).
    #[arg(long = "out")]
    output: Option<PathBuf>,
}

pub fn run(args: DiagnoseArgs) -> CliResult {
    let data = csv_io::read_units_path(&args.input)?;
    let (targets, pi_source) = match &args.targets {
        Some(path) => (csv_io::read_targets_path(path, &data)?, "targets"),
        None => {
            let pi = data.observed_pi1();
            (
                DesignTargets::uniform(pi, data.n_strata())?,
                "observed_overall",
            )
        }
    };
    let diag = assignment_proportions(&data, &targets)?;
    let values = summarize_values(&data, data.outcomes());
    let flags = flag_strata(&values, FlagMode::PerStratum);

    let table: Vec<serde_json::Value> = values
        .iter()
        .enumerate()
        .map(|(s, v)| {
            json!({
                "stratum": data.stratum_name(StratumLabel(s as u32)),
                "n": v.n,
                "n0": v.cells[0].n,
                "n1": v.cells[1].n,
                "ind_est": flags.est_stratum(s),
                "ind_se": flags.se_stratum(s),
            })
        })
        .collect();
    let document = json!({
        "n": data.n(),
        "strata": data.n_strata(),
        "pi_source": pi_source,
        "max_abs_dev_0": diag.max_abs_dev[0],
        "max_abs_dev_1": diag.max_abs_dev[1],
        "min_arm_count_0": diag.min_arm_count[0],
        "min_arm_count_1": diag.min_arm_count[1],
        "frac_n_ge4": diag.frac_n_ge4,
        "strata_table": table,
    });
    let text = serde_json::to_string_pretty(&document).expect("serializable diagnostics");
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
