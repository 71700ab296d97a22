//! `randomize`: assign arms to a roster CSV.

use std::collections::HashMap;
use std::fs::File;
use std::path::PathBuf;

use clap::Args;
use strata_infer::assign::{
    permuted_block_randomize, simple_randomize, stratified_block_randomize, RandomizerConfig,
    Scheme, SequentialAssigner,
};
use strata_infer::data::Arm;

use crate::{CliError, CliResult};

#[derive(Args)]
pub struct RandomizeArgs {
    /// Input roster CSV; requires a `stratum` column, keeps `unit_id` if
    /// present.
    #[arg(long = "in")]
    input: PathBuf,

    /// Output assignment CSV (`unit_id,stratum,arm`).
    #[arg(long = "out")]
    output: PathBuf,

    /// Scheme: sr, sbr, pb, min, huhu.
    #[arg(long, default_value = "sbr")]
    scheme: String,

    /// Treated target probability applied to every stratum.
    #[arg(long, default_value_t = 0.5)]
    pi: f64,

    /// Per-stratum targets CSV (`stratum,pi1`); overrides --pi.
    #[arg(long)]
    pi_file: Option<PathBuf>,

    /// Biased-coin probability for min / huhu.
    #[arg(long, default_value_t = 0.75)]
    lambda: f64,

    /// Block size for the sequential permuted-block scheme.
    #[arg(long, default_value_t = 4)]
    block_size: usize,

    /// Comma-separated roster columns used as minimization margins
    /// (default: the stratum column itself).
    #[arg(long)]
    margins: Option<String>,

    #[arg(long, default_value_t = 20240501)]
    seed: u64,
}

struct Roster {
    unit_ids: Vec<String>,
    stratum_names: Vec<String>,
    /// Interned stratum per unit.
    strata: Vec<u32>,
    names: Vec<String>,
    /// Interned margin levels per unit, one row per margin column.
    margins: Vec<Vec<u32>>,
}

fn read_roster(path: &PathBuf, margin_cols: &[String]) -> Result<Roster, CliError> {
    let mut rdr = csv::Reader::from_reader(File::open(path)?);
    let headers = rdr.headers()?.clone();
    let stratum_col = headers
        .iter()
        .position(|h| h.trim() == "stratum")
        .ok_or_else(|| CliError::data("roster is missing the `stratum` column"))?;
    let unit_col = headers.iter().position(|h| h.trim() == "unit_id");
    let margin_idx: Vec<usize> = margin_cols
        .iter()
        .map(|c| {
            headers
                .iter()
                .position(|h| h.trim() == c)
                .ok_or_else(|| CliError::data(format!("roster is missing margin column `{c}`")))
        })
        .collect::<Result<_, _>>()?;

    let mut lookup: HashMap<String, u32> = HashMap::new();
    let mut names = Vec::new();
    let mut margin_lookup: Vec<HashMap<String, u32>> = vec![HashMap::new(); margin_idx.len()];
    let mut roster = Roster {
        unit_ids: Vec::new(),
        stratum_names: Vec::new(),
        strata: Vec::new(),
        names: Vec::new(),
        margins: vec![Vec::new(); margin_idx.len()],
    };
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        let name = record.get(stratum_col).unwrap_or("").trim().to_string();
        if name.is_empty() {
            return Err(CliError::data(format!("row {}: empty stratum", row + 1)));
        }
        let id = *lookup.entry(name.clone()).or_insert_with(|| {
            names.push(name.clone());
            (names.len() - 1) as u32
        });
        roster.strata.push(id);
        roster.stratum_names.push(name);
        roster.unit_ids.push(match unit_col {
            Some(c) => record.get(c).unwrap_or("").trim().to_string(),
            None => (row + 1).to_string(),
        });
        for (j, &col) in margin_idx.iter().enumerate() {
            let level = record.get(col).unwrap_or("").trim().to_string();
            let table = &mut margin_lookup[j];
            let next = table.len() as u32;
            let id = *table.entry(level).or_insert(next);
            roster.margins[j].push(id);
        }
    }
    if roster.strata.is_empty() {
        return Err(CliError::data("roster contains no units"));
    }
    roster.names = names;
    Ok(roster)
}

fn targets_for(
    roster: &Roster,
    pi: f64,
    pi_file: &Option<PathBuf>,
) -> Result<Vec<f64>, CliError> {
    match pi_file {
        None => {
            if !(pi > 0.0 && pi < 1.0) {
                return Err(CliError::data(format!("--pi {pi} outside (0,1)")));
            }
            Ok(vec![pi; roster.names.len()])
        }
        Some(path) => {
            let mut rdr = csv::Reader::from_reader(File::open(path)?);
            let headers = rdr.headers()?.clone();
            let sc = headers
                .iter()
                .position(|h| h.trim() == "stratum")
                .ok_or_else(|| CliError::data("targets file is missing `stratum`"))?;
            let pc = headers
                .iter()
                .position(|h| h.trim() == "pi1")
                .ok_or_else(|| CliError::data("targets file is missing `pi1`"))?;
            let mut by_name: HashMap<String, f64> = HashMap::new();
            for record in rdr.records() {
                let record = record?;
                let v: f64 = record
                    .get(pc)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| CliError::data("non-numeric pi1 in targets file"))?;
                by_name.insert(record.get(sc).unwrap_or("").trim().to_string(), v);
            }
            roster
                .names
                .iter()
                .map(|name| {
                    by_name
                        .get(name)
                        .copied()
                        .ok_or_else(|| CliError::data(format!("no target for stratum `{name}`")))
                })
                .collect()
        }
    }
}

pub fn run(args: RandomizeArgs) -> CliResult {
    let margin_cols: Vec<String> = match &args.margins {
        Some(s) => s.split(',').map(|c| c.trim().to_string()).collect(),
        None => vec!["stratum".to_string()],
    };
    let roster = read_roster(&args.input, &margin_cols)?;
    let targets = targets_for(&roster, args.pi, &args.pi_file)?;

    let arms: Vec<Arm> = match args.scheme.as_str() {
        "sr" => simple_randomize(&roster.strata, &targets, args.seed)?,
        "sbr" => stratified_block_randomize(&roster.strata, &targets, args.seed)?,
        "pb" => permuted_block_randomize(&roster.strata, &targets, args.block_size, args.seed)?,
        "min" | "huhu" => {
            if targets.iter().any(|pi| *pi != 0.5) {
                return Err(CliError::data(
                    "minimization-type schemes target equal allocation; use --pi 0.5",
                ));
            }
            let config = RandomizerConfig {
                scheme: if args.scheme == "min" {
                    Scheme::Minimization
                } else {
                    Scheme::HuHu
                },
                lambda: args.lambda,
                ..Default::default()
            };
            let mut assigner =
                SequentialAssigner::new(config, margin_cols.len(), args.seed)?;
            (0..roster.strata.len())
                .map(|i| {
                    let margins: Vec<u32> =
                        roster.margins.iter().map(|col| col[i]).collect();
                    assigner.assign(&margins, roster.strata[i] as u64)
                })
                .collect()
        }
        other => {
            return Err(CliError::data(format!(
                "unknown scheme `{other}` (expected sr, sbr, pb, min, huhu)"
            )))
        }
    };

    let mut w = csv::Writer::from_writer(File::create(&args.output)?);
    w.write_record(["unit_id", "stratum", "arm"])?;
    for i in 0..roster.strata.len() {
        w.write_record([
            roster.unit_ids[i].as_str(),
            roster.stratum_names[i].as_str(),
            if arms[i] == Arm::Treated { "1" } else { "0" },
        ])?;
    }
    w.flush()?;
    Ok(())
}
