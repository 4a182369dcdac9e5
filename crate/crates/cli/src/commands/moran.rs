use super::{check_units, load_weights, print_json, resolve_seed};
use crate::dataset::Dataset;
use crate::error::Result;
use clap::{Args, ValueEnum};
use interval_sar::weights::{morans_i_test, Alternative, DEFAULT_PERMUTATIONS};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Tail {
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Args)]
pub struct MoranArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    /// yc, yr, xc, xr, or the name of any numeric column
    #[arg(long, default_value = "yc")]
    column: String,
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    permutations: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = Tail::Greater)]
    alternative: Tail,
}

pub fn run(args: MoranArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let ds = Dataset::read_path(&args.data)?;
    let w = load_weights(&args.weights)?;
    check_units(&w, ds.len())?;
    let z = ds.column(&args.column)?;
    let alternative = match args.alternative {
        Tail::Greater => Alternative::Greater,
        Tail::Less => Alternative::Less,
        Tail::TwoSided => Alternative::TwoSided,
    };
    let r = morans_i_test(&w, &z, args.permutations, seed, alternative)?;
    print_json(&json!({
        "column": args.column,
        "statistic": r.statistic,
        "p_value": r.p_value,
        "permutations": r.n_permutations,
        "alternative": r.alternative,
        "seed": seed,
    }))
}
