use super::{emit, print_json};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use clap::{Args, Subcommand};
use interval_sar::weights::{block, inverse_distance, rook, select_k_d0, write_weights, WeightMatrix};
use serde_json::json;
use std::path::PathBuf;

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[command(subcommand)]
    kind: Kind,
}

#[derive(Debug, Args)]
struct Output {
    /// Row-normalize the matrix
    #[arg(long)]
    normalize: bool,
    /// Output file; the matrix goes to stdout when omitted
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Kind {
    /// Rook contiguity on a rows x cols lattice
    Rook {
        #[arg(long)]
        rows: usize,
        #[arg(long)]
        cols: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Equal weights within districts of equal size
    Block {
        #[arg(long)]
        districts: usize,
        #[arg(long)]
        members: usize,
        #[command(flatten)]
        out: Output,
    },
    /// Inverse great-circle distance among the k nearest neighbours within d0 km
    Invdist {
        /// CSV with id,lon,lat columns (a dataset file works)
        #[arg(long)]
        coords: PathBuf,
        #[arg(long, required_unless_present = "k_max", requires = "d0")]
        k: Option<usize>,
        #[arg(long, requires = "k")]
        d0: Option<f64>,
        /// Choose (k, d0) maximizing Moran's I of a variable, trying k = 1..=k_max
        #[arg(long, conflicts_with_all = ["k", "d0"])]
        k_max: Option<usize>,
        /// Dataset holding the selection variable; defaults to the coordinates file
        #[arg(long, requires = "k_max")]
        data: Option<PathBuf>,
        /// Selection variable
        #[arg(long, default_value = "yc", requires = "k_max")]
        column: String,
        #[command(flatten)]
        out: Output,
    },
}

fn finish(w: WeightMatrix, out: &Output, extra: serde_json::Value) -> Result<()> {
    let w = if out.normalize { w.row_normalize() } else { w };
    let mut buf = Vec::new();
    write_weights(&w, &mut buf)?;
    emit(out.output.as_deref(), &buf)?;
    if out.output.is_some() {
        let mut summary = json!({
            "n": w.n(),
            "nnz": w.nnz(),
            "normalized": w.is_row_normalized(),
        });
        if let (Some(obj), serde_json::Value::Object(more)) = (summary.as_object_mut(), extra) {
            obj.extend(more);
        }
        print_json(&summary)?;
    }
    Ok(())
}

pub fn run(args: WeightsArgs) -> Result<()> {
    match args.kind {
        Kind::Rook { rows, cols, out } => finish(rook(rows, cols)?, &out, json!({})),
        Kind::Block {
            districts,
            members,
            out,
        } => finish(block(districts, members)?, &out, json!({})),
        Kind::Invdist {
            coords,
            k,
            d0,
            k_max,
            data,
            column,
            out,
        } => {
            let file = std::fs::File::open(&coords).map_err(|e| CliError::from(e).context(coords.display()))?;
            let points: Vec<_> = interval_sar::weights::read_coords(file)
                .map_err(|e| CliError::from(e).context(coords.display()))?
                .into_iter()
                .map(|(_, p)| p)
                .collect();
            match (k, d0, k_max) {
                (Some(k), Some(d0), None) => finish(inverse_distance(&points, k, d0)?, &out, json!({})),
                (None, None, Some(k_max)) => {
                    let ds = Dataset::read_path(data.as_deref().unwrap_or(&coords))?;
                    let z = ds.column(&column)?;
                    let sel = select_k_d0(&points, &z, k_max)?;
                    log::info!(
                        "selected k = {}, d0 = {} (Moran's I {})",
                        sel.best.k,
                        sel.best.d0,
                        sel.best.moran
                    );
                    let w = inverse_distance(&points, sel.best.k, sel.best.d0)?;
                    finish(w, &out, json!({ "selection": sel }))
                }
                _ => Err(CliError::input(
                    "InvalidArgument",
                    "give either --k and --d0, or --k-max",
                )),
            }
        }
    }
}
