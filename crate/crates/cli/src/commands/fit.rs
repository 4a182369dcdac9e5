use super::{check_units, emit, load_weights, print_json};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::model::{data_hash, weights_hash, ModelFile, FORMAT_VERSION};
use clap::{Args, ValueEnum};
use interval_sar::estimators::{fit, ModelKind, RhoGrid};
use interval_sar::weights::{morans_i, WeightMatrix};
use serde_json::json;
use std::fmt::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModelArg {
    Icsm,
    Icm,
    Ism,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Icsm => ModelKind::Icsm,
            ModelArg::Icm => ModelKind::Icm,
            ModelArg::Ism => ModelKind::Ism,
        }
    }
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = -1.0, allow_negative_numbers = true)]
    rho_min: f64,
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    rho_max: f64,
    #[arg(long, default_value_t = 0.01, allow_negative_numbers = true)]
    rho_step: f64,
    /// Explicit comma-separated grid; overrides the range flags
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    rho_points: Option<Vec<f64>>,
}

impl GridArgs {
    pub fn grid(&self) -> RhoGrid {
        match &self.rho_points {
            Some(points) => RhoGrid::Points { points: points.clone() },
            None => RhoGrid::Range {
                min: self.rho_min,
                max: self.rho_max,
                step: self.rho_step,
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Dataset CSV; with a split column only the training rows are used
    #[arg(long)]
    data: PathBuf,
    /// Weights over all dataset rows; required unless the model is icm
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[command(flatten)]
    grid: GridArgs,
    /// Model file to write
    #[arg(short, long)]
    output: PathBuf,
    /// Also write training residuals as id,residual_c,residual_r
    #[arg(long)]
    residuals: Option<PathBuf>,
}

/// Weights among the training rows. A row-normalized input is renormalized
/// after dropping the test rows.
pub fn training_weights(w: &WeightMatrix, train: &[usize]) -> WeightMatrix {
    if train.len() == w.n() {
        return w.clone();
    }
    let sub = w.submatrix(train);
    if w.is_row_normalized() {
        sub.row_normalize()
    } else {
        sub
    }
}

pub fn run(args: FitArgs) -> Result<()> {
    let model = ModelKind::from(args.model);
    let ds = Dataset::read_path(&args.data)?;
    let train = ds.train_idx();
    if train.is_empty() {
        return Err(CliError::input("EmptySample", "no training rows"));
    }
    let sample = ds.sample(&train)?;
    let w_full = args.weights.as_deref().map(load_weights).transpose()?;
    if let Some(w) = &w_full {
        check_units(w, ds.len())?;
    }
    let w_train = w_full.as_ref().map(|w| training_weights(w, &train));
    if model != ModelKind::Icm && w_train.is_none() {
        return Err(CliError::input("MissingWeights", format!("{model} requires --weights")));
    }

    let result = fit(model, &sample, w_train.as_ref(), &args.grid.grid())?;

    let residual_moran = w_train.as_ref().and_then(|w| match morans_i(w, &result.residuals_c) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("residual Moran's I unavailable: {e}");
            None
        }
    });
    if let Some(path) = &args.residuals {
        let mut s = String::from("id,residual_c,residual_r\n");
        for (k, &i) in train.iter().enumerate() {
            writeln!(
                s,
                "{},{:?},{:?}",
                ds.ids[i], result.residuals_c[k], result.residuals_r[k]
            )
            .unwrap();
        }
        emit(Some(path), s.as_bytes())?;
    }

    let file = ModelFile {
        format_version: FORMAT_VERSION,
        fit: result,
        n_train: train.len(),
        data_sha256: data_hash(&ds, &train),
        weights_sha256: w_full.as_ref().map(weights_hash),
    };
    file.write(&args.output)?;
    let r = &file.fit;
    print_json(&json!({
        "model": r.model,
        "rho": r.rho,
        "beta_c": r.beta_c,
        "beta_r": r.beta_r,
        "sigma2_c": r.sigma2_c,
        "sigma2_r": r.sigma2_r,
        "objective": r.objective,
        "n_train": file.n_train,
        "residual_moran_c": residual_moran,
    }))
}
