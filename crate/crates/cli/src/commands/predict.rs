use super::{check_units, emit, load_weights, print_json};
use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use crate::model::{data_hash, weights_hash, ModelFile};
use clap::{Args, ValueEnum};
use interval_sar::interval::interval_metrics;
use interval_sar::predictor::{predict_intervals, Method, SamplePartition};
use interval_sar::weights::WeightMatrix;
use serde_json::json;
use std::fmt::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Tc,
    Bp,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// Dataset with a split column; test rows are predicted
    #[arg(long)]
    data: PathBuf,
    /// Weights over all dataset rows
    #[arg(long)]
    weights: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Bp)]
    method: MethodArg,
    /// Skip the check that data and weights match the model file
    #[arg(long)]
    force: bool,
    /// Prediction CSV; goes to stdout when omitted, and metrics are then logged
    #[arg(short, long)]
    output: Option<PathBuf>,
}

fn mismatch(what: &str) -> CliError {
    CliError::input(
        "HashMismatch",
        format!("{what} differ from those the model was fitted on (use --force to override)"),
    )
}

pub fn run(args: PredictArgs) -> Result<()> {
    let model = ModelFile::read(&args.model)?;
    let ds = Dataset::read_path(&args.data)?;
    if ds.split.is_none() {
        return Err(CliError::input("MissingSplit", "prediction needs a split column"));
    }
    let (train, test) = (ds.train_idx(), ds.test_idx());
    if test.is_empty() {
        return Err(CliError::input("EmptyTestSet", "no rows with split=test"));
    }

    let w = match &args.weights {
        Some(p) => {
            let w = load_weights(p)?;
            check_units(&w, ds.len())?;
            w
        }
        None if model.weights_sha256.is_none() || args.force => {
            if model.fit.rho != 0.0 {
                return Err(CliError::input("MissingWeights", "a spatial model needs --weights"));
            }
            WeightMatrix::from_triplets(ds.len(), std::iter::empty(), false)?
        }
        None => return Err(CliError::input("MissingWeights", "the model was fitted with weights")),
    };
    if !args.force {
        if data_hash(&ds, &train) != model.data_sha256 {
            return Err(mismatch("training rows"));
        }
        if let Some(h) = &model.weights_sha256 {
            if args.weights.is_some() && *h != weights_hash(&w) {
                return Err(mismatch("weights"));
            }
        }
    }

    let method = match args.method {
        MethodArg::Tc => Method::Tc,
        MethodArg::Bp => Method::Bp,
    };
    let part = SamplePartition::new(train, test.clone(), w)?;
    let sample = ds.sample_with_placeholders()?;
    let pred = predict_intervals(&model.fit, &part, &sample, method)?;

    let mut csv = String::from("id,yc_hat,yr_hat,y_lower_hat,y_upper_hat,clamped\n");
    for (k, &i) in test.iter().enumerate() {
        let iv = pred.intervals[k];
        writeln!(
            csv,
            "{},{:?},{:?},{:?},{:?},{}",
            ds.ids[i],
            pred.yc_hat[k],
            pred.yr_hat[k],
            iv.lower(),
            iv.upper(),
            u8::from(pred.clamped[k])
        )
        .unwrap();
    }
    emit(args.output.as_deref(), csv.as_bytes())?;

    let truth: Option<Vec<_>> = test.iter().map(|&i| ds.y[i]).collect();
    if let Some(truth) = truth {
        let m = interval_metrics(&truth, &pred.intervals)?;
        let summary = json!({
            "method": method.to_string(),
            "n_test": test.len(),
            "rmse_l": m.rmse_l,
            "rmse_u": m.rmse_u,
            "ar": m.ar,
            "n_d": m.n_d,
            "n_clamped": pred.clamped.iter().filter(|&&c| c).count(),
        });
        if args.output.is_some() {
            print_json(&summary)?;
        } else {
            log::info!("metrics: {summary}");
        }
    }
    Ok(())
}
