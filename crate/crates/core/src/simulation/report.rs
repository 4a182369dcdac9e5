use super::ScenarioConfig;
use crate::estimators::ModelKind;
use serde::{Deserialize, Serialize};
use std::fmt::Write;

/// Summarized metrics, in report order.
/// `MSE_*` are per-replication squared RMSEs.
pub const METRICS: [&str; 7] = ["RMSE_l", "RMSE_u", "MSE_l", "MSE_u", "AR", "N_d", "rho"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model: ModelKind,
    pub rho: f64,
    pub rmse_l: f64,
    pub rmse_u: f64,
    pub ar: f64,
    pub n_d: usize,
    /// Test units whose predicted radius was clamped to zero.
    pub n_clamped: usize,
    /// Smallest overlap between a fitted and observed training interval.
    pub min_train_overlap: f64,
    pub min_train_radius: f64,
}

impl ModelRecord {
    pub fn metric(&self, name: &str) -> f64 {
        match name {
            "RMSE_l" => self.rmse_l,
            "RMSE_u" => self.rmse_u,
            "MSE_l" => self.rmse_l * self.rmse_l,
            "MSE_u" => self.rmse_u * self.rmse_u,
            "AR" => self.ar,
            "N_d" => self.n_d as f64,
            "rho" => self.rho,
            _ => panic!("unknown metric {name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub redraws: u32,
    pub models: Vec<ModelRecord>,
}

impl RepRecord {
    pub fn model(&self, kind: ModelKind) -> &ModelRecord {
        self.models
            .iter()
            .find(|m| m.model == kind)
            .expect("every model is recorded")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub model: ModelKind,
    pub metric: String,
    pub mean: f64,
    /// Denominator `n - 1`; NaN with fewer than two replications.
    pub sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ScenarioConfig,
    pub reps: Vec<RepRecord>,
    pub failures: Vec<(usize, String)>,
    pub summary: Vec<MetricSummary>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        f64::NAN
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    (mean, sd)
}

impl ExperimentReport {
    pub fn new(config: ScenarioConfig, reps: Vec<RepRecord>, failures: Vec<(usize, String)>) -> Self {
        let mut summary = Vec::new();
        for model in ModelKind::ALL {
            for metric in METRICS {
                let values: Vec<f64> = reps.iter().map(|r| r.model(model).metric(metric)).collect();
                let (mean, sd) = mean_sd(&values);
                summary.push(MetricSummary {
                    model,
                    metric: metric.to_string(),
                    mean,
                    sd,
                    n: values.len(),
                });
            }
        }
        Self {
            config,
            reps,
            failures,
            summary,
        }
    }

    pub fn n_failed(&self) -> usize {
        self.failures.len()
    }

    pub fn get(&self, model: ModelKind, metric: &str) -> &MetricSummary {
        self.summary
            .iter()
            .find(|s| s.model == model && s.metric == metric)
            .unwrap_or_else(|| panic!("no summary for {model} {metric}"))
    }

    pub fn mean(&self, model: ModelKind, metric: &str) -> f64 {
        self.get(model, metric).mean
    }

    /// One row per model and metric.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,model,metric,mean,sd,n_ok,n_failed\n");
        for s in &self.summary {
            writeln!(
                out,
                "{},{},{},{:?},{:?},{},{}",
                self.config.name,
                s.model,
                s.metric,
                s.mean,
                s.sd,
                s.n,
                self.n_failed()
            )
            .unwrap();
        }
        out
    }

    /// Raw per-replication values.
    pub fn reps_csv(&self) -> String {
        let mut out = String::from(
            "scenario,rep,model,rho,rmse_l,rmse_u,ar,n_d,n_clamped,min_train_overlap,min_train_radius,redraws\n",
        );
        for r in &self.reps {
            for m in &r.models {
                writeln!(
                    out,
                    "{},{},{},{:?},{:?},{:?},{:?},{},{},{:?},{:?},{}",
                    self.config.name,
                    r.rep,
                    m.model,
                    m.rho,
                    m.rmse_l,
                    m.rmse_u,
                    m.ar,
                    m.n_d,
                    m.n_clamped,
                    m.min_train_overlap,
                    m.min_train_radius,
                    r.redraws
                )
                .unwrap();
            }
        }
        out
    }

    /// Aligned table with `mean (sd)` cells, one row per model.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let noise = match c.noise_c {
            super::DistSpec::Normal { mean, variance } => format!("N({mean}, {variance})"),
            super::DistSpec::Uniform { low, high } => format!("U({low}, {high})"),
            super::DistSpec::Constant { value } => format!("constant {value}"),
        };
        let mut out = String::new();
        writeln!(out, "Scenario {}", c.name).unwrap();
        writeln!(
            out,
            "n = {} ({}), rho = {}, center noise {}, reps {} ok / {} failed",
            c.lattice.n(),
            c.lattice.label(),
            c.rho_true,
            noise,
            self.reps.len(),
            self.n_failed()
        )
        .unwrap();
        write!(out, "{:<6}", "Model").unwrap();
        for m in METRICS {
            write!(out, "{:>22}", m).unwrap();
        }
        out.push('\n');
        for model in ModelKind::ALL {
            write!(out, "{:<6}", model.name()).unwrap();
            for m in METRICS {
                let s = self.get(model, m);
                write!(out, "{:>22}", format!("{:.4} ({:.4})", s.mean, s.sd)).unwrap();
            }
            out.push('\n');
        }
        for (rep, e) in &self.failures {
            writeln!(out, "failed rep {rep}: {e}").unwrap();
        }
        out
    }
}
