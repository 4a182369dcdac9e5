//! Monte Carlo study of the three estimators.
//!
//! Each replication draws covariates, coefficients and noise, builds the
//! interval responses through the reduced form, splits the units at random,
//! fits ICSM, ICM and ISM on the training units and scores the predicted test
//! intervals. Every random quantity comes from its own ChaCha stream keyed by
//! `(seed, rep, purpose, counter)`, so results do not depend on how
//! replications are scheduled.

mod report;

pub use report::{ExperimentReport, MetricSummary, ModelRecord, RepRecord, METRICS};

use crate::estimators::{design_matrix, fit_icm, fit_icsm, fit_ism, fitted_intervals, FitResult, ModelKind, RhoGrid};
use crate::interval::{interval_metrics, IntervalError, IntervalSample};
use crate::linalg::SpatialFilter;
use crate::predictor::{predict_intervals, Method, SamplePartition};
use crate::weights::{block, rook, WeightMatrix, WeightsError};
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_REPS: usize = 75;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.9;
pub const MAX_REDRAWS: u32 = 1000;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("TooManyRejections: radius noise redrawn {0} times without all radii positive")]
    TooManyRejections(u32),
    #[error(transparent)]
    Weights(#[from] WeightsError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

/// A scalar distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "lowercase")]
pub enum DistSpec {
    Normal { mean: f64, variance: f64 },
    Uniform { low: f64, high: f64 },
    Constant { value: f64 },
}

impl DistSpec {
    fn validate(&self, what: &str) -> Result<(), SimulationError> {
        let ok = match *self {
            DistSpec::Normal { mean, variance } => mean.is_finite() && variance.is_finite() && variance >= 0.0,
            DistSpec::Uniform { low, high } => low.is_finite() && high.is_finite() && low < high,
            DistSpec::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(SimulationError::InvalidConfig(format!(
                "invalid distribution for {what}: {self:?}"
            )))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DistSpec::Normal { mean, variance } => Normal::new(mean, variance.sqrt())
                .expect("validated parameters")
                .sample(rng),
            DistSpec::Uniform { low, high } => rng.random_range(low..high),
            DistSpec::Constant { value } => value,
        }
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.sample(rng)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LatticeSpec {
    Rook { rows: usize, cols: usize },
    Block { districts: usize, members: usize },
}

impl LatticeSpec {
    pub fn n(&self) -> usize {
        match *self {
            LatticeSpec::Rook { rows, cols } => rows * cols,
            LatticeSpec::Block { districts, members } => districts * members,
        }
    }

    /// Row-normalized weights over all units.
    pub fn weights(&self) -> Result<WeightMatrix, WeightsError> {
        match *self {
            LatticeSpec::Rook { rows, cols } => Ok(rook(rows, cols)?.row_normalize()),
            LatticeSpec::Block { districts, members } => block(districts, members),
        }
    }

    pub fn label(&self) -> String {
        match *self {
            LatticeSpec::Rook { rows, cols } => format!("rook {rows}x{cols}"),
            LatticeSpec::Block { districts, members } => format!("block {districts}x{members}"),
        }
    }
}

/// Coefficient distributions, drawn once per replication.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaSpec {
    pub c0: DistSpec,
    pub c1: DistSpec,
    pub c2: DistSpec,
    pub r0: DistSpec,
    pub r1: DistSpec,
    pub r2: DistSpec,
}

impl Default for BetaSpec {
    fn default() -> Self {
        Self {
            c0: DistSpec::Constant { value: 0.0 },
            c1: DistSpec::Uniform { low: -2.5, high: -2.0 },
            c2: DistSpec::Constant { value: 1.0 },
            r0: DistSpec::Constant { value: 0.0 },
            r1: DistSpec::Constant { value: 0.1 },
            r2: DistSpec::Uniform { low: 2.5, high: 5.0 },
        }
    }
}

fn default_noise_c() -> DistSpec {
    DistSpec::Normal {
        mean: 0.0,
        variance: 11.0,
    }
}
fn default_noise_r() -> DistSpec {
    DistSpec::Normal {
        mean: 0.0,
        variance: 5.0,
    }
}
fn default_x_c() -> DistSpec {
    DistSpec::Uniform { low: 0.0, high: 150.0 }
}
fn default_x_r() -> DistSpec {
    DistSpec::Uniform { low: 5.0, high: 8.0 }
}
fn default_reps() -> usize {
    DEFAULT_REPS
}
fn default_train_fraction() -> f64 {
    DEFAULT_TRAIN_FRACTION
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub lattice: LatticeSpec,
    pub rho_true: f64,
    #[serde(default = "default_noise_c")]
    pub noise_c: DistSpec,
    #[serde(default = "default_noise_r")]
    pub noise_r: DistSpec,
    #[serde(default = "default_x_c")]
    pub x_c_dist: DistSpec,
    #[serde(default = "default_x_r")]
    pub x_r_dist: DistSpec,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub grid: RhoGrid,
}

impl ScenarioConfig {
    /// Study defaults for the given lattice, spatial parameter and center
    /// noise variance.
    pub fn new(lattice: LatticeSpec, rho_true: f64, noise_variance: f64) -> Self {
        let mut cfg = Self {
            name: String::new(),
            lattice,
            rho_true,
            noise_c: DistSpec::Normal {
                mean: 0.0,
                variance: noise_variance,
            },
            noise_r: default_noise_r(),
            x_c_dist: default_x_c(),
            x_r_dist: default_x_r(),
            beta: BetaSpec::default(),
            n_reps: DEFAULT_REPS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            seed: DEFAULT_SEED,
            grid: RhoGrid::default(),
        };
        cfg.name = cfg.default_name();
        cfg
    }

    pub fn default_name(&self) -> String {
        let lattice = match self.lattice {
            LatticeSpec::Rook { rows, cols } => format!("rook_{rows}x{cols}"),
            LatticeSpec::Block { districts, members } => format!("block_{districts}x{members}"),
        };
        let noise = match self.noise_c {
            DistSpec::Normal { variance, .. } => format!("N{variance}"),
            DistSpec::Uniform { low, high } => format!("U{low}-{high}"),
            DistSpec::Constant { value } => format!("C{value}"),
        };
        format!("{lattice}_rho{}_{noise}", self.rho_true)
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        let n = self.lattice.n();
        if n < 4 {
            return bad(format!("lattice has only {n} units"));
        }
        if let LatticeSpec::Block { members, .. } = self.lattice {
            if members < 2 {
                return bad("block districts need at least 2 members".into());
            }
        }
        if !(self.rho_true.is_finite() && self.rho_true.abs() < 1.0) {
            return bad(format!("rho_true must lie in (-1, 1), got {}", self.rho_true));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            ));
        }
        if self.n_reps == 0 {
            return bad("n_reps must be positive".into());
        }
        self.noise_c.validate("noise_c")?;
        self.noise_r.validate("noise_r")?;
        self.x_c_dist.validate("x_c_dist")?;
        self.x_r_dist.validate("x_r_dist")?;
        for (name, d) in [
            ("beta.c0", self.beta.c0),
            ("beta.c1", self.beta.c1),
            ("beta.c2", self.beta.c2),
            ("beta.r0", self.beta.r0),
            ("beta.r1", self.beta.r1),
            ("beta.r2", self.beta.r2),
        ] {
            d.validate(name)?;
        }
        self.grid
            .points()
            .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        let n = self.lattice.n();
        ((self.train_fraction * n as f64).round() as usize).clamp(1, n - 1)
    }
}

/// The 36 scenarios: three sizes of each lattice type, three values of
/// `rho`, two noise variances.
pub fn paper_scenario_matrix() -> Vec<ScenarioConfig> {
    let lattices = [
        LatticeSpec::Rook { rows: 10, cols: 12 },
        LatticeSpec::Rook { rows: 12, cols: 20 },
        LatticeSpec::Rook { rows: 20, cols: 25 },
        LatticeSpec::Block {
            districts: 20,
            members: 6,
        },
        LatticeSpec::Block {
            districts: 20,
            members: 12,
        },
        LatticeSpec::Block {
            districts: 25,
            members: 20,
        },
    ];
    let mut out = Vec::with_capacity(36);
    for lattice in lattices {
        for rho in [0.0, 0.4, 0.8] {
            for variance in [11.0, 18.0] {
                let mut cfg = ScenarioConfig::new(lattice, rho, variance);
                cfg.seed = DEFAULT_SEED.wrapping_add(out.len() as u64);
                out.push(cfg);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
#[repr(u64)]
enum Purpose {
    Covariates = 1,
    Coefficients = 2,
    NoiseC = 3,
    NoiseR = 4,
    Split = 5,
}

fn stream(seed: u64, rep: usize, purpose: Purpose, counter: u32) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&(rep as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(purpose as u64).to_le_bytes());
    key[24..28].copy_from_slice(&counter.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueParams {
    pub rho: f64,
    pub beta_c: [f64; 3],
    pub beta_r: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub sample: IntervalSample,
    pub w: WeightMatrix,
    pub truth: TrueParams,
    /// Number of rejected radius-noise draws.
    pub redraws: u32,
}

/// Draws replication `rep`. Only the radius noise is redrawn when some
/// radius comes out nonpositive.
pub fn generate(config: &ScenarioConfig, rep: usize) -> Result<GeneratedData, SimulationError> {
    config.validate()?;
    let w = config.lattice.weights()?;
    let n = w.n();
    let seed = config.seed;

    let mut rng = stream(seed, rep, Purpose::Covariates, 0);
    let xc = config.x_c_dist.sample_n(&mut rng, n);
    let xr = config.x_r_dist.sample_n(&mut rng, n);
    let mut rng = stream(seed, rep, Purpose::Coefficients, 0);
    let b = &config.beta;
    let beta_c = [b.c0.sample(&mut rng), b.c1.sample(&mut rng), b.c2.sample(&mut rng)];
    let beta_r = [b.r0.sample(&mut rng), b.r1.sample(&mut rng), b.r2.sample(&mut rng)];

    let x = design_matrix(&xc, &xr);
    let mut rng = stream(seed, rep, Purpose::NoiseC, 0);
    let mut mu = &x * DVector::from_column_slice(&beta_c);
    for v in mu.iter_mut() {
        *v += config.noise_c.sample(&mut rng);
    }
    let yc = if config.rho_true == 0.0 {
        mu.as_slice().to_vec()
    } else {
        let filter = SpatialFilter::new(&w);
        filter
            .factor(config.rho_true)
            .map_err(|e| SimulationError::InvalidConfig(e.to_string()))?
            .solve(mu.as_slice())
    };

    let xbr = &x * DVector::from_column_slice(&beta_r);
    let mut redraws = 0;
    let yr = loop {
        let mut rng = stream(seed, rep, Purpose::NoiseR, redraws);
        let yr: Vec<f64> = xbr.iter().map(|m| m + config.noise_r.sample(&mut rng)).collect();
        if yr.iter().all(|&r| r > 0.0) {
            break yr;
        }
        redraws += 1;
        if redraws > MAX_REDRAWS {
            return Err(SimulationError::TooManyRejections(redraws - 1));
        }
    };
    let sample = IntervalSample::from_center_range(&yc, &yr, &xc, &xr)?;
    Ok(GeneratedData {
        sample,
        w,
        truth: TrueParams {
            rho: config.rho_true,
            beta_c,
            beta_r,
        },
        redraws,
    })
}

/// Random split into sorted training and test index sets.
pub fn split(config: &ScenarioConfig, rep: usize) -> (Vec<usize>, Vec<usize>) {
    let n = config.lattice.n();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(config.seed, rep, Purpose::Split, 0));
    let (train, test) = idx.split_at(config.n_train());
    let (mut train, mut test) = (train.to_vec(), test.to_vec());
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Smallest overlap between fitted and observed training intervals and
/// smallest fitted radius.
fn training_fit_margins(fit: &FitResult, sample: &IntervalSample, w: &WeightMatrix) -> Result<(f64, f64), String> {
    let fitted = fitted_intervals(fit, sample, w).map_err(|e| e.to_string())?;
    let mut min_overlap = f64::INFINITY;
    let mut min_radius = f64::INFINITY;
    for (f, y) in fitted.iter().zip(sample.y()) {
        min_radius = min_radius.min(f.radius);
        let overlap = (f.center + f.radius).min(y.upper()) - (f.center - f.radius).max(y.lower());
        min_overlap = min_overlap.min(overlap);
    }
    Ok((min_overlap, min_radius))
}

/// One full replication. Errors are reported as strings so that a failed
/// replication can be recorded and skipped.
pub fn run_rep(config: &ScenarioConfig, rep: usize) -> Result<RepRecord, String> {
    let data = generate(config, rep).map_err(|e| e.to_string())?;
    let (train, test) = split(config, rep);
    let train_sample = data.sample.subset(&train);
    let w_train = data.w.submatrix(&train).row_normalize();
    let part = SamplePartition::new(train.clone(), test.clone(), data.w.clone()).map_err(|e| e.to_string())?;
    let truth: Vec<_> = test.iter().map(|&i| data.sample.y()[i]).collect();

    let mut models = Vec::with_capacity(3);
    for model in ModelKind::ALL {
        let fit = match model {
            ModelKind::Icsm => fit_icsm(&train_sample, &w_train, &config.grid),
            ModelKind::Icm => fit_icm(&train_sample),
            ModelKind::Ism => fit_ism(&train_sample, &w_train, &config.grid),
        }
        .map_err(|e| format!("{model}: {e}"))?;
        let method = if model == ModelKind::Icm {
            Method::Tc
        } else {
            Method::Bp
        };
        let pred = predict_intervals(&fit, &part, &data.sample, method).map_err(|e| format!("{model}: {e}"))?;
        let m = interval_metrics(&truth, &pred.intervals).map_err(|e| format!("{model}: {e}"))?;
        let (min_overlap, min_radius) = training_fit_margins(&fit, &train_sample, &w_train)?;
        models.push(ModelRecord {
            model,
            rho: fit.rho,
            rmse_l: m.rmse_l,
            rmse_u: m.rmse_u,
            ar: m.ar,
            n_d: m.n_d,
            n_clamped: pred.clamped.iter().filter(|&&c| c).count(),
            min_train_overlap: min_overlap,
            min_train_radius: min_radius,
        });
    }
    Ok(RepRecord {
        rep,
        redraws: data.redraws,
        models,
    })
}

/// Runs all replications in parallel and aggregates them in replication
/// order.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ExperimentReport, SimulationError> {
    config.validate()?;
    let outcomes: Vec<Result<RepRecord, String>> = (0..config.n_reps)
        .into_par_iter()
        .map(|rep| run_rep(config, rep))
        .collect();
    let mut reps = Vec::new();
    let mut failures = Vec::new();
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => reps.push(r),
            Err(e) => {
                log::warn!("scenario {} rep {rep} failed: {e}", config.name);
                failures.push((rep, e));
            }
        }
    }
    Ok(ExperimentReport::new(config.clone(), reps, failures))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(lattice: LatticeSpec, rho: f64) -> ScenarioConfig {
        let mut c = ScenarioConfig::new(lattice, rho, 11.0);
        c.n_reps = 4;
        c
    }

    #[test]
    fn matrix_shape() {
        let m = paper_scenario_matrix();
        assert_eq!(m.len(), 36);
        assert_eq!(m[0].lattice.n(), 120);
        for c in &m {
            c.validate().unwrap();
            if let LatticeSpec::Block { members, .. } = c.lattice {
                assert!(members >= 6);
            }
        }
        let sizes: std::collections::BTreeSet<usize> = m.iter().map(|c| c.lattice.n()).collect();
        assert_eq!(sizes.into_iter().collect::<Vec<_>>(), vec![120, 240, 500]);
        let names: std::collections::BTreeSet<&str> = m.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names.len(), 36);
    }

    #[test]
    fn rho_zero_is_plain_regression() {
        let mut c = small(LatticeSpec::Rook { rows: 4, cols: 5 }, 0.0);
        c.noise_c = DistSpec::Constant { value: 0.0 };
        let d = generate(&c, 0).unwrap();
        let s = &d.sample;
        for i in 0..s.len() {
            let expected = d.truth.beta_c[0] + d.truth.beta_c[1] * s.xc()[i] + d.truth.beta_c[2] * s.xr()[i];
            assert_eq!(s.yc()[i], expected);
        }
    }

    #[test]
    fn generation_deterministic_and_valid() {
        let c = small(
            LatticeSpec::Block {
                districts: 5,
                members: 6,
            },
            0.4,
        );
        let a = generate(&c, 3).unwrap();
        let b = generate(&c, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.sample, generate(&c, 4).unwrap().sample);
        assert!(a.sample.yr().iter().all(|&r| r > 0.0));
        assert!((-2.5..-2.0).contains(&a.truth.beta_c[1]));
        assert!((2.5..5.0).contains(&a.truth.beta_r[2]));
        assert!(a.sample.xc().iter().all(|v| (0.0..150.0).contains(v)));
        assert!(a.sample.xr().iter().all(|v| (5.0..8.0).contains(v)));
    }

    #[test]
    fn rejection_redraws_radius_noise() {
        let mut c = small(LatticeSpec::Rook { rows: 3, cols: 3 }, 0.0);
        c.beta.r2 = DistSpec::Constant { value: 0.0 };
        c.beta.r1 = DistSpec::Constant { value: 0.0 };
        c.beta.r0 = DistSpec::Constant { value: 3.0 };
        c.noise_r = DistSpec::Normal {
            mean: 0.0,
            variance: 1.0,
        };
        let d = generate(&c, 0).unwrap();
        assert!(d.sample.yr().iter().all(|&r| r > 0.0));
        c.beta.r0 = DistSpec::Constant { value: -50.0 };
        assert!(matches!(generate(&c, 0), Err(SimulationError::TooManyRejections(_))));
    }

    #[test]
    fn split_sizes() {
        let c = small(LatticeSpec::Rook { rows: 10, cols: 12 }, 0.0);
        let (train, test) = split(&c, 0);
        assert_eq!(train.len(), 108);
        assert_eq!(test.len(), 12);
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..120).collect::<Vec<_>>());
        assert_ne!(split(&c, 0), split(&c, 1));
    }

    #[test]
    fn noiseless_recovery_through_generate() {
        let mut c = small(
            LatticeSpec::Block {
                districts: 10,
                members: 6,
            },
            0.3,
        );
        c.noise_c = DistSpec::Constant { value: 0.0 };
        c.noise_r = DistSpec::Constant { value: 0.0 };
        let d = generate(&c, 0).unwrap();
        let fit = fit_icsm(&d.sample, &d.w, &c.grid).unwrap();
        assert_eq!(fit.rho, 0.3);
        for k in 0..3 {
            assert!((fit.beta_c[k] - d.truth.beta_c[k]).abs() < 1e-6);
            assert!((fit.beta_r[k] - d.truth.beta_r[k]).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = small(LatticeSpec::Rook { rows: 3, cols: 3 }, 1.0);
        assert!(c.validate().is_err());
        c.rho_true = 0.5;
        c.train_fraction = 1.0;
        assert!(c.validate().is_err());
        c.train_fraction = 0.9;
        c.noise_c = DistSpec::Uniform { low: 1.0, high: 1.0 };
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c: ScenarioConfig =
            serde_json::from_str(r#"{"lattice":{"type":"block","districts":20,"members":6},"rho_true":0.8}"#).unwrap();
        assert_eq!(c.n_reps, 75);
        assert_eq!(c.train_fraction, 0.9);
        assert_eq!(
            c.noise_c,
            DistSpec::Normal {
                mean: 0.0,
                variance: 11.0
            }
        );
        assert_eq!(c.grid, RhoGrid::default());
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn scenario_report_is_schedule_independent() {
        let c = small(
            LatticeSpec::Block {
                districts: 6,
                members: 6,
            },
            0.4,
        );
        let a = run_scenario(&c).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_scenario(&c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.reps.len() + a.failures.len(), 4);
    }
}
