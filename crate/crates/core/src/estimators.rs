//! ICSM, ICM and ISM estimation.
//!
//! Centers follow the spatial lag model `A yc = X bc + ec` with
//! `A = I - rho W`, radii follow `yr = X br + er`, and `X = [1, xc, xr]`.
//! For a fixed `rho` the coefficients solve
//! `min ||Y - Z b||^2  s.t.  G b <= h` with
//!
//! ```text
//! Z = [X 0; 0 X]      Y = [A yc; yr]
//! G = [-A^-1 X  -X]   h = [yr - yc]
//!     [ A^-1 X  -X]       [yc + yr]
//!     [   0     -X]       [   0   ]
//! ```
//!
//! The three blocks of rows keep the fitted interval overlapping the observed
//! one from each side and keep the fitted radius nonnegative. `rho` is chosen
//! by grid search.

use crate::interval::{CenterRange, IntervalSample};
use crate::linalg::{LinalgError, SpatialFilter};
use crate::qp::{self, QpError, QpProblem, QpSolution};
use crate::weights::WeightMatrix;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimationError {
    #[error("SingularA: I - rho W is singular at rho = {rho}")]
    SingularA { rho: f64 },
    #[error("NoFeasibleGridPoint: every grid point was skipped")]
    NoFeasibleGridPoint,
    #[error("NotRowNormalized: the weight matrix must be row-normalized")]
    NotRowNormalized,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("InvalidGrid: {0}")]
    InvalidGrid(String),
    #[error("EmptySample: no observations")]
    EmptySample,
    #[error("{0}")]
    Qp(#[from] QpError),
}

impl From<LinalgError> for EstimationError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular { rho, .. } => EstimationError::SingularA { rho },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "ICSM")]
    Icsm,
    #[serde(rename = "ICM")]
    Icm,
    #[serde(rename = "ISM")]
    Ism,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Icsm, ModelKind::Icm, ModelKind::Ism];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Icsm => "ICSM",
            ModelKind::Icm => "ICM",
            ModelKind::Ism => "ISM",
        }
    }

    pub fn is_constrained(self) -> bool {
        !matches!(self, ModelKind::Ism)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Candidate values of `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RhoGrid {
    Range { min: f64, max: f64, step: f64 },
    Points { points: Vec<f64> },
}

impl Default for RhoGrid {
    fn default() -> Self {
        RhoGrid::Range {
            min: -1.0,
            max: 1.0,
            step: 0.01,
        }
    }
}

impl RhoGrid {
    pub fn single(rho: f64) -> Self {
        RhoGrid::Points { points: vec![rho] }
    }

    /// Expands the grid. When `1/step` is an integer `s`, points are computed
    /// as `k / s` so that values such as 0.3 come out exactly.
    pub fn points(&self) -> Result<Vec<f64>, EstimationError> {
        let bad = |m: String| Err(EstimationError::InvalidGrid(m));
        match self {
            RhoGrid::Points { points } => {
                if points.is_empty() {
                    return bad("no grid points".into());
                }
                if points.iter().any(|r| !r.is_finite()) {
                    return bad("grid points must be finite".into());
                }
                Ok(points.clone())
            }
            &RhoGrid::Range { min, max, step } => {
                if !(min.is_finite() && max.is_finite() && step.is_finite()) || step <= 0.0 || min > max {
                    return bad(format!("invalid range min={min} max={max} step={step}"));
                }
                let count = ((max - min) / step + 1e-9).floor() as usize + 1;
                if count > 1_000_000 {
                    return bad(format!("{count} grid points is too many"));
                }
                let s = 1.0 / step;
                let near_int = |v: f64| (v - v.round()).abs() <= 1e-9 * v.abs().max(1.0);
                if near_int(s) && near_int(min * s) {
                    let (s, k0) = (s.round(), (min * s).round());
                    Ok((0..count).map(|i| (k0 + i as f64) / s).collect())
                } else {
                    Ok((0..count).map(|i| min + i as f64 * step).collect())
                }
            }
        }
    }
}

/// One evaluated grid point. `objective` is `None` when the point was skipped
/// because `I - rho W` is singular.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub rho: f64,
    pub objective: Option<f64>,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub rho: f64,
    /// Intercept, `xc` and `xr` coefficients of the center equation.
    pub beta_c: [f64; 3],
    /// Intercept, `xc` and `xr` coefficients of the radius equation.
    pub beta_r: [f64; 3],
    /// `||Y - Z b||^2` at the chosen `rho`.
    pub objective: f64,
    /// Mean of squared `residuals_c`.
    pub sigma2_c: f64,
    pub sigma2_r: f64,
    /// `A yc - X bc`
    pub residuals_c: Vec<f64>,
    /// `yr - X br`
    pub residuals_r: Vec<f64>,
    pub grid_profile: Vec<GridPoint>,
}

/// The blocks of the constrained problem at one `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignBlocks {
    pub rho: f64,
    pub a: DMatrix<f64>,
    pub ainv: DMatrix<f64>,
    pub x: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub y: DVector<f64>,
    pub g: DMatrix<f64>,
    pub h: DVector<f64>,
}

impl DesignBlocks {
    pub fn problem(&self) -> QpProblem {
        QpProblem::new(self.z.clone(), self.y.clone(), self.g.clone(), self.h.clone()).expect("blocks are consistent")
    }
}

/// `[1, xc, xr]`
pub fn design_matrix(xc: &[f64], xr: &[f64]) -> DMatrix<f64> {
    let n = xc.len();
    DMatrix::from_fn(n, 3, |i, j| match j {
        0 => 1.0,
        1 => xc[i],
        _ => xr[i],
    })
}

fn block_diag(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, k) = x.shape();
    let mut z = DMatrix::zeros(2 * n, 2 * k);
    z.view_mut((0, 0), (n, k)).copy_from(x);
    z.view_mut((n, k), (n, k)).copy_from(x);
    z
}

fn constraint_blocks(x: &DMatrix<f64>, ainv_x: &DMatrix<f64>, yc: &[f64], yr: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let (n, k) = x.shape();
    let mut g = DMatrix::zeros(3 * n, 2 * k);
    g.view_mut((0, 0), (n, k)).copy_from(&-ainv_x);
    g.view_mut((0, k), (n, k)).copy_from(&-x);
    g.view_mut((n, 0), (n, k)).copy_from(ainv_x);
    g.view_mut((n, k), (n, k)).copy_from(&-x);
    g.view_mut((2 * n, k), (n, k)).copy_from(&-x);
    let mut h = DVector::zeros(3 * n);
    for i in 0..n {
        h[i] = yr[i] - yc[i];
        h[n + i] = yc[i] + yr[i];
    }
    (g, h)
}

fn stacked_response(a_yc: &[f64], yr: &[f64]) -> DVector<f64> {
    DVector::from_iterator(a_yc.len() + yr.len(), a_yc.iter().chain(yr).copied())
}

fn check_shapes(sample: &IntervalSample, w: &WeightMatrix) -> Result<(), EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    if w.n() != sample.len() {
        return Err(EstimationError::ShapeMismatch(format!(
            "weights have n = {} but the sample has {} units",
            w.n(),
            sample.len()
        )));
    }
    Ok(())
}

/// Builds every block explicitly, including `A^-1`.
pub fn assemble(sample: &IntervalSample, w: &WeightMatrix, rho: f64) -> Result<DesignBlocks, EstimationError> {
    check_shapes(sample, w)?;
    let n = sample.len();
    let x = design_matrix(sample.xc(), sample.xr());
    let a = DMatrix::identity(n, n) - w.to_dense() * rho;
    let (ainv, a_yc) = if rho == 0.0 {
        (DMatrix::identity(n, n), sample.yc().to_vec())
    } else {
        let filter = SpatialFilter::new(w);
        let factor = filter.factor(rho)?;
        (factor.inverse(), filter.apply(rho, sample.yc()))
    };
    let ainv_x = &ainv * &x;
    let (g, h) = constraint_blocks(&x, &ainv_x, sample.yc(), sample.yr());
    Ok(DesignBlocks {
        rho,
        z: block_diag(&x),
        y: stacked_response(&a_yc, sample.yr()),
        a,
        ainv,
        x,
        g,
        h,
    })
}

/// Shared per-sample data for the grid search.
struct Design<'a> {
    sample: &'a IntervalSample,
    x: DMatrix<f64>,
    z: DMatrix<f64>,
    filter: Option<SpatialFilter>,
}

impl<'a> Design<'a> {
    fn new(sample: &'a IntervalSample, w: Option<&WeightMatrix>) -> Self {
        let x = design_matrix(sample.xc(), sample.xr());
        Self {
            sample,
            z: block_diag(&x),
            x,
            filter: w.map(SpatialFilter::new),
        }
    }

    /// `(A^-1 X, A yc)`; the identity path is taken exactly at `rho = 0`.
    fn spatial_terms(&self, rho: f64) -> Result<(DMatrix<f64>, Vec<f64>), EstimationError> {
        let filter = match &self.filter {
            Some(f) if rho != 0.0 => f,
            _ => return Ok((self.x.clone(), self.sample.yc().to_vec())),
        };
        let factor = filter.factor(rho)?;
        Ok((factor.solve_matrix(&self.x), filter.apply(rho, self.sample.yc())))
    }

    fn solve_at(&self, rho: f64, constrained: bool) -> Result<QpSolution, EstimationError> {
        let (ainv_x, a_yc) = self.spatial_terms(rho)?;
        let y = stacked_response(&a_yc, self.sample.yr());
        let problem = if constrained {
            let (g, h) = constraint_blocks(&self.x, &ainv_x, self.sample.yc(), self.sample.yr());
            QpProblem::new(self.z.clone(), y, g, h)?
        } else {
            QpProblem::unconstrained(self.z.clone(), y)?
        };
        Ok(qp::solve(&problem)?)
    }

    fn finish(&self, model: ModelKind, rho: f64, sol: &QpSolution, grid_profile: Vec<GridPoint>) -> FitResult {
        let b = &sol.beta;
        let beta_c = [b[0], b[1], b[2]];
        let beta_r = [b[3], b[4], b[5]];
        let a_yc = match &self.filter {
            Some(f) if rho != 0.0 => f.apply(rho, self.sample.yc()),
            _ => self.sample.yc().to_vec(),
        };
        let xbc = &self.x * DVector::from_column_slice(&beta_c);
        let xbr = &self.x * DVector::from_column_slice(&beta_r);
        let residuals_c: Vec<f64> = a_yc.iter().zip(xbc.iter()).map(|(a, f)| a - f).collect();
        let residuals_r: Vec<f64> = self.sample.yr().iter().zip(xbr.iter()).map(|(a, f)| a - f).collect();
        let mean_sq = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64;
        FitResult {
            model,
            rho,
            beta_c,
            beta_r,
            objective: sol.objective,
            sigma2_c: mean_sq(&residuals_c),
            sigma2_r: mean_sq(&residuals_r),
            residuals_c,
            residuals_r,
            grid_profile,
        }
    }
}

/// Orders grid candidates by objective, then `|rho|`, then `rho`.
fn candidate_order(a: (f64, f64), b: (f64, f64)) -> Ordering {
    a.1.total_cmp(&b.1)
        .then(a.0.abs().total_cmp(&b.0.abs()))
        .then(a.0.total_cmp(&b.0))
}

fn grid_search(
    model: ModelKind,
    sample: &IntervalSample,
    w: &WeightMatrix,
    grid: &RhoGrid,
) -> Result<FitResult, EstimationError> {
    check_shapes(sample, w)?;
    if !w.is_row_normalized() {
        return Err(EstimationError::NotRowNormalized);
    }
    let rhos = grid.points()?;
    let design = Design::new(sample, Some(w));
    let constrained = model.is_constrained();
    let evals: Vec<Result<Option<QpSolution>, EstimationError>> = rhos
        .par_iter()
        .map(|&rho| match design.solve_at(rho, constrained) {
            Ok(sol) => Ok(Some(sol)),
            Err(EstimationError::SingularA { .. }) => Ok(None),
            Err(e) => Err(e),
        })
        .collect();

    let mut profile = Vec::with_capacity(rhos.len());
    let mut best: Option<(usize, f64)> = None;
    let mut sols = Vec::with_capacity(rhos.len());
    for (k, (rho, eval)) in rhos.iter().zip(evals).enumerate() {
        let sol = eval?;
        let objective = sol.as_ref().map(|s| s.objective);
        profile.push(GridPoint {
            rho: *rho,
            objective,
            skipped: sol.is_none(),
        });
        if let Some(obj) = objective {
            let better = match best {
                None => true,
                Some((j, o)) => candidate_order((*rho, obj), (rhos[j], o)) == Ordering::Less,
            };
            if better {
                best = Some((k, obj));
            }
        } else {
            log::debug!("skipping singular grid point rho = {rho}");
        }
        sols.push(sol);
    }
    let (k, _) = best.ok_or(EstimationError::NoFeasibleGridPoint)?;
    let sol = sols[k].as_ref().expect("best point was solved");
    Ok(design.finish(model, rhos[k], sol, profile))
}

/// Constrained spatial model: grid search over `rho`, constrained least
/// squares at each point.
pub fn fit_icsm(sample: &IntervalSample, w: &WeightMatrix, grid: &RhoGrid) -> Result<FitResult, EstimationError> {
    grid_search(ModelKind::Icsm, sample, w, grid)
}

/// Spatial model without the interval constraints.
pub fn fit_ism(sample: &IntervalSample, w: &WeightMatrix, grid: &RhoGrid) -> Result<FitResult, EstimationError> {
    grid_search(ModelKind::Ism, sample, w, grid)
}

/// Constrained model without spatial lag (`rho = 0`).
pub fn fit_icm(sample: &IntervalSample) -> Result<FitResult, EstimationError> {
    if sample.is_empty() {
        return Err(EstimationError::EmptySample);
    }
    let design = Design::new(sample, None);
    let sol = design.solve_at(0.0, true)?;
    let profile = vec![GridPoint {
        rho: 0.0,
        objective: Some(sol.objective),
        skipped: false,
    }];
    Ok(design.finish(ModelKind::Icm, 0.0, &sol, profile))
}

pub fn fit(
    model: ModelKind,
    sample: &IntervalSample,
    w: Option<&WeightMatrix>,
    grid: &RhoGrid,
) -> Result<FitResult, EstimationError> {
    let need_w = || w.ok_or_else(|| EstimationError::ShapeMismatch(format!("{model} requires a weight matrix")));
    match model {
        ModelKind::Icm => fit_icm(sample),
        ModelKind::Icsm => fit_icsm(sample, need_w()?, grid),
        ModelKind::Ism => fit_ism(sample, need_w()?, grid),
    }
}

/// Fitted centers `A^-1 X bc` and radii `X br` on the estimation sample.
/// Radii may be negative for ISM; such entries fail `CenterRange::to_interval`.
pub fn fitted_intervals(
    fit: &FitResult,
    sample: &IntervalSample,
    w: &WeightMatrix,
) -> Result<Vec<CenterRange>, EstimationError> {
    check_shapes(sample, w)?;
    if fit.residuals_c.len() != sample.len() {
        return Err(EstimationError::ShapeMismatch(format!(
            "fit has {} units but the sample has {}",
            fit.residuals_c.len(),
            sample.len()
        )));
    }
    let x = design_matrix(sample.xc(), sample.xr());
    let xbc = &x * DVector::from_column_slice(&fit.beta_c);
    let xbr = &x * DVector::from_column_slice(&fit.beta_r);
    let centers: Vec<f64> = if fit.rho == 0.0 {
        xbc.as_slice().to_vec()
    } else {
        SpatialFilter::new(w).factor(fit.rho)?.solve(xbc.as_slice())
    };
    Ok(centers
        .into_iter()
        .zip(xbr.iter())
        .map(|(c, &r)| CenterRange::new(c, r))
        .collect())
}
