//! Inequality-constrained least squares, `min ||Y - Z b||^2  s.t.  G b <= h`.
//!
//! Solved with the Goldfarb-Idnani dual active-set method. The objective is
//! taken as `b' H b / 2 - c' b` with `H = 2 Z'Z` and `c = 2 Z'Y`, so the
//! multipliers satisfy `2 Z'(Z b - Y) + G' lambda = 0` directly.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("Infeasible: no point satisfies G b <= h (constraint {constraint} cannot be met)")]
    Infeasible { constraint: usize },
    #[error("RankDeficient: Z'Z is singular (smallest scaled pivot {pivot:e})")]
    RankDeficient { pivot: f64 },
    #[error("MaxIterations: no convergence after {0} iterations")]
    MaxIterations(usize),
    #[error("DimensionMismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QpOptions {
    /// Largest accepted `(G b - h)_i`.
    pub feasibility_tol: f64,
    /// Relative bound on the stationarity residual.
    pub stationarity_tol: f64,
    pub complementarity_tol: f64,
    /// Smallest accepted squared Cholesky pivot of the unit-diagonal Gram matrix.
    pub rank_tol: f64,
    /// Defaults to `100 (p + m)`.
    pub max_iterations: Option<usize>,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self {
            feasibility_tol: 1e-8,
            stationarity_tol: 1e-6,
            complementarity_tol: 1e-6,
            rank_tol: 1e-10,
            max_iterations: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    z: DMatrix<f64>,
    y: DVector<f64>,
    g: DMatrix<f64>,
    h: DVector<f64>,
}

impl QpProblem {
    pub fn new(z: DMatrix<f64>, y: DVector<f64>, g: DMatrix<f64>, h: DVector<f64>) -> Result<Self, QpError> {
        let mismatch = |m: String| Err(QpError::DimensionMismatch(m));
        if z.nrows() != y.len() {
            return mismatch(format!("Z has {} rows but Y has length {}", z.nrows(), y.len()));
        }
        if g.ncols() != z.ncols() {
            return mismatch(format!("G has {} columns but Z has {}", g.ncols(), z.ncols()));
        }
        if g.nrows() != h.len() {
            return mismatch(format!("G has {} rows but h has length {}", g.nrows(), h.len()));
        }
        if z.ncols() == 0 {
            return mismatch("no variables".into());
        }
        Ok(Self { z, y, g, h })
    }

    /// Least squares without constraints.
    pub fn unconstrained(z: DMatrix<f64>, y: DVector<f64>) -> Result<Self, QpError> {
        let p = z.ncols();
        Self::new(z, y, DMatrix::zeros(0, p), DVector::zeros(0))
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn g(&self) -> &DMatrix<f64> {
        &self.g
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn n_vars(&self) -> usize {
        self.z.ncols()
    }

    pub fn n_constraints(&self) -> usize {
        self.g.nrows()
    }

    pub fn objective(&self, beta: &DVector<f64>) -> f64 {
        (&self.y - &self.z * beta).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub beta: DVector<f64>,
    pub objective: f64,
    /// Indices of binding constraints, ascending.
    pub active_set: Vec<usize>,
    /// One entry per constraint, zero off the active set.
    pub multipliers: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `max(0, max_i (G b - h)_i)`
    pub primal: f64,
    /// `||2 Z'(Z b - Y) + G' lambda||_inf`
    pub stationarity: f64,
    /// `1 + ||2 Z'Y||_inf`, the scale applied to the stationarity bound.
    pub stationarity_scale: f64,
    /// `max_i |lambda_i (h - G b)_i|`
    pub complementarity: f64,
    /// `max(0, -min_i lambda_i)`
    pub dual: f64,
}

impl KktReport {
    pub fn satisfied(&self, opts: &QpOptions) -> bool {
        self.primal <= opts.feasibility_tol
            && self.stationarity <= opts.stationarity_tol * self.stationarity_scale
            && self.complementarity <= opts.complementarity_tol
            && self.dual == 0.0
    }
}

pub fn check_kkt(problem: &QpProblem, sol: &QpSolution) -> Result<KktReport, QpError> {
    let (p, m) = (problem.n_vars(), problem.n_constraints());
    if sol.beta.len() != p || sol.multipliers.len() != m {
        return Err(QpError::DimensionMismatch(format!(
            "solution has {} variables and {} multipliers, problem has {p} and {m}",
            sol.beta.len(),
            sol.multipliers.len()
        )));
    }
    let (z, g) = (&problem.z, &problem.g);
    let slack = &problem.h - g * &sol.beta;
    let primal = slack.iter().fold(0.0f64, |a, s| a.max(-s));
    let grad = z.tr_mul(&(z * &sol.beta - &problem.y)) * 2.0 + g.tr_mul(&sol.multipliers);
    let stationarity = grad.amax();
    let stationarity_scale = 1.0 + (z.tr_mul(&problem.y) * 2.0).amax();
    let complementarity = sol
        .multipliers
        .iter()
        .zip(slack.iter())
        .fold(0.0f64, |a, (l, s)| a.max((l * s).abs()));
    let dual = sol.multipliers.iter().fold(0.0f64, |a, l| a.max(-l));
    Ok(KktReport {
        primal,
        stationarity,
        stationarity_scale,
        complementarity,
        dual,
    })
}

/// Fails when the unit-diagonal scaling of `Z'Z` has a squared Cholesky
/// pivot below `tol`.
fn check_rank(gram: &DMatrix<f64>, tol: f64) -> Result<(), QpError> {
    let p = gram.nrows();
    let d: Vec<f64> = (0..p).map(|i| gram[(i, i)]).collect();
    if d.iter().any(|&v| v.is_nan() || v <= 0.0) {
        return Err(QpError::RankDeficient { pivot: 0.0 });
    }
    let mut s = DMatrix::from_fn(p, p, |i, j| gram[(i, j)] / (d[i] * d[j]).sqrt());
    for k in 0..p {
        let piv = s[(k, k)];
        if piv.is_nan() || piv < tol {
            return Err(QpError::RankDeficient { pivot: piv.max(0.0) });
        }
        for i in (k + 1)..p {
            let l = s[(i, k)] / piv;
            for j in (k + 1)..p {
                s[(i, j)] -= l * s[(k, j)];
            }
        }
    }
    Ok(())
}

/// Factors for the current working set: `J = L^-T Q` and upper triangular
/// `R` with `L^-1 N = Q [R; 0]`, where `N` holds the active normals.
struct WorkingFactors {
    j: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl WorkingFactors {
    fn new(linv: &DMatrix<f64>, normals: &[DVector<f64>]) -> Self {
        let p = linv.nrows();
        let q = normals.len();
        // QR of [L^-1 N, I] yields the full orthogonal factor.
        let mut aug = DMatrix::zeros(p, q + p);
        for (k, n) in normals.iter().enumerate() {
            aug.set_column(k, &(linv * n));
        }
        aug.view_mut((0, q), (p, p)).fill_with_identity();
        let qr = aug.qr();
        let qmat = qr.q();
        let r = qr.r().view((0, 0), (q, q)).into_owned();
        Self {
            j: linv.tr_mul(&qmat),
            r,
        }
    }

    /// Returns `(z, r, ||J2' n||^2)`: primal direction, dual direction and
    /// the curvature `z' n`.
    fn directions(&self, n: &DVector<f64>) -> (DVector<f64>, DVector<f64>, f64, f64) {
        let q = self.r.nrows();
        let p = self.j.nrows();
        let d = self.j.tr_mul(n);
        let d1 = d.rows(0, q).into_owned();
        let d2 = d.rows(q, p - q);
        let z = self.j.columns(q, p - q) * d2;
        let r = if q == 0 {
            DVector::zeros(0)
        } else {
            self.r
                .solve_upper_triangular(&d1)
                .expect("working-set R has nonzero diagonal")
        };
        (z, r, d2.norm_squared(), d.norm_squared())
    }
}

pub fn solve(problem: &QpProblem) -> Result<QpSolution, QpError> {
    solve_with(problem, &QpOptions::default())
}

pub fn solve_with(problem: &QpProblem, opts: &QpOptions) -> Result<QpSolution, QpError> {
    let (p, m) = (problem.n_vars(), problem.n_constraints());
    let (z, g, h) = (&problem.z, &problem.g, &problem.h);
    let gram = z.tr_mul(z);
    check_rank(&gram, opts.rank_tol)?;
    let hess = &gram * 2.0;
    let chol = hess.clone().cholesky().ok_or(QpError::RankDeficient { pivot: 0.0 })?;
    let linv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(p, p))
        .expect("Cholesky factor has positive diagonal");
    let c = z.tr_mul(&problem.y) * 2.0;
    let mut beta = chol.solve(&c);

    // normals of the constraints in `n' b >= b0` form
    let normal = |i: usize| -> DVector<f64> { -g.row(i).transpose() };
    let row_norm: Vec<f64> = (0..m).map(|i| g.row(i).norm()).collect();
    let viol_tol = 0.1 * opts.feasibility_tol;
    let max_iter = opts.max_iterations.unwrap_or(100 * (p + m));

    let mut active: Vec<usize> = Vec::new();
    let mut normals: Vec<DVector<f64>> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let mut factors = WorkingFactors::new(&linv, &normals);
    let mut iterations = 0;

    loop {
        // Step 1: most violated constraint, scaled by its normal length.
        let slack = h - g * &beta;
        let mut pick: Option<(usize, f64)> = None;
        for i in 0..m {
            if slack[i] < -viol_tol && row_norm[i] > 0.0 && !active.contains(&i) {
                let score = slack[i] / row_norm[i];
                if pick.is_none_or(|(_, s)| score < s) {
                    pick = Some((i, score));
                }
            }
            if slack[i] < -viol_tol && row_norm[i] == 0.0 {
                return Err(QpError::Infeasible { constraint: i });
            }
        }
        let Some((pc, _)) = pick else {
            break;
        };
        let np = normal(pc);
        let mut u_new = 0.0;

        // Step 2: move along the primal and dual directions until pc binds.
        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::MaxIterations(max_iter));
            }
            let (zdir, r, curv, dnorm) = factors.directions(&np);
            let primal_blocked = curv <= 1e-24 * dnorm;

            let mut t1 = f64::INFINITY;
            let mut drop_k = None;
            for (k, (&uk, &rk)) in u.iter().zip(r.iter()).enumerate() {
                if rk > 0.0 {
                    let t = uk / rk;
                    if t < t1 {
                        t1 = t;
                        drop_k = Some(k);
                    }
                }
            }
            let s_p = h[pc] - (g.row(pc) * &beta)[0];
            let t2 = if primal_blocked {
                f64::INFINITY
            } else {
                (-s_p / curv).max(0.0)
            };
            let t = t1.min(t2);
            if t.is_infinite() {
                return Err(QpError::Infeasible { constraint: pc });
            }

            for (uk, rk) in u.iter_mut().zip(r.iter()) {
                *uk -= t * rk;
            }
            u_new += t;
            if !primal_blocked {
                beta += &zdir * t;
            }

            if t2 <= t1 {
                active.push(pc);
                normals.push(np.clone());
                u.push(u_new);
                factors = WorkingFactors::new(&linv, &normals);
                break;
            }
            let k = drop_k.expect("finite t1 has a blocking constraint");
            active.remove(k);
            normals.remove(k);
            u.remove(k);
            factors = WorkingFactors::new(&linv, &normals);
        }
    }

    let mut multipliers = DVector::zeros(m);
    for (&i, &ui) in active.iter().zip(&u) {
        multipliers[i] = ui.max(0.0);
    }
    let mut order: Vec<usize> = (0..active.len()).collect();
    order.sort_by_key(|&k| active[k]);
    let active_set = order.iter().map(|&k| active[k]).collect();
    Ok(QpSolution {
        objective: problem.objective(&beta),
        beta,
        active_set,
        multipliers,
        iterations,
    })
}
