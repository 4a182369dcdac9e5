//! Factorizations of the spatial filter `A = I - rho W`.
//!
//! `W` is sparse and, once reordered with reverse Cuthill-McKee, banded for
//! every lattice used here. When `|rho| * max_i sum_j |w_ij| <= 1` the filter
//! is row diagonally dominant, so Gaussian elimination without pivoting is
//! stable and preserves the band. Otherwise a dense LU with partial pivoting
//! is used.

use crate::weights::WeightMatrix;
use nalgebra::{DMatrix, DVector};
use std::collections::VecDeque;
use thiserror::Error;

/// Filters whose estimated 1-norm condition number exceeds this are treated
/// as singular.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("SingularA: I - rho W is numerically singular at rho = {rho} (condition estimate {cond:e})")]
    Singular { rho: f64, cond: f64 },
}

/// Sparsity analysis of `W`, reused for every `rho`.
#[derive(Debug, Clone)]
pub struct SpatialFilter {
    n: usize,
    /// `perm[new] = old`
    perm: Vec<usize>,
    /// `inv[old] = new`
    inv: Vec<usize>,
    /// Rows of `W` in permuted numbering.
    rows: Vec<Vec<(usize, f64)>>,
    lower_bw: usize,
    upper_bw: usize,
    max_row_sum: f64,
    /// Column sums of `|W|` (original numbering), for `||A||_1`.
    col_sums: Vec<f64>,
    w: WeightMatrix,
}

impl SpatialFilter {
    pub fn new(w: &WeightMatrix) -> Self {
        let n = w.n();
        let perm = reverse_cuthill_mckee(w);
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut lower_bw = 0;
        let mut upper_bw = 0;
        let rows: Vec<Vec<(usize, f64)>> = perm
            .iter()
            .enumerate()
            .map(|(i, &old)| {
                let mut r: Vec<(usize, f64)> = w.row(old).iter().map(|&(j, v)| (inv[j], v)).collect();
                r.sort_by_key(|e| e.0);
                for &(j, _) in &r {
                    if j < i {
                        lower_bw = lower_bw.max(i - j);
                    } else {
                        upper_bw = upper_bw.max(j - i);
                    }
                }
                r
            })
            .collect();
        let mut col_sums = vec![0.0; n];
        for (_, j, v) in w.triplets() {
            col_sums[j] += v;
        }
        Self {
            n,
            perm,
            inv,
            rows,
            lower_bw,
            upper_bw,
            max_row_sum: w.max_row_sum(),
            col_sums,
            w: w.clone(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> (usize, usize) {
        (self.lower_bw, self.upper_bw)
    }

    pub fn weights(&self) -> &WeightMatrix {
        &self.w
    }

    /// `(I - rho W) x`
    pub fn apply(&self, rho: f64, x: &[f64]) -> Vec<f64> {
        let wx = self.w.mul_vec(x);
        x.iter().zip(wx).map(|(xi, wxi)| xi - rho * wxi).collect()
    }

    /// `||I - rho W||_1`
    fn norm1(&self, rho: f64) -> f64 {
        self.col_sums.iter().map(|s| 1.0 + rho.abs() * s).fold(0.0, f64::max)
    }

    /// Factorizes `I - rho W` and rejects it when the condition estimate
    /// exceeds [`MAX_CONDITION`].
    pub fn factor(&self, rho: f64) -> Result<FilterFactor<'_>, LinalgError> {
        let kind = if rho.abs() * self.max_row_sum <= 1.0 {
            self.band_lu(rho)
        } else {
            self.dense_lu(rho)
        };
        let singular = |cond| LinalgError::Singular { rho, cond };
        let kind = kind.ok_or_else(|| singular(f64::INFINITY))?;
        let factor = FilterFactor {
            filter: self,
            rho,
            kind,
        };
        let cond = factor.condition_estimate();
        if cond.is_nan() || cond > MAX_CONDITION {
            return Err(singular(cond));
        }
        Ok(factor)
    }

    fn band_lu(&self, rho: f64) -> Option<FactorKind> {
        let n = self.n;
        let (kl, ku) = (self.lower_bw, self.upper_bw);
        let width = kl + ku + 1;
        let mut band = vec![0.0; n * width];
        let at = |i: usize, j: usize| i * width + (j + kl - i);
        for (i, row) in self.rows.iter().enumerate() {
            band[at(i, i)] = 1.0;
            for &(j, v) in row {
                band[at(i, j)] -= rho * v;
            }
        }
        for k in 0..n {
            let pivot = band[at(k, k)];
            if pivot.is_nan() || pivot.abs() <= f64::EPSILON {
                return None;
            }
            let jmax = (k + ku).min(n - 1);
            for i in (k + 1)..=(k + kl).min(n - 1) {
                let l = band[at(i, k)];
                if l == 0.0 {
                    continue;
                }
                let l = l / pivot;
                band[at(i, k)] = l;
                for j in (k + 1)..=jmax {
                    band[at(i, j)] -= l * band[at(k, j)];
                }
            }
        }
        Some(FactorKind::Band { band, kl, ku })
    }

    fn dense_lu(&self, rho: f64) -> Option<FactorKind> {
        let a = DMatrix::identity(self.n, self.n) - self.w.to_dense() * rho;
        let lu_t = a.transpose().lu();
        let lu = a.lu();
        let u = lu.u();
        let diag = u.diagonal();
        let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
        if min.is_nan() || min <= f64::EPSILON * max {
            return None;
        }
        Some(FactorKind::Dense(Box::new((lu, lu_t))))
    }
}

type DenseLu = nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>;

enum FactorKind {
    Band {
        band: Vec<f64>,
        kl: usize,
        ku: usize,
    },
    /// Factors of `A` and `A^T`.
    Dense(Box<(DenseLu, DenseLu)>),
}

/// LU factors of `I - rho W` for one value of `rho`.
pub struct FilterFactor<'a> {
    filter: &'a SpatialFilter,
    rho: f64,
    kind: FactorKind,
}

impl FilterFactor<'_> {
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Solves `(I - rho W) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.solve_impl(b, false)
    }

    /// Solves `(I - rho W)^T x = b`.
    pub fn solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        self.solve_impl(b, true)
    }

    fn solve_impl(&self, b: &[f64], transpose: bool) -> Vec<f64> {
        let f = self.filter;
        assert_eq!(b.len(), f.n, "right-hand side length must match filter size");
        match &self.kind {
            FactorKind::Dense(lus) => {
                let rhs = DVector::from_column_slice(b);
                let lu = if transpose { &lus.1 } else { &lus.0 };
                let x = lu.solve(&rhs);
                x.expect("factor checked nonsingular").as_slice().to_vec()
            }
            FactorKind::Band { band, kl, ku } => {
                let (n, kl, ku) = (f.n, *kl, *ku);
                let width = kl + ku + 1;
                let at = |i: usize, j: usize| i * width + (j + kl - i);
                let mut x: Vec<f64> = f.perm.iter().map(|&old| b[old]).collect();
                if !transpose {
                    // L y = b, unit lower
                    for i in 0..n {
                        let mut s = x[i];
                        for j in i.saturating_sub(kl)..i {
                            s -= band[at(i, j)] * x[j];
                        }
                        x[i] = s;
                    }
                    // U x = y
                    for i in (0..n).rev() {
                        let mut s = x[i];
                        for j in (i + 1)..=(i + ku).min(n - 1) {
                            s -= band[at(i, j)] * x[j];
                        }
                        x[i] = s / band[at(i, i)];
                    }
                } else {
                    // U^T y = b, lower triangular
                    for i in 0..n {
                        let mut s = x[i];
                        for j in i.saturating_sub(ku)..i {
                            s -= band[at(j, i)] * x[j];
                        }
                        x[i] = s / band[at(i, i)];
                    }
                    // L^T x = y, unit upper
                    for i in (0..n).rev() {
                        let mut s = x[i];
                        for j in (i + 1)..=(i + kl).min(n - 1) {
                            s -= band[at(j, i)] * x[j];
                        }
                        x[i] = s;
                    }
                }
                (0..n).map(|old| x[f.inv[old]]).collect()
            }
        }
    }

    /// Solves for each column of `b`.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for (j, col) in b.column_iter().enumerate() {
            let x = self.solve(col.as_slice());
            out.set_column(j, &DVector::from_vec(x));
        }
        out
    }

    /// Explicit inverse, one solve per unit vector.
    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_matrix(&DMatrix::identity(self.filter.n, self.filter.n))
    }

    /// Hager-Higham estimate of `||A||_1 ||A^-1||_1`.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.filter.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0f64;
        for iter in 0..5 {
            let y = self.solve(&x);
            let y_norm: f64 = y.iter().map(|v| v.abs()).sum();
            if !y_norm.is_finite() {
                return f64::INFINITY;
            }
            if iter > 0 && y_norm <= est {
                break;
            }
            est = y_norm;
            let sign: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transpose(&sign);
            let (jmax, zmax) = z.iter().enumerate().fold(
                (0, 0.0f64),
                |acc, (j, v)| {
                    if v.abs() > acc.1 {
                        (j, v.abs())
                    } else {
                        acc
                    }
                },
            );
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        // Higham's alternating-sign safeguard
        if n > 1 {
            let b: Vec<f64> = (0..n)
                .map(|i| {
                    let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                    s * (1.0 + i as f64 / (n - 1) as f64)
                })
                .collect();
            let y = self.solve(&b);
            let alt = 2.0 * y.iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
            est = est.max(alt);
        }
        est * self.filter.norm1(self.rho)
    }
}

/// Reverse Cuthill-McKee ordering of the symmetrized pattern of `W`.
/// Returns `perm` with `perm[new] = old`.
fn reverse_cuthill_mckee(w: &WeightMatrix) -> Vec<usize> {
    let n = w.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, j, _) in w.triplets() {
        adj[i].push(j);
        adj[j].push(i);
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}
