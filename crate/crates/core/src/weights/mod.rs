//! Spatial weight matrices.
//!
//! A [`WeightMatrix`] is an `n x n` sparse nonnegative matrix with a zero
//! diagonal, stored row-wise. Builders cover rook contiguity on a regular
//! lattice, equal-weight district blocks, and thresholded k-nearest-neighbour
//! inverse distance on geographic coordinates.

mod geo;
mod io;
mod moran;

pub use geo::{haversine_km, inverse_distance, select_k_d0, GeoPoint, KdCandidate, KdSelection, EARTH_RADIUS_KM};
pub use io::{read_coords, read_weights, write_coords, write_weights};
pub use moran::{morans_i, morans_i_test, Alternative, MoranResult, DEFAULT_PERMUTATIONS};

use nalgebra::DMatrix;
use thiserror::Error;

/// Tolerance on row sums for a matrix flagged as row-normalized.
pub const ROW_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("ZeroDimension: lattice dimensions must be at least 1")]
    ZeroDimension,
    #[error("DegenerateBlock: districts need at least 2 members, got {0}")]
    DegenerateBlock(usize),
    #[error("DuplicateCoordinates: units {0} and {1} share a location")]
    DuplicateCoordinates(usize, usize),
    #[error("InvalidParameter: {0}")]
    InvalidParameter(String),
    #[error("InvalidEntry: ({i}, {j}) = {w}: {reason}")]
    InvalidEntry {
        i: usize,
        j: usize,
        w: f64,
        reason: &'static str,
    },
    #[error("NotRowNormalized: row {row} sums to {sum}")]
    NotRowNormalized { row: usize, sum: f64 },
    #[error("ConstantVector: variable has zero variance")]
    ConstantVector,
    #[error("EmptyWeights: weights sum to zero")]
    EmptyWeights,
    #[error("LengthMismatch: matrix has {expected} units, vector has {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("Parse: line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Sparse nonnegative spatial weights with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    rows: Vec<Vec<(usize, f64)>>,
    row_normalized: bool,
}

impl WeightMatrix {
    /// Builds a matrix from `(i, j, w)` triplets. Zero weights are dropped,
    /// repeated `(i, j)` pairs are rejected. When `row_normalized` is set
    /// the row sums are checked.
    pub fn from_triplets(
        n: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
        row_normalized: bool,
    ) -> Result<Self, WeightsError> {
        if n == 0 {
            return Err(WeightsError::ZeroDimension);
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, w) in triplets {
            let bad = |reason| WeightsError::InvalidEntry { i, j, w, reason };
            if i >= n || j >= n {
                return Err(bad("index out of range"));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(bad("weights must be finite and nonnegative"));
            }
            if w == 0.0 {
                continue;
            }
            if i == j {
                return Err(bad("diagonal entries must be zero"));
            }
            rows[i].push((j, w));
        }
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_by_key(|&(j, _)| j);
            if let Some(pair) = row.windows(2).find(|p| p[0].0 == p[1].0) {
                return Err(WeightsError::InvalidEntry {
                    i,
                    j: pair[0].0,
                    w: pair[1].1,
                    reason: "duplicate entry",
                });
            }
        }
        let w = Self {
            n,
            rows,
            row_normalized,
        };
        if row_normalized {
            w.check_row_sums()?;
        }
        Ok(w)
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self, WeightsError> {
        if m.nrows() != m.ncols() {
            return Err(WeightsError::InvalidParameter(format!(
                "weight matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let n = m.nrows();
        let trip = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, m[(i, j)]));
        Self::from_triplets(n, trip, false)
    }

    fn check_row_sums(&self) -> Result<(), WeightsError> {
        for (row, sum) in self.row_sums().into_iter().enumerate() {
            if sum != 0.0 && (sum - 1.0).abs() > ROW_SUM_TOL {
                return Err(WeightsError::NotRowNormalized { row, sum });
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_row_normalized(&self) -> bool {
        self.row_normalized
    }

    /// Nonzero entries of row `i`, sorted by column.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map(|k| self.rows[i][k].1)
            .unwrap_or(0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().map(move |&(j, w)| (i, j, w)))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect()
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        self.rows.iter().flatten().map(|e| e.1).sum()
    }

    pub fn neighbor_count(&self, i: usize) -> usize {
        self.rows[i].len()
    }

    /// `W z`
    pub fn mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n, "vector length must match matrix size");
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, w)| w * z[j]).sum())
            .collect()
    }

    /// `W^T z`
    pub fn transpose_mul_vec(&self, z: &[f64]) -> Vec<f64> {
        assert_eq!(z.len(), self.n, "vector length must match matrix size");
        let mut out = vec![0.0; self.n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                out[j] += w * z[i];
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, j, w) in self.triplets() {
            m[(i, j)] = w;
        }
        m
    }

    pub fn transpose(&self) -> Self {
        Self::from_triplets(self.n, self.triplets().map(|(i, j, w)| (j, i, w)), false)
            .expect("transpose of a valid matrix")
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.triplets().all(|(i, j, w)| (self.get(j, i) - w).abs() <= tol)
            && self
                .transpose()
                .triplets()
                .all(|(i, j, w)| (self.get(i, j) - w).abs() <= tol)
    }

    /// Restriction to the units in `idx` (in that order). The result is not
    /// flagged as row-normalized; callers renormalize as needed.
    pub fn submatrix(&self, idx: &[usize]) -> Self {
        let mut pos = vec![usize::MAX; self.n];
        for (new, &old) in idx.iter().enumerate() {
            pos[old] = new;
        }
        let trip = idx.iter().enumerate().flat_map(|(new_i, &old_i)| {
            let pos = &pos;
            self.rows[old_i]
                .iter()
                .filter(move |&&(j, _)| pos[j] != usize::MAX)
                .map(move |&(j, w)| (new_i, pos[j], w))
        });
        Self::from_triplets(idx.len().max(1), trip, false).expect("submatrix of a valid matrix")
    }

    /// Divides each nonzero row by its sum; zero rows (isolated units) stay
    /// zero.
    pub fn row_normalize(&self) -> Self {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let sum: f64 = row.iter().map(|e| e.1).sum();
                if sum > 0.0 {
                    row.iter().map(|&(j, w)| (j, w / sum)).collect()
                } else {
                    Vec::new()
                }
            })
            .collect();
        Self {
            n: self.n,
            rows,
            row_normalized: true,
        }
    }

    /// Largest absolute row sum, the infinity norm.
    pub fn max_row_sum(&self) -> f64 {
        self.row_sums().into_iter().fold(0.0, f64::max)
    }
}

/// Rook contiguity on a `rows x cols` lattice in row-major order, unit
/// weights, not normalized.
pub fn rook(rows: usize, cols: usize) -> Result<WeightMatrix, WeightsError> {
    if rows == 0 || cols == 0 {
        return Err(WeightsError::ZeroDimension);
    }
    let idx = |r: usize, c: usize| r * cols + c;
    let mut trip = Vec::with_capacity(4 * rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let i = idx(r, c);
            if r > 0 {
                trip.push((i, idx(r - 1, c), 1.0));
            }
            if r + 1 < rows {
                trip.push((i, idx(r + 1, c), 1.0));
            }
            if c > 0 {
                trip.push((i, idx(r, c - 1), 1.0));
            }
            if c + 1 < cols {
                trip.push((i, idx(r, c + 1), 1.0));
            }
        }
    }
    WeightMatrix::from_triplets(rows * cols, trip, false)
}

/// `districts` groups of `members` units; every within-district pair gets
/// weight `1 / (members - 1)`, so rows already sum to one.
pub fn block(districts: usize, members: usize) -> Result<WeightMatrix, WeightsError> {
    if districts == 0 || members == 0 {
        return Err(WeightsError::ZeroDimension);
    }
    if members < 2 {
        return Err(WeightsError::DegenerateBlock(members));
    }
    let w = 1.0 / (members - 1) as f64;
    let trip = (0..districts).flat_map(|d| {
        let base = d * members;
        (0..members).flat_map(move |a| {
            (0..members)
                .filter(move |&b| b != a)
                .map(move |b| (base + a, base + b, w))
        })
    });
    let mut m = WeightMatrix::from_triplets(districts * members, trip, false)?;
    m.row_normalized = true;
    Ok(m)
}

/// Convenience wrapper matching the free-function style of the builders.
pub fn row_normalize(w: &WeightMatrix) -> WeightMatrix {
    w.row_normalize()
}
