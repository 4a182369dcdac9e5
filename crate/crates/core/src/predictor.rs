//! Out-of-sample prediction.
//!
//! TC is the reduced-form mean `(I - rho W)^-1 X bc` on all units. BP
//! conditions on the observed training centers through the precision matrix
//! `Q = A'A / sigma2`:
//!
//! ```text
//! yc_o = TC_o - Q_o^-1 Q_os (yc_s - TC_s)
//! ```
//!
//! Radii are always predicted as `X br`.

use crate::estimators::{design_matrix, EstimationError, FitResult};
use crate::interval::{interval_metrics, Interval, IntervalError, IntervalMetrics, IntervalSample};
use crate::linalg::SpatialFilter;
use crate::weights::WeightMatrix;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PredictionError {
    #[error("SingularQo: the test block of the precision matrix is not positive definite")]
    SingularQo,
    #[error("NonPositiveSigma2: sigma2 = {0} must be positive")]
    NonPositiveSigma2(f64),
    #[error("InvalidPartition: {0}")]
    InvalidPartition(String),
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Interval(#[from] IntervalError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Tc,
    Bp,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Tc => "TC",
            Method::Bp => "BP",
        })
    }
}

/// Training and test units of one sample, plus the weights over all of them.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePartition {
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    w_full: WeightMatrix,
}

impl SamplePartition {
    pub fn new(train_idx: Vec<usize>, test_idx: Vec<usize>, w_full: WeightMatrix) -> Result<Self, PredictionError> {
        let n = w_full.n();
        let mut seen = vec![false; n];
        for &i in train_idx.iter().chain(&test_idx) {
            if i >= n {
                return Err(PredictionError::InvalidPartition(format!(
                    "index {i} out of range for n = {n}"
                )));
            }
            if seen[i] {
                return Err(PredictionError::InvalidPartition(format!("index {i} appears twice")));
            }
            seen[i] = true;
        }
        if train_idx.len() + test_idx.len() != n {
            return Err(PredictionError::InvalidPartition(format!(
                "{} training and {} test units do not cover n = {n}",
                train_idx.len(),
                test_idx.len()
            )));
        }
        if test_idx.is_empty() || train_idx.is_empty() {
            return Err(PredictionError::InvalidPartition("both parts must be nonempty".into()));
        }
        Ok(Self {
            train_idx,
            test_idx,
            w_full,
        })
    }

    pub fn train_idx(&self) -> &[usize] {
        &self.train_idx
    }

    pub fn test_idx(&self) -> &[usize] {
        &self.test_idx
    }

    pub fn w_full(&self) -> &WeightMatrix {
        &self.w_full
    }

    pub fn n(&self) -> usize {
        self.w_full.n()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub method: Method,
    pub test_idx: Vec<usize>,
    pub yc_hat: Vec<f64>,
    /// Unclamped `X br` on the test units.
    pub yr_hat: Vec<f64>,
    /// `[yc - max(yr, 0), yc + max(yr, 0)]`
    pub intervals: Vec<Interval>,
    /// Units whose predicted radius was negative and clamped to zero.
    pub clamped: Vec<bool>,
}

fn check_x(x_all: &DMatrix<f64>, n: usize) -> Result<(), PredictionError> {
    if x_all.nrows() != n || x_all.ncols() != 3 {
        return Err(PredictionError::ShapeMismatch(format!(
            "covariates are {}x{}, expected {n}x3",
            x_all.nrows(),
            x_all.ncols()
        )));
    }
    Ok(())
}

/// Reduced-form centers `(I - rho W)^-1 X bc` for every unit.
pub fn predict_tc(fit: &FitResult, x_all: &DMatrix<f64>, w_full: &WeightMatrix) -> Result<Vec<f64>, PredictionError> {
    check_x(x_all, w_full.n())?;
    let xb = x_all * DVector::from_column_slice(&fit.beta_c);
    if fit.rho == 0.0 {
        return Ok(xb.as_slice().to_vec());
    }
    let filter = SpatialFilter::new(w_full);
    let factor = filter.factor(fit.rho).map_err(EstimationError::from)?;
    Ok(factor.solve(xb.as_slice()))
}

/// `A'A / sigma2` over all units.
pub fn precision_matrix(rho: f64, sigma2: f64, w: &WeightMatrix) -> DMatrix<f64> {
    let n = w.n();
    let a = DMatrix::identity(n, n) - w.to_dense() * rho;
    a.tr_mul(&a) / sigma2
}

/// BP centers on the test units.
pub fn predict_bp(
    fit: &FitResult,
    part: &SamplePartition,
    y_train_c: &[f64],
    x_all: &DMatrix<f64>,
) -> Result<Vec<f64>, PredictionError> {
    if !(fit.sigma2_c > 0.0 && fit.sigma2_c.is_finite()) {
        return Err(PredictionError::NonPositiveSigma2(fit.sigma2_c));
    }
    if y_train_c.len() != part.train_idx.len() {
        return Err(PredictionError::ShapeMismatch(format!(
            "{} training centers for {} training units",
            y_train_c.len(),
            part.train_idx.len()
        )));
    }
    let tc = predict_tc(fit, x_all, &part.w_full)?;
    let tc_o: Vec<f64> = part.test_idx.iter().map(|&i| tc[i]).collect();
    if fit.rho == 0.0 {
        return Ok(tc_o);
    }
    let q = precision_matrix(fit.rho, fit.sigma2_c, &part.w_full);
    let (o, s) = (&part.test_idx, &part.train_idx);
    let q_o = DMatrix::from_fn(o.len(), o.len(), |a, b| q[(o[a], o[b])]);
    let q_os = DMatrix::from_fn(o.len(), s.len(), |a, b| q[(o[a], s[b])]);
    let resid = DVector::from_iterator(s.len(), s.iter().zip(y_train_c).map(|(&i, y)| y - tc[i]));
    let chol = q_o.cholesky().ok_or(PredictionError::SingularQo)?;
    let correction = chol.solve(&(q_os * resid));
    Ok(tc_o.iter().zip(correction.iter()).map(|(t, c)| t - c).collect())
}

/// Predicts test intervals; `sample` covers all units, and only its training
/// rows' responses are used.
pub fn predict_intervals(
    fit: &FitResult,
    part: &SamplePartition,
    sample: &IntervalSample,
    method: Method,
) -> Result<PredictionResult, PredictionError> {
    if sample.len() != part.n() {
        return Err(PredictionError::ShapeMismatch(format!(
            "sample has {} units, partition has {}",
            sample.len(),
            part.n()
        )));
    }
    let x_all = design_matrix(sample.xc(), sample.xr());
    let yc_hat = match method {
        Method::Tc => {
            let tc = predict_tc(fit, &x_all, &part.w_full)?;
            part.test_idx.iter().map(|&i| tc[i]).collect()
        }
        Method::Bp => {
            let y_train: Vec<f64> = part.train_idx.iter().map(|&i| sample.yc()[i]).collect();
            predict_bp(fit, part, &y_train, &x_all)?
        }
    };
    let br = DVector::from_column_slice(&fit.beta_r);
    let yr_hat: Vec<f64> = part.test_idx.iter().map(|&i| (x_all.row(i) * &br)[0]).collect();
    let clamped: Vec<bool> = yr_hat.iter().map(|&r| r < 0.0).collect();
    let intervals = yc_hat
        .iter()
        .zip(&yr_hat)
        .map(|(&c, &r)| {
            let r = r.max(0.0);
            Interval::new(c - r, c + r)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PredictionResult {
        method,
        test_idx: part.test_idx.clone(),
        yc_hat,
        yr_hat,
        intervals,
        clamped,
    })
}

pub fn evaluate(pred: &PredictionResult, truth: &[Interval]) -> Result<IntervalMetrics, PredictionError> {
    Ok(interval_metrics(truth, &pred.intervals)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{fit_icm, fit_icsm, ModelKind, RhoGrid};
    use crate::weights::{block, rook};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn fake_fit(rho: f64, beta_c: [f64; 3], beta_r: [f64; 3], sigma2: f64) -> FitResult {
        FitResult {
            model: ModelKind::Icsm,
            rho,
            beta_c,
            beta_r,
            objective: 0.0,
            sigma2_c: sigma2,
            sigma2_r: 1.0,
            residuals_c: vec![],
            residuals_r: vec![],
            grid_profile: vec![],
        }
    }

    /// Conditional mean computed from the covariance `sigma2 (A'A)^-1`.
    fn covariance_oracle(
        rho: f64,
        sigma2: f64,
        w: &WeightMatrix,
        mu: &[f64],
        obs: &[usize],
        test: &[usize],
        y_obs: &[f64],
    ) -> Vec<f64> {
        let n = w.n();
        let a = DMatrix::identity(n, n) - w.to_dense() * rho;
        let sigma = (a.tr_mul(&a)).try_inverse().unwrap() * sigma2;
        let s_ss = DMatrix::from_fn(obs.len(), obs.len(), |i, j| sigma[(obs[i], obs[j])]);
        let s_os = DMatrix::from_fn(test.len(), obs.len(), |i, j| sigma[(test[i], obs[j])]);
        let dev = DVector::from_iterator(obs.len(), obs.iter().zip(y_obs).map(|(&i, y)| y - mu[i]));
        let corr = s_os * s_ss.try_inverse().unwrap() * dev;
        test.iter().zip(corr.iter()).map(|(&i, c)| mu[i] + c).collect()
    }

    fn random_split(rng: &mut ChaCha8Rng, n: usize, n_test: usize) -> (Vec<usize>, Vec<usize>) {
        let mut idx: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), rng);
        let test = idx[..n_test].to_vec();
        (idx[n_test..].to_vec(), test)
    }

    #[test]
    fn tc_identity_at_zero() {
        let w = rook(2, 2).unwrap().row_normalize();
        let x = design_matrix(&[1.0, 2.0, 3.0, 4.0], &[0.5, 0.5, 1.0, 1.0]);
        let tc = predict_tc(&fake_fit(0.0, [1.0, 2.0, 3.0], [0.0; 3], 1.0), &x, &w).unwrap();
        assert_eq!(tc, vec![4.5, 6.5, 10.0, 12.0]);
    }

    #[test]
    fn tc_two_unit_block() {
        let w = block(1, 2).unwrap();
        let x = design_matrix(&[0.0, 0.0], &[0.0, 0.0]);
        let tc = predict_tc(&fake_fit(0.5, [1.0, 0.0, 0.0], [0.0; 3], 1.0), &x, &w).unwrap();
        assert!((tc[0] - 2.0).abs() < 1e-14 && (tc[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn bp_equals_tc_cases() {
        let w = rook(3, 3).unwrap().row_normalize();
        let xc: Vec<f64> = (0..9).map(|i| i as f64 * 1.5).collect();
        let xr: Vec<f64> = (0..9).map(|i| 1.0 + (i % 3) as f64).collect();
        let x = design_matrix(&xc, &xr);
        let part = SamplePartition::new(vec![0, 1, 2, 4, 5, 6, 8], vec![3, 7], w.clone()).unwrap();
        // rho = 0
        let f0 = fake_fit(0.0, [1.0, -2.0, 1.0], [0.0; 3], 2.0);
        let tc0 = predict_tc(&f0, &x, &w).unwrap();
        let y: Vec<f64> = part.train_idx().iter().map(|&i| tc0[i] + 3.0).collect();
        let bp0 = predict_bp(&f0, &part, &y, &x).unwrap();
        assert_eq!(bp0, vec![tc0[3], tc0[7]]);
        // zero training residuals
        let f = fake_fit(0.6, [1.0, -2.0, 1.0], [0.0; 3], 2.0);
        let tc = predict_tc(&f, &x, &w).unwrap();
        let y: Vec<f64> = part.train_idx().iter().map(|&i| tc[i]).collect();
        let bp = predict_bp(&f, &part, &y, &x).unwrap();
        assert_eq!(bp, vec![tc[3], tc[7]]);
    }

    #[test]
    fn sigma2_must_be_positive() {
        let w = rook(2, 2).unwrap().row_normalize();
        let x = design_matrix(&[1.0; 4], &[1.0; 4]);
        let part = SamplePartition::new(vec![0, 1, 2], vec![3], w).unwrap();
        let f = fake_fit(0.5, [1.0, 0.0, 0.0], [0.0; 3], 0.0);
        assert!(matches!(
            predict_bp(&f, &part, &[1.0, 1.0, 1.0], &x),
            Err(PredictionError::NonPositiveSigma2(_))
        ));
    }

    #[test]
    fn partition_validated() {
        let w = rook(2, 2).unwrap();
        assert!(SamplePartition::new(vec![0, 1], vec![1, 2], w.clone()).is_err());
        assert!(SamplePartition::new(vec![0, 1], vec![2], w.clone()).is_err());
        assert!(SamplePartition::new(vec![0, 1, 2], vec![4], w.clone()).is_err());
        assert!(SamplePartition::new(vec![0, 1, 2, 3], vec![], w).is_err());
    }

    #[test]
    fn precision_is_spd() {
        let w = rook(4, 3).unwrap().row_normalize();
        for rho in [-0.9, -0.3, 0.4, 0.95] {
            let q = precision_matrix(rho, 3.0, &w);
            assert!((&q - q.transpose()).amax() < 1e-10);
            let chol = q.cholesky().expect("positive definite");
            assert!(chol.l().diagonal().iter().all(|d| *d > 0.0));
        }
    }

    #[test]
    fn negative_radius_clamped_and_flagged() {
        let w = rook(1, 3).unwrap().row_normalize();
        let s = IntervalSample::from_center_range(&[0.0; 3], &[1.0; 3], &[0.0, 1.0, 10.0], &[0.0; 3]).unwrap();
        let part = SamplePartition::new(vec![0, 1], vec![2], w).unwrap();
        let f = fake_fit(0.0, [0.0; 3], [1.0, -0.5, 0.0], 1.0);
        let p = predict_intervals(&f, &part, &s, Method::Tc).unwrap();
        assert_eq!(p.yr_hat, vec![-4.0]);
        assert_eq!(p.clamped, vec![true]);
        assert_eq!(p.intervals[0].width(), 0.0);
    }

    #[test]
    fn evaluate_examples() {
        let truth = vec![Interval::new(0.0, 2.0).unwrap(), Interval::new(5.0, 6.0).unwrap()];
        let pred = PredictionResult {
            method: Method::Tc,
            test_idx: vec![0, 1],
            yc_hat: vec![1.0, 5.5],
            yr_hat: vec![1.0, 0.5],
            intervals: truth.clone(),
            clamped: vec![false; 2],
        };
        let m = evaluate(&pred, &truth).unwrap();
        assert_eq!((m.rmse_l, m.rmse_u, m.ar, m.n_d), (0.0, 0.0, 1.0, 0));
        let mut off = pred.clone();
        off.intervals[1] = Interval::new(7.0, 8.0).unwrap();
        assert_eq!(evaluate(&off, &truth).unwrap().n_d, 1);
        assert!(evaluate(&off, &truth[..1]).is_err());
    }

    #[test]
    fn icm_tc_equals_bp() {
        let w = rook(4, 5).unwrap().row_normalize();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xc: Vec<f64> = (0..20).map(|_| rng.random_range(0.0..150.0)).collect();
        let xr: Vec<f64> = (0..20).map(|_| rng.random_range(5.0..8.0)).collect();
        let yc: Vec<f64> = xc
            .iter()
            .zip(&xr)
            .map(|(a, b)| -2.0 * a + b + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let yr: Vec<f64> = xr.iter().map(|b| 3.0 * b).collect();
        let s = IntervalSample::from_center_range(&yc, &yr, &xc, &xr).unwrap();
        let part = SamplePartition::new((0..17).collect(), vec![17, 18, 19], w).unwrap();
        let fit = fit_icm(&s.subset(part.train_idx())).unwrap();
        let a = predict_intervals(&fit, &part, &s, Method::Tc).unwrap();
        let b = predict_intervals(&fit, &part, &s, Method::Bp).unwrap();
        assert_eq!(a.intervals, b.intervals);
    }

    #[test]
    fn noiseless_end_to_end() {
        let w = block(10, 6).unwrap();
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..150.0)).collect();
        let xr: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..8.0)).collect();
        let x = design_matrix(&xc, &xr);
        let rho = 0.3;
        let a = DMatrix::identity(n, n) - w.to_dense() * rho;
        let yc = a
            .lu()
            .solve(&(&x * DVector::from_column_slice(&[0.0, -2.2, 1.0])))
            .unwrap();
        let yr = &x * DVector::from_column_slice(&[0.0, 0.1, 3.0]);
        let s = IntervalSample::from_center_range(yc.as_slice(), yr.as_slice(), &xc, &xr).unwrap();
        let fit = fit_icsm(&s, &w, &RhoGrid::default()).unwrap();
        assert_eq!(fit.rho, rho);
        let part = SamplePartition::new((6..n).collect(), (0..6).collect(), w).unwrap();
        for method in [Method::Tc, Method::Bp] {
            let p = predict_intervals(&fit, &part, &s, method).unwrap();
            let truth: Vec<Interval> = (0..6).map(|i| s.y()[i]).collect();
            let m = evaluate(&p, &truth).unwrap();
            assert!((m.ar - 1.0).abs() < 1e-9 && m.n_d == 0 && m.rmse_l < 1e-8);
        }
    }

    proptest! {
        #[test]
        fn bp_matches_covariance_oracle(seed: u64, rows in 2usize..4, cols in 2usize..4, rho in -0.95f64..0.95,
                                        n_test in 1usize..4) {
            let w = rook(rows, cols).unwrap().row_normalize();
            let n = w.n();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_test = n_test.min(n - 1);
            let (train, test) = random_split(&mut rng, n, n_test);
            let xc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let xr: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
            let x = design_matrix(&xc, &xr);
            let fit = fake_fit(rho, [0.5, -1.0, 2.0], [0.0; 3], rng.random_range(0.5..5.0));
            let tc = predict_tc(&fit, &x, &w).unwrap();
            let y: Vec<f64> = train.iter().map(|&i| tc[i] + rng.sample::<f64, _>(StandardNormal)).collect();
            let part = SamplePartition::new(train.clone(), test.clone(), w.clone()).unwrap();
            let bp = predict_bp(&fit, &part, &y, &x).unwrap();
            let oracle = covariance_oracle(rho, fit.sigma2_c, &w, &tc, &train, &test, &y);
            for (a, b) in bp.iter().zip(&oracle) {
                prop_assert!((a - b).abs() <= 1e-8 * (1.0 + b.abs()), "{} vs {}", a, b);
            }
        }

        #[test]
        fn reordering_equivariance(seed: u64, rho in -0.9f64..0.9) {
            let w = rook(3, 4).unwrap().row_normalize();
            let n = w.n();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (train, test) = random_split(&mut rng, n, 3);
            let xc: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
            let xr: Vec<f64> = (0..n).map(|_| rng.random_range(1.0..2.0)).collect();
            let yc: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let fit = fake_fit(rho, [0.5, -1.0, 2.0], [1.0, 0.0, 0.5], 1.5);
            let s = IntervalSample::from_center_range(&yc, &vec![1.0; n], &xc, &xr).unwrap();
            let p = predict_intervals(&fit, &SamplePartition::new(train.clone(), test.clone(), w.clone()).unwrap(), &s, Method::Bp).unwrap();

            // perm[new] = old
            let mut perm: Vec<usize> = (0..n).collect();
            rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
            let mut inv = vec![0; n];
            for (new, &old) in perm.iter().enumerate() {
                inv[old] = new;
            }
            let wp = WeightMatrix::from_triplets(n, w.triplets().map(|(i, j, v)| (inv[i], inv[j], v)), true).unwrap();
            let pick = |v: &[f64]| perm.iter().map(|&o| v[o]).collect::<Vec<f64>>();
            let sp = IntervalSample::from_center_range(&pick(&yc), &vec![1.0; n], &pick(&xc), &pick(&xr)).unwrap();
            let part_p = SamplePartition::new(train.iter().map(|&i| inv[i]).collect(), test.iter().map(|&i| inv[i]).collect(), wp).unwrap();
            let pp = predict_intervals(&fit, &part_p, &sp, Method::Bp).unwrap();
            for (a, b) in p.yc_hat.iter().zip(&pp.yc_hat) {
                prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
            }
        }
    }
}
