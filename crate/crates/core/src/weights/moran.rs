use super::{WeightMatrix, WeightsError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    /// Positive autocorrelation.
    #[default]
    Greater,
    Less,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoranResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_permutations: usize,
    pub alternative: Alternative,
}

struct Centered {
    dev: Vec<f64>,
    ss: f64,
}

fn center(w: &WeightMatrix, z: &[f64]) -> Result<Centered, WeightsError> {
    if z.len() != w.n() {
        return Err(WeightsError::LengthMismatch {
            expected: w.n(),
            got: z.len(),
        });
    }
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let dev: Vec<f64> = z.iter().map(|v| v - mean).collect();
    let ss: f64 = dev.iter().map(|d| d * d).sum();
    let scale = z.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    if ss.is_nan() || ss <= n * (f64::EPSILON * scale).powi(2) {
        return Err(WeightsError::ConstantVector);
    }
    Ok(Centered { dev, ss })
}

fn cross_product(w: &WeightMatrix, dev: &[f64]) -> f64 {
    (0..w.n())
        .map(|i| dev[i] * w.row(i).iter().map(|&(j, v)| v * dev[j]).sum::<f64>())
        .sum()
}

/// Moran's I, `(n / S0) * (z'Wz) / (z'z)` on mean-centered `z`.
pub fn morans_i(w: &WeightMatrix, z: &[f64]) -> Result<f64, WeightsError> {
    let c = center(w, z)?;
    let s0 = w.s0();
    if s0 <= 0.0 {
        return Err(WeightsError::EmptyWeights);
    }
    Ok(z.len() as f64 / s0 * cross_product(w, &c.dev) / c.ss)
}

/// Moran's I with a permutation p-value.
///
/// Permutation `k` shuffles `z` with a ChaCha stream keyed by `(seed, k)`, so
/// the result does not depend on how permutations are scheduled across
/// threads. The one-sided p-value is `(1 + #{I_perm >= I}) / (1 + n_perm)`;
/// the two-sided value doubles the smaller tail, capped at 1.
pub fn morans_i_test(
    w: &WeightMatrix,
    z: &[f64],
    n_perm: usize,
    seed: u64,
    alternative: Alternative,
) -> Result<MoranResult, WeightsError> {
    if n_perm == 0 {
        return Err(WeightsError::InvalidParameter("need at least one permutation".into()));
    }
    let c = center(w, z)?;
    let s0 = w.s0();
    if s0 <= 0.0 {
        return Err(WeightsError::EmptyWeights);
    }
    let factor = z.len() as f64 / s0 / c.ss;
    let observed_cp = cross_product(w, &c.dev);
    let statistic = factor * observed_cp;

    // Compare cross products directly: the scale factor is permutation-invariant.
    let (ge, le) = (0..n_perm)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut dev = c.dev.clone();
            dev.shuffle(&mut rng);
            let cp = cross_product(w, &dev);
            ((cp >= observed_cp) as usize, (cp <= observed_cp) as usize)
        })
        .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let denom = (n_perm + 1) as f64;
    let p_greater = (ge + 1) as f64 / denom;
    let p_less = (le + 1) as f64 / denom;
    let p_value = match alternative {
        Alternative::Greater => p_greater,
        Alternative::Less => p_less,
        Alternative::TwoSided => (2.0 * p_greater.min(p_less)).min(1.0),
    };
    Ok(MoranResult {
        statistic,
        p_value,
        n_permutations: n_perm,
        alternative,
    })
}
