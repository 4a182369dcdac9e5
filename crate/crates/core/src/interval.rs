//! Closed real intervals, the center/radius view used by the regression
//! algebra, and the four interval prediction metrics (RMSE of both bounds,
//! accuracy rate, and the count of disjoint predictions).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntervalError {
    #[error("InvalidInterval: lower bound {lower} exceeds upper bound {upper}")]
    InvalidInterval { lower: f64, upper: f64 },
    #[error("NonFinite: interval bounds must be finite")]
    NonFinite,
    #[error("NegativeRadius: radius {0} is negative")]
    NegativeRadius(f64),
    #[error("LengthMismatch: {left} observed vs {right} predicted")]
    LengthMismatch { left: usize, right: usize },
    #[error("EmptyInput: metrics need at least one interval")]
    EmptyInput,
}

/// A closed interval `[lower, upper]` with `lower <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval", into = "RawInterval")]
pub struct Interval {
    lower: f64,
    upper: f64,
}

#[derive(Serialize, Deserialize)]
struct RawInterval {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = IntervalError;

    fn try_from(raw: RawInterval) -> Result<Self, Self::Error> {
        Interval::new(raw.lower, raw.upper)
    }
}

impl From<Interval> for RawInterval {
    fn from(iv: Interval) -> Self {
        RawInterval {
            lower: iv.lower,
            upper: iv.upper,
        }
    }
}

impl Interval {
    /// Rejects `lower > upper` rather than swapping the bounds.
    pub fn new(lower: f64, upper: f64) -> Result<Self, IntervalError> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(IntervalError::NonFinite);
        }
        if lower > upper {
            return Err(IntervalError::InvalidInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn point(value: f64) -> Result<Self, IntervalError> {
        Self::new(value, value)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// Lebesgue measure `upper - lower`.
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    /// Semi-length `(upper - lower) / 2`.
    pub fn radius(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }

    pub fn to_center_range(&self) -> CenterRange {
        CenterRange {
            center: self.center(),
            radius: self.radius(),
        }
    }

    pub fn from_center_range(cr: CenterRange) -> Result<Self, IntervalError> {
        cr.to_interval()
    }

    /// Measure of the intersection, zero when the intervals are disjoint or
    /// only share an endpoint.
    pub fn intersection_measure(&self, other: &Interval) -> f64 {
        (self.upper.min(other.upper) - self.lower.max(other.lower)).max(0.0)
    }

    pub fn union_measure(&self, other: &Interval) -> f64 {
        self.width() + other.width() - self.intersection_measure(other)
    }

    /// Signed overlap `min(upper) - max(lower)`; negative values give the gap
    /// between disjoint intervals.
    pub fn signed_overlap(&self, other: &Interval) -> f64 {
        self.upper.min(other.upper) - self.lower.max(other.lower)
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

/// Center/radius coordinates of an interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterRange {
    pub center: f64,
    pub radius: f64,
}

impl CenterRange {
    pub fn new(center: f64, radius: f64) -> Self {
        Self { center, radius }
    }

    /// Fails with `NegativeRadius` instead of clamping; clamping policy
    /// belongs to the caller.
    pub fn to_interval(self) -> Result<Interval, IntervalError> {
        if self.radius < 0.0 {
            return Err(IntervalError::NegativeRadius(self.radius));
        }
        Interval::new(self.center - self.radius, self.center + self.radius)
    }
}

pub fn to_center_range(iv: Interval) -> CenterRange {
    iv.to_center_range()
}

pub fn from_center_range(cr: CenterRange) -> Result<Interval, IntervalError> {
    cr.to_interval()
}

/// Intersection and union measures of two intervals.
pub fn overlap_measure(a: &Interval, b: &Interval) -> (f64, f64) {
    (a.intersection_measure(b), a.union_measure(b))
}

/// `n` paired observations of an interval response `y` and an interval
/// covariate `x`, with the center/radius vectors cached.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSample {
    y: Vec<Interval>,
    x: Vec<Interval>,
    yc: Vec<f64>,
    yr: Vec<f64>,
    xc: Vec<f64>,
    xr: Vec<f64>,
}

impl IntervalSample {
    pub fn new(y: Vec<Interval>, x: Vec<Interval>) -> Result<Self, IntervalError> {
        if y.len() != x.len() {
            return Err(IntervalError::LengthMismatch {
                left: y.len(),
                right: x.len(),
            });
        }
        let yc = y.iter().map(Interval::center).collect();
        let yr = y.iter().map(Interval::radius).collect();
        let xc = x.iter().map(Interval::center).collect();
        let xr = x.iter().map(Interval::radius).collect();
        Ok(Self { y, x, yc, yr, xc, xr })
    }

    /// Builds a sample from center/radius vectors. All four must have equal
    /// length and nonnegative radii.
    pub fn from_center_range(yc: &[f64], yr: &[f64], xc: &[f64], xr: &[f64]) -> Result<Self, IntervalError> {
        let n = yc.len();
        for len in [yr.len(), xc.len(), xr.len()] {
            if len != n {
                return Err(IntervalError::LengthMismatch { left: n, right: len });
            }
        }
        let y = yc
            .iter()
            .zip(yr)
            .map(|(&c, &r)| CenterRange::new(c, r).to_interval())
            .collect::<Result<Vec<_>, _>>()?;
        let x = xc
            .iter()
            .zip(xr)
            .map(|(&c, &r)| CenterRange::new(c, r).to_interval())
            .collect::<Result<Vec<_>, _>>()?;
        // Keep the caller's center/radius values bit-exact; they agree with
        // the interval fields up to rounding.
        Ok(Self {
            y,
            x,
            yc: yc.to_vec(),
            yr: yr.to_vec(),
            xc: xc.to_vec(),
            xr: xr.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[Interval] {
        &self.y
    }

    pub fn x(&self) -> &[Interval] {
        &self.x
    }

    pub fn yc(&self) -> &[f64] {
        &self.yc
    }

    pub fn yr(&self) -> &[f64] {
        &self.yr
    }

    pub fn xc(&self) -> &[f64] {
        &self.xc
    }

    pub fn xr(&self) -> &[f64] {
        &self.xr
    }

    /// Sub-sample in the order given by `idx`.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            y: idx.iter().map(|&i| self.y[i]).collect(),
            x: idx.iter().map(|&i| self.x[i]).collect(),
            yc: pick(&self.yc),
            yr: pick(&self.yr),
            xc: pick(&self.xc),
            xr: pick(&self.xr),
        }
    }
}

fn check_lengths(truth: &[Interval], pred: &[Interval]) -> Result<(), IntervalError> {
    if truth.len() != pred.len() {
        return Err(IntervalError::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(IntervalError::EmptyInput);
    }
    Ok(())
}

/// Mean ratio of intersection to union measure. A pair of identical
/// degenerate intervals scores 1.
pub fn accuracy_rate(truth: &[Interval], pred: &[Interval]) -> Result<f64, IntervalError> {
    check_lengths(truth, pred)?;
    let total: f64 = truth
        .iter()
        .zip(pred)
        .map(|(t, p)| {
            let union = t.union_measure(p);
            if union > 0.0 {
                t.intersection_measure(p) / union
            } else if t == p {
                1.0
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / truth.len() as f64)
}

/// Root mean squared error of the lower and upper bounds.
pub fn rmse_bounds(truth: &[Interval], pred: &[Interval]) -> Result<(f64, f64), IntervalError> {
    check_lengths(truth, pred)?;
    let n = truth.len() as f64;
    let (sl, su) = truth.iter().zip(pred).fold((0.0, 0.0), |(sl, su), (t, p)| {
        let dl = t.lower - p.lower;
        let du = t.upper - p.upper;
        (sl + dl * dl, su + du * du)
    });
    Ok(((sl / n).sqrt(), (su / n).sqrt()))
}

/// Number of pairs whose intersection has measure zero (touching counts).
pub fn count_disjoint(truth: &[Interval], pred: &[Interval]) -> Result<usize, IntervalError> {
    if truth.len() != pred.len() {
        return Err(IntervalError::LengthMismatch {
            left: truth.len(),
            right: pred.len(),
        });
    }
    Ok(truth
        .iter()
        .zip(pred)
        .filter(|(t, p)| t.intersection_measure(p) == 0.0 && !(t.width() == 0.0 && t == p))
        .count())
}

/// The four prediction metrics bundled together.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMetrics {
    pub rmse_l: f64,
    pub rmse_u: f64,
    pub ar: f64,
    pub n_d: usize,
}

pub fn interval_metrics(truth: &[Interval], pred: &[Interval]) -> Result<IntervalMetrics, IntervalError> {
    let (rmse_l, rmse_u) = rmse_bounds(truth, pred)?;
    Ok(IntervalMetrics {
        rmse_l,
        rmse_u,
        ar: accuracy_rate(truth, pred)?,
        n_d: count_disjoint(truth, pred)?,
    })
}
