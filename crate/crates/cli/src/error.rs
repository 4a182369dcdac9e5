//! Errors and exit codes.
//!
//! Every failure prints one line `error: <Name>: <detail>` to stderr. Bad
//! input exits with 2, estimation or prediction failures with 3.

use interval_sar::estimators::EstimationError;
use interval_sar::interval::IntervalError;
use interval_sar::predictor::PredictionError;
use interval_sar::qp::QpError;
use interval_sar::simulation::SimulationError;
use interval_sar::weights::WeightsError;
use std::fmt;

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_ESTIMATION: i32 = 3;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    message: String,
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn input(name: &str, detail: impl fmt::Display) -> Self {
        Self {
            code: EXIT_INPUT,
            message: format!("{name}: {detail}"),
        }
    }

    /// Library errors already render as `Name: detail`.
    fn wrap(code: i32, e: impl fmt::Display) -> Self {
        Self {
            code,
            message: e.to_string(),
        }
    }

    pub fn context(mut self, what: impl fmt::Display) -> Self {
        if let Some((name, detail)) = self.message.split_once(": ") {
            self.message = format!("{name}: {what}: {detail}");
        }
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message.replace(['\n', '\r'], " "))
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::input("Io", e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::input("Csv", e)
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::input("Json", e)
    }
}

impl From<WeightsError> for CliError {
    fn from(e: WeightsError) -> Self {
        CliError::wrap(EXIT_INPUT, e)
    }
}

impl From<IntervalError> for CliError {
    fn from(e: IntervalError) -> Self {
        CliError::wrap(EXIT_INPUT, e)
    }
}

impl From<SimulationError> for CliError {
    fn from(e: SimulationError) -> Self {
        CliError::wrap(EXIT_INPUT, e)
    }
}

impl From<EstimationError> for CliError {
    fn from(e: EstimationError) -> Self {
        let code = match e {
            EstimationError::NotRowNormalized
            | EstimationError::ShapeMismatch(_)
            | EstimationError::InvalidGrid(_)
            | EstimationError::EmptySample
            | EstimationError::Qp(QpError::DimensionMismatch(_)) => EXIT_INPUT,
            EstimationError::SingularA { .. } | EstimationError::NoFeasibleGridPoint | EstimationError::Qp(_) => {
                EXIT_ESTIMATION
            }
        };
        CliError::wrap(code, e)
    }
}

impl From<PredictionError> for CliError {
    fn from(e: PredictionError) -> Self {
        match e {
            PredictionError::Estimation(inner) => inner.into(),
            PredictionError::InvalidPartition(_) | PredictionError::ShapeMismatch(_) => CliError::wrap(EXIT_INPUT, e),
            PredictionError::SingularQo | PredictionError::NonPositiveSigma2(_) | PredictionError::Interval(_) => {
                CliError::wrap(EXIT_ESTIMATION, e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_and_single_line() {
        let e: CliError = EstimationError::NoFeasibleGridPoint.into();
        assert_eq!(e.code, EXIT_ESTIMATION);
        assert!(e.to_string().starts_with("NoFeasibleGridPoint: "));
        let e: CliError = EstimationError::NotRowNormalized.into();
        assert_eq!(e.code, EXIT_INPUT);
        let e: CliError = PredictionError::Estimation(EstimationError::SingularA { rho: 1.0 }).into();
        assert_eq!(e.code, EXIT_ESTIMATION);
        assert!(e.to_string().starts_with("SingularA: "));
        let e = CliError::input("Bad", "two\nlines");
        assert_eq!(e.to_string(), "Bad: two lines");
        assert_eq!(e.context("file.csv").to_string(), "Bad: file.csv: two lines");
    }
}
