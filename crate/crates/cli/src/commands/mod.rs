pub mod fit;
pub mod moran;
pub mod predict;
pub mod simulate;
pub mod weights;

use crate::error::{CliError, Result};
use interval_sar::simulation::DEFAULT_SEED;
use interval_sar::weights::{read_weights, WeightMatrix};
use std::io::{BufReader, Write};
use std::path::Path;

pub const SEED_ENV: &str = "INTERVAL_SAR_SEED";

/// Explicit flag, then `INTERVAL_SAR_SEED`, then the built-in default.
pub fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::input("InvalidSeed", format!("{SEED_ENV}='{v}' is not an unsigned integer"))),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

pub fn load_weights(path: &Path) -> Result<WeightMatrix> {
    let file = std::fs::File::open(path).map_err(|e| CliError::from(e).context(path.display()))?;
    read_weights(BufReader::new(file)).map_err(|e| CliError::from(e).context(path.display()))
}

pub fn check_units(w: &WeightMatrix, n: usize) -> Result<()> {
    if w.n() != n {
        return Err(CliError::input(
            "LengthMismatch",
            format!("weight matrix has {} units, dataset has {n}", w.n()),
        ));
    }
    Ok(())
}

/// Writes `bytes` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| CliError::from(e).context(p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)?;
            out.flush()?;
            Ok(())
        }
    }
}

pub fn print_json(value: &serde_json::Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    emit(None, s.as_bytes())
}
