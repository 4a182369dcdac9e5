//! Model files: a fitted model plus SHA-256 fingerprints of the training rows
//! and the weight matrix it was estimated with.

use crate::dataset::Dataset;
use crate::error::{CliError, Result};
use interval_sar::estimators::FitResult;
use interval_sar::weights::WeightMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub fit: FitResult,
    pub n_train: usize,
    pub data_sha256: String,
    /// Absent when the model was fitted without weights (ICM).
    pub weights_sha256: Option<String>,
}

/// Hash of the ids and bounds of the given rows, in order.
pub fn data_hash(ds: &Dataset, rows: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in rows {
        h.update(ds.ids[i].as_bytes());
        h.update([0u8]);
        let x = ds.x[i];
        let y = ds.y[i].map_or([f64::NAN; 2], |y| [y.lower(), y.upper()]);
        for v in [x.lower(), x.upper(), y[0], y[1]] {
            h.update(v.to_le_bytes());
        }
    }
    hex::encode(h.finalize())
}

pub fn weights_hash(w: &WeightMatrix) -> String {
    let mut h = Sha256::new();
    h.update((w.n() as u64).to_le_bytes());
    h.update([u8::from(w.is_row_normalized())]);
    for (i, j, v) in w.triplets() {
        h.update((i as u64).to_le_bytes());
        h.update((j as u64).to_le_bytes());
        h.update(v.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl ModelFile {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| CliError::from(e).context(path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::from(e).context(path.display()))?;
        let m: ModelFile = serde_json::from_str(&text).map_err(|e| CliError::from(e).context(path.display()))?;
        if m.format_version != FORMAT_VERSION {
            return Err(CliError::input(
                "UnsupportedModelVersion",
                format!("expected {FORMAT_VERSION}, found {}", m.format_version),
            ));
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use interval_sar::estimators::{fit_icsm, RhoGrid};
    use interval_sar::weights::rook;

    fn dataset() -> Dataset {
        let mut s = String::from("id,x_lower,x_upper,y_lower,y_upper\n");
        for i in 0..6 {
            let x = i as f64 * 1.37;
            let y = 0.3 + 2.1 * x + (i as f64 * 0.71).sin();
            s.push_str(&format!(
                "u{i},{x},{},{},{}\n",
                x + 0.1 + 0.05 * (i % 3) as f64,
                y - 1.0 - 0.1 * x,
                y + 1.0 + 0.1 * x
            ));
        }
        Dataset::read(s.as_bytes()).unwrap()
    }

    #[test]
    fn round_trip_is_lossless() {
        let ds = dataset();
        let rows: Vec<usize> = (0..ds.len()).collect();
        let w = rook(2, 3).unwrap().row_normalize();
        let fit = fit_icsm(&ds.sample(&rows).unwrap(), &w, &RhoGrid::default()).unwrap();
        let m = ModelFile {
            format_version: FORMAT_VERSION,
            fit,
            n_train: rows.len(),
            data_sha256: data_hash(&ds, &rows),
            weights_sha256: Some(weights_hash(&w)),
        };
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.write(&p).unwrap();
        let back = ModelFile::read(&p).unwrap();
        assert_eq!(back, m);
        for (a, b) in back.fit.residuals_c.iter().zip(&m.fit.residuals_c) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn hashes_track_content() {
        let ds = dataset();
        assert_eq!(data_hash(&ds, &[0, 1]), data_hash(&ds, &[0, 1]));
        assert_ne!(data_hash(&ds, &[0, 1]), data_hash(&ds, &[1, 0]));
        assert_ne!(data_hash(&ds, &[0, 1]), data_hash(&ds, &[0, 2]));
        let w = rook(2, 3).unwrap();
        assert_ne!(weights_hash(&w), weights_hash(&w.row_normalize()));
    }
}
