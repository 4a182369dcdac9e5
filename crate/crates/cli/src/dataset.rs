//! Interval dataset CSV.
//!
//! Required columns are `id,x_lower,x_upper,y_lower,y_upper`. Optional
//! columns: `lon,lat` for coordinates and `split` (`train`/`test`). The
//! response may be left empty on test rows. Any other column is kept and can
//! be read as a numeric variable.

use crate::error::{CliError, Result};
use interval_sar::interval::{Interval, IntervalSample};
use interval_sar::weights::GeoPoint;
use std::collections::HashSet;
use std::path::Path;

const REQUIRED: [&str; 5] = ["id", "x_lower", "x_upper", "y_lower", "y_upper"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Vec<Interval>,
    pub y: Vec<Option<Interval>>,
    pub coords: Option<Vec<GeoPoint>>,
    pub split: Option<Vec<Split>>,
    headers: Vec<String>,
    records: Vec<csv::StringRecord>,
}

fn bad(line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::input("InvalidDataset", format!("line {line}: {msg}"))
}

fn parse_f64(field: &str, line: usize, col: &str) -> Result<f64> {
    field
        .parse::<f64>()
        .map_err(|_| bad(line, format!("column {col}: '{field}' is not a number")))
}

impl Dataset {
    pub fn read_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| CliError::from(e).context(path.display()))?;
        Self::read(file).map_err(|e| e.context(path.display()))
    }

    pub fn read<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let mut idx = [0usize; 5];
        for (slot, name) in idx.iter_mut().zip(REQUIRED) {
            *slot = col(name).ok_or_else(|| bad(1, format!("missing column '{name}'")))?;
        }
        let geo = match (col("lon"), col("lat")) {
            (Some(a), Some(b)) => Some((a, b)),
            (None, None) => None,
            _ => return Err(bad(1, "lon and lat must appear together")),
        };
        let split_col = col("split");

        let mut ds = Dataset {
            ids: Vec::new(),
            x: Vec::new(),
            y: Vec::new(),
            coords: geo.map(|_| Vec::new()),
            split: split_col.map(|_| Vec::new()),
            headers: headers.clone(),
            records: Vec::new(),
        };
        let mut seen = HashSet::new();
        for (k, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = k + 2;
            let id = rec[idx[0]].to_string();
            if id.is_empty() {
                return Err(bad(line, "empty id"));
            }
            if !seen.insert(id.clone()) {
                return Err(bad(line, format!("duplicate id '{id}'")));
            }
            let xl = parse_f64(&rec[idx[1]], line, "x_lower")?;
            let xu = parse_f64(&rec[idx[2]], line, "x_upper")?;
            let x = Interval::new(xl, xu).map_err(|e| bad(line, e))?;

            let split = match split_col.map(|c| &rec[c]) {
                None => None,
                Some("train") => Some(Split::Train),
                Some("test") => Some(Split::Test),
                Some(other) => return Err(bad(line, format!("split must be 'train' or 'test', got '{other}'"))),
            };
            let (yl, yu) = (&rec[idx[3]], &rec[idx[4]]);
            let y = if yl.is_empty() && yu.is_empty() {
                if split != Some(Split::Test) {
                    return Err(bad(line, "only test rows may omit the response"));
                }
                None
            } else {
                let lo = parse_f64(yl, line, "y_lower")?;
                let hi = parse_f64(yu, line, "y_upper")?;
                Some(Interval::new(lo, hi).map_err(|e| bad(line, e))?)
            };
            if let (Some((a, b)), Some(coords)) = (geo, ds.coords.as_mut()) {
                let lon = parse_f64(&rec[a], line, "lon")?;
                let lat = parse_f64(&rec[b], line, "lat")?;
                coords.push(GeoPoint::new(lon, lat).map_err(|e| bad(line, e))?);
            }
            if let (Some(s), Some(v)) = (split, ds.split.as_mut()) {
                v.push(s);
            }
            ds.ids.push(id);
            ds.x.push(x);
            ds.y.push(y);
            ds.records.push(rec);
        }
        if ds.ids.is_empty() {
            return Err(bad(1, "no rows"));
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    fn indices(&self, want: Split) -> Vec<usize> {
        match &self.split {
            None if want == Split::Train => (0..self.len()).collect(),
            None => Vec::new(),
            Some(s) => (0..self.len()).filter(|&i| s[i] == want).collect(),
        }
    }

    /// Rows used for estimation: all rows without a `split` column.
    pub fn train_idx(&self) -> Vec<usize> {
        self.indices(Split::Train)
    }

    pub fn test_idx(&self) -> Vec<usize> {
        self.indices(Split::Test)
    }

    pub fn sample(&self, idx: &[usize]) -> Result<IntervalSample> {
        let y = idx
            .iter()
            .map(|&i| self.y[i].ok_or_else(|| bad(i + 2, "response is missing")))
            .collect::<Result<Vec<_>>>()?;
        let x = idx.iter().map(|&i| self.x[i]).collect();
        Ok(IntervalSample::new(y, x)?)
    }

    /// All rows, with missing responses replaced by a zero-width placeholder.
    /// Only valid where the responses of those rows are never read.
    pub fn sample_with_placeholders(&self) -> Result<IntervalSample> {
        let zero = Interval::point(0.0)?;
        let y = self.y.iter().map(|y| y.unwrap_or(zero)).collect();
        Ok(IntervalSample::new(y, self.x.clone())?)
    }

    /// `yc`, `yr`, or any other numeric column, over all rows.
    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let from_y = |f: fn(&Interval) -> f64| {
            self.y
                .iter()
                .enumerate()
                .map(|(i, y)| y.as_ref().map(f).ok_or_else(|| bad(i + 2, "response is missing")))
                .collect()
        };
        match name {
            "yc" => from_y(Interval::center),
            "yr" => from_y(Interval::radius),
            "xc" => Ok(self.x.iter().map(Interval::center).collect()),
            "xr" => Ok(self.x.iter().map(Interval::radius).collect()),
            _ => {
                let c = self
                    .headers
                    .iter()
                    .position(|h| h == name)
                    .ok_or_else(|| CliError::input("UnknownColumn", format!("no column named '{name}'")))?;
                self.records
                    .iter()
                    .enumerate()
                    .map(|(i, r)| parse_f64(&r[c], i + 2, name))
                    .collect()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CSV: &str = "id,x_lower,x_upper,y_lower,y_upper,lon,lat,split,z\n\
                       a,1,2,3,5,100,30,train,0.5\n\
                       b,0,4,-1,1,101,31,test,1.5\n\
                       c,2,2,,,102,32,test,2.5\n";

    #[test]
    fn parses_optional_columns() {
        let ds = Dataset::read(CSV.as_bytes()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.train_idx(), vec![0]);
        assert_eq!(ds.test_idx(), vec![1, 2]);
        assert!(ds.y[2].is_none());
        assert_eq!(ds.coords.as_ref().unwrap()[1].lat(), 31.0);
        assert_eq!(ds.column("z").unwrap(), vec![0.5, 1.5, 2.5]);
        assert_eq!(ds.column("xr").unwrap(), vec![0.5, 2.0, 0.0]);
        assert!(ds.column("yc").is_err());
        let s = ds.sample(&[0, 1]).unwrap();
        assert_eq!(s.yc(), &[4.0, 0.0]);
        assert!(ds.sample(&[2]).is_err());
        assert_eq!(ds.sample_with_placeholders().unwrap().len(), 3);
    }

    #[test]
    fn rejects_bad_rows() {
        let cases = [
            "id,x_lower,x_upper,y_lower\na,1,2,3\n",
            "id,x_lower,x_upper,y_lower,y_upper\na,1,2,3,4\na,1,2,3,4\n",
            "id,x_lower,x_upper,y_lower,y_upper\na,2,1,3,4\n",
            "id,x_lower,x_upper,y_lower,y_upper\na,1,2,,\n",
            "id,x_lower,x_upper,y_lower,y_upper,split\na,1,2,3,4,holdout\n",
            "id,x_lower,x_upper,y_lower,y_upper,lon\na,1,2,3,4,5\n",
            "id,x_lower,x_upper,y_lower,y_upper\n",
        ];
        for c in cases {
            let e = Dataset::read(c.as_bytes()).unwrap_err();
            assert_eq!(e.code, crate::error::EXIT_INPUT, "{c}");
        }
    }

    #[test]
    fn no_split_means_all_train() {
        let ds = Dataset::read("id,x_lower,x_upper,y_lower,y_upper\na,1,2,3,4\nb,1,2,3,4\n".as_bytes()).unwrap();
        assert_eq!(ds.train_idx(), vec![0, 1]);
        assert!(ds.test_idx().is_empty());
    }
}
