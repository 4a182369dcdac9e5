//! Text formats for weight matrices and coordinates.
//!
//! Weights are written as a header line `# n=<n> normalized=<0|1>` followed
//! by one `i,j,w` triplet per line (0-based indices). Floats use the
//! shortest representation that round-trips exactly.

use super::{GeoPoint, WeightMatrix, WeightsError};
use std::io::{BufRead, Write};

pub fn write_weights<W: Write>(w: &WeightMatrix, mut out: W) -> Result<(), WeightsError> {
    writeln!(out, "# n={} normalized={}", w.n(), u8::from(w.is_row_normalized()))?;
    for (i, j, v) in w.triplets() {
        writeln!(out, "{i},{j},{v:?}")?;
    }
    out.flush()?;
    Ok(())
}

fn parse_header(line: &str) -> Result<(usize, bool), WeightsError> {
    let bad = |msg: &str| WeightsError::Parse {
        line: 1,
        msg: msg.to_string(),
    };
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| bad("missing '# n=...' header"))?;
    let mut n = None;
    let mut normalized = None;
    for field in body.split_whitespace() {
        match field.split_once('=') {
            Some(("n", v)) => n = Some(v.parse::<usize>().map_err(|_| bad("invalid n"))?),
            Some(("normalized", "0")) => normalized = Some(false),
            Some(("normalized", "1")) => normalized = Some(true),
            _ => return Err(bad(&format!("unexpected header field '{field}'"))),
        }
    }
    Ok((n.ok_or_else(|| bad("header lacks n"))?, normalized.unwrap_or(false)))
}

/// Reads the triplet format. An optional `i,j,w` column-name line after the
/// header is accepted, as are blank lines.
pub fn read_weights<R: BufRead>(input: R) -> Result<WeightMatrix, WeightsError> {
    let mut lines = input.lines();
    let header = lines.next().ok_or(WeightsError::Parse {
        line: 1,
        msg: "empty file".into(),
    })??;
    let (n, normalized) = parse_header(&header)?;
    let mut trip = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let line_no = k + 2;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t.replace(' ', "") == "i,j,w" {
            continue;
        }
        let parts: Vec<&str> = t.split(',').map(str::trim).collect();
        let err = |msg: &str| WeightsError::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        if parts.len() != 3 {
            return Err(err("expected 'i,j,w'"));
        }
        let i = parts[0].parse::<usize>().map_err(|_| err("invalid row index"))?;
        let j = parts[1].parse::<usize>().map_err(|_| err("invalid column index"))?;
        let v = parts[2].parse::<f64>().map_err(|_| err("invalid weight"))?;
        trip.push((i, j, v));
    }
    WeightMatrix::from_triplets(n, trip, normalized)
}

/// Reads `id,lon,lat` rows.
pub fn read_coords<R: std::io::Read>(input: R) -> Result<Vec<(String, GeoPoint)>, WeightsError> {
    #[derive(serde::Deserialize)]
    struct Row {
        id: String,
        lon: f64,
        lat: f64,
    }
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push((row.id, GeoPoint::new(row.lon, row.lat)?));
    }
    Ok(out)
}

pub fn write_coords<W: Write>(coords: &[(String, GeoPoint)], out: W) -> Result<(), WeightsError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    wtr.write_record(["id", "lon", "lat"])?;
    for (id, p) in coords {
        wtr.write_record([id.clone(), format!("{:?}", p.lon()), format!("{:?}", p.lat())])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::{block, rook};
    use proptest::prelude::*;

    #[test]
    fn block_file_contents() {
        let mut buf = Vec::new();
        write_weights(&block(1, 2).unwrap(), &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "# n=2 normalized=1\n0,1,1.0\n1,0,1.0\n"
        );
    }

    #[test]
    fn accepts_column_header() {
        let text = "# n=3 normalized=0\ni,j,w\n0,1,2.5\n\n2,0,1\n";
        let w = read_weights(text.as_bytes()).unwrap();
        assert_eq!(w.get(0, 1), 2.5);
        assert_eq!(w.get(2, 0), 1.0);
        assert!(!w.is_row_normalized());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(read_weights("0,1,1\n".as_bytes()).is_err());
        assert!(read_weights("# n=2 normalized=0\n0,1\n".as_bytes()).is_err());
        assert!(read_weights("# n=2 normalized=1\n0,1,0.5\n1,0,1\n".as_bytes()).is_err());
    }

    #[test]
    fn coords_round_trip() {
        let c = vec![
            ("a".to_string(), GeoPoint::new(116.4074, 39.9042).unwrap()),
            ("b".to_string(), GeoPoint::new(-0.1, 51.5).unwrap()),
        ];
        let mut buf = Vec::new();
        write_coords(&c, &mut buf).unwrap();
        assert_eq!(read_coords(buf.as_slice()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn weights_round_trip_bit_exact(rows in 1usize..6, cols in 1usize..6, normalize: bool,
                                        scale in 1e-3f64..1e3) {
            let raw = rook(rows, cols).unwrap();
            let trip: Vec<_> = raw.triplets().map(|(i, j, w)| (i, j, w * scale / (1 + i + j) as f64)).collect();
            let mut w = WeightMatrix::from_triplets(raw.n(), trip, false).unwrap();
            if normalize {
                w = w.row_normalize();
            }
            let mut buf = Vec::new();
            write_weights(&w, &mut buf).unwrap();
            let back = read_weights(buf.as_slice()).unwrap();
            prop_assert_eq!(back, w);
        }
    }
}
