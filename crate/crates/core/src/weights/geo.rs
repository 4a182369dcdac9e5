use super::{morans_i, WeightMatrix, WeightsError};
use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// A location in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    lon: f64,
    lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, WeightsError> {
        if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
            return Err(WeightsError::InvalidParameter(format!(
                "coordinates out of range: lon={lon}, lat={lat}"
            )));
        }
        Ok(Self { lon, lat })
    }

    pub fn lon(&self) -> f64 {
        self.lon
    }

    pub fn lat(&self) -> f64 {
        self.lat
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Pairwise distances with each unit's neighbours sorted by distance.
struct DistanceTable {
    dist: Vec<Vec<f64>>,
    /// `order[i]` lists `j != i` by increasing distance (ties by index).
    order: Vec<Vec<usize>>,
}

impl DistanceTable {
    fn new(coords: &[GeoPoint]) -> Result<Self, WeightsError> {
        let n = coords.len();
        let mut dist = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = haversine_km(coords[i], coords[j]);
                if d == 0.0 {
                    return Err(WeightsError::DuplicateCoordinates(i, j));
                }
                dist[i][j] = d;
                dist[j][i] = d;
            }
        }
        let order = (0..n)
            .map(|i| {
                let mut o: Vec<usize> = (0..n).filter(|&j| j != i).collect();
                o.sort_by(|&a, &b| dist[i][a].total_cmp(&dist[i][b]).then(a.cmp(&b)));
                o
            })
            .collect();
        Ok(Self { dist, order })
    }

    /// Distance from `i` to its k-th nearest neighbour (k clipped to n - 1).
    fn kth_distance(&self, i: usize, k: usize) -> f64 {
        let o = &self.order[i];
        self.dist[i][o[k.min(o.len()) - 1]]
    }

    fn matrix(&self, k: usize, d0: f64) -> WeightMatrix {
        let n = self.dist.len();
        let trip = (0..n).flat_map(|i| {
            let cutoff = self.kth_distance(i, k).min(d0);
            self.order[i]
                .iter()
                .take_while(move |&&j| self.dist[i][j] <= cutoff)
                .map(move |&j| (i, j, 1.0 / self.dist[i][j]))
        });
        WeightMatrix::from_triplets(n, trip, false).expect("inverse distances are valid weights")
    }
}

fn check_knn_args(n: usize, k: usize, d0: f64) -> Result<(), WeightsError> {
    if n < 2 {
        return Err(WeightsError::InvalidParameter(format!(
            "need at least 2 units, got {n}"
        )));
    }
    if k == 0 {
        return Err(WeightsError::InvalidParameter("k must be at least 1".into()));
    }
    if d0.is_nan() || d0 <= 0.0 {
        return Err(WeightsError::InvalidParameter(format!("d0 must be positive, got {d0}")));
    }
    Ok(())
}

/// Inverse-distance weights `1/d_ij` restricted to the `k` nearest
/// neighbours of `i` that also lie within `d0` km. Neighbours tied at the
/// k-th distance are all included. Not normalized; may be asymmetric.
pub fn inverse_distance(coords: &[GeoPoint], k: usize, d0: f64) -> Result<WeightMatrix, WeightsError> {
    check_knn_args(coords.len(), k, d0)?;
    Ok(DistanceTable::new(coords)?.matrix(k, d0))
}

/// One evaluated `(k, d0)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KdCandidate {
    pub k: usize,
    pub d0: f64,
    pub moran: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdSelection {
    /// Overall maximizer.
    pub best: KdCandidate,
    /// Best `d0` for each `k = 1..=k_max`.
    pub per_k: Vec<KdCandidate>,
}

/// Chooses `(k, d0)` maximizing Moran's I of `z` on the row-normalized
/// inverse-distance matrix.
///
/// For each `k`, the candidate thresholds are the distinct k-th nearest
/// neighbour distances across units that leave no unit isolated (at least the
/// largest nearest-neighbour distance). Smaller thresholds give matrices with
/// a handful of links whose Moran's I is dominated by one or two pairs. Ties
/// go to the smaller `k`, then the smaller `d0`.
pub fn select_k_d0(coords: &[GeoPoint], z: &[f64], k_max: usize) -> Result<KdSelection, WeightsError> {
    let n = coords.len();
    if n < 3 {
        return Err(WeightsError::InvalidParameter(format!(
            "need at least 3 units, got {n}"
        )));
    }
    if k_max == 0 {
        return Err(WeightsError::InvalidParameter("k_max must be at least 1".into()));
    }
    if z.len() != n {
        return Err(WeightsError::LengthMismatch {
            expected: n,
            got: z.len(),
        });
    }
    let table = DistanceTable::new(coords)?;
    let connect = (0..n).map(|i| table.kth_distance(i, 1)).fold(0.0, f64::max);
    let mut per_k = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let mut cands: Vec<f64> = (0..n)
            .map(|i| table.kth_distance(i, k))
            .filter(|&d| d >= connect)
            .collect();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let mut best: Option<KdCandidate> = None;
        for d0 in cands {
            let w = table.matrix(k, d0).row_normalize();
            let moran = morans_i(&w, z)?;
            if best.is_none_or(|b| moran > b.moran) {
                best = Some(KdCandidate { k, d0, moran });
            }
        }
        per_k.push(best.expect("at least one candidate per k"));
    }
    let best = per_k
        .iter()
        .copied()
        .reduce(|a, b| if b.moran > a.moran { b } else { a })
        .expect("k_max >= 1");
    Ok(KdSelection { best, per_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn pt(lon: f64, lat: f64) -> GeoPoint {
        GeoPoint::new(lon, lat).unwrap()
    }

    /// Point on the equator `km` kilometres east of (0, 0).
    fn east(km: f64) -> GeoPoint {
        pt((km / EARTH_RADIUS_KM).to_degrees(), 0.0)
    }

    #[test]
    fn haversine_reference_values() {
        assert_eq!(haversine_km(pt(10.0, 20.0), pt(10.0, 20.0)), 0.0);
        let quarter = PI * EARTH_RADIUS_KM / 2.0;
        assert!((haversine_km(pt(0.0, 0.0), pt(0.0, 90.0)) - quarter).abs() < 1e-9);
        assert!((quarter - 10007.543).abs() < 1e-3);
        let half = PI * EARTH_RADIUS_KM;
        assert!((haversine_km(pt(0.0, 0.0), pt(180.0, 0.0)) - half).abs() < 1e-9);
        assert!((haversine_km(pt(30.0, 45.0), pt(-150.0, -45.0)) - half).abs() < 1e-6);
        assert!((half - 20015.087).abs() < 1e-3);
    }

    #[test]
    fn geopoint_range_checked() {
        assert!(GeoPoint::new(181.0, 0.0).is_err());
        assert!(GeoPoint::new(0.0, -90.5).is_err());
    }

    #[test]
    fn collinear_knn() {
        let c = [east(0.0), east(100.0), east(300.0)];
        let w = inverse_distance(&c, 1, 500.0).unwrap();
        assert_eq!(w.nnz(), 3);
        assert!((w.get(0, 1) - 1.0 / 100.0).abs() < 1e-12);
        assert!((w.get(1, 0) - 1.0 / 100.0).abs() < 1e-12);
        assert!((w.get(2, 1) - 1.0 / 200.0).abs() < 1e-12);
        assert!(!w.is_symmetric(1e-12));
    }

    #[test]
    fn threshold_excludes_everything() {
        let c = [east(0.0), east(100.0), east(300.0)];
        let w = inverse_distance(&c, 1, 50.0).unwrap();
        assert_eq!(w.nnz(), 0);
    }

    #[test]
    fn dense_when_unrestricted() {
        let c = [east(0.0), east(100.0), east(300.0), pt(1.0, 1.0)];
        let w = inverse_distance(&c, 3, f64::INFINITY).unwrap();
        assert_eq!(w.nnz(), 12);
    }

    #[test]
    fn knn_ties_included() {
        // unit 0 in the middle, 1 and 2 equidistant on either side
        let c = [east(100.0), east(0.0), east(200.0)];
        let w = inverse_distance(&c, 1, f64::INFINITY).unwrap();
        assert_eq!(w.row(0).len(), 2);
    }

    #[test]
    fn duplicate_coordinates() {
        let c = [east(0.0), east(0.0), east(1.0)];
        assert!(matches!(
            inverse_distance(&c, 1, 10.0),
            Err(WeightsError::DuplicateCoordinates(0, 1))
        ));
    }

    #[test]
    fn constraints_respected() {
        let coords: Vec<_> = (0..25)
            .map(|i| {
                pt(
                    100.0 + (i * 37 % 11) as f64 * 0.7,
                    30.0 + (i * 13 % 7) as f64 * 0.9 + i as f64 * 0.01,
                )
            })
            .collect();
        for k in 1..5 {
            let d0 = 150.0;
            let w = inverse_distance(&coords, k, d0).unwrap();
            for (i, j, v) in w.triplets() {
                let d = haversine_km(coords[i], coords[j]);
                assert!(d <= d0);
                assert!((v - 1.0 / d).abs() < 1e-15);
                let closer = (0..coords.len())
                    .filter(|&m| m != i && haversine_km(coords[i], coords[m]) < d)
                    .count();
                assert!(closer < k, "j must be among the k nearest");
            }
        }
    }

    #[test]
    fn select_single_k() {
        let c = [east(0.0), east(100.0), east(300.0)];
        let z = [1.0, 2.0, 4.0];
        let sel = select_k_d0(&c, &z, 1).unwrap();
        assert_eq!(sel.best.k, 1);
        let one_nn = [100.0, 100.0, 200.0];
        assert!(one_nn.iter().any(|d| (sel.best.d0 - d).abs() < 1e-9));
    }

    #[test]
    fn select_ignores_thresholds_that_isolate_units() {
        // a close pair with extreme equal values would dominate a matrix that
        // links only that pair
        let mut coords = vec![east(0.0), east(1.0)];
        let mut z = vec![10.0, 10.0];
        for k in 0..10 {
            coords.push(east(200.0 + 97.0 * k as f64 + (k * k) as f64));
            z.push(((k * 7) % 5) as f64);
        }
        let sel = select_k_d0(&coords, &z, 3).unwrap();
        for c in &sel.per_k {
            let w = inverse_distance(&coords, c.k, c.d0).unwrap();
            assert!((0..coords.len()).all(|i| w.neighbor_count(i) > 0));
        }
        let pair_only = inverse_distance(&coords, 1, 1.0).unwrap().row_normalize();
        assert!(morans_i(&pair_only, &z).unwrap() > sel.best.moran);
    }

    #[test]
    fn select_separates_clusters() {
        // two tight clusters 1000 km apart, constant value within each
        let mut coords = Vec::new();
        let mut z = Vec::new();
        for (base, val) in [(0.0, 1.0), (1000.0, -1.0)] {
            for k in 0..5 {
                coords.push(east(base + 10.0 * k as f64 + (k * k) as f64));
                z.push(val);
            }
        }
        let sel = select_k_d0(&coords, &z, 7).unwrap();
        assert!(sel.best.d0 < 900.0);
        assert!((sel.best.moran - 1.0).abs() < 1e-12);
        assert_eq!(sel.per_k.len(), 7);
        // cross-cluster links are reachable for k >= 5 and only lower I
        assert!(sel.per_k.iter().all(|c| c.moran <= sel.best.moran));
    }
}
