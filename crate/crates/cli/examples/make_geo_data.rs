//! Regenerates `data/geo_synthetic.csv`, a synthetic station dataset for the
//! inverse-distance workflow.
//!
//! cargo run -p interval-sar-cli --example make_geo_data > crates/cli/data/geo_synthetic.csv

use interval_sar::linalg::SpatialFilter;
use interval_sar::weights::{inverse_distance, GeoPoint};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const N: usize = 80;
const RHO: f64 = 0.5;
const BETA_C: [f64; 3] = [2.0, 0.8, 1.5];
const BETA_R: [f64; 3] = [0.5, 0.1, 0.6];

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let coords: Vec<GeoPoint> = (0..N)
        .map(|_| GeoPoint::new(rng.random_range(105.0..120.0), rng.random_range(25.0..40.0)).unwrap())
        .collect();
    // smooth regional trend plus local variation
    let local = Normal::new(0.0, 2.0).unwrap();
    let xc: Vec<f64> = coords
        .iter()
        .map(|p| {
            15.0 + 7.0 * ((p.lon() - 105.0) / 3.0).sin() + 5.0 * ((p.lat() - 25.0) / 4.0).cos() + local.sample(&mut rng)
        })
        .collect();
    let xr: Vec<f64> = (0..N).map(|_| rng.random_range(1.0..3.0)).collect();

    let w = inverse_distance(&coords, 4, 1000.0).unwrap().row_normalize();
    let noise_c = Normal::new(0.0, 1.0).unwrap();
    let noise_r = Normal::new(0.0, 0.2).unwrap();
    let mean_c: Vec<f64> = (0..N)
        .map(|i| BETA_C[0] + BETA_C[1] * xc[i] + BETA_C[2] * xr[i] + noise_c.sample(&mut rng))
        .collect();
    let yc = SpatialFilter::new(&w).factor(RHO).unwrap().solve(&mean_c);
    let yr: Vec<f64> = (0..N)
        .map(|i| (BETA_R[0] + BETA_R[1] * xc[i] + BETA_R[2] * xr[i] + noise_r.sample(&mut rng)).max(0.05))
        .collect();

    println!("id,lon,lat,x_lower,x_upper,y_lower,y_upper,split");
    for i in 0..N {
        let split = if i % 10 == 9 { "test" } else { "train" };
        println!(
            "s{:02},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{}",
            i + 1,
            coords[i].lon(),
            coords[i].lat(),
            xc[i] - xr[i],
            xc[i] + xr[i],
            yc[i] - yr[i],
            yc[i] + yr[i],
            split
        );
    }
}
