//! Shared inputs for the benchmarks.

use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use climcast::ingest::{serialize_ghcn_dly, DayValue, Element, GhcnRecord};

/// Random B × T × F inputs and B × H targets in [-1, 1).
pub fn batch(b: usize, t: usize, f: usize, h: usize, seed: u64) -> (Array3<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Array3::from_shape_fn((b, t, f), |_| rng.random_range(-1.0..1.0));
    let y = Array2::from_shape_fn((b, h), |_| rng.random_range(-1.0..1.0));
    (x, y)
}

pub fn vectors(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let obs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..100.0)).collect();
    let pred = obs.iter().map(|o| o + rng.random_range(-20.0..20.0)).collect();
    (pred, obs)
}

/// A GHCN-daily file body with `years` years of PRCP, TMAX and TMIN lines.
pub fn ghcn_text(years: i32, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for year in 2000..2000 + years {
        for month in 1..=12 {
            for element in [Element::Prcp, Element::Tmax, Element::Tmin] {
                let days = std::array::from_fn(|_| DayValue {
                    raw: Some(rng.random_range(0..400)),
                    mflag: ' ',
                    qflag: ' ',
                    sflag: '7',
                });
                records.push(GhcnRecord {
                    station_id: "USC00099999".into(),
                    year,
                    month,
                    element,
                    days,
                });
            }
        }
    }
    serialize_ghcn_dly(&records)
}
