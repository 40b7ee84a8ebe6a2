//! Synthetic grid-city instances.

use std::path::Path;

use anyhow::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub size: usize,
    pub block_m: f64,
    pub demands: usize,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            size: 8,
            block_m: 200.0,
            demands: 24,
            seed: 7,
        }
    }
}

pub struct GridCity {
    pub nodes_csv: String,
    pub edges_csv: String,
    pub demand_csv: String,
    pub config: RunConfig,
}

const BASE_LAT: f64 = 40.75;
const BASE_LON: f64 = -73.99;
const METERS_PER_DEG_LAT: f64 = 111_320.0;

/// Square street grid: boundary streets are two-way, interior streets are
/// one-way with alternating directions.
pub fn grid_city(spec: &GridSpec) -> GridCity {
    let n = spec.size;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dlat = spec.block_m / METERS_PER_DEG_LAT;
    let dlon = spec.block_m / (METERS_PER_DEG_LAT * BASE_LAT.to_radians().cos());
    let id = |row: usize, col: usize| row * n + col;

    let mut nodes_csv = String::from("id,lat,lon\n");
    for row in 0..n {
        for col in 0..n {
            let lat = BASE_LAT + row as f64 * dlat;
            let lon = BASE_LON + col as f64 * dlon;
            nodes_csv.push_str(&format!("{},{lat:.7},{lon:.7}\n", id(row, col)));
        }
    }

    // (street is two-way, forward direction) for rows then columns
    let direction = |k: usize| -> (bool, bool) { (k == 0 || k == n - 1, k % 2 == 1) };
    let mut pairs = Vec::new();
    for row in 0..n {
        let (two_way, east) = direction(row);
        for col in 0..n - 1 {
            let (a, b) = (id(row, col), id(row, col + 1));
            if two_way || east {
                pairs.push((a, b));
            }
            if two_way || !east {
                pairs.push((b, a));
            }
        }
    }
    for col in 0..n {
        let (two_way, north) = direction(col);
        for row in 0..n - 1 {
            let (a, b) = (id(row, col), id(row + 1, col));
            if two_way || north {
                pairs.push((a, b));
            }
            if two_way || !north {
                pairs.push((b, a));
            }
        }
    }
    pairs.sort_unstable();

    let fare_per_meter = 0.004;
    let cost_per_meter = 0.0015;
    let mut edges_csv = String::from("src,dst,travel_time_s,length_m,capacity,build_cost,beta\n");
    for &(a, b) in &pairs {
        let speed: f64 = rng.gen_range(7.0..13.0);
        let length = spec.block_m;
        let travel_time = (length / speed * 10.0).round() / 10.0;
        let capacity = rng.gen_range(3..=8) as f64 * 5.0;
        let build_cost = (rng.gen_range(0.8..1.2) * length / 100.0 * 100.0).round() / 100.0;
        let beta = ((fare_per_meter - cost_per_meter) * length * rng.gen_range(0.6..1.4) * 1000.0).round() / 1000.0;
        edges_csv.push_str(&format!("{a},{b},{travel_time},{length},{capacity},{build_cost},{beta}\n"));
    }

    let mut ods: Vec<(usize, usize)> = (0..n * n)
        .flat_map(|a| (0..n * n).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            let (ra, ca, rb, cb) = (a / n, a % n, b / n, b % n);
            a != b && ra.abs_diff(rb) + ca.abs_diff(cb) >= 3
        })
        .collect();
    ods.shuffle(&mut rng);
    ods.truncate(spec.demands);
    ods.sort_unstable();
    let mut demand_csv = String::from("origin,dest,alpha\n");
    for (o, d) in ods {
        demand_csv.push_str(&format!("{o},{d},{}\n", rng.gen_range(5..=30)));
    }

    let config = RunConfig {
        budget: 300.0,
        fleet_time: 60_000.0,
        fare_per_meter,
        cost_per_meter,
        seed: spec.seed,
        ..RunConfig::default()
    };
    GridCity {
        nodes_csv,
        edges_csv,
        demand_csv,
        config,
    }
}

/// Writes the CSV files and a `config.toml` referring to them.
pub fn write_grid_city(spec: &GridSpec, dir: &Path) -> Result<RunConfig> {
    let city = grid_city(spec);
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("nodes.csv"), &city.nodes_csv)?;
    std::fs::write(dir.join("edges.csv"), &city.edges_csv)?;
    std::fs::write(dir.join("demand.csv"), &city.demand_csv)?;
    std::fs::write(dir.join("config.toml"), city.config.to_toml()?)?;
    let mut cfg = city.config;
    cfg.resolve_paths(dir);
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_shape_and_determinism() {
        let spec = GridSpec::default();
        let a = grid_city(&spec);
        let b = grid_city(&spec);
        assert_eq!(a.edges_csv, b.edges_csv);
        assert_eq!(a.demand_csv, b.demand_csv);
        assert_eq!(a.nodes_csv.lines().count(), 1 + 64);
        // 2 boundary streets x 7 blocks x 2 directions + 6 interior x 7, per axis
        assert_eq!(a.edges_csv.lines().count(), 1 + 2 * (28 + 42));
        assert_eq!(a.demand_csv.lines().count(), 1 + 24);
        let other = grid_city(&GridSpec { seed: 8, ..spec });
        assert_ne!(a.edges_csv, other.edges_csv);
    }
}
