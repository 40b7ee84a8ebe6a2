//! Seeded random networks and instances for oracle comparisons.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::master::{Demand, Instance, TimeLimits};
use crate::network::{dijkstra, Edge, Network, Node};

#[derive(Debug, Clone, PartialEq)]
pub struct RandomNetworkSpec {
    pub nodes: std::ops::RangeInclusive<usize>,
    pub edges: std::ops::RangeInclusive<usize>,
    /// Only edges from lower to higher node id.
    pub acyclic: bool,
    pub travel_time: (f64, f64),
    pub capacity: (f64, f64),
    pub build_cost: (f64, f64),
    pub profit_rate: (f64, f64),
}

impl Default for RandomNetworkSpec {
    fn default() -> Self {
        Self {
            nodes: 3..=12,
            edges: 3..=30,
            acyclic: false,
            travel_time: (1.0, 20.0),
            capacity: (1.0, 10.0),
            build_cost: (1.0, 5.0),
            profit_rate: (0.1, 3.0),
        }
    }
}

/// Coordinates are scattered over roughly 1 km around a fixed point.
pub fn random_network<R: Rng>(rng: &mut R, spec: &RandomNetworkSpec) -> Network {
    let n = rng.gen_range(spec.nodes.clone());
    let nodes: Vec<Node> = (0..n)
        .map(|id| Node {
            id,
            lat: 40.75 + rng.gen_range(-0.005..0.005),
            lon: -73.98 + rng.gen_range(-0.005..0.005),
        })
        .collect();
    let mut pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| if spec.acyclic { a < b } else { a != b })
        .collect();
    pairs.shuffle(rng);
    let lo = (*spec.edges.start()).min(pairs.len());
    let hi = (*spec.edges.end()).min(pairs.len());
    let m = rng.gen_range(lo..=hi);
    pairs.truncate(m);
    pairs.sort_unstable();
    let mut uniform = |(a, b): (f64, f64)| if a == b { a } else { rng.gen_range(a..b) };
    let edges = pairs
        .into_iter()
        .enumerate()
        .map(|(id, (src, dst))| {
            let travel_time = uniform(spec.travel_time);
            Edge {
                id,
                src,
                dst,
                travel_time,
                length: 10.0 * travel_time,
                capacity: uniform(spec.capacity),
                build_cost: uniform(spec.build_cost),
                profit_rate: uniform(spec.profit_rate),
            }
        })
        .collect();
    Network::new(nodes, edges).expect("generated network is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomInstanceSpec {
    pub network: RandomNetworkSpec,
    pub demands: std::ops::RangeInclusive<usize>,
    pub alpha: (f64, f64),
    pub detour_factors: Vec<f64>,
    /// Budget as a fraction of the total build cost.
    pub budget_fraction: (f64, f64),
    /// Fleet time as a fraction of serving every demand on its shortest path.
    pub fleet_fraction: (f64, f64),
    /// Unlimited time limits instead of a detour factor.
    pub unlimited_time: bool,
}

impl Default for RandomInstanceSpec {
    fn default() -> Self {
        Self {
            network: RandomNetworkSpec::default(),
            demands: 1..=6,
            alpha: (1.0, 10.0),
            detour_factors: vec![1.2, 1.5, 2.0],
            budget_fraction: (0.2, 1.0),
            fleet_fraction: (0.3, 1.5),
            unlimited_time: false,
        }
    }
}

/// Draws networks until at least one reachable pair exists, then picks distinct reachable ODs.
pub fn random_instance<R: Rng>(rng: &mut R, spec: &RandomInstanceSpec) -> Instance {
    loop {
        let net = random_network(rng, &spec.network);
        let n = net.node_count();
        let dist: Vec<Vec<f64>> = (0..n).map(|s| dijkstra(&net, s).unwrap()).collect();
        let mut reachable: Vec<(usize, usize)> = (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .filter(|&(a, b)| a != b && dist[a][b].is_finite())
            .collect();
        if reachable.is_empty() {
            continue;
        }
        reachable.shuffle(rng);
        let k = rng.gen_range(spec.demands.clone()).min(reachable.len());
        let mut ods = reachable[..k].to_vec();
        ods.sort_unstable();
        let demands: Vec<Demand> = ods
            .iter()
            .map(|&(origin, dest)| Demand {
                origin,
                dest,
                alpha: rng.gen_range(spec.alpha.0..=spec.alpha.1),
            })
            .collect();
        let total_cost: f64 = net.edges().iter().map(|e| e.build_cost).sum();
        let shortest_load: f64 = demands
            .iter()
            .map(|d| d.alpha * dist[d.origin][d.dest])
            .sum();
        let budget = total_cost * rng.gen_range(spec.budget_fraction.0..=spec.budget_fraction.1);
        let fleet = shortest_load * rng.gen_range(spec.fleet_fraction.0..=spec.fleet_fraction.1);
        let limits = if spec.unlimited_time {
            TimeLimits::Unlimited
        } else {
            TimeLimits::Detour(*spec.detour_factors.choose(rng).unwrap())
        };
        return Instance::new(net, demands, budget, fleet, limits).expect("generated instance is valid");
    }
}
