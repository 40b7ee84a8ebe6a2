//! Solution file: instrumented edges, path flows, aggregates and run metadata.

use std::collections::BTreeMap;

use amod_core::colgen::{CgResult, IterationLog};
use amod_core::master::{Column, Instance};
use amod_core::mip::MipStatus;
use serde::{Deserialize, Serialize};

use crate::config::{ColgenConfig, MipConfig, RobustSpec, RunConfig};
use crate::load::{ExternalId, LoadedInstance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionFile {
    pub status: MipStatus,
    pub converged: bool,
    pub j_lp: f64,
    pub j_ip: f64,
    pub gap: f64,
    pub mip_bound: f64,
    pub mip_nodes: usize,
    pub iterations: usize,
    pub instrumented_edges: Vec<EdgeRef>,
    pub paths: Vec<PathFlow>,
    pub edge_flows: Vec<EdgeFlow>,
    pub usage: Usage,
    pub dropped_ods: Vec<OdRef>,
    pub iteration_log: Vec<IterationLog>,
    pub config: ConfigEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeRef {
    /// Row index in edges.csv.
    pub edge: usize,
    pub src: ExternalId,
    pub dst: ExternalId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdRef {
    pub origin: ExternalId,
    pub dest: ExternalId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFlow {
    pub origin: ExternalId,
    pub dest: ExternalId,
    pub nodes: Vec<ExternalId>,
    pub edges: Vec<usize>,
    pub flow: f64,
    pub travel_time: f64,
    pub profit_rate: f64,
    pub left_turns: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeFlow {
    pub edge: usize,
    pub src: ExternalId,
    pub dst: ExternalId,
    pub flow: f64,
    pub capacity: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub profit: f64,
    pub budget: f64,
    pub fleet_time: f64,
    pub left_turns: f64,
    pub served: f64,
}

/// Solver-relevant settings; file locations are left out so outputs do not
/// depend on where the inputs live.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub budget: f64,
    pub fleet_time: f64,
    pub detour_factor: f64,
    pub explicit_time_limits: bool,
    pub left_turn_budget: Option<f64>,
    pub left_turn_band: [f64; 2],
    pub fare_per_meter: f64,
    pub cost_per_meter: f64,
    pub robust: Option<RobustSpec>,
    pub colgen: ColgenConfig,
    pub mip: MipConfig,
}

impl ConfigEcho {
    pub fn new(cfg: &RunConfig) -> Self {
        Self {
            budget: cfg.budget,
            fleet_time: cfg.fleet_time,
            detour_factor: cfg.detour_factor,
            explicit_time_limits: cfg.time_limits.is_some(),
            left_turn_budget: cfg.effective_left_turn_budget(),
            left_turn_band: cfg.left_turn_band,
            fare_per_meter: cfg.fare_per_meter,
            cost_per_meter: cfg.cost_per_meter,
            robust: (!cfg.robust.is_nominal()).then(|| RobustSpec {
                time_radius_file: None,
                demand_radius_file: None,
                ..cfg.robust.clone()
            }),
            // parallelism does not change results
            colgen: ColgenConfig {
                parallel_pricing: false,
                ..cfg.colgen.clone()
            },
            mip: cfg.mip.clone(),
        }
    }
}

/// Aggregates of a set of path flows on `inst`.
pub fn usage_of(inst: &Instance, columns: &[Column], flows: &[f64], x: &[bool]) -> Usage {
    let mut u = Usage::default();
    for (c, &f) in columns.iter().zip(flows) {
        u.profit += c.profit * f;
        u.fleet_time += c.travel_time * f;
        u.left_turns += c.left_turns as f64 * f;
        u.served += f;
    }
    u.budget = x
        .iter()
        .enumerate()
        .filter(|(_, &on)| on)
        .map(|(e, _)| inst.network.edge(e).build_cost)
        .sum();
    u
}

/// `y_e = sum of path flows through e`, by edge id.
pub fn edge_loads(inst: &Instance, columns: &[Column], flows: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; inst.network.edge_count()];
    for (c, &f) in columns.iter().zip(flows) {
        for &e in &c.edges {
            y[e] += f;
        }
    }
    y
}

impl SolutionFile {
    pub fn build(cfg: &RunConfig, loaded: &LoadedInstance, inst: &Instance, res: &CgResult) -> Self {
        let net = &inst.network;
        let ext = |v| loaded.external(v);
        let (columns, flows): (Vec<Column>, Vec<f64>) = res
            .columns
            .iter()
            .zip(&res.ip.flows)
            .filter(|(_, &f)| f > 0.0)
            .map(|(c, &f)| (c.clone(), f))
            .unzip();
        let paths = columns
            .iter()
            .zip(&flows)
            .map(|(c, &flow)| {
                let d = inst.demands[c.od];
                PathFlow {
                    origin: ext(d.origin),
                    dest: ext(d.dest),
                    nodes: c.nodes.iter().map(|&v| ext(v)).collect(),
                    edges: c.edges.clone(),
                    flow,
                    travel_time: c.travel_time,
                    profit_rate: c.profit,
                    left_turns: c.left_turns,
                }
            })
            .collect();
        let y = edge_loads(inst, &columns, &flows);
        let edge_flows = y
            .iter()
            .enumerate()
            .filter(|(_, &f)| f > 0.0)
            .map(|(e, &flow)| {
                let edge = net.edge(e);
                EdgeFlow {
                    edge: e,
                    src: ext(edge.src),
                    dst: ext(edge.dst),
                    flow,
                    capacity: edge.capacity,
                }
            })
            .collect();
        let instrumented_edges = res
            .ip
            .x
            .iter()
            .enumerate()
            .filter(|(_, &on)| on)
            .map(|(e, _)| EdgeRef {
                edge: e,
                src: ext(net.edge(e).src),
                dst: ext(net.edge(e).dst),
            })
            .collect();
        let dropped_ods = res
            .dropped
            .iter()
            .map(|&k| OdRef {
                origin: ext(inst.demands[k].origin),
                dest: ext(inst.demands[k].dest),
            })
            .collect();
        Self {
            status: res.ip.status,
            converged: res.converged,
            j_lp: res.j_lp,
            j_ip: res.j_ip,
            gap: res.gap,
            mip_bound: res.ip.bound,
            mip_nodes: res.ip.nodes,
            iterations: res.iterations,
            instrumented_edges,
            paths,
            edge_flows,
            usage: usage_of(inst, &columns, &flows, &res.ip.x),
            dropped_ods,
            iteration_log: res.log.clone(),
            config: ConfigEcho::new(cfg),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("solution serializes");
        s.push('\n');
        s
    }

    pub fn iterations_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.iteration_log {
            w.serialize(row).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
    }

    /// Flow per OD keyed by external ids.
    pub fn served_by_od(&self) -> BTreeMap<(ExternalId, ExternalId), f64> {
        let mut m = BTreeMap::new();
        for p in &self.paths {
            *m.entry((p.origin, p.dest)).or_insert(0.0) += p.flow;
        }
        m
    }
}
