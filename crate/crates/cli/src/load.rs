//! CSV instance loading.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use amod_core::master::{apply_robust, Demand, Instance, RobustConfig, TimeLimits};
use amod_core::network::{Edge, Network, Node, NodeId, TurnBand};
use log::warn;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use thiserror::Error;

use crate::config::RunConfig;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: u64,
        message: String,
    },
    #[error("{file}: {source}")]
    Io {
        file: String,
        source: std::io::Error,
    },
    #[error("invalid instance: {0}")]
    Validation(String),
}

/// External node ids as written in `nodes.csv`.
pub type ExternalId = i64;

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedInstance {
    /// Nominal instance.
    pub instance: Instance,
    /// External id of each internal node index.
    pub node_ids: Vec<ExternalId>,
    pub warnings: Vec<String>,
    /// Box radii when configured, already validated.
    pub robust: Option<RobustConfig>,
}

impl LoadedInstance {
    /// The instance actually solved: the robust counterpart when radii are present.
    pub fn effective(&self) -> Result<Instance, LoadError> {
        match &self.robust {
            Some(rc) => apply_robust(&self.instance, rc).map_err(|e| LoadError::Validation(e.to_string())),
            None => Ok(self.instance.clone()),
        }
    }

    pub fn external(&self, v: NodeId) -> ExternalId {
        self.node_ids[v]
    }
}

#[derive(Deserialize)]
struct NodeRow {
    id: ExternalId,
    lat: f64,
    lon: f64,
}

#[derive(Deserialize)]
struct EdgeRow {
    src: ExternalId,
    dst: ExternalId,
    travel_time_s: f64,
    length_m: f64,
    capacity: f64,
    build_cost: f64,
    #[serde(default)]
    beta: Option<f64>,
}

#[derive(Deserialize)]
struct DemandRow {
    origin: ExternalId,
    dest: ExternalId,
    alpha: f64,
}

#[derive(Deserialize)]
struct LimitRow {
    origin: ExternalId,
    dest: ExternalId,
    max_time_s: f64,
}

#[derive(Deserialize)]
struct EdgeRadiusRow {
    edge: usize,
    radius_s: f64,
}

#[derive(Deserialize)]
struct DemandRadiusRow {
    origin: ExternalId,
    dest: ExternalId,
    radius: f64,
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<(u64, T)>, LoadError> {
    let file = path.display().to_string();
    let parse = |line: u64, message: String| LoadError::Parse {
        file: file.clone(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => LoadError::Io {
                file: file.clone(),
                source,
            },
            other => parse(1, format!("{other:?}")),
        })?;
    let headers = reader.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let row = rec.deserialize::<T>(Some(&headers)).map_err(|e| {
            let message = match e.kind() {
                csv::ErrorKind::Deserialize { err, .. } => match err.field() {
                    Some(f) => format!("field {} ({}): {}", f + 1, &headers[f as usize], err.kind()),
                    None => err.kind().to_string(),
                },
                _ => e.to_string(),
            };
            parse(line, message)
        })?;
        out.push((line, row));
    }
    Ok(out)
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> LoadError {
    LoadError::Parse {
        file: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Loads and validates the instance described by `cfg`.
pub fn load_instance(cfg: &RunConfig) -> Result<LoadedInstance, LoadError> {
    let mut warnings = Vec::new();
    let mut note = |w: String| {
        warn!("{w}");
        warnings.push(w);
    };

    let node_rows: Vec<(u64, NodeRow)> = read_rows(&cfg.nodes)?;
    let mut index: HashMap<ExternalId, NodeId> = HashMap::new();
    let mut nodes = Vec::with_capacity(node_rows.len());
    let mut node_ids = Vec::with_capacity(node_rows.len());
    for (line, r) in node_rows {
        if index.insert(r.id, nodes.len()).is_some() {
            return Err(parse_err(&cfg.nodes, line, format!("duplicate node id {}", r.id)));
        }
        nodes.push(Node {
            id: nodes.len(),
            lat: r.lat,
            lon: r.lon,
        });
        node_ids.push(r.id);
    }
    let lookup = |path: &Path, line: u64, id: ExternalId| {
        index
            .get(&id)
            .copied()
            .ok_or_else(|| parse_err(path, line, format!("unknown node id {id}")))
    };

    let edge_rows: Vec<(u64, EdgeRow)> = read_rows(&cfg.edges)?;
    let mut edges = Vec::with_capacity(edge_rows.len());
    for (line, r) in edge_rows {
        let profit_rate = match r.beta {
            Some(b) => b,
            None => (cfg.fare_per_meter - cfg.cost_per_meter) * r.length_m,
        };
        edges.push(Edge {
            id: edges.len(),
            src: lookup(&cfg.edges, line, r.src)?,
            dst: lookup(&cfg.edges, line, r.dst)?,
            travel_time: r.travel_time_s,
            length: r.length_m,
            capacity: r.capacity,
            build_cost: r.build_cost,
            profit_rate,
        });
    }
    let network = Network::new(nodes, edges).map_err(|e| LoadError::Validation(e.to_string()))?;

    let demand_rows: Vec<(u64, DemandRow)> = read_rows(&cfg.demand)?;
    let mut merged: BTreeMap<(NodeId, NodeId), (f64, u64)> = BTreeMap::new();
    let mut order: Vec<(NodeId, NodeId)> = Vec::new();
    for (line, r) in demand_rows {
        let o = lookup(&cfg.demand, line, r.origin)?;
        let d = lookup(&cfg.demand, line, r.dest)?;
        if o == d {
            note(format!("{}:{line}: origin equals destination, row skipped", cfg.demand.display()));
            continue;
        }
        if !(r.alpha > 0.0 && r.alpha.is_finite()) {
            note(format!(
                "{}:{line}: alpha must be positive, got {}; row skipped",
                cfg.demand.display(),
                r.alpha
            ));
            continue;
        }
        match merged.get_mut(&(o, d)) {
            Some((alpha, first)) => {
                note(format!(
                    "{}:{line}: duplicate OD {}->{} (first on line {first}); demands summed",
                    cfg.demand.display(),
                    r.origin,
                    r.dest
                ));
                *alpha += r.alpha;
            }
            None => {
                merged.insert((o, d), (r.alpha, line));
                order.push((o, d));
            }
        }
    }
    let demands: Vec<Demand> = order
        .iter()
        .map(|&(origin, dest)| Demand {
            origin,
            dest,
            alpha: merged[&(origin, dest)].0,
        })
        .collect();

    let limits = match &cfg.time_limits {
        None => TimeLimits::Detour(cfg.detour_factor),
        Some(path) => {
            let mut table = HashMap::new();
            for (line, r) in read_rows::<LimitRow>(path)? {
                let key = (lookup(path, line, r.origin)?, lookup(path, line, r.dest)?);
                table.insert(key, r.max_time_s);
            }
            let detour = Instance::new(
                network.clone(),
                demands.clone(),
                cfg.budget,
                cfg.fleet_time,
                TimeLimits::Detour(cfg.detour_factor),
            )
            .map_err(|e| LoadError::Validation(e.to_string()))?;
            let v = demands
                .iter()
                .zip(&detour.time_limits)
                .map(|(d, &fallback)| {
                    table.get(&(d.origin, d.dest)).copied().unwrap_or_else(|| {
                        note(format!(
                            "no time limit for OD {}->{}; using detour factor {}",
                            node_ids[d.origin], node_ids[d.dest], cfg.detour_factor
                        ));
                        fallback
                    })
                })
                .collect();
            TimeLimits::Explicit(v)
        }
    };

    let [lo, hi] = cfg.left_turn_band;
    let instance = Instance::new(network, demands, cfg.budget, cfg.fleet_time, limits)
        .map_err(|e| LoadError::Validation(e.to_string()))?
        .with_left_turn_budget(cfg.effective_left_turn_budget())
        .with_turn_band(TurnBand {
            min_deg: lo,
            max_deg: hi,
        });

    let robust = if cfg.robust.is_nominal() {
        None
    } else {
        let mut rc = RobustConfig::uniform(&instance, cfg.robust.time_fraction, cfg.robust.demand_fraction);
        if let Some(path) = &cfg.robust.time_radius_file {
            rc.time_radius = vec![0.0; instance.network.edge_count()];
            for (line, r) in read_rows::<EdgeRadiusRow>(path)? {
                let slot = rc
                    .time_radius
                    .get_mut(r.edge)
                    .ok_or_else(|| parse_err(path, line, format!("unknown edge {}", r.edge)))?;
                *slot = r.radius_s;
            }
        }
        if let Some(path) = &cfg.robust.demand_radius_file {
            rc.demand_radius = vec![0.0; instance.demands.len()];
            for (line, r) in read_rows::<DemandRadiusRow>(path)? {
                let key = (lookup(path, line, r.origin)?, lookup(path, line, r.dest)?);
                let k = instance
                    .demands
                    .iter()
                    .position(|d| (d.origin, d.dest) == key)
                    .ok_or_else(|| parse_err(path, line, "no such OD in the demand file"))?;
                rc.demand_radius[k] = r.radius;
            }
        }
        apply_robust(&instance, &rc).map_err(|e| LoadError::Validation(e.to_string()))?;
        (!rc.is_zero()).then_some(rc)
    };

    Ok(LoadedInstance {
        instance,
        node_ids,
        warnings,
        robust,
    })
}
