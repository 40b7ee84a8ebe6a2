//! Instance model, restricted master LP, link-based LP and robust transforms.

use std::collections::HashSet;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{LinearProgram, LpSolution, LpStatus, RowId, VarId};
use crate::network::{
    dijkstra, within_time_limit, EdgeId, Network, NetworkError, NodeId, TurnBand,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MasterError {
    #[error("demand {index}: {reason}")]
    InvalidDemand { index: usize, reason: String },
    #[error("{0} must be finite and nonnegative, got {1}")]
    InvalidBudget(&'static str, f64),
    #[error("time limit table has {got} entries for {expected} demands")]
    TimeLimitCount { expected: usize, got: usize },
    #[error("invalid time limit {1} for demand {0}")]
    InvalidTimeLimit(usize, f64),
    #[error("detour factor must be >= 1, got {0}")]
    InvalidDetour(f64),
    #[error("column {column} is not admissible for demand {od}: {reason}")]
    InadmissiblePath {
        column: usize,
        od: usize,
        reason: String,
    },
    #[error("LP solution is not optimal ({0:?})")]
    NotOptimal(LpStatus),
    #[error("link formulation requires unlimited time limits and no left-turn budget")]
    PathConstraintsActive,
    #[error("robust radii must be finite and nonnegative ({0})")]
    InvalidRadius(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Demand {
    pub origin: NodeId,
    pub dest: NodeId,
    /// Travelers over the planning horizon.
    pub alpha: f64,
}

/// How per-OD travel-time limits are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeLimits {
    /// `factor * shortest o-d travel time`.
    Detour(f64),
    /// One limit per demand, in demand order.
    Explicit(Vec<f64>),
    Unlimited,
}

pub const DEFAULT_DETOUR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub network: Network,
    pub demands: Vec<Demand>,
    /// Instrumentation budget.
    pub budget: f64,
    /// Fleet-time budget, vehicle-seconds.
    pub fleet_time: f64,
    /// Resolved time limit per demand; `+inf` means unconstrained.
    pub time_limits: Vec<f64>,
    pub left_turn_budget: Option<f64>,
    pub turn_band: TurnBand,
}

impl Instance {
    pub fn new(
        network: Network,
        demands: Vec<Demand>,
        budget: f64,
        fleet_time: f64,
        limits: TimeLimits,
    ) -> Result<Self, MasterError> {
        for (name, v) in [("budget", budget), ("fleet time", fleet_time)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(MasterError::InvalidBudget(name, v));
            }
        }
        let n = network.node_count();
        for (index, d) in demands.iter().enumerate() {
            let reason = if d.origin >= n || d.dest >= n {
                Some("unknown node".to_string())
            } else if d.origin == d.dest {
                Some("origin equals destination".to_string())
            } else if !(d.alpha > 0.0 && d.alpha.is_finite()) {
                Some(format!("alpha must be positive, got {}", d.alpha))
            } else {
                None
            };
            if let Some(reason) = reason {
                return Err(MasterError::InvalidDemand { index, reason });
            }
        }
        let time_limits = match limits {
            TimeLimits::Unlimited => vec![f64::INFINITY; demands.len()],
            TimeLimits::Explicit(v) => {
                if v.len() != demands.len() {
                    return Err(MasterError::TimeLimitCount {
                        expected: demands.len(),
                        got: v.len(),
                    });
                }
                for (i, &m) in v.iter().enumerate() {
                    if m.is_nan() || m <= 0.0 {
                        return Err(MasterError::InvalidTimeLimit(i, m));
                    }
                }
                v
            }
            TimeLimits::Detour(gamma) => {
                if !(gamma >= 1.0 && gamma.is_finite()) {
                    return Err(MasterError::InvalidDetour(gamma));
                }
                let mut cache: Vec<Option<Vec<f64>>> = vec![None; n];
                demands
                    .iter()
                    .map(|d| {
                        let dist = match &cache[d.origin] {
                            Some(dist) => dist,
                            None => {
                                let dist = dijkstra(&network, d.origin)?;
                                cache[d.origin].insert(dist)
                            }
                        };
                        Ok(gamma * dist[d.dest])
                    })
                    .collect::<Result<Vec<f64>, NetworkError>>()?
            }
        };
        Ok(Self {
            network,
            demands,
            budget,
            fleet_time,
            time_limits,
            left_turn_budget: None,
            turn_band: TurnBand::default(),
        })
    }

    pub fn with_left_turn_budget(mut self, lt: Option<f64>) -> Self {
        self.left_turn_budget = lt;
        self
    }

    pub fn with_turn_band(mut self, band: TurnBand) -> Self {
        self.turn_band = band;
        self
    }
}

/// A path column for one demand, with cached attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub od: usize,
    pub edges: Vec<EdgeId>,
    pub nodes: Vec<NodeId>,
    pub travel_time: f64,
    pub profit: f64,
    pub left_turns: u32,
}

impl Column {
    pub fn new(inst: &Instance, od: usize, edges: Vec<EdgeId>) -> Self {
        let net = &inst.network;
        Self {
            od,
            nodes: net.path_nodes(&edges),
            travel_time: net.path_travel_time(&edges),
            profit: net.path_profit(&edges),
            left_turns: net.left_turns(&edges, inst.turn_band),
            edges,
        }
    }

    /// Why this column is not admissible for its demand, if it is not.
    pub fn admissibility_issue(&self, inst: &Instance) -> Option<String> {
        let net = &inst.network;
        let Some(d) = inst.demands.get(self.od) else {
            return Some("unknown demand".into());
        };
        if self.edges.is_empty() {
            return Some("empty path".into());
        }
        if self.edges.iter().any(|&e| e >= net.edge_count()) {
            return Some("unknown edge".into());
        }
        if self
            .edges
            .windows(2)
            .any(|w| net.edge(w[0]).dst != net.edge(w[1]).src)
        {
            return Some("edges are not consecutive".into());
        }
        let nodes = net.path_nodes(&self.edges);
        if nodes.first() != Some(&d.origin) || nodes.last() != Some(&d.dest) {
            return Some("wrong endpoints".into());
        }
        let mut seen = HashSet::new();
        if !nodes.iter().all(|v| seen.insert(*v)) {
            return Some("not elementary".into());
        }
        let t = net.path_travel_time(&self.edges);
        if !within_time_limit(t, inst.time_limits[self.od]) {
            return Some(format!(
                "travel time {t} exceeds limit {}",
                inst.time_limits[self.od]
            ));
        }
        None
    }
}

/// Current column set, rejecting duplicate node sequences per demand.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ColumnPool {
    columns: Vec<Column>,
    keys: HashSet<(usize, Vec<NodeId>)>,
}

impl ColumnPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if an identical path for the same demand is already present.
    pub fn insert(&mut self, col: Column) -> bool {
        if !self.keys.insert((col.od, col.nodes.clone())) {
            return false;
        }
        self.columns.push(col);
        true
    }

    pub fn contains(&self, od: usize, nodes: &[NodeId]) -> bool {
        self.keys.contains(&(od, nodes.to_vec()))
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Pool with columns ordered by demand, then node sequence.
    pub fn canonical(&self) -> ColumnPool {
        let mut cols = self.columns.clone();
        cols.sort_by(|a, b| a.od.cmp(&b.od).then_with(|| a.nodes.cmp(&b.nodes)));
        let mut out = ColumnPool::new();
        for c in cols {
            out.insert(c);
        }
        out
    }

    pub fn extend_from(&mut self, other: &ColumnPool) {
        for c in other.columns() {
            self.insert(c.clone());
        }
    }
}

/// Which edges receive an instrumentation variable and capacity row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeScope {
    All,
    /// Only edges traversed by some column; the rest carry no flow and stay uninstrumented.
    UsedByColumns,
}

/// Variable and row identities of an assembled master LP.
#[derive(Debug, Clone, PartialEq)]
pub struct RmpLayout {
    pub path_vars: Vec<VarId>,
    pub x_vars: Vec<Option<VarId>>,
    pub demand_rows: Vec<RowId>,
    pub capacity_rows: Vec<Option<RowId>>,
    pub budget_row: RowId,
    pub fleet_row: RowId,
    pub left_turn_row: Option<RowId>,
}

impl RmpLayout {
    pub fn binary_vars(&self) -> Vec<VarId> {
        self.x_vars.iter().flatten().copied().collect()
    }
}

/// Restricted master LP over `columns` (LP relaxation of the path formulation).
pub fn build_rmp(
    inst: &Instance,
    columns: &[Column],
    scope: EdgeScope,
) -> Result<(LinearProgram, RmpLayout), MasterError> {
    for (i, c) in columns.iter().enumerate() {
        if let Some(reason) = c.admissibility_issue(inst) {
            return Err(MasterError::InadmissiblePath {
                column: i,
                od: c.od,
                reason,
            });
        }
    }
    let net = &inst.network;
    let ne = net.edge_count();
    let mut lp = LinearProgram::new();
    let path_vars: Vec<VarId> = columns
        .iter()
        .map(|c| lp.add_var(c.profit, 0.0, f64::INFINITY))
        .collect();
    let mut used = vec![scope == EdgeScope::All; ne];
    let mut incidence: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); ne];
    for (c, &var) in columns.iter().zip(&path_vars) {
        for &e in &c.edges {
            used[e] = true;
            incidence[e].push((var, 1.0));
        }
    }
    let x_vars: Vec<Option<VarId>> = (0..ne)
        .map(|e| used[e].then(|| lp.add_var(0.0, 0.0, 1.0)))
        .collect();

    let mut per_od: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); inst.demands.len()];
    for (c, &var) in columns.iter().zip(&path_vars) {
        per_od[c.od].push((var, 1.0));
    }
    let demand_rows = per_od
        .into_iter()
        .zip(&inst.demands)
        .map(|(coeffs, d)| lp.add_row(coeffs, d.alpha))
        .collect();
    let capacity_rows = (0..ne)
        .map(|e| {
            x_vars[e].map(|x| {
                let mut coeffs = std::mem::take(&mut incidence[e]);
                coeffs.push((x, -net.edge(e).capacity));
                lp.add_row(coeffs, 0.0)
            })
        })
        .collect();
    let budget_row = lp.add_row(
        (0..ne)
            .filter_map(|e| x_vars[e].map(|x| (x, net.edge(e).build_cost)))
            .collect(),
        inst.budget,
    );
    let fleet_row = lp.add_row(
        columns
            .iter()
            .zip(&path_vars)
            .map(|(c, &v)| (v, c.travel_time))
            .collect(),
        inst.fleet_time,
    );
    let left_turn_row = inst.left_turn_budget.map(|lt| {
        lp.add_row(
            columns
                .iter()
                .zip(&path_vars)
                .filter(|(c, _)| c.left_turns > 0)
                .map(|(c, &v)| (v, c.left_turns as f64))
                .collect(),
            lt,
        )
    });
    Ok((
        lp,
        RmpLayout {
            path_vars,
            x_vars,
            demand_rows,
            capacity_rows,
            budget_row,
            fleet_row,
            left_turn_row,
        },
    ))
}

/// Master duals by role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Duals {
    /// Demand rows.
    pub v: Vec<f64>,
    /// Capacity rows by edge id; zero for edges without a row.
    pub u: Vec<f64>,
    /// Budget row.
    pub pi: f64,
    /// Fleet-time row.
    pub mu: f64,
    /// Left-turn row, absent when the instance has no left-turn budget.
    pub omega: Option<f64>,
    /// `x <= 1` bounds by edge id.
    pub delta: Vec<f64>,
}

impl Duals {
    pub fn zeros(inst: &Instance) -> Self {
        let ne = inst.network.edge_count();
        Self {
            v: vec![0.0; inst.demands.len()],
            u: vec![0.0; ne],
            pi: 0.0,
            mu: 0.0,
            omega: inst.left_turn_budget.map(|_| 0.0),
            delta: vec![0.0; ne],
        }
    }

    /// Dual objective of the master.
    pub fn objective(&self, inst: &Instance) -> f64 {
        let v: f64 = self
            .v
            .iter()
            .zip(&inst.demands)
            .map(|(v, d)| v * d.alpha)
            .sum();
        let lt = match (self.omega, inst.left_turn_budget) {
            (Some(w), Some(lt)) => w * lt,
            _ => 0.0,
        };
        v + inst.budget * self.pi + inst.fleet_time * self.mu + self.delta.iter().sum::<f64>() + lt
    }
}

pub fn extract_duals(sol: &LpSolution, layout: &RmpLayout) -> Result<Duals, MasterError> {
    if sol.status != LpStatus::Optimal {
        return Err(MasterError::NotOptimal(sol.status));
    }
    let y = |r: RowId| sol.row_duals[r].max(0.0);
    Ok(Duals {
        v: layout.demand_rows.iter().map(|&r| y(r)).collect(),
        u: layout
            .capacity_rows
            .iter()
            .map(|r| r.map_or(0.0, y))
            .collect(),
        pi: y(layout.budget_row),
        mu: y(layout.fleet_row),
        omega: layout.left_turn_row.map(y),
        delta: layout
            .x_vars
            .iter()
            .map(|x| x.map_or(0.0, |x| sol.bound_duals[x].max(0.0)))
            .collect(),
    })
}

/// Variable identities of the link-based LP.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkLayout {
    /// `[demand][edge]`.
    pub edge_flow_vars: Vec<Vec<VarId>>,
    pub served_vars: Vec<VarId>,
    pub x_vars: Vec<VarId>,
}

/// Link-based LP relaxation (per-OD edge flows with conservation), used as an oracle.
pub fn build_link_lp(inst: &Instance) -> Result<(LinearProgram, LinkLayout), MasterError> {
    if inst.left_turn_budget.is_some() || inst.time_limits.iter().any(|m| m.is_finite()) {
        return Err(MasterError::PathConstraintsActive);
    }
    let net = &inst.network;
    let ne = net.edge_count();
    let mut lp = LinearProgram::new();
    let edge_flow_vars: Vec<Vec<VarId>> = inst
        .demands
        .iter()
        .map(|_| {
            net.edges()
                .iter()
                .map(|e| lp.add_var(e.profit_rate, 0.0, f64::INFINITY))
                .collect()
        })
        .collect();
    let served_vars: Vec<VarId> = inst
        .demands
        .iter()
        .map(|d| lp.add_var(0.0, 0.0, d.alpha))
        .collect();
    let x_vars: Vec<VarId> = (0..ne).map(|_| lp.add_var(0.0, 0.0, 1.0)).collect();

    for (k, d) in inst.demands.iter().enumerate() {
        for v in 0..net.node_count() {
            let mut coeffs: Vec<(VarId, f64)> = Vec::new();
            for &e in net.out_edges(v) {
                coeffs.push((edge_flow_vars[k][e], 1.0));
            }
            for &e in net.in_edges(v) {
                coeffs.push((edge_flow_vars[k][e], -1.0));
            }
            if v == d.origin {
                coeffs.push((served_vars[k], -1.0));
            } else if v == d.dest {
                coeffs.push((served_vars[k], 1.0));
            }
            if coeffs.is_empty() {
                continue;
            }
            let neg = coeffs.iter().map(|&(j, a)| (j, -a)).collect();
            lp.add_row(coeffs, 0.0);
            lp.add_row(neg, 0.0);
        }
    }
    for e in 0..ne {
        let mut coeffs: Vec<(VarId, f64)> =
            edge_flow_vars.iter().map(|vars| (vars[e], 1.0)).collect();
        coeffs.push((x_vars[e], -net.edge(e).capacity));
        lp.add_row(coeffs, 0.0);
    }
    lp.add_row(
        x_vars
            .iter()
            .enumerate()
            .map(|(e, &x)| (x, net.edge(e).build_cost))
            .collect(),
        inst.budget,
    );
    lp.add_row(
        edge_flow_vars
            .iter()
            .flat_map(|vars| vars.iter().enumerate().map(|(e, &f)| (f, net.edge(e).travel_time)))
            .collect(),
        inst.fleet_time,
    );
    Ok((
        lp,
        LinkLayout {
            edge_flow_vars,
            served_vars,
            x_vars,
        },
    ))
}

/// Box-uncertainty radii.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustConfig {
    /// Seconds, by edge id.
    pub time_radius: Vec<f64>,
    /// Flow units, by demand index.
    pub demand_radius: Vec<f64>,
}

impl RobustConfig {
    pub fn zero(inst: &Instance) -> Self {
        Self {
            time_radius: vec![0.0; inst.network.edge_count()],
            demand_radius: vec![0.0; inst.demands.len()],
        }
    }

    /// Radii as fixed fractions of nominal travel times and demands.
    pub fn uniform(inst: &Instance, time_frac: f64, demand_frac: f64) -> Self {
        Self {
            time_radius: inst
                .network
                .edges()
                .iter()
                .map(|e| time_frac * e.travel_time)
                .collect(),
            demand_radius: inst.demands.iter().map(|d| demand_frac * d.alpha).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.time_radius.iter().chain(&self.demand_radius).all(|&r| r == 0.0)
    }
}

/// Deterministic counterpart: inflated travel times and tightened demand bounds.
///
/// Time limits stay at their resolved nominal values. Demands that tighten
/// below zero are clamped to zero with a warning.
pub fn apply_robust(inst: &Instance, rc: &RobustConfig) -> Result<Instance, MasterError> {
    if rc.time_radius.len() != inst.network.edge_count()
        || rc.demand_radius.len() != inst.demands.len()
    {
        return Err(MasterError::InvalidRadius("length mismatch".into()));
    }
    if rc
        .time_radius
        .iter()
        .chain(&rc.demand_radius)
        .any(|r| !(r.is_finite() && *r >= 0.0))
    {
        return Err(MasterError::InvalidRadius("negative or non-finite entry".into()));
    }
    let times: Vec<f64> = inst
        .network
        .edges()
        .iter()
        .zip(&rc.time_radius)
        .map(|(e, r)| e.travel_time + r)
        .collect();
    let network = inst.network.with_travel_times(&times)?;
    let demands = inst
        .demands
        .iter()
        .zip(&rc.demand_radius)
        .enumerate()
        .map(|(k, (d, r))| {
            let alpha = d.alpha - r;
            if alpha < 0.0 {
                warn!(
                    "robust demand bound for OD {}->{} (index {k}) is negative; clamped to 0",
                    d.origin, d.dest
                );
            }
            Demand {
                alpha: alpha.max(0.0),
                ..*d
            }
        })
        .collect();
    Ok(Instance {
        network,
        demands,
        ..inst.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lp::solve_lp;
    use crate::network::{Edge, Node};

    pub(crate) fn tri_net() -> Network {
        let nodes = (0..3)
            .map(|id| Node {
                id,
                lat: 0.0,
                lon: id as f64 * 1e-3,
            })
            .collect();
        let e = |id, src, dst, t: f64, beta| Edge {
            id,
            src,
            dst,
            travel_time: t,
            length: 100.0,
            capacity: 10.0,
            build_cost: 1.0,
            profit_rate: beta,
        };
        Network::new(
            nodes,
            vec![e(0, 0, 1, 10.0, 2.0), e(1, 1, 2, 5.0, 2.0), e(2, 0, 2, 12.0, 3.0)],
        )
        .unwrap()
    }

    #[test]
    fn rmp_row_count() {
        let inst = Instance::new(
            tri_net(),
            vec![
                Demand { origin: 0, dest: 2, alpha: 5.0 },
                Demand { origin: 0, dest: 1, alpha: 2.0 },
            ],
            10.0,
            1000.0,
            TimeLimits::Unlimited,
        )
        .unwrap();
        let (lp, layout) = build_rmp(&inst, &[], EdgeScope::All).unwrap();
        assert_eq!(lp.num_rows(), 7);
        assert!(layout.left_turn_row.is_none());
        let sol = solve_lp(&lp).unwrap();
        assert_eq!(sol.objective_value, 0.0);
        assert!(sol.primal.iter().all(|&v| v == 0.0));

        let inst = inst.with_left_turn_budget(Some(3.0));
        let cols = vec![Column::new(&inst, 0, vec![2])];
        let (lp, layout) = build_rmp(&inst, &cols, EdgeScope::All).unwrap();
        assert_eq!(lp.num_rows(), 8);
        assert!(layout.left_turn_row.is_some());
    }

    #[test]
    fn rejects_inadmissible_columns() {
        let inst = Instance::new(
            tri_net(),
            vec![Demand { origin: 0, dest: 2, alpha: 5.0 }],
            10.0,
            1000.0,
            TimeLimits::Explicit(vec![12.0]),
        )
        .unwrap();
        let slow = Column::new(&inst, 0, vec![0, 1]);
        assert!(matches!(
            build_rmp(&inst, &[slow], EdgeScope::All),
            Err(MasterError::InadmissiblePath { .. })
        ));
        let wrong = Column::new(&inst, 0, vec![0]);
        assert!(build_rmp(&inst, &[wrong], EdgeScope::All).is_err());
    }

    #[test]
    fn slack_demand_row_has_zero_dual() {
        // demand 5 but capacity 10 on the only path: capacity via x, demand binding
        // make the budget bind instead so the demand row is slack
        let inst = Instance::new(
            tri_net(),
            vec![Demand { origin: 0, dest: 2, alpha: 50.0 }],
            0.5,
            1e6,
            TimeLimits::Unlimited,
        )
        .unwrap();
        let cols = vec![Column::new(&inst, 0, vec![2])];
        let (lp, layout) = build_rmp(&inst, &cols, EdgeScope::All).unwrap();
        let sol = solve_lp(&lp).unwrap();
        assert!((sol.objective_value - 15.0).abs() < 1e-9);
        let duals = extract_duals(&sol, &layout).unwrap();
        assert_eq!(duals.v[0], 0.0);
        assert!(duals.omega.is_none());
        assert!((duals.objective(&inst) - sol.objective_value).abs() < 1e-9);
    }

    #[test]
    fn robust_transform() {
        let inst = Instance::new(
            tri_net(),
            vec![
                Demand { origin: 0, dest: 2, alpha: 5.0 },
                Demand { origin: 0, dest: 1, alpha: 1.0 },
            ],
            10.0,
            1000.0,
            TimeLimits::Detour(1.5),
        )
        .unwrap();
        let mut rc = RobustConfig::zero(&inst);
        rc.time_radius[0] = 2.0;
        rc.demand_radius = vec![1.0, 3.0];
        let rob = apply_robust(&inst, &rc).unwrap();
        assert_eq!(rob.network.edge(0).travel_time, 12.0);
        assert_eq!(rob.demands[0].alpha, 4.0);
        assert_eq!(rob.demands[1].alpha, 0.0);
        assert_eq!(rob.time_limits, inst.time_limits);
        assert_eq!(apply_robust(&inst, &RobustConfig::zero(&inst)).unwrap(), inst);
    }

    #[test]
    fn link_lp_single_edge_bottleneck() {
        let nodes = vec![Node { id: 0, lat: 0.0, lon: 0.0 }, Node { id: 1, lat: 0.0, lon: 1e-3 }];
        let net = Network::new(
            nodes,
            vec![Edge {
                id: 0,
                src: 0,
                dst: 1,
                travel_time: 10.0,
                length: 100.0,
                capacity: 4.0,
                build_cost: 1.0,
                profit_rate: 3.0,
            }],
        )
        .unwrap();
        for (alpha, r, expect) in [(5.0, 1000.0, 12.0), (2.0, 1000.0, 6.0), (5.0, 30.0, 9.0)] {
            let inst = Instance::new(
                net.clone(),
                vec![Demand { origin: 0, dest: 1, alpha }],
                1.0,
                r,
                TimeLimits::Unlimited,
            )
            .unwrap();
            let (lp, _) = build_link_lp(&inst).unwrap();
            let sol = solve_lp(&lp).unwrap();
            assert!((sol.objective_value - expect).abs() < 1e-9, "{alpha} {r}");
        }
        let inst = Instance::new(
            net,
            vec![Demand { origin: 0, dest: 1, alpha: 5.0 }],
            0.0,
            1000.0,
            TimeLimits::Unlimited,
        )
        .unwrap();
        let (lp, _) = build_link_lp(&inst).unwrap();
        assert!(solve_lp(&lp).unwrap().objective_value.abs() < 1e-12);
        let limited = Instance {
            time_limits: vec![100.0],
            ..inst
        };
        assert_eq!(build_link_lp(&limited), Err(MasterError::PathConstraintsActive));
    }
}
