//! Brute-force references: path enumeration, full path LP, flow decomposition
//! and exhaustive instrumentation scoring. Exponential by design.

use std::collections::VecDeque;

use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpSolution, LpStatus};
use crate::master::{build_rmp, Column, Duals, EdgeScope, Instance, MasterError};
use crate::network::{within_time_limit, EdgeId, Network, NodeId};
use crate::pricing::reduced_cost;

pub const DEFAULT_GUARD: usize = 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("{what} {size} exceeds the enumeration guard {guard}")]
    GuardExceeded {
        what: &'static str,
        size: usize,
        guard: usize,
    },
    #[error("flow conservation violated at node {node} (imbalance {imbalance})")]
    ConservationViolated { node: NodeId, imbalance: f64 },
    #[error("LP is {0:?}")]
    NotOptimal(LpStatus),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSetEnumeration {
    pub origin: NodeId,
    pub dest: NodeId,
    /// Edge sequences, ordered lexicographically by node sequence.
    pub paths: Vec<Vec<EdgeId>>,
}

/// Every elementary o-d path with travel time within `max_time`.
pub fn enumerate_admissible_paths(
    net: &Network,
    origin: NodeId,
    dest: NodeId,
    max_time: f64,
    guard: usize,
) -> Result<PathSetEnumeration, OracleError> {
    enumerate_admissible_paths_within(net, origin, dest, max_time, guard, None)
}

/// As [`enumerate_admissible_paths`], using only edges with `allowed[e]`.
pub fn enumerate_admissible_paths_within(
    net: &Network,
    origin: NodeId,
    dest: NodeId,
    max_time: f64,
    guard: usize,
    allowed: Option<&[bool]>,
) -> Result<PathSetEnumeration, OracleError> {
    if net.node_count() > guard {
        return Err(OracleError::GuardExceeded {
            what: "node count",
            size: net.node_count(),
            guard,
        });
    }
    let mut out = Vec::new();
    let mut visited = vec![false; net.node_count()];
    let mut stack = Vec::new();
    visited[origin] = true;
    dfs(net, origin, dest, 0.0, max_time, allowed, &mut visited, &mut stack, &mut out);
    // out-edges are sorted by target, so the DFS order is already lexicographic
    debug_assert!(out.windows(2).all(|w| net.path_nodes(&w[0]) < net.path_nodes(&w[1])));
    Ok(PathSetEnumeration {
        origin,
        dest,
        paths: out,
    })
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    net: &Network,
    v: NodeId,
    dest: NodeId,
    time: f64,
    max_time: f64,
    allowed: Option<&[bool]>,
    visited: &mut [bool],
    stack: &mut Vec<EdgeId>,
    out: &mut Vec<Vec<EdgeId>>,
) {
    if v == dest {
        out.push(stack.clone());
        return;
    }
    let mut edges: Vec<EdgeId> = net.out_edges(v).to_vec();
    edges.sort_by_key(|&e| net.edge(e).dst);
    for e in edges {
        if allowed.is_some_and(|a| !a[e]) {
            continue;
        }
        let w = net.edge(e).dst;
        let t = time + net.edge(e).travel_time;
        if visited[w] || !within_time_limit(t, max_time) {
            continue;
        }
        visited[w] = true;
        stack.push(e);
        dfs(net, w, dest, t, max_time, allowed, visited, stack, out);
        stack.pop();
        visited[w] = false;
    }
}

/// All admissible columns of the instance, by demand.
pub fn all_admissible_columns(inst: &Instance, guard: usize) -> Result<Vec<Column>, OracleError> {
    let mut cols = Vec::new();
    for (k, d) in inst.demands.iter().enumerate() {
        let set = enumerate_admissible_paths(&inst.network, d.origin, d.dest, inst.time_limits[k], guard)?;
        cols.extend(set.paths.into_iter().map(|p| Column::new(inst, k, p)));
    }
    Ok(cols)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FullLp {
    pub objective: f64,
    pub columns: Vec<Column>,
    pub solution: LpSolution,
}

/// Path LP over every admissible path.
pub fn solve_full_lp(inst: &Instance, guard: usize) -> Result<FullLp, OracleError> {
    let columns = all_admissible_columns(inst, guard)?;
    let (lp, _) = build_rmp(inst, &columns, EdgeScope::All)?;
    let solution = solve_lp(&lp)?;
    if solution.status != LpStatus::Optimal {
        return Err(OracleError::NotOptimal(solution.status));
    }
    Ok(FullLp {
        objective: solution.objective_value,
        columns,
        solution,
    })
}

/// Largest reduced cost over every admissible path of demand `od`.
pub fn max_reduced_cost(inst: &Instance, duals: &Duals, od: usize, guard: usize) -> Result<f64, OracleError> {
    let d = inst.demands[od];
    let set = enumerate_admissible_paths(&inst.network, d.origin, d.dest, inst.time_limits[od], guard)?;
    Ok(set
        .paths
        .iter()
        .map(|p| reduced_cost(&inst.network, p, duals, od, inst.turn_band))
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Best MILP value over the given columns, scoring each of the `2^|E|`
/// instrumentation patterns with an LP in the path flows.
pub fn exhaustive_milp(inst: &Instance, columns: &[Column], max_edges: usize) -> Result<f64, OracleError> {
    let ne = inst.network.edge_count();
    if ne > max_edges {
        return Err(OracleError::GuardExceeded {
            what: "edge count",
            size: ne,
            guard: max_edges,
        });
    }
    let (base, layout) = build_rmp(inst, columns, EdgeScope::All)?;
    let mut best = f64::NEG_INFINITY;
    for mask in 0u64..(1u64 << ne) {
        let cost: f64 = (0..ne)
            .filter(|e| mask >> e & 1 == 1)
            .map(|e| inst.network.edge(e).build_cost)
            .sum();
        if cost > inst.budget {
            continue;
        }
        let mut lp = base.clone();
        for e in 0..ne {
            let v = (mask >> e & 1) as f64;
            lp.set_bounds(layout.x_vars[e].unwrap(), v, v);
        }
        let sol = solve_lp(&lp)?;
        if sol.status == LpStatus::Optimal {
            best = best.max(sol.objective_value);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowDecomposition {
    pub paths: Vec<(Vec<EdgeId>, f64)>,
    /// Edge flow left after removing path flows; nonzero only on cycles.
    pub cycle_residue: Vec<f64>,
}

impl FlowDecomposition {
    pub fn has_cycle_flow(&self, tol: f64) -> bool {
        self.cycle_residue.iter().any(|&r| r > tol)
    }
}

/// Splits one commodity's edge flows into o-d path flows plus a circulation.
pub fn flow_decompose(
    net: &Network,
    origin: NodeId,
    dest: NodeId,
    edge_flows: &[f64],
    value: f64,
    tol: f64,
) -> Result<FlowDecomposition, OracleError> {
    for v in 0..net.node_count() {
        let out: f64 = net.out_edges(v).iter().map(|&e| edge_flows[e]).sum();
        let inn: f64 = net.in_edges(v).iter().map(|&e| edge_flows[e]).sum();
        let expected = if v == origin {
            value
        } else if v == dest {
            -value
        } else {
            0.0
        };
        let imbalance = out - inn - expected;
        if imbalance.abs() > tol {
            return Err(OracleError::ConservationViolated { node: v, imbalance });
        }
    }
    let mut rem = edge_flows.to_vec();
    let mut left = value;
    let mut paths = Vec::new();
    while left > tol {
        // BFS over the support yields an elementary path
        let mut pred: Vec<Option<EdgeId>> = vec![None; net.node_count()];
        let mut seen = vec![false; net.node_count()];
        seen[origin] = true;
        let mut queue = VecDeque::from([origin]);
        while let Some(v) = queue.pop_front() {
            if v == dest {
                break;
            }
            for &e in net.out_edges(v) {
                let w = net.edge(e).dst;
                if rem[e] > tol && !seen[w] {
                    seen[w] = true;
                    pred[w] = Some(e);
                    queue.push_back(w);
                }
            }
        }
        if !seen[dest] {
            break;
        }
        let mut path = Vec::new();
        let mut v = dest;
        while let Some(e) = pred[v] {
            path.push(e);
            v = net.edge(e).src;
        }
        path.reverse();
        let amount = path.iter().map(|&e| rem[e]).fold(left, f64::min);
        for &e in &path {
            rem[e] -= amount;
        }
        left -= amount;
        paths.push((path, amount));
    }
    for r in rem.iter_mut() {
        if r.abs() <= tol {
            *r = 0.0;
        }
    }
    Ok(FlowDecomposition {
        paths,
        cycle_residue: rem,
    })
}

/// Best objective over all vertices of `{Ax <= b, l <= x <= u}`, or `None`
/// when no vertex is feasible. Requires finite upper bounds for a bounded region.
pub fn vertex_enumeration(lp: &LinearProgram) -> Option<f64> {
    // every vertex makes n of the constraints tight
    let n = lp.num_vars();
    let mut cons: Vec<(Vec<f64>, f64)> = lp
        .rows
        .iter()
        .map(|r| {
            let mut a = vec![0.0; n];
            for &(j, v) in &r.coeffs {
                a[j] += v;
            }
            (a, r.rhs)
        })
        .collect();
    for j in 0..n {
        let mut a = vec![0.0; n];
        a[j] = -1.0;
        cons.push((a.clone(), -lp.lower[j]));
        if lp.upper[j].is_finite() {
            a[j] = 1.0;
            cons.push((a, lp.upper[j]));
        }
    }
    let mut best: Option<f64> = None;
    let m = cons.len();
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        if let Some(x) = solve_square(&pick.iter().map(|&i| cons[i].clone()).collect::<Vec<_>>()) {
            if cons.iter().all(|(a, b)| a.iter().zip(&x).map(|(p, q)| p * q).sum::<f64>() <= b + 1e-9) {
                let v = lp.objective_value(&x);
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if pick[i] < m - n + i {
                pick[i] += 1;
                for k in i + 1..n {
                    pick[k] = pick[k - 1] + 1;
                }
                break;
            }
        }
    }
}

fn solve_square(rows: &[(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut a: Vec<Vec<f64>> = rows.iter().map(|(r, b)| r.iter().copied().chain([*b]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))?;
        if a[p][c].abs() < 1e-10 {
            return None;
        }
        a.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..=n {
                    a[r][k] -= f * a[c][k];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}
