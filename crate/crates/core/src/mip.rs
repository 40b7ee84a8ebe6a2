//! Branch-and-bound over binary variables of a maximization LP.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, solve_lp_from, Basis, LinearProgram, LpError, LpSolution, LpStatus, VarId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MipError {
    #[error("root LP relaxation is infeasible")]
    Infeasible,
    #[error("root LP relaxation is unbounded")]
    Unbounded,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MipParams {
    pub rel_gap_target: f64,
    pub node_limit: Option<usize>,
    pub time_limit: Option<Duration>,
    pub integrality_tol: f64,
}

impl Default for MipParams {
    fn default() -> Self {
        Self {
            rel_gap_target: 1e-6,
            node_limit: None,
            time_limit: None,
            integrality_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    GapLimit,
    NodeLimit,
    TimeLimit,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MipSolution {
    /// Values of all LP variables; binaries are exactly 0 or 1.
    pub values: Vec<f64>,
    pub objective: f64,
    /// Best upper bound on the MILP optimum.
    pub bound: f64,
    pub rel_gap: f64,
    pub status: MipStatus,
    /// Branch nodes created below the root.
    pub nodes: usize,
}

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(VarId, f64)>,
    /// Optimal basis of the parent LP.
    start: Option<Arc<Basis>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // max-heap: highest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn with_fixings(lp: &LinearProgram, fixings: &[(VarId, f64)]) -> LinearProgram {
    let mut lp = lp.clone();
    for &(j, v) in fixings {
        lp.set_bounds(j, v, v);
    }
    lp
}

fn solve_from(lp: &LinearProgram, start: Option<&Basis>) -> Result<LpSolution, LpError> {
    match start {
        Some(b) => solve_lp_from(lp, b),
        None => solve_lp(lp),
    }
}

fn rel_gap(bound: f64, objective: f64) -> f64 {
    if bound <= 0.0 {
        0.0
    } else {
        ((bound - objective) / bound).max(0.0)
    }
}

struct Incumbent {
    values: Vec<f64>,
    objective: f64,
}

/// Fixes binaries at `rounded` and re-optimizes the continuous part.
///
/// The fixed binaries are substituted out first. A row whose remaining
/// variables all have nonnegative coefficients and zero lower bounds and whose
/// residual right-hand side is zero forces those variables to zero, so they
/// are dropped as well; what is left is usually a much smaller LP.
fn complete(lp: &LinearProgram, binaries: &[VarId], rounded: &[f64]) -> Result<Option<Incumbent>, LpError> {
    let n = lp.num_vars();
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    for (&j, &v) in binaries.iter().zip(rounded) {
        fixed[j] = Some(v);
    }
    let slack = |rhs: f64| 1e-9 * rhs.abs().max(1.0);
    let residual = |row: &crate::lp::Row, fixed: &[Option<f64>]| -> f64 {
        row.rhs - row.coeffs.iter().filter_map(|&(j, a)| fixed[j].map(|v| a * v)).sum::<f64>()
    };
    let mut changed = true;
    while changed {
        changed = false;
        for row in &lp.rows {
            let free: Vec<(VarId, f64)> = row.coeffs.iter().copied().filter(|&(j, _)| fixed[j].is_none()).collect();
            if free.is_empty() || free.iter().any(|&(j, a)| a < 0.0 || lp.lower[j] != 0.0) {
                continue;
            }
            let r = residual(row, &fixed);
            if r < -slack(row.rhs) {
                return Ok(None);
            }
            if r <= slack(row.rhs) * 1e-3 {
                for (j, _) in free {
                    fixed[j] = Some(0.0);
                }
                changed = true;
            }
        }
    }
    let mut id = vec![usize::MAX; n];
    let mut sub = LinearProgram::new();
    for j in 0..n {
        if fixed[j].is_none() {
            id[j] = sub.add_var(lp.objective[j], lp.lower[j], lp.upper[j]);
        }
    }
    for row in &lp.rows {
        let r = residual(row, &fixed);
        let coeffs: Vec<(VarId, f64)> = row
            .coeffs
            .iter()
            .filter(|&&(j, _)| fixed[j].is_none())
            .map(|&(j, a)| (id[j], a))
            .collect();
        if coeffs.is_empty() {
            if r < -slack(row.rhs) {
                return Ok(None);
            }
        } else {
            sub.add_row(coeffs, if r < 0.0 && r >= -slack(row.rhs) { 0.0 } else { r });
        }
    }
    let sol = solve_lp(&sub)?;
    if sol.status != LpStatus::Optimal {
        return Ok(None);
    }
    let values: Vec<f64> = (0..n)
        .map(|j| fixed[j].unwrap_or_else(|| sol.primal[id[j]]))
        .collect();
    Ok(Some(Incumbent {
        objective: lp.objective_value(&values),
        values,
    }))
}

/// Rows whose coefficients all sit on binaries.
fn binary_only_rows(lp: &LinearProgram, binaries: &[VarId]) -> Vec<usize> {
    let mut is_binary = vec![false; lp.num_vars()];
    for &j in binaries {
        is_binary[j] = true;
    }
    (0..lp.rows.len())
        .filter(|&r| lp.rows[r].coeffs.iter().all(|&(j, _)| is_binary[j]))
        .collect()
}

/// Rounds binaries down, then switches fractional ones back on in order of
/// decreasing LP value while every binary-only row stays satisfied.
fn rounding_heuristic(
    lp: &LinearProgram,
    binaries: &[VarId],
    binary_rows: &[usize],
    sol: &LpSolution,
    tol: f64,
    tried: &mut HashSet<Vec<bool>>,
) -> Result<Option<Incumbent>, LpError> {
    let mut point = vec![0.0; lp.num_vars()];
    let mut fractional = Vec::new();
    for (k, &j) in binaries.iter().enumerate() {
        let v = sol.primal[j];
        if v >= 1.0 - tol {
            point[j] = 1.0;
        } else if v > tol {
            fractional.push(k);
        }
    }
    let fits = |point: &[f64]| {
        binary_rows.iter().all(|&r| {
            let row = &lp.rows[r];
            row.coeffs.iter().map(|&(j, a)| a * point[j]).sum::<f64>() <= row.rhs + 1e-9 * row.rhs.abs().max(1.0)
        })
    };
    if !fits(&point) {
        return Ok(None);
    }
    let floor: Vec<f64> = binaries.iter().map(|&j| point[j]).collect();
    fractional.sort_by(|&a, &b| sol.primal[binaries[b]].total_cmp(&sol.primal[binaries[a]]).then(a.cmp(&b)));
    let mut grown = false;
    for k in fractional {
        let j = binaries[k];
        if lp.upper[j] < 1.0 {
            continue;
        }
        point[j] = 1.0;
        if fits(&point) {
            grown = true;
        } else {
            point[j] = 0.0;
        }
    }
    let filled: Vec<f64> = binaries.iter().map(|&j| point[j]).collect();
    let mut attempt = |pattern: &[f64]| -> Result<Option<Incumbent>, LpError> {
        if tried.insert(pattern.iter().map(|&v| v == 1.0).collect()) {
            complete(lp, binaries, pattern)
        } else {
            Ok(None)
        }
    };
    if let Some(inc) = attempt(&filled)? {
        return Ok(Some(inc));
    }
    if grown {
        attempt(&floor)
    } else {
        Ok(None)
    }
}

/// Fixes binaries whose LP multiplier proves that moving them off their
/// current bound cannot beat the incumbent.
fn reduced_cost_fixing(sol: &LpSolution, binaries: &[VarId], incumbent: f64, tol: f64, fixings: &mut Vec<(VarId, f64)>) {
    if !incumbent.is_finite() {
        return;
    }
    let margin = 1e-7 * sol.objective_value.abs().max(1.0);
    for &j in binaries {
        if fixings.iter().any(|&(k, _)| k == j) {
            continue;
        }
        let v = sol.primal[j];
        if v <= tol && sol.objective_value - sol.lower_bound_duals[j] + margin < incumbent {
            fixings.push((j, 0.0));
        } else if v >= 1.0 - tol && sol.objective_value - sol.bound_duals[j] + margin < incumbent {
            fixings.push((j, 1.0));
        }
    }
}

fn most_fractional(sol: &LpSolution, binaries: &[VarId], tol: f64) -> Option<VarId> {
    let mut best: Option<(f64, VarId)> = None;
    for &j in binaries {
        let v = sol.primal[j];
        let frac = v - v.floor();
        if frac <= tol || frac >= 1.0 - tol {
            continue;
        }
        let score = (frac - 0.5).abs();
        match best {
            Some((s, b)) if s < score || (s == score && b < j) => {}
            _ => best = Some((score, j)),
        }
    }
    best.map(|(_, j)| j)
}

/// Maximizes `lp` with `binaries` restricted to {0, 1}.
///
/// Nodes are explored best bound first; each branches on the binary closest
/// to 0.5 (lowest index on ties). Every node LP also seeds a rounding
/// heuristic that re-solves for the continuous variables.
pub fn solve_restricted_milp(
    lp: &LinearProgram,
    binaries: &[VarId],
    params: &MipParams,
) -> Result<MipSolution, MipError> {
    if !(params.rel_gap_target >= 0.0 && params.integrality_tol > 0.0 && params.integrality_tol < 0.5) {
        return Err(MipError::InvalidParams(format!("{params:?}")));
    }
    let start = Instant::now();
    let root = solve_lp(lp)?;
    match root.status {
        LpStatus::Infeasible => return Err(MipError::Infeasible),
        LpStatus::Unbounded => return Err(MipError::Unbounded),
        LpStatus::Optimal => {}
    }
    let tol = params.integrality_tol;
    let binary_rows = binary_only_rows(lp, binaries);
    let mut tried = HashSet::new();
    let (mut heur_time, mut node_time, mut node_iters) = (Duration::ZERO, Duration::ZERO, 0usize);
    let mut incumbent: Option<Incumbent> = None;
    let mut heap = BinaryHeap::new();
    let mut seq = 0usize;
    let mut created = 0usize;
    let mut pending = Some((root, Vec::new()));
    let mut status = MipStatus::Optimal;

    loop {
        if let Some((sol, fixings)) = pending.take() {
            let inc_obj = incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.objective);
            if sol.objective_value > inc_obj {
                let exact = binaries.iter().all(|&j| {
                    let v = sol.primal[j];
                    v == 0.0 || v == 1.0
                });
                let candidate = if exact {
                    Some(Incumbent {
                        objective: sol.objective_value,
                        values: sol.primal.clone(),
                    })
                } else {
                    {
                        let t0 = Instant::now();
                        let r = rounding_heuristic(lp, binaries, &binary_rows, &sol, tol, &mut tried)?;
                        heur_time += t0.elapsed();
                        r
                    }
                };
                if let Some(c) = candidate {
                    if c.objective > inc_obj {
                        incumbent = Some(c);
                    }
                }
                let inc_obj = incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.objective);
                if let Some(j) = most_fractional(&sol, binaries, tol) {
                    if rel_gap(sol.objective_value, inc_obj) > params.rel_gap_target {
                        let mut fixings = fixings;
                        reduced_cost_fixing(&sol, binaries, inc_obj, tol, &mut fixings);
                        let start = sol.basis.clone().map(Arc::new);
                        for v in [1.0, 0.0] {
                            let mut f = fixings.clone();
                            f.push((j, v));
                            heap.push(Node {
                                bound: sol.objective_value,
                                seq,
                                fixings: f,
                                start: start.clone(),
                            });
                            seq += 1;
                            created += 1;
                        }
                    }
                }
            }
        }

        let inc_obj = incumbent.as_ref().map_or(f64::NEG_INFINITY, |i| i.objective);
        while heap
            .peek()
            .is_some_and(|n| rel_gap(n.bound, inc_obj) <= params.rel_gap_target || n.bound <= inc_obj)
        {
            if heap.peek().is_some_and(|n| n.bound > inc_obj) {
                status = MipStatus::GapLimit;
            }
            heap.pop();
        }
        let Some(node) = heap.pop() else {
            break;
        };
        if params.node_limit.is_some_and(|l| created >= l) {
            heap.push(node);
            status = MipStatus::NodeLimit;
            break;
        }
        if params.time_limit.is_some_and(|l| start.elapsed() >= l) {
            heap.push(node);
            status = MipStatus::TimeLimit;
            break;
        }
        if created.is_multiple_of(500) {
            log::debug!(
                "b&b: {created} nodes, {} open, bound {}, incumbent {inc_obj}",
                heap.len() + 1,
                node.bound
            );
        }
        let node_lp = with_fixings(lp, &node.fixings);
        let t0 = Instant::now();
        let solved = solve_from(&node_lp, node.start.as_deref());
        node_time += t0.elapsed();
        if let Ok(s) = &solved {
            node_iters += s.iterations;
        }
        let sol = solved?;
        if sol.status == LpStatus::Optimal {
            pending = Some((sol, node.fixings));
        }
    }

    log::debug!("b&b time: heuristic {heur_time:?}, node LPs {node_time:?} ({node_iters} iterations), total {:?}", start.elapsed());
    let Some(inc) = incumbent else {
        return Ok(MipSolution {
            values: vec![0.0; lp.num_vars()],
            objective: f64::NEG_INFINITY,
            bound: heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound),
            rel_gap: f64::INFINITY,
            status: if heap.is_empty() { MipStatus::Infeasible } else { status },
            nodes: created,
        });
    };
    let open = heap.peek().map_or(f64::NEG_INFINITY, |n| n.bound);
    let bound = if status == MipStatus::Optimal {
        inc.objective
    } else {
        open.max(inc.objective)
    };
    Ok(MipSolution {
        rel_gap: rel_gap(bound, inc.objective),
        values: inc.values,
        objective: inc.objective,
        bound,
        status,
        nodes: created,
    })
}
