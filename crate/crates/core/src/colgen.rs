//! Column generation driver: restricted master, pricing, integer recovery.

use std::collections::BTreeMap;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{solve_lp, LinearProgram, LpError, LpStatus, VarId};
use crate::master::{
    build_rmp, extract_duals, Column, ColumnPool, Duals, EdgeScope, Instance, MasterError, RmpLayout,
};
use crate::mip::{solve_restricted_milp, MipError, MipParams, MipStatus};
use crate::network::{
    preprocess_od_with, within_time_limit, NetworkError, PreprocessResult,
};
use crate::pricing::{edge_pricing_cost, reduced_cost, solve_sprc_with, PricingContext, SprcOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CgError {
    #[error("no demand has an admissible path")]
    NoRetainedDemand,
    #[error("restricted master is {0:?}")]
    RootInfeasible(LpStatus),
    #[error("integer objective {j_ip} exceeds LP bound {j_lp}")]
    NegativeGap { j_lp: f64, j_ip: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Master(#[from] MasterError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Mip(#[from] MipError),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CgParams {
    /// Reduced-cost tolerance.
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Columns added per OD and round.
    pub columns_per_od: usize,
    pub parallel_pricing: bool,
    pub mip: MipParams,
}

impl Default for CgParams {
    fn default() -> Self {
        Self {
            epsilon: 1e-6,
            max_iterations: 10_000,
            columns_per_od: 1,
            parallel_pricing: true,
            mip: MipParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub iteration: usize,
    pub rmp_objective: f64,
    pub columns_added: usize,
    /// Largest reduced cost found by pricing; `-inf` when nothing was priced.
    pub max_reduced_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegerSolution {
    /// Instrumentation decision by edge id.
    pub x: Vec<bool>,
    /// Flow per column.
    pub flows: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub rel_gap: f64,
    pub status: MipStatus,
    pub nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgResult {
    /// Final column set, ordered by demand and then node sequence.
    pub columns: Vec<Column>,
    /// Fractional instrumentation of the final master, by edge id.
    pub lp_x: Vec<f64>,
    /// Master flow per column.
    pub lp_flows: Vec<f64>,
    pub duals: Duals,
    pub j_lp: f64,
    pub ip: IntegerSolution,
    pub j_ip: f64,
    pub gap: f64,
    pub iterations: usize,
    pub log: Vec<IterationLog>,
    /// False when the iteration limit stopped pricing early.
    pub converged: bool,
    /// Demands without any admissible path.
    pub dropped: Vec<usize>,
}

/// Relative gap `(J_LP - J_IP) / J_LP`, zero when `J_LP` is zero.
pub fn optimality_gap(j_lp: f64, j_ip: f64) -> Result<f64, CgError> {
    let tol = 1e-7 * j_lp.abs().max(1.0);
    if j_ip > j_lp + tol {
        return Err(CgError::NegativeGap { j_lp, j_ip });
    }
    if j_lp == 0.0 {
        Ok(0.0)
    } else {
        Ok((j_lp - j_ip) / j_lp)
    }
}

/// `(J_LP, gap)` with `J_LP` raised to `j_ip` when rounding leaves the simplex
/// value a few ulps below a feasible integer objective.
pub fn reconcile_bound(j_lp: f64, j_ip: f64) -> Result<(f64, f64), CgError> {
    optimality_gap(j_lp, j_ip)?;
    let j_lp = j_lp.max(j_ip);
    Ok((j_lp, optimality_gap(j_lp, j_ip)?))
}

/// Per-OD preprocessing; `None` for demands with no admissible path.
pub fn preprocess_all(inst: &Instance) -> Vec<Option<PreprocessResult>> {
    let reversed = inst.network.reversed();
    inst.demands
        .iter()
        .zip(&inst.time_limits)
        .enumerate()
        .map(|(k, (d, &m))| {
            match preprocess_od_with(&inst.network, &reversed, d.origin, d.dest, m) {
                Ok(pre) => Some(pre),
                Err(e) => {
                    warn!("dropping OD {k} ({}->{}): {e}", d.origin, d.dest);
                    None
                }
            }
        })
        .collect()
}

/// Travel-time shortest path per retained demand, when within its limit.
pub fn initial_columns(inst: &Instance, pres: &[Option<PreprocessResult>]) -> Vec<Column> {
    pres.iter()
        .enumerate()
        .filter_map(|(k, pre)| {
            let pre = pre.as_ref()?;
            let path = pre.shortest_path(&inst.network);
            let col = Column::new(inst, k, path);
            within_time_limit(col.travel_time, inst.time_limits[k]).then_some(col)
        })
        .collect()
}

struct Priced {
    columns: Vec<Column>,
    max_rc: f64,
}

fn price_od(
    inst: &Instance,
    pre: &PreprocessResult,
    k: usize,
    duals: &Duals,
    edge_cost: &[f64],
    pool: &ColumnPool,
    params: &CgParams,
) -> Priced {
    let mut ctx = PricingContext::new(pre, edge_cost.to_vec());
    ctx.turn_cost = duals.omega.unwrap_or(0.0);
    ctx.turn_band = inst.turn_band;
    ctx.demand_dual = duals.v[k];
    let opts = SprcOptions {
        dominance: true,
        pareto_frontier: params.columns_per_od > 1,
    };
    let outcome = solve_sprc_with(&inst.network, &ctx, pre, opts);
    let mut max_rc = f64::NEG_INFINITY;
    let mut columns = Vec::new();
    for p in outcome.paths {
        let rc = reduced_cost(&inst.network, &p.edges, duals, k, inst.turn_band);
        max_rc = max_rc.max(rc);
        if columns.len() < params.columns_per_od && rc > params.epsilon && !pool.contains(k, &p.nodes) {
            columns.push(Column::new(inst, k, p.edges));
        }
    }
    Priced { columns, max_rc }
}

/// Runs column generation from shortest-path seeds, then recovers an integer solution.
pub fn run_column_generation(inst: &Instance, params: &CgParams) -> Result<CgResult, CgError> {
    run_column_generation_from(inst, params, &[])
}

/// As [`run_column_generation`], additionally seeding the master with `seed` columns
/// (inadmissible ones are skipped).
pub fn run_column_generation_from(
    inst: &Instance,
    params: &CgParams,
    seed: &[Column],
) -> Result<CgResult, CgError> {
    let lp = solve_master_lp(inst, params, seed)?;
    let ip = recover_integer(inst, &lp.columns, &params.mip)?;
    let (j_lp, gap) = reconcile_bound(lp.j_lp, ip.objective)?;
    Ok(CgResult {
        j_ip: ip.objective,
        columns: lp.columns,
        lp_x: lp.lp_x,
        lp_flows: lp.lp_flows,
        duals: lp.duals,
        j_lp,
        ip,
        gap,
        iterations: lp.iterations,
        log: lp.log,
        converged: lp.converged,
        dropped: lp.dropped,
    })
}

/// Outcome of the LP phase of column generation.
#[derive(Debug, Clone, PartialEq)]
pub struct MasterLp {
    /// Columns of the final master in canonical order.
    pub columns: Vec<Column>,
    pub lp_x: Vec<f64>,
    pub lp_flows: Vec<f64>,
    pub duals: Duals,
    pub j_lp: f64,
    pub iterations: usize,
    pub log: Vec<IterationLog>,
    pub converged: bool,
    pub dropped: Vec<usize>,
}

/// Column generation on the LP relaxation only.
pub fn solve_master_lp(inst: &Instance, params: &CgParams, seed: &[Column]) -> Result<MasterLp, CgError> {
    if !(params.epsilon > 0.0 && params.columns_per_od >= 1 && params.max_iterations >= 1) {
        return Err(CgError::InvalidParams(format!("{params:?}")));
    }
    let pres = preprocess_all(inst);
    let dropped: Vec<usize> = (0..pres.len()).filter(|&k| pres[k].is_none()).collect();
    let retained: Vec<usize> = (0..pres.len()).filter(|&k| pres[k].is_some()).collect();
    if retained.is_empty() {
        return Err(CgError::NoRetainedDemand);
    }
    let mut pool = ColumnPool::new();
    for c in initial_columns(inst, &pres) {
        pool.insert(c);
    }
    for c in seed {
        if pres.get(c.od).is_some_and(|p| p.is_some()) && c.admissibility_issue(inst).is_none() {
            pool.insert(Column::new(inst, c.od, c.edges.clone()));
        }
    }
    pool = pool.canonical();

    let mut log = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    let (lp_sol, layout) = loop {
        iteration += 1;
        let (lp, layout) = build_rmp(inst, pool.columns(), EdgeScope::All)?;
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(CgError::RootInfeasible(sol.status));
        }
        let duals = extract_duals(&sol, &layout)?;
        let edge_cost: Vec<f64> = inst
            .network
            .edges()
            .iter()
            .map(|e| edge_pricing_cost(e, duals.mu, duals.u[e.id]))
            .collect();
        let price = |&k: &usize| {
            price_od(inst, pres[k].as_ref().unwrap(), k, &duals, &edge_cost, &pool, params)
        };
        let priced: Vec<Priced> = if params.parallel_pricing {
            retained.par_iter().map(price).collect()
        } else {
            retained.iter().map(price).collect()
        };
        let max_rc = priced.iter().map(|p| p.max_rc).fold(f64::NEG_INFINITY, f64::max);
        let mut added = 0;
        for p in priced {
            for c in p.columns {
                added += usize::from(pool.insert(c));
            }
        }
        debug!(
            "iteration {iteration}: J_RMP={} added={added} max_rc={max_rc}",
            sol.objective_value
        );
        log.push(IterationLog {
            iteration,
            rmp_objective: sol.objective_value,
            columns_added: added,
            max_reduced_cost: max_rc,
        });
        if added == 0 {
            converged = true;
            break (sol, layout);
        }
        if iteration >= params.max_iterations {
            warn!("column generation stopped at the iteration limit ({iteration})");
            break (sol, layout);
        }
    };
    let j_lp = lp_sol.objective_value;
    let duals = extract_duals(&lp_sol, &layout)?;
    let ne = inst.network.edge_count();
    let lp_x: Vec<f64> = (0..ne)
        .map(|e| layout.x_vars[e].map_or(0.0, |x| lp_sol.primal[x]))
        .collect();
    // the master solved last only covers columns present before the final round
    let n_lp = layout.path_vars.len();
    let columns_in_lp = pool.columns()[..n_lp].to_vec();
    let lp_flows: Vec<f64> = layout.path_vars.iter().map(|&v| lp_sol.primal[v]).collect();

    let mut canonical = ColumnPool::new();
    for c in &columns_in_lp {
        canonical.insert(c.clone());
    }
    let canonical = canonical.canonical();
    let order: Vec<usize> = canonical
        .columns()
        .iter()
        .map(|c| {
            columns_in_lp
                .iter()
                .position(|d| d.od == c.od && d.nodes == c.nodes)
                .unwrap()
        })
        .collect();
    let lp_flows: Vec<f64> = order.iter().map(|&i| lp_flows[i]).collect();
    let columns = canonical.columns().to_vec();
    Ok(MasterLp {
        columns,
        lp_x,
        lp_flows,
        duals,
        j_lp,
        iterations: iteration,
        log,
        converged,
        dropped,
    })
}

/// Restricted MILP over a frozen column set.
const CUT_ROUNDS: usize = 20;

/// Adds the violated inequalities
/// `sum of f_p over paths of one OD through e <= min(alpha, c_e) x_e`
/// until the LP relaxation satisfies all of them. They hold at every integer
/// point, so the MILP optimum is unchanged while its relaxation tightens.
pub fn add_linking_cuts(
    inst: &Instance,
    columns: &[Column],
    layout: &RmpLayout,
    lp: &mut LinearProgram,
) -> Result<usize, CgError> {
    let mut by_pair: BTreeMap<(usize, usize), Vec<VarId>> = BTreeMap::new();
    for (c, col) in columns.iter().enumerate() {
        for &e in &col.edges {
            by_pair.entry((col.od, e)).or_default().push(layout.path_vars[c]);
        }
    }
    let mut added = vec![false; by_pair.len()];
    let mut total = 0;
    for _ in 0..CUT_ROUNDS {
        let sol = solve_lp(lp)?;
        if sol.status != LpStatus::Optimal {
            break;
        }
        let mut round = 0;
        for (i, (&(od, e), vars)) in by_pair.iter().enumerate() {
            let Some(x) = layout.x_vars[e] else { continue };
            if added[i] {
                continue;
            }
            let cap = inst.demands[od].alpha.min(inst.network.edges()[e].capacity);
            let lhs: f64 = vars.iter().map(|&v| sol.primal[v]).sum();
            if lhs - cap * sol.primal[x] > 1e-7 * cap.max(1.0) {
                let mut coeffs: Vec<(VarId, f64)> = vars.iter().map(|&v| (v, 1.0)).collect();
                coeffs.push((x, -cap));
                lp.add_row(coeffs, 0.0);
                added[i] = true;
                round += 1;
            }
        }
        total += round;
        if round == 0 {
            break;
        }
    }
    debug!("added {total} linking cuts");
    Ok(total)
}

pub fn recover_integer(
    inst: &Instance,
    columns: &[Column],
    params: &MipParams,
) -> Result<IntegerSolution, CgError> {
    let (mut lp, layout) = build_rmp(inst, columns, EdgeScope::UsedByColumns)?;
    add_linking_cuts(inst, columns, &layout, &mut lp)?;
    let sol = solve_restricted_milp(&lp, &layout.binary_vars(), params)?;
    let x = layout
        .x_vars
        .iter()
        .map(|x| x.is_some_and(|x| sol.values[x] > 0.5))
        .collect();
    let flows = layout.path_vars.iter().map(|&v| sol.values[v]).collect();
    Ok(IntegerSolution {
        x,
        flows,
        objective: sol.objective,
        bound: sol.bound,
        rel_gap: sol.rel_gap,
        status: sol.status,
        nodes: sol.nodes,
    })
}
