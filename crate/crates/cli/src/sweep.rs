//! Budget/fleet regime sweep and left-turn sweep over a shared column pool.
//!
//! Both sweeps start from a reference run, an ordinary solve without the swept
//! limits. Every cell then runs column generation seeded with the reference
//! columns; the union of all columns forms one pool, and each cell's MILP is
//! solved over that pool. Because the cells differ only in the right-hand
//! sides of the budget, fleet-time and left-turn rows, an integer solution of
//! one cell can be checked against every other cell; each cell reports the
//! best solution feasible for it.

use amod_core::colgen::{
    add_linking_cuts, reconcile_bound, run_column_generation, solve_master_lp, CgError, CgResult,
    IntegerSolution, MasterLp,
};
use amod_core::lp::{solve_lp, LinearProgram, LpStatus};
use amod_core::master::{build_rmp, extract_duals, Column, ColumnPool, EdgeScope, Instance, RmpLayout};
use amod_core::mip::{solve_restricted_milp, MipParams, MipSolution};
use anyhow::Result;
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::load::LoadedInstance;
use crate::solution::SolutionFile;

/// Constraint levels of one sweep cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Limits {
    pub budget: f64,
    pub fleet_time: f64,
    pub left_turn_budget: Option<f64>,
}

impl Limits {
    fn apply(&self, inst: &Instance) -> Instance {
        Instance {
            budget: self.budget,
            fleet_time: self.fleet_time,
            left_turn_budget: self.left_turn_budget,
            ..inst.clone()
        }
    }
}

/// Where a cell's reported integer solution came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Own,
    Reference,
    Cell(usize),
}

pub struct CellOutcome {
    pub instance: Instance,
    pub result: CgResult,
    pub solution: SolutionFile,
    /// Objective of the cell's own branch-and-bound run.
    pub own_objective: f64,
    pub source: Source,
}

pub struct Cell {
    pub limits: Limits,
    pub outcome: Result<CellOutcome, String>,
}

struct Milp {
    lp: LinearProgram,
    layout: RmpLayout,
    root: amod_core::lp::LpSolution,
    mip: MipSolution,
}

struct Candidate {
    objective: f64,
    values: Vec<f64>,
    source: Source,
}

fn feasible(lp: &LinearProgram, values: &[f64]) -> bool {
    let tol = |v: f64| 1e-9 * v.abs().max(1.0);
    (0..lp.num_vars()).all(|j| values[j] >= lp.lower[j] - tol(lp.lower[j]) && values[j] <= lp.upper[j] + tol(lp.upper[j]))
        && (0..lp.num_rows()).all(|r| lp.row_activity(r, values) <= lp.rows[r].rhs + tol(lp.rows[r].rhs))
}

fn solve_cell_milp(inst: &Instance, columns: &[Column], mip: &MipParams) -> Result<Milp, String> {
    let (mut lp, layout) = build_rmp(inst, columns, EdgeScope::UsedByColumns).map_err(|e| e.to_string())?;
    let root = solve_lp(&lp).map_err(|e| e.to_string())?;
    if root.status != LpStatus::Optimal {
        return Err(format!("root LP {:?}", root.status));
    }
    add_linking_cuts(inst, columns, &layout, &mut lp).map_err(|e| e.to_string())?;
    let mip = solve_restricted_milp(&lp, &layout.binary_vars(), mip).map_err(|e| e.to_string())?;
    Ok(Milp { lp, layout, root, mip })
}

/// The reference integer solution expressed in the pool's variable layout.
fn embed(reference: &CgResult, columns: &[Column], layout: &RmpLayout, num_vars: usize) -> Option<Vec<f64>> {
    let mut values = vec![0.0; num_vars];
    for (c, &f) in reference.columns.iter().zip(&reference.ip.flows) {
        let k = columns.iter().position(|d| d.od == c.od && d.nodes == c.nodes)?;
        values[layout.path_vars[k]] = f;
    }
    for (e, &on) in reference.ip.x.iter().enumerate() {
        if on {
            values[layout.x_vars[e]?] = 1.0;
        }
    }
    Some(values)
}

fn reference_outcome(cfg: &RunConfig, loaded: &LoadedInstance, base: &Instance, limits: &Limits, result: CgResult) -> CellOutcome {
    let instance = limits.apply(base);
    let solution = SolutionFile::build(&cell_config(cfg, limits), loaded, &instance, &result);
    CellOutcome {
        instance,
        own_objective: result.j_ip,
        result,
        solution,
        source: Source::Own,
    }
}

/// Runs column generation per cell, pools the columns and solves every cell's
/// MILP over the pool. Each cell then reports the best integer solution
/// feasible for it among the reference run and all cells; objectives within
/// rounding noise count as ties, which go to the reference and then to the
/// lowest cell index.
fn pooled_sweep(
    cfg: &RunConfig,
    loaded: &LoadedInstance,
    base: &Instance,
    reference: &CgResult,
    cells: &[Limits],
) -> Result<Vec<Cell>> {
    let mut params = cfg.cg_params();
    params.mip = MipParams {
        rel_gap_target: cfg.sensitivity.rel_gap_target,
        node_limit: cfg.sensitivity.node_limit,
        ..params.mip
    };
    let cg: Vec<Result<MasterLp, CgError>> = cells
        .par_iter()
        .map(|l| solve_master_lp(&l.apply(base), &params, &reference.columns))
        .collect();
    let mut pool = ColumnPool::new();
    for c in &reference.columns {
        pool.insert(c.clone());
    }
    for r in cg.iter().flatten() {
        for c in &r.columns {
            pool.insert(c.clone());
        }
    }
    let pool = pool.canonical();
    let columns = pool.columns();
    info!("sweep pool: {} columns over {} cells", columns.len(), cells.len());

    let milps: Vec<Result<Milp, String>> = cells
        .par_iter()
        .zip(&cg)
        .map(|(l, r)| match r {
            Err(e) => Err(e.to_string()),
            Ok(_) => solve_cell_milp(&l.apply(base), columns, &params.mip),
        })
        .collect();

    let mut candidates = Vec::new();
    if let Some(m) = milps.iter().flatten().next() {
        match embed(reference, columns, &m.layout, m.lp.num_vars()) {
            Some(values) => candidates.push(Candidate {
                objective: reference.j_ip,
                values,
                source: Source::Reference,
            }),
            None => log::warn!("reference solution does not fit the pooled layout"),
        }
    }
    for (j, m) in milps.iter().enumerate() {
        if let Ok(m) = m {
            candidates.push(Candidate {
                objective: m.mip.objective,
                values: m.mip.values.clone(),
                source: Source::Cell(j),
            });
        }
    }

    let mut out = Vec::with_capacity(cells.len());
    for (i, (limits, (milp, cg))) in cells.iter().zip(milps.iter().zip(cg)).enumerate() {
        let outcome = match (milp, cg) {
            (Err(e), _) => Err(e.clone()),
            (_, Err(e)) => Err(e.to_string()),
            (Ok(m), Ok(cg)) => {
                let mut best: Option<&Candidate> = None;
                for c in &candidates {
                    let better = best.is_none_or(|b| c.objective > b.objective + 1e-9 * b.objective.abs().max(1.0));
                    if better && feasible(&m.lp, &c.values) {
                        best = Some(c);
                    }
                }
                let best = best.expect("own solution is feasible");
                let inst = limits.apply(base);
                let result = cell_result(columns, m, best, &cg)?;
                let solution = SolutionFile::build(&cell_config(cfg, limits), loaded, &inst, &result);
                Ok(CellOutcome {
                    instance: inst,
                    result,
                    solution,
                    own_objective: m.mip.objective,
                    source: if best.source == Source::Cell(i) { Source::Own } else { best.source },
                })
            }
        };
        if let Err(e) = &outcome {
            log::warn!("sweep cell {i} failed: {e}");
        }
        out.push(Cell {
            limits: *limits,
            outcome,
        });
    }
    Ok(out)
}

fn cell_config(cfg: &RunConfig, l: &Limits) -> RunConfig {
    RunConfig {
        budget: l.budget,
        fleet_time: l.fleet_time,
        left_turn_budget: l.left_turn_budget,
        ..cfg.clone()
    }
}

fn cell_result(columns: &[Column], own: &Milp, chosen: &Candidate, cg: &MasterLp) -> Result<CgResult> {
    let layout = &own.layout;
    let duals = extract_duals(&own.root, layout)?;
    let (j_lp, gap) = reconcile_bound(own.root.objective_value, chosen.objective)?;
    let bound = own.mip.bound.max(chosen.objective);
    let ip = IntegerSolution {
        x: layout
            .x_vars
            .iter()
            .map(|x| x.is_some_and(|x| chosen.values[x] > 0.5))
            .collect(),
        flows: layout.path_vars.iter().map(|&v| chosen.values[v]).collect(),
        objective: chosen.objective,
        bound,
        rel_gap: if bound > 0.0 { (bound - chosen.objective) / bound } else { 0.0 },
        status: own.mip.status,
        nodes: own.mip.nodes,
    };
    Ok(CgResult {
        columns: columns.to_vec(),
        lp_x: layout
            .x_vars
            .iter()
            .map(|x| x.map_or(0.0, |x| own.root.primal[x]))
            .collect(),
        lp_flows: layout.path_vars.iter().map(|&v| own.root.primal[v]).collect(),
        duals,
        j_lp,
        gap,
        j_ip: chosen.objective,
        ip,
        iterations: cg.iterations,
        log: cg.log.clone(),
        converged: cg.converged,
        dropped: cg.dropped.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeRow {
    pub fleet_fraction: f64,
    pub budget_fraction: f64,
    pub fleet_time: f64,
    pub budget: f64,
    pub profit: Option<f64>,
    pub normalized_profit: Option<f64>,
    pub fleet_used: Option<f64>,
    pub normalized_fleet_used: Option<f64>,
    pub budget_used: Option<f64>,
    pub normalized_budget_used: Option<f64>,
    pub served: Option<f64>,
    pub status: String,
    /// Relative gap of the cell's reported solution against its own MILP bound.
    pub mip_gap: Option<f64>,
    pub source: String,
    pub error: String,
}

pub struct RegimeSweep {
    pub reference: CellOutcome,
    pub cells: Vec<Cell>,
    pub rows: Vec<RegimeRow>,
}

/// Unconstrained limits: every edge affordable and enough fleet time to route
/// every demand on its slowest admissible path.
pub fn unconstrained_limits(inst: &Instance) -> (f64, f64) {
    let budget: f64 = inst.network.edges().iter().map(|e| e.build_cost).sum();
    let total_time: f64 = inst.network.edges().iter().map(|e| e.travel_time).sum();
    let fleet: f64 = inst
        .demands
        .iter()
        .zip(&inst.time_limits)
        .map(|(d, m)| d.alpha * m.min(total_time))
        .sum();
    (budget * (1.0 + 1e-9) + 1.0, fleet * (1.0 + 1e-9) + 1.0)
}

fn fmt_source(s: Source) -> String {
    match s {
        Source::Own => "own".into(),
        Source::Reference => "reference".into(),
        Source::Cell(j) => format!("cell {j}"),
    }
}

fn fmt_status(o: &CellOutcome) -> String {
    serde_json::to_value(o.solution.status)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Profit over a grid of fleet-time and budget levels, both expressed as
/// multiples of the unconstrained solution's usage.
pub fn run_regime_sweep(cfg: &RunConfig, loaded: &LoadedInstance) -> Result<RegimeSweep> {
    let base = loaded.effective()?;
    let (b_max, r_max) = unconstrained_limits(&base);
    let unconstrained = Limits {
        budget: b_max,
        fleet_time: r_max,
        left_turn_budget: base.left_turn_budget,
    };
    let first = run_column_generation(&unconstrained.apply(&base), &cfg.cg_params())?;
    let reference = reference_outcome(cfg, loaded, &base, &unconstrained, first);
    let (t0, c0) = (reference.solution.usage.fleet_time, reference.solution.usage.budget);
    let mut limits = Vec::new();
    for &fr in &cfg.sensitivity.fleet_fractions {
        for &fb in &cfg.sensitivity.budget_fractions {
            limits.push(Limits {
                budget: fb * c0,
                fleet_time: fr * t0,
                left_turn_budget: base.left_turn_budget,
            });
        }
    }
    let cells = pooled_sweep(cfg, loaded, &base, &reference.result, &limits)?;
    let f_b = reference.solution.j_ip;
    let t_b = reference.solution.usage.fleet_time;
    let c_b = reference.solution.usage.budget;
    let norm = |v: f64, by: f64| if by > 0.0 { v / by } else { 0.0 };
    let mut rows = Vec::new();
    let mut it = cells.iter();
    for &fr in &cfg.sensitivity.fleet_fractions {
        for &fb in &cfg.sensitivity.budget_fractions {
            let cell = it.next().unwrap();
            let mut row = RegimeRow {
                fleet_fraction: fr,
                budget_fraction: fb,
                fleet_time: cell.limits.fleet_time,
                budget: cell.limits.budget,
                profit: None,
                normalized_profit: None,
                fleet_used: None,
                normalized_fleet_used: None,
                budget_used: None,
                normalized_budget_used: None,
                served: None,
                status: "failed".into(),
                mip_gap: None,
                source: String::new(),
                error: String::new(),
            };
            match &cell.outcome {
                Ok(o) => {
                    let u = &o.solution.usage;
                    row.profit = Some(o.solution.j_ip);
                    row.normalized_profit = Some(norm(o.solution.j_ip, f_b));
                    row.fleet_used = Some(u.fleet_time);
                    row.normalized_fleet_used = Some(norm(u.fleet_time, t_b));
                    row.budget_used = Some(u.budget);
                    row.normalized_budget_used = Some(norm(u.budget, c_b));
                    row.served = Some(u.served);
                    row.status = fmt_status(o);
                    row.mip_gap = Some(o.result.ip.rel_gap);
                    row.source = fmt_source(o.source);
                }
                Err(e) => row.error = e.clone(),
            }
            rows.push(row);
        }
    }
    Ok(RegimeSweep {
        reference,
        cells,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeftTurnRow {
    /// `inf` for the run without a left-turn row.
    pub multiplier: f64,
    pub left_turn_budget: f64,
    pub profit: Option<f64>,
    pub served: Option<f64>,
    pub left_turns_used: Option<f64>,
    pub fleet_used: Option<f64>,
    pub budget_used: Option<f64>,
    pub status: String,
    pub mip_gap: Option<f64>,
    pub source: String,
    pub error: String,
}

pub struct LeftTurnSweep {
    pub scale: f64,
    pub cells: Vec<Cell>,
    pub rows: Vec<LeftTurnRow>,
}

impl LeftTurnSweep {
    /// The run without a left-turn row.
    pub fn unconstrained(&self) -> &Cell {
        self.cells.last().expect("sweep has an unconstrained cell")
    }
}

/// Profit and served demand across left-turn budgets `m * scale`, where
/// `scale` is a tenth of the left turns used without a budget.
pub fn run_left_turn_sweep(cfg: &RunConfig, loaded: &LoadedInstance) -> Result<LeftTurnSweep> {
    let base = Instance {
        left_turn_budget: None,
        ..loaded.effective()?
    };
    let first = run_column_generation(&base, &cfg.cg_params())?;
    let unlimited = Limits {
        budget: base.budget,
        fleet_time: base.fleet_time,
        left_turn_budget: None,
    };
    let reference = reference_outcome(cfg, loaded, &base, &unlimited, first);
    let used = reference.solution.usage.left_turns;
    let scale = if used > 0.0 { used / 10.0 } else { 1.0 };
    let limits: Vec<Limits> = cfg
        .sensitivity
        .left_turn_multipliers
        .iter()
        .map(|&m| Limits {
            left_turn_budget: Some(m * scale),
            ..unlimited
        })
        .collect();
    let mut cells = pooled_sweep(cfg, loaded, &base, &reference.result, &limits)?;
    cells.push(Cell {
        limits: unlimited,
        outcome: Ok(reference),
    });
    let multipliers = cfg
        .sensitivity
        .left_turn_multipliers
        .iter()
        .copied()
        .chain([f64::INFINITY]);
    let rows = cells
        .iter()
        .zip(multipliers)
        .map(|(cell, m)| {
            let mut row = LeftTurnRow {
                multiplier: m,
                left_turn_budget: cell.limits.left_turn_budget.unwrap_or(f64::INFINITY),
                profit: None,
                served: None,
                left_turns_used: None,
                fleet_used: None,
                budget_used: None,
                status: "failed".into(),
                mip_gap: None,
                source: String::new(),
                error: String::new(),
            };
            match &cell.outcome {
                Ok(o) => {
                    let u = &o.solution.usage;
                    row.profit = Some(o.solution.j_ip);
                    row.served = Some(u.served);
                    row.left_turns_used = Some(u.left_turns);
                    row.fleet_used = Some(u.fleet_time);
                    row.budget_used = Some(u.budget);
                    row.status = fmt_status(o);
                    row.mip_gap = Some(o.result.ip.rel_gap);
                    row.source = fmt_source(o.source);
                }
                Err(e) => row.error = e.clone(),
            }
            row
        })
        .collect();
    Ok(LeftTurnSweep { scale, cells, rows })
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}
