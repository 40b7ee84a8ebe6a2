//! Independent feasibility and consistency checks of a solution file.

use std::collections::{BTreeMap, HashMap, HashSet};

use amod_core::master::{Column, Instance};
use amod_core::network::within_time_limit;
use serde::{Deserialize, Serialize};

use crate::load::{ExternalId, LoadedInstance};
use crate::solution::SolutionFile;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn slack(rhs: f64) -> f64 {
    1e-7 * rhs.abs().max(1.0)
}

struct Family {
    name: &'static str,
    failures: Vec<String>,
}

impl Family {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            failures: Vec::new(),
        }
    }

    fn fail(&mut self, msg: String) {
        self.failures.push(msg);
    }

    fn finish(self, ok_detail: String) -> Check {
        let passed = self.failures.is_empty();
        let detail = if passed {
            ok_detail
        } else {
            let shown: Vec<&str> = self.failures.iter().take(5).map(String::as_str).collect();
            let more = self.failures.len().saturating_sub(5);
            if more > 0 {
                format!("{} (+{more} more)", shown.join("; "))
            } else {
                shown.join("; ")
            }
        };
        Check {
            name: self.name.into(),
            passed,
            detail,
        }
    }
}

/// Checks `sol` against `inst`, the instance that was solved (robust counterpart
/// included), recomputing every path attribute from the network.
pub fn validate_solution(loaded: &LoadedInstance, inst: &Instance, sol: &SolutionFile) -> ValidationReport {
    let net = &inst.network;
    let internal: HashMap<ExternalId, usize> = loaded.node_ids.iter().enumerate().map(|(i, &e)| (e, i)).collect();
    let od_index: HashMap<(usize, usize), usize> = inst
        .demands
        .iter()
        .enumerate()
        .map(|(k, d)| ((d.origin, d.dest), k))
        .collect();

    let mut paths = Family::new("paths");
    let mut columns: Vec<(Column, f64)> = Vec::new();
    for (i, p) in sol.paths.iter().enumerate() {
        if !(p.flow >= 0.0 && p.flow.is_finite()) {
            paths.fail(format!("path {i}: flow {} is not a nonnegative number", p.flow));
            continue;
        }
        let (Some(&o), Some(&d)) = (internal.get(&p.origin), internal.get(&p.dest)) else {
            paths.fail(format!("path {i}: unknown endpoint"));
            continue;
        };
        let Some(&k) = od_index.get(&(o, d)) else {
            paths.fail(format!("path {i}: no demand {}->{}", p.origin, p.dest));
            continue;
        };
        if p.edges.iter().any(|&e| e >= net.edge_count()) {
            paths.fail(format!("path {i}: unknown edge"));
            continue;
        }
        let col = Column::new(inst, k, p.edges.clone());
        if let Some(reason) = col.admissibility_issue(inst) {
            paths.fail(format!("path {i}: {reason}"));
            continue;
        }
        let nodes: Vec<ExternalId> = col.nodes.iter().map(|&v| loaded.node_ids[v]).collect();
        if nodes != p.nodes {
            paths.fail(format!("path {i}: node sequence does not match its edges"));
        }
        if !within_time_limit(col.travel_time, inst.time_limits[k]) {
            paths.fail(format!("path {i}: too slow"));
        }
        columns.push((col, p.flow));
    }
    let n_paths = sol.paths.len();
    let mut checks = vec![paths.finish(format!("{n_paths} admissible elementary paths"))];

    let mut per_od = vec![0.0; inst.demands.len()];
    let mut y = vec![0.0; net.edge_count()];
    for (c, f) in &columns {
        per_od[c.od] += f;
        for &e in &c.edges {
            y[e] += f;
        }
    }

    let mut demand = Family::new("demand");
    for (k, d) in inst.demands.iter().enumerate() {
        if per_od[k] > d.alpha + slack(d.alpha) {
            demand.fail(format!(
                "OD {}->{}: flow {} exceeds alpha {}",
                loaded.node_ids[d.origin], loaded.node_ids[d.dest], per_od[k], d.alpha
            ));
        }
    }
    checks.push(demand.finish(format!("{} demand rows", inst.demands.len())));

    let mut x = vec![false; net.edge_count()];
    let mut capacity = Family::new("capacity");
    for r in &sol.instrumented_edges {
        match x.get_mut(r.edge) {
            Some(slot) => *slot = true,
            None => capacity.fail(format!("unknown instrumented edge {}", r.edge)),
        }
    }
    for (e, &load) in y.iter().enumerate() {
        let cap = if x[e] { net.edge(e).capacity } else { 0.0 };
        if load > cap + slack(cap) {
            capacity.fail(format!("edge {e}: flow {load} exceeds capacity {cap} (x = {})", u8::from(x[e])));
        }
    }
    checks.push(capacity.finish(format!("{} edges", net.edge_count())));

    let budget_used: f64 = (0..net.edge_count()).filter(|&e| x[e]).map(|e| net.edge(e).build_cost).sum();
    let mut budget = Family::new("budget");
    if budget_used > inst.budget + slack(inst.budget) {
        budget.fail(format!("spend {budget_used} exceeds budget {}", inst.budget));
    }
    checks.push(budget.finish(format!("{budget_used} of {}", inst.budget)));

    let fleet_used: f64 = columns.iter().map(|(c, f)| c.travel_time * f).sum();
    let mut fleet = Family::new("fleet_time");
    if fleet_used > inst.fleet_time + slack(inst.fleet_time) {
        fleet.fail(format!("fleet time {fleet_used} exceeds {}", inst.fleet_time));
    }
    checks.push(fleet.finish(format!("{fleet_used} of {}", inst.fleet_time)));

    let lt_used: f64 = columns.iter().map(|(c, f)| c.left_turns as f64 * f).sum();
    let mut lt = Family::new("left_turns");
    let lt_detail = match inst.left_turn_budget {
        Some(cap) => {
            if lt_used > cap + slack(cap) {
                lt.fail(format!("left turns {lt_used} exceed {cap}"));
            }
            format!("{lt_used} of {cap}")
        }
        None => format!("{lt_used} (no budget)"),
    };
    checks.push(lt.finish(lt_detail));

    let profit: f64 = columns.iter().map(|(c, f)| c.profit * f).sum();
    let mut objective = Family::new("objective");
    if (profit - sol.j_ip).abs() > 1e-7 * sol.j_ip.abs().max(1.0) {
        objective.fail(format!("recomputed profit {profit} differs from J_IP {}", sol.j_ip));
    }
    let expected_gap = if sol.j_lp == 0.0 { 0.0 } else { (sol.j_lp - sol.j_ip) / sol.j_lp };
    if sol.gap != expected_gap {
        objective.fail(format!("reported gap {} differs from {expected_gap}", sol.gap));
    }
    if sol.j_ip > sol.j_lp + slack(sol.j_lp) {
        objective.fail(format!("J_IP {} exceeds J_LP {}", sol.j_ip, sol.j_lp));
    }
    checks.push(objective.finish(format!("profit {profit}")));

    let mut aggregates = Family::new("aggregates");
    let reported: BTreeMap<usize, f64> = sol.edge_flows.iter().map(|f| (f.edge, f.flow)).collect();
    for (e, &load) in y.iter().enumerate() {
        let r = reported.get(&e).copied().unwrap_or(0.0);
        if (r - load).abs() > 1e-9 * load.abs().max(1.0) {
            aggregates.fail(format!("edge {e}: reported flow {r}, recomputed {load}"));
        }
    }
    let instrumented: HashSet<usize> = sol.instrumented_edges.iter().map(|r| r.edge).collect();
    if instrumented.len() != sol.instrumented_edges.len() {
        aggregates.fail("duplicate instrumented edge".into());
    }
    for (name, reported, actual) in [
        ("budget", sol.usage.budget, budget_used),
        ("fleet_time", sol.usage.fleet_time, fleet_used),
        ("left_turns", sol.usage.left_turns, lt_used),
        ("profit", sol.usage.profit, profit),
        ("served", sol.usage.served, per_od.iter().sum()),
    ] {
        if (reported - actual).abs() > 1e-9 * actual.abs().max(1.0) {
            aggregates.fail(format!("usage.{name}: reported {reported}, recomputed {actual}"));
        }
    }
    checks.push(aggregates.finish("edge flows and usage match".into()));

    ValidationReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}
