//! Exact elementary shortest path with a travel-time resource constraint.
//!
//! Labels are expanded best-first on `time + bound(node)`, where the bound is
//! the shortest remaining travel time to the destination. Each bucket keeps
//! only mutually non-dominated labels. When a left-turn cost is active the
//! accumulated cost depends on the incoming edge, so buckets are keyed by
//! incoming edge instead of node.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

use crate::master::Duals;
use crate::network::{
    turn_type, within_time_limit, Edge, EdgeId, Network, NodeId, PreprocessResult, TurnBand,
    TurnType,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PricingError {
    #[error("labels sit at different nodes ({0} vs {1})")]
    NodesDiffer(NodeId, NodeId),
}

/// Fixed-width bitset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub fn with_capacity(bits: usize) -> Self {
        Self {
            words: vec![0; bits.div_ceil(64)],
        }
    }

    pub fn from_indices(bits: usize, idx: impl IntoIterator<Item = usize>) -> Self {
        let mut s = Self::with_capacity(bits);
        for i in idx {
            s.insert(i);
        }
        s
    }

    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn is_subset(&self, other: &NodeSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .all(|(a, b)| a & !b == 0)
    }
}

/// Partial o-to-`node` path in the search.
#[derive(Debug, Clone, PartialEq)]
pub struct Label {
    pub node: NodeId,
    pub cost: f64,
    pub time: f64,
    /// Indexed by the search's local node numbering.
    pub visited: NodeSet,
    /// Parent label index and the edge used to leave it.
    pub pred: Option<(usize, EdgeId)>,
}

impl Label {
    pub fn incoming_edge(&self) -> Option<EdgeId> {
        self.pred.map(|p| p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingContext {
    pub origin: NodeId,
    pub dest: NodeId,
    pub max_time: f64,
    /// Lower bound on remaining travel time to `dest`, by node id.
    pub bounds: Vec<f64>,
    /// Dual-adjusted cost per edge id.
    pub edge_cost: Vec<f64>,
    /// Charged on every left turn; zero when no left-turn row exists.
    pub turn_cost: f64,
    pub turn_band: TurnBand,
    /// Allowed time excess of a dominating label; zero for exact pricing.
    pub robust_slack: f64,
    /// Demand-row dual of this OD, used to report reduced costs.
    pub demand_dual: f64,
}

impl PricingContext {
    pub fn new(pre: &PreprocessResult, edge_cost: Vec<f64>) -> Self {
        Self {
            origin: pre.origin,
            dest: pre.dest,
            max_time: pre.max_time,
            bounds: pre.dist_to_dest.clone(),
            edge_cost,
            turn_cost: 0.0,
            turn_band: TurnBand::default(),
            robust_slack: 0.0,
            demand_dual: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricedPath {
    pub edges: Vec<EdgeId>,
    pub nodes: Vec<NodeId>,
    pub cost: f64,
    pub time: f64,
    pub reduced_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SprcOptions {
    /// Disable only to cross-check the pruning rule.
    pub dominance: bool,
    /// Return every non-dominated label at the destination, best first.
    pub pareto_frontier: bool,
}

impl Default for SprcOptions {
    fn default() -> Self {
        Self {
            dominance: true,
            pareto_frontier: false,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SprcStats {
    pub labels_created: usize,
    pub labels_popped: usize,
    pub labels_dominated: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SprcOutcome {
    /// Best first; a single entry unless the frontier was requested.
    pub paths: Vec<PricedPath>,
    pub stats: SprcStats,
}

/// `mu * T(e) + u_e - beta_e`.
pub fn edge_pricing_cost(edge: &Edge, mu: f64, capacity_dual: f64) -> f64 {
    mu * edge.travel_time + capacity_dual - edge.profit_rate
}

/// Label dominance; `slack > 0` relaxes the time comparison to `t1 - t2 <= slack`.
pub fn dominates(l1: &Label, l2: &Label, slack: f64) -> Result<bool, PricingError> {
    if l1.node != l2.node {
        return Err(PricingError::NodesDiffer(l1.node, l2.node));
    }
    Ok(dominates_unchecked(l1, l2, slack))
}

fn dominates_unchecked(l1: &Label, l2: &Label, slack: f64) -> bool {
    let dt = l1.time - l2.time;
    if l1.cost > l2.cost || dt > slack || !l1.visited.is_subset(&l2.visited) {
        return false;
    }
    l1.cost < l2.cost || dt < slack || l1.visited != l2.visited
}

/// Local numbering of the kept nodes, used for visited bitsets.
struct LocalIndex {
    of_node: Vec<usize>,
    size: usize,
}

impl LocalIndex {
    fn new(pre: &PreprocessResult) -> Self {
        let mut of_node = vec![usize::MAX; pre.is_kept.len()];
        for (i, &v) in pre.kept_nodes.iter().enumerate() {
            of_node[v] = i;
        }
        Self {
            of_node,
            size: pre.kept_nodes.len(),
        }
    }
}

fn extend_with(
    net: &Network,
    ctx: &PricingContext,
    local: &LocalIndex,
    parent: &Label,
    parent_idx: usize,
    e: EdgeId,
) -> Option<Label> {
    let edge = net.edge(e);
    debug_assert_eq!(edge.src, parent.node);
    let next = edge.dst;
    let li = local.of_node[next];
    if li == usize::MAX || parent.visited.contains(li) {
        return None;
    }
    let time = parent.time + edge.travel_time;
    if !within_time_limit(time + ctx.bounds[next], ctx.max_time) {
        return None;
    }
    let mut cost = parent.cost + ctx.edge_cost[e];
    if ctx.turn_cost > 0.0 {
        if let Some(prev) = parent.incoming_edge() {
            if turn_type(net, prev, e, ctx.turn_band) == Ok(TurnType::Left) {
                cost += ctx.turn_cost;
            }
        }
    }
    let mut visited = parent.visited.clone();
    visited.insert(li);
    Some(Label {
        node: next,
        cost,
        time,
        visited,
        pred: Some((parent_idx, e)),
    })
}

/// Extends `parent` (stored at `parent_idx`) along `e`.
///
/// Returns `None` when the child would revisit a node or could not reach the
/// destination within the time limit.
pub fn extend_label(
    net: &Network,
    ctx: &PricingContext,
    pre: &PreprocessResult,
    parent: &Label,
    parent_idx: usize,
    e: EdgeId,
) -> Option<Label> {
    extend_with(net, ctx, &LocalIndex::new(pre), parent, parent_idx, e)
}

/// Root label at the origin for a given preprocessing result.
pub fn root_label(pre: &PreprocessResult) -> Label {
    let local = LocalIndex::new(pre);
    Label {
        node: pre.origin,
        cost: 0.0,
        time: 0.0,
        visited: NodeSet::from_indices(local.size, [local.of_node[pre.origin]]),
        pred: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct QueueEntry {
    key: f64,
    label: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .key
            .total_cmp(&self.key)
            .then_with(|| other.label.cmp(&self.label))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn reconstruct(net: &Network, arena: &[Label], mut idx: usize) -> Vec<EdgeId> {
    let mut edges = Vec::new();
    while let Some((parent, e)) = arena[idx].pred {
        edges.push(e);
        idx = parent;
    }
    edges.reverse();
    debug_assert!(edges.windows(2).all(|w| net.edge(w[0]).dst == net.edge(w[1]).src));
    edges
}

fn compare_paths(a: &PricedPath, b: &PricedPath) -> Ordering {
    a.cost
        .total_cmp(&b.cost)
        .then(a.time.total_cmp(&b.time))
        .then_with(|| a.nodes.cmp(&b.nodes))
}

/// Label-correcting search for the cheapest admissible elementary o-d path.
pub fn solve_sprc_with(
    net: &Network,
    ctx: &PricingContext,
    pre: &PreprocessResult,
    opts: SprcOptions,
) -> SprcOutcome {
    let local = LocalIndex::new(pre);
    let turn_keyed = ctx.turn_cost > 0.0;
    // bucket per local node, or per edge id (+ one slot for the root) when turn keyed
    let bucket_of = |l: &Label| -> usize {
        if turn_keyed {
            l.incoming_edge().map_or(net.edge_count(), |e| e)
        } else {
            local.of_node[l.node]
        }
    };
    let n_buckets = if turn_keyed {
        net.edge_count() + 1
    } else {
        local.size
    };
    let mut bags: Vec<Vec<usize>> = vec![Vec::new(); n_buckets];
    let mut arena: Vec<Label> = Vec::new();
    let mut alive: Vec<bool> = Vec::new();
    let mut stats = SprcStats::default();
    let mut queue = BinaryHeap::new();

    let root = Label {
        node: ctx.origin,
        cost: 0.0,
        time: 0.0,
        visited: NodeSet::from_indices(local.size, [local.of_node[ctx.origin]]),
        pred: None,
    };
    queue.push(QueueEntry {
        key: ctx.bounds[ctx.origin],
        label: 0,
    });
    bags[bucket_of(&root)].push(0);
    arena.push(root);
    alive.push(true);
    stats.labels_created = 1;

    while let Some(QueueEntry { label: idx, .. }) = queue.pop() {
        if !alive[idx] {
            continue;
        }
        stats.labels_popped += 1;
        let node = arena[idx].node;
        debug_assert!(within_time_limit(
            arena[idx].time + ctx.bounds[node],
            ctx.max_time
        ));
        for &e in net.out_edges(node) {
            let Some(child) = extend_with(net, ctx, &local, &arena[idx], idx, e) else {
                continue;
            };
            let bucket = bucket_of(&child);
            if opts.dominance {
                let bag = &bags[bucket];
                if bag
                    .iter()
                    .any(|&j| dominates_unchecked(&arena[j], &child, ctx.robust_slack))
                {
                    stats.labels_dominated += 1;
                    continue;
                }
                let mut kept = Vec::with_capacity(bag.len() + 1);
                for &j in bag {
                    if dominates_unchecked(&child, &arena[j], ctx.robust_slack) {
                        alive[j] = false;
                        stats.labels_dominated += 1;
                    } else {
                        kept.push(j);
                    }
                }
                bags[bucket] = kept;
            }
            let child_idx = arena.len();
            let key = child.time + ctx.bounds[child.node];
            let at_dest = child.node == ctx.dest;
            arena.push(child);
            alive.push(true);
            stats.labels_created += 1;
            bags[bucket].push(child_idx);
            if !at_dest {
                queue.push(QueueEntry {
                    key,
                    label: child_idx,
                });
            }
        }
    }

    let mut at_dest: Vec<PricedPath> = (0..arena.len())
        .filter(|&i| alive[i] && arena[i].node == ctx.dest && arena[i].pred.is_some())
        .map(|i| {
            let edges = reconstruct(net, &arena, i);
            let l = &arena[i];
            PricedPath {
                nodes: net.path_nodes(&edges),
                edges,
                cost: l.cost,
                time: l.time,
                reduced_cost: -l.cost - ctx.demand_dual,
            }
        })
        .collect();
    at_dest.sort_by(compare_paths);
    if opts.pareto_frontier {
        // turn-keyed buckets may hold labels at the destination that dominate each other
        if turn_keyed {
            let mut frontier: Vec<PricedPath> = Vec::new();
            for p in at_dest {
                if !frontier
                    .iter()
                    .any(|q| q.cost <= p.cost && q.time <= p.time)
                {
                    frontier.push(p);
                }
            }
            at_dest = frontier;
        }
    } else {
        at_dest.truncate(1);
    }
    SprcOutcome {
        paths: at_dest,
        stats,
    }
}

/// Cheapest admissible elementary o-d path, if any exists.
pub fn solve_sprc(net: &Network, ctx: &PricingContext, pre: &PreprocessResult) -> Option<PricedPath> {
    solve_sprc_with(net, ctx, pre, SprcOptions::default())
        .paths
        .into_iter()
        .next()
}

/// Reduced cost of a path column for demand row `od` under the given duals.
pub fn reduced_cost(net: &Network, path: &[EdgeId], duals: &Duals, od: usize, band: TurnBand) -> f64 {
    let profit = net.path_profit(path);
    let cap: f64 = path.iter().map(|&e| duals.u[e]).sum();
    let time = net.path_travel_time(path);
    let mut rc = profit - cap - duals.v[od] - duals.mu * time;
    if let Some(omega) = duals.omega {
        rc -= omega * net.left_turns(path, band) as f64;
    }
    rc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{preprocess_od, Node};

    fn edge(id: EdgeId, src: NodeId, dst: NodeId, t: f64, beta: f64) -> Edge {
        Edge {
            id,
            src,
            dst,
            travel_time: t,
            length: 1.0,
            capacity: 1.0,
            build_cost: 1.0,
            profit_rate: beta,
        }
    }

    fn line_nodes(n: usize) -> Vec<Node> {
        (0..n)
            .map(|id| Node {
                id,
                lat: 0.0,
                lon: id as f64 * 1e-3,
            })
            .collect()
    }

    fn label(node: NodeId, cost: f64, time: f64, visited: &[usize]) -> Label {
        Label {
            node,
            cost,
            time,
            visited: NodeSet::from_indices(8, visited.iter().copied()),
            pred: None,
        }
    }

    #[test]
    fn pricing_cost_formula() {
        let e = Edge {
            travel_time: 10.0,
            profit_rate: 5.0,
            ..edge(0, 0, 1, 10.0, 5.0)
        };
        assert_eq!(edge_pricing_cost(&e, 2.0, 1.0), 16.0);
        assert_eq!(edge_pricing_cost(&e, 0.0, 0.0), -5.0);
        let e0 = edge(0, 0, 1, 10.0, 0.0);
        assert_eq!(edge_pricing_cost(&e0, 0.0, 0.0), 0.0);
    }

    #[test]
    fn dominance_rules() {
        let l1 = label(1, 3.0, 4.0, &[0, 1]);
        let l2 = label(1, 5.0, 4.0, &[0, 2, 1]);
        assert_eq!(dominates(&l1, &l2, 0.0), Ok(true));
        assert_eq!(dominates(&l1, &l1.clone(), 0.0), Ok(false));

        let a = label(1, 3.0, 9.0, &[0, 1]);
        let b = label(1, 5.0, 4.0, &[0, 1]);
        assert_eq!(dominates(&a, &b, 0.0), Ok(false));
        assert_eq!(dominates(&a, &b, 10.0), Ok(true));

        let c = label(2, 0.0, 0.0, &[0]);
        assert_eq!(dominates(&a, &c, 0.0), Err(PricingError::NodesDiffer(1, 2)));
    }

    /// o=0, a=1, d=2: o->a (cost -5, T 10), a->d (cost -5, T 5), o->d (cost 1, T 12)
    fn triangle() -> (Network, Vec<f64>) {
        let net = Network::new(
            line_nodes(3),
            vec![edge(0, 0, 1, 10.0, 5.0), edge(1, 1, 2, 5.0, 5.0), edge(2, 0, 2, 12.0, -1.0)],
        )
        .unwrap();
        let costs = net.edges().iter().map(|e| edge_pricing_cost(e, 0.0, 0.0)).collect();
        (net, costs)
    }

    #[test]
    fn extension_rules() {
        let (net, costs) = triangle();
        let pre = preprocess_od(&net, 0, 2, 18.0).unwrap();
        let ctx = PricingContext::new(&pre, costs);
        let root = root_label(&pre);
        let child = extend_label(&net, &ctx, &pre, &root, 0, 0).unwrap();
        assert_eq!(child.node, 1);
        assert_eq!(child.cost, -5.0);
        assert_eq!(child.time, 10.0);
        assert_eq!(child.visited.len(), 2);

        // time 10 + 5 + bound 4 > 18
        let mut tight = ctx.clone();
        tight.bounds[2] = 4.0;
        let at_a = Label { time: 10.0, ..child.clone() };
        assert!(extend_label(&net, &tight, &pre, &at_a, 1, 1).is_none());
    }

    #[test]
    fn extension_rejects_revisit() {
        let net = Network::new(
            line_nodes(3),
            vec![edge(0, 0, 1, 1.0, 0.0), edge(1, 1, 0, 1.0, 0.0), edge(2, 1, 2, 1.0, 0.0)],
        )
        .unwrap();
        let pre = preprocess_od(&net, 0, 2, f64::INFINITY).unwrap();
        let ctx = PricingContext::new(&pre, vec![0.0; 3]);
        let root = root_label(&pre);
        let at_a = extend_label(&net, &ctx, &pre, &root, 0, 0).unwrap();
        assert!(extend_label(&net, &ctx, &pre, &at_a, 1, 1).is_none());
    }

    #[test]
    fn left_turn_surcharge() {
        // south -> centre heading north, then west: a left turn
        let d = 1e-3;
        let nodes = vec![
            Node { id: 0, lat: -d, lon: 0.0 },
            Node { id: 1, lat: 0.0, lon: 0.0 },
            Node { id: 2, lat: 0.0, lon: -d },
        ];
        let net = Network::new(nodes, vec![edge(0, 0, 1, 1.0, 0.0), edge(1, 1, 2, 1.0, 0.0)]).unwrap();
        let pre = preprocess_od(&net, 0, 2, f64::INFINITY).unwrap();
        let mut ctx = PricingContext::new(&pre, vec![0.0, 1.0]);
        ctx.turn_cost = 2.0;
        let root = root_label(&pre);
        let at_centre = extend_label(&net, &ctx, &pre, &root, 0, 0).unwrap();
        let at_west = extend_label(&net, &ctx, &pre, &at_centre, 1, 1).unwrap();
        assert_eq!(at_west.cost, at_centre.cost + 3.0);
        let best = solve_sprc(&net, &ctx, &pre).unwrap();
        assert_eq!(best.cost, 3.0);
    }

    #[test]
    fn triangle_optimum_depends_on_time_limit() {
        let (net, costs) = triangle();
        let pre = preprocess_od(&net, 0, 2, 20.0).unwrap();
        let ctx = PricingContext::new(&pre, costs.clone());
        let best = solve_sprc(&net, &ctx, &pre).unwrap();
        assert_eq!(best.nodes, vec![0, 1, 2]);
        assert_eq!(best.cost, -10.0);
        assert_eq!(best.reduced_cost, 10.0);

        let pre = preprocess_od(&net, 0, 2, 14.0).unwrap();
        let ctx = PricingContext::new(&pre, costs);
        let best = solve_sprc(&net, &ctx, &pre).unwrap();
        assert_eq!(best.nodes, vec![0, 2]);
        assert_eq!(best.cost, 1.0);
    }

    #[test]
    fn negative_cycle_stays_elementary() {
        // 0 -> 1 -> 2 -> 1 cycle with negative costs, destination 3
        let net = Network::new(
            line_nodes(4),
            vec![
                edge(0, 0, 1, 1.0, 0.0),
                edge(1, 1, 2, 1.0, 0.0),
                edge(2, 2, 1, 1.0, 0.0),
                edge(3, 2, 3, 1.0, 0.0),
                edge(4, 1, 3, 1.0, 0.0),
            ],
        )
        .unwrap();
        let pre = preprocess_od(&net, 0, 3, 100.0).unwrap();
        let ctx = PricingContext::new(&pre, vec![0.0, -4.0, -4.0, 1.0, 0.0]);
        let best = solve_sprc(&net, &ctx, &pre).unwrap();
        assert_eq!(best.nodes, vec![0, 1, 2, 3]);
        assert_eq!(best.cost, -3.0);
    }

    #[test]
    fn frontier_lists_tradeoffs() {
        let (net, costs) = triangle();
        let pre = preprocess_od(&net, 0, 2, 20.0).unwrap();
        let ctx = PricingContext::new(&pre, costs);
        let out = solve_sprc_with(
            &net,
            &ctx,
            &pre,
            SprcOptions {
                pareto_frontier: true,
                ..Default::default()
            },
        );
        let seqs: Vec<_> = out.paths.iter().map(|p| p.nodes.clone()).collect();
        assert_eq!(seqs, vec![vec![0, 1, 2], vec![0, 2]]);
    }
}
