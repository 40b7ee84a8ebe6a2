//! Road graph model, travel-time shortest paths, OD-specific pruning and turn geometry.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type EdgeId = usize;

/// Distance reported for nodes that cannot be reached.
pub const UNREACHABLE: f64 = f64::INFINITY;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("network needs at least one node and one edge")]
    Empty,
    #[error("node ids must be contiguous from 0, found id {0} at position {1}")]
    NonContiguousNodes(NodeId, usize),
    #[error("edge ids must be contiguous from 0, found id {0} at position {1}")]
    NonContiguousEdges(EdgeId, usize),
    #[error("node {0} has non-finite coordinates")]
    NonFiniteCoordinate(NodeId),
    #[error("edges {0} and {1} both connect {2} -> {3}")]
    DuplicateEdge(EdgeId, EdgeId, NodeId, NodeId),
    #[error("edge {edge}: {attribute} must be positive and finite, got {value}")]
    NonPositiveAttribute {
        edge: EdgeId,
        attribute: &'static str,
        value: f64,
    },
    #[error("edge {edge}: profit rate must be finite, got {value}")]
    NonFiniteProfit { edge: EdgeId, value: f64 },
    #[error("edge {0} references unknown node {1}")]
    DanglingEndpoint(EdgeId, NodeId),
    #[error("edge {0} is a self loop on node {1}")]
    SelfLoop(EdgeId, NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("unknown edge {0}")]
    UnknownEdge(EdgeId),
    #[error("no path from {origin} to {dest} within {max_time} s (shortest is {shortest} s)")]
    Infeasible {
        origin: NodeId,
        dest: NodeId,
        max_time: f64,
        shortest: f64,
    },
    #[error("edge {0} does not end where edge {1} starts")]
    NonIncidentEdges(EdgeId, EdgeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub src: NodeId,
    pub dst: NodeId,
    /// Seconds.
    pub travel_time: f64,
    /// Meters.
    pub length: f64,
    /// Flow units per planning horizon.
    pub capacity: f64,
    pub build_cost: f64,
    /// Net profit per unit of flow; may be negative.
    pub profit_rate: f64,
}

/// Validated directed road graph with at most one edge per ordered node pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    out_adj: Vec<Vec<EdgeId>>,
    in_adj: Vec<Vec<EdgeId>>,
    by_endpoints: HashMap<(NodeId, NodeId), EdgeId>,
}

impl Network {
    pub fn new(mut nodes: Vec<Node>, mut edges: Vec<Edge>) -> Result<Self, NetworkError> {
        if nodes.is_empty() || edges.is_empty() {
            return Err(NetworkError::Empty);
        }
        nodes.sort_by_key(|n| n.id);
        for (pos, n) in nodes.iter().enumerate() {
            if n.id != pos {
                return Err(NetworkError::NonContiguousNodes(n.id, pos));
            }
            if !n.lat.is_finite() || !n.lon.is_finite() {
                return Err(NetworkError::NonFiniteCoordinate(n.id));
            }
        }
        edges.sort_by_key(|e| e.id);
        let n = nodes.len();
        let mut out_adj = vec![Vec::new(); n];
        let mut in_adj = vec![Vec::new(); n];
        let mut by_endpoints = HashMap::with_capacity(edges.len());
        for (pos, e) in edges.iter().enumerate() {
            if e.id != pos {
                return Err(NetworkError::NonContiguousEdges(e.id, pos));
            }
            for node in [e.src, e.dst] {
                if node >= n {
                    return Err(NetworkError::DanglingEndpoint(e.id, node));
                }
            }
            if e.src == e.dst {
                return Err(NetworkError::SelfLoop(e.id, e.src));
            }
            for (attribute, value) in [
                ("travel_time", e.travel_time),
                ("length", e.length),
                ("capacity", e.capacity),
                ("build_cost", e.build_cost),
            ] {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(NetworkError::NonPositiveAttribute {
                        edge: e.id,
                        attribute,
                        value,
                    });
                }
            }
            if !e.profit_rate.is_finite() {
                return Err(NetworkError::NonFiniteProfit {
                    edge: e.id,
                    value: e.profit_rate,
                });
            }
            if let Some(&other) = by_endpoints.get(&(e.src, e.dst)) {
                return Err(NetworkError::DuplicateEdge(other, e.id, e.src, e.dst));
            }
            by_endpoints.insert((e.src, e.dst), e.id);
            out_adj[e.src].push(e.id);
            in_adj[e.dst].push(e.id);
        }
        Ok(Self {
            nodes,
            edges,
            out_adj,
            in_adj,
            by_endpoints,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn out_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.out_adj[v]
    }

    pub fn in_edges(&self, v: NodeId) -> &[EdgeId] {
        &self.in_adj[v]
    }

    pub fn find_edge(&self, src: NodeId, dst: NodeId) -> Option<EdgeId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    /// Same graph with every edge pointing the other way; ids and attributes are kept.
    pub fn reversed(&self) -> Network {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                src: e.dst,
                dst: e.src,
                ..*e
            })
            .collect();
        Network::new(self.nodes.clone(), edges).expect("reversal preserves validity")
    }

    /// Returns a copy with per-edge travel times replaced.
    pub fn with_travel_times(&self, times: &[f64]) -> Result<Network, NetworkError> {
        let edges = self
            .edges
            .iter()
            .zip(times)
            .map(|(e, &t)| Edge {
                travel_time: t,
                ..*e
            })
            .collect();
        Network::new(self.nodes.clone(), edges)
    }

    pub fn path_travel_time(&self, path: &[EdgeId]) -> f64 {
        path.iter().map(|&e| self.edges[e].travel_time).sum()
    }

    pub fn path_profit(&self, path: &[EdgeId]) -> f64 {
        path.iter().map(|&e| self.edges[e].profit_rate).sum()
    }

    /// Node sequence of a connected edge sequence.
    pub fn path_nodes(&self, path: &[EdgeId]) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(path.len() + 1);
        if let Some(&first) = path.first() {
            out.push(self.edges[first].src);
        }
        out.extend(path.iter().map(|&e| self.edges[e].dst));
        out
    }

    /// Edge sequence for a node sequence, `None` if a hop has no edge.
    pub fn edges_for_nodes(&self, nodes: &[NodeId]) -> Option<Vec<EdgeId>> {
        nodes
            .windows(2)
            .map(|w| self.find_edge(w[0], w[1]))
            .collect()
    }

    pub fn left_turns(&self, path: &[EdgeId], band: TurnBand) -> u32 {
        path.windows(2)
            .filter(|w| {
                matches!(
                    turn_type(self, w[0], w[1], band),
                    Ok(TurnType::Left)
                )
            })
            .count() as u32
    }
}

/// Admissibility test for accumulated travel time against a limit.
///
/// Sums of edge times are accumulated in different orders by different
/// routines, so the comparison absorbs rounding at the 1e-12 relative level.
pub fn within_time_limit(time: f64, limit: f64) -> bool {
    time <= limit + 1e-12 * limit.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct HeapEntry {
    dist: f64,
    node: NodeId,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (dist, node)
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path tree from a single source over travel times.
#[derive(Debug, Clone, PartialEq)]
pub struct ShortestPathTree {
    pub source: NodeId,
    pub dist: Vec<f64>,
    pub pred_edge: Vec<Option<EdgeId>>,
}

impl ShortestPathTree {
    /// Edge sequence from the source to `target`, if reachable.
    pub fn path_to(&self, net: &Network, target: NodeId) -> Option<Vec<EdgeId>> {
        if !self.dist[target].is_finite() {
            return None;
        }
        let mut path = Vec::new();
        let mut v = target;
        while let Some(e) = self.pred_edge[v] {
            path.push(e);
            v = net.edge(e).src;
        }
        path.reverse();
        Some(path)
    }
}

pub fn shortest_path_tree(net: &Network, source: NodeId) -> Result<ShortestPathTree, NetworkError> {
    if source >= net.node_count() {
        return Err(NetworkError::UnknownNode(source));
    }
    let n = net.node_count();
    let mut dist = vec![UNREACHABLE; n];
    let mut pred_edge = vec![None; n];
    let mut settled = vec![false; n];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapEntry {
        dist: 0.0,
        node: source,
    });
    while let Some(HeapEntry { dist: d, node: u }) = heap.pop() {
        if settled[u] {
            continue;
        }
        settled[u] = true;
        for &e in net.out_edges(u) {
            let edge = net.edge(e);
            let cand = d + edge.travel_time;
            if cand < dist[edge.dst] {
                dist[edge.dst] = cand;
                pred_edge[edge.dst] = Some(e);
                heap.push(HeapEntry {
                    dist: cand,
                    node: edge.dst,
                });
            }
        }
    }
    Ok(ShortestPathTree {
        source,
        dist,
        pred_edge,
    })
}

/// Travel-time distances from `source`; unreachable nodes map to [`UNREACHABLE`].
pub fn dijkstra(net: &Network, source: NodeId) -> Result<Vec<f64>, NetworkError> {
    shortest_path_tree(net, source).map(|t| t.dist)
}

/// OD-specific pruned graph and completion bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessResult {
    pub origin: NodeId,
    pub dest: NodeId,
    pub max_time: f64,
    /// Kept nodes, ascending.
    pub kept_nodes: Vec<NodeId>,
    /// Kept edges, ascending.
    pub kept_edges: Vec<EdgeId>,
    pub is_kept: Vec<bool>,
    pub dist_from_origin: Vec<f64>,
    /// Doubles as the completion bound used to order and prune labels.
    pub dist_to_dest: Vec<f64>,
    pub forward_tree: ShortestPathTree,
}

impl PreprocessResult {
    pub fn shortest_time(&self) -> f64 {
        self.dist_from_origin[self.dest]
    }

    /// Travel-time shortest o-d path.
    pub fn shortest_path(&self, net: &Network) -> Vec<EdgeId> {
        self.forward_tree
            .path_to(net, self.dest)
            .expect("feasible OD has a shortest path")
    }
}

/// Prunes nodes that cannot lie on any o-d path within `max_time`.
///
/// `reversed` must be `net.reversed()`; callers pricing many OD pairs build it once.
pub fn preprocess_od_with(
    net: &Network,
    reversed: &Network,
    origin: NodeId,
    dest: NodeId,
    max_time: f64,
) -> Result<PreprocessResult, NetworkError> {
    for v in [origin, dest] {
        if v >= net.node_count() {
            return Err(NetworkError::UnknownNode(v));
        }
    }
    let forward_tree = shortest_path_tree(net, origin)?;
    let dist_to_dest = dijkstra(reversed, dest)?;
    let dist_from_origin = forward_tree.dist.clone();
    let shortest = dist_from_origin[dest];
    if !shortest.is_finite() || !within_time_limit(shortest, max_time) {
        return Err(NetworkError::Infeasible {
            origin,
            dest,
            max_time,
            shortest,
        });
    }
    let is_kept: Vec<bool> = (0..net.node_count())
        .map(|v| {
            let from = dist_from_origin[v];
            within_time_limit(from, max_time)
                && within_time_limit(from + dist_to_dest[v], max_time)
        })
        .collect();
    let kept_nodes = (0..net.node_count()).filter(|&v| is_kept[v]).collect();
    let kept_edges = net
        .edges()
        .iter()
        .filter(|e| is_kept[e.src] && is_kept[e.dst])
        .map(|e| e.id)
        .collect();
    Ok(PreprocessResult {
        origin,
        dest,
        max_time,
        kept_nodes,
        kept_edges,
        is_kept,
        dist_from_origin,
        dist_to_dest,
        forward_tree,
    })
}

pub fn preprocess_od(
    net: &Network,
    origin: NodeId,
    dest: NodeId,
    max_time: f64,
) -> Result<PreprocessResult, NetworkError> {
    preprocess_od_with(net, &net.reversed(), origin, dest, max_time)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnType {
    Left,
    Right,
    Straight,
    UTurn,
}

/// Angular band (degrees) classifying a turn as left: `(min_deg, max_deg]`.
///
/// Right turns use the mirrored band; anything sharper than `max_deg` is a U-turn.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnBand {
    pub min_deg: f64,
    pub max_deg: f64,
}

impl Default for TurnBand {
    fn default() -> Self {
        Self {
            min_deg: 30.0,
            max_deg: 150.0,
        }
    }
}

/// Planar heading vector of an edge, east/north components in meters-proportional units.
fn heading(net: &Network, e: EdgeId) -> (f64, f64) {
    let edge = net.edge(e);
    let a = net.node(edge.src);
    let b = net.node(edge.dst);
    let mid_lat = (0.5 * (a.lat + b.lat)).to_radians();
    ((b.lon - a.lon) * mid_lat.cos(), b.lat - a.lat)
}

/// Signed turn angle in degrees, counterclockwise positive, in `(-180, 180]`.
pub fn turn_angle_deg(net: &Network, e_in: EdgeId, e_out: EdgeId) -> Result<f64, NetworkError> {
    for e in [e_in, e_out] {
        if e >= net.edge_count() {
            return Err(NetworkError::UnknownEdge(e));
        }
    }
    if net.edge(e_in).dst != net.edge(e_out).src {
        return Err(NetworkError::NonIncidentEdges(e_in, e_out));
    }
    let (ax, ay) = heading(net, e_in);
    let (bx, by) = heading(net, e_out);
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    let mut theta = cross.atan2(dot).to_degrees();
    if theta <= -180.0 {
        theta += 360.0;
    }
    Ok(theta)
}

pub fn turn_type(
    net: &Network,
    e_in: EdgeId,
    e_out: EdgeId,
    band: TurnBand,
) -> Result<TurnType, NetworkError> {
    let theta = turn_angle_deg(net, e_in, e_out)?;
    Ok(classify_turn(theta, band))
}

pub fn classify_turn(theta: f64, band: TurnBand) -> TurnType {
    if theta.abs() > band.max_deg {
        TurnType::UTurn
    } else if theta > band.min_deg {
        TurnType::Left
    } else if theta < -band.min_deg {
        TurnType::Right
    } else {
        TurnType::Straight
    }
}
