//! GeoJSON FeatureCollections for the operation subnetwork and edge flows.

use amod_core::network::Network;
use serde_json::{json, Value};

use crate::load::LoadedInstance;
use crate::solution::SolutionFile;

fn line(net: &Network, e: usize) -> Value {
    let edge = net.edge(e);
    let a = net.node(edge.src);
    let b = net.node(edge.dst);
    json!({
        "type": "LineString",
        "coordinates": [[a.lon, a.lat], [b.lon, b.lat]],
    })
}

/// Instrumented edges (`x = 1`).
pub fn subnetwork(loaded: &LoadedInstance, sol: &SolutionFile) -> Value {
    let net = &loaded.instance.network;
    let features: Vec<Value> = sol
        .instrumented_edges
        .iter()
        .map(|r| {
            let edge = net.edge(r.edge);
            json!({
                "type": "Feature",
                "geometry": line(net, r.edge),
                "properties": {
                    "edge": r.edge,
                    "src": r.src,
                    "dst": r.dst,
                    "build_cost": edge.build_cost,
                    "capacity": edge.capacity,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

/// Edges carrying flow, with `y` the aggregate path flow.
pub fn flows(loaded: &LoadedInstance, sol: &SolutionFile) -> Value {
    let net = &loaded.instance.network;
    let features: Vec<Value> = sol
        .edge_flows
        .iter()
        .map(|f| {
            json!({
                "type": "Feature",
                "geometry": line(net, f.edge),
                "properties": {
                    "edge": f.edge,
                    "src": f.src,
                    "dst": f.dst,
                    "y": f.flow,
                    "capacity": f.capacity,
                    "utilization": f.flow / f.capacity,
                },
            })
        })
        .collect();
    json!({ "type": "FeatureCollection", "features": features })
}

pub fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("geojson serializes");
    s.push('\n');
    s
}
