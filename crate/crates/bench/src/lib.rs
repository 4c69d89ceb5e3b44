//! Shared fixtures for the criterion benches.

use serde_json::json;
use sos_core::netsim::{Contact, Scenario};

/// `nodes` pedestrians in a 200 m square for 30 minutes, each following the
/// next two, posting every 20 s and sending a direct message every 60 s.
pub fn waypoint_scenario(nodes: usize, scheme: &str) -> Scenario {
    let id = |i: usize| format!("n{}", i % nodes);
    let user = |i: usize| format!("user{}", i % nodes);
    let doc = json!({
        "schema": 1,
        "seed": 11,
        "horizon_s": 1800,
        "scheme": scheme,
        "nodes": (0..nodes).map(|i| json!({"id": id(i), "username": user(i)})).collect::<Vec<_>>(),
        "follows": (0..nodes)
            .flat_map(|i| [1, 2].map(|k| json!({"t": 0, "follower": id(i), "followee": user(i + k)})))
            .collect::<Vec<_>>(),
        "connectivity": {"waypoint": {"nodes": nodes, "width_m": 200, "height_m": 200, "horizon_s": 1800}},
        "traffic": (0..90)
            .map(|k| {
                if k % 3 == 2 {
                    json!({"t": 20 * k, "author": id(k), "kind": "dm", "to": user(k + 1), "size": 140})
                } else {
                    json!({"t": 20 * k, "author": id(k), "kind": "post", "size": 280})
                }
            })
            .collect::<Vec<_>>(),
        "limits": {"capacity_bytes": 200_000},
        "online_phases": [{"t_start": 0, "t_end": 0}],
        "record_crypto_timings": false
    });
    Scenario::from_json(&doc.to_string()).expect("fixture scenario parses")
}

/// A dense synthetic trace: `nodes` nodes, one contact every `step` seconds
/// between a rotating pair.
pub fn ring_trace(nodes: usize, contacts: usize, step: f64) -> Vec<Contact> {
    (0..contacts)
        .map(|k| {
            let a = k % nodes;
            let b = (a + 1 + k / nodes % (nodes - 1)) % nodes;
            let t = k as f64 * step;
            Contact {
                t_start: t,
                t_end: t + 3.0 * step,
                node_a: format!("n{a}"),
                node_b: format!("n{b}"),
                bandwidth_bps: f64::INFINITY,
            }
        })
        .collect()
}
