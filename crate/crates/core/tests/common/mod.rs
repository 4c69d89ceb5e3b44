#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sos_core::netsim::{Record, Scenario};

/// Random scenario with unlimited resources and every node in the
/// foreground, so epidemic delivery should equal foremost arrival.
pub fn random_scenario(seed: u64, scheme: &str, max_nodes: usize, max_contacts: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=max_nodes);
    let nodes: Vec<Value> = (0..n)
        .map(|i| json!({"id": format!("N{i}"), "username": format!("user{i}")}))
        .collect();

    let mut follows = Vec::new();
    for a in 0..n {
        for b in 0..n {
            if a != b && rng.gen_bool(0.4) {
                follows.push(json!({"t": 0, "follower": format!("N{a}"), "followee": format!("user{b}")}));
            }
        }
    }

    // Coarse times so ties between events are common.
    let time = |rng: &mut ChaCha8Rng| f64::from(rng.gen_range(0..40u32)) / 2.0;
    let contacts: Vec<Value> = (0..rng.gen_range(0..=max_contacts))
        .map(|_| {
            let a = rng.gen_range(0..n);
            let b = (a + rng.gen_range(1..n)) % n;
            let s = time(&mut rng);
            let e = s + f64::from(rng.gen_range(1..10u32)) / 2.0;
            json!({"t_start": s, "t_end": e, "node_a": format!("N{a}"), "node_b": format!("N{b}")})
        })
        .collect();

    let traffic: Vec<Value> = (0..rng.gen_range(1..6))
        .map(|_| {
            let author = rng.gen_range(0..n);
            let t = time(&mut rng);
            if rng.gen_bool(0.3) {
                let to = (author + rng.gen_range(1..n)) % n;
                json!({"t": t, "author": format!("N{author}"), "kind": "dm", "to": format!("user{to}"), "size": 16})
            } else {
                json!({"t": t, "author": format!("N{author}"), "kind": "post", "size": rng.gen_range(0..100)})
            }
        })
        .collect();

    let doc = json!({
        "schema": 1,
        "seed": seed,
        "horizon_s": 100,
        "scheme": scheme,
        "nodes": nodes,
        "follows": follows,
        "connectivity": {"contacts": contacts},
        "traffic": traffic,
        "limits": {"capacity_bytes": u64::MAX, "ttl_s": 1e9, "unlimited_bandwidth": true},
        "online_phases": [{"t_start": 0, "t_end": 100}],
        "record_crypto_timings": false
    });
    Scenario::from_json(&doc.to_string()).unwrap()
}

pub struct Created {
    pub author: String,
    pub t: f64,
    pub dest: Vec<String>,
}

pub fn created(records: &[Record]) -> BTreeMap<String, Created> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::BundleCreated {
                t,
                bundle,
                author,
                dest,
                ..
            } => Some((
                bundle.to_string(),
                Created {
                    author: author.clone(),
                    t: *t,
                    dest: dest.clone(),
                },
            )),
            _ => None,
        })
        .collect()
}

pub fn delivered(records: &[Record]) -> BTreeMap<(String, String), f64> {
    records
        .iter()
        .filter_map(|r| match r {
            Record::Delivered {
                t, bundle, recipient, ..
            } => Some(((bundle.to_string(), recipient.clone()), *t)),
            _ => None,
        })
        .collect()
}

pub fn delivered_pairs(records: &[Record]) -> BTreeSet<(String, String)> {
    delivered(records).into_keys().collect()
}
