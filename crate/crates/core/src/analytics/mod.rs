//! Metrics computed from an event log, and report files.
//!
//! Definitions:
//! - an addressed pair is `(bundle, d)` for each `d` in a created bundle's
//!   destinations; a delivered pair is one with a `delivered` record,
//!   counted once however often it arrives;
//! - latency is `delivered.t - created_t` per delivered pair; the median of
//!   an even count is the mean of the two middle values and p95 is the
//!   nearest-rank value at rank `ceil(0.95 n)`;
//! - `overhead_ratio = (transfers - delivered) / max(delivered, 1)`, where
//!   every transfer record counts;
//! - an encounter is with a friend when either endpoint follows the other
//!   at contact start.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::crypto::CryptoOp;
use crate::netsim::{AppState, EventLog, Record};
use crate::routing::BundleId;

pub const REPORT_SCHEMA: u32 = 1;

pub const CSV_COLUMNS: [&str; 10] = [
    "scheme",
    "seed",
    "delivery_ratio",
    "mean_latency_s",
    "median_latency_s",
    "p95_latency_s",
    "overhead_ratio",
    "bytes_transmitted",
    "encounters_total",
    "encounters_with_friends",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AnalyticsError {
    #[error("malformed log at record {index}: {reason}")]
    MalformedLog { index: usize, reason: String },
    #[error("cannot write report: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub mean_s: f64,
    pub median_s: f64,
    pub p95_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub count: u64,
    pub mean_nanos: f64,
    pub median_nanos: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub addressed_pairs: u64,
    pub delivered_pairs: u64,
    /// 0 when nothing was addressed.
    pub delivery_ratio: f64,
    /// Absent when nothing was delivered.
    pub latency: Option<Latency>,
    pub transfers: u64,
    pub overhead_ratio: f64,
    /// Delivered pairs by hop count.
    pub hop_histogram: BTreeMap<u32, u64>,
    pub bytes_transmitted: u64,
    pub encounters_total: u64,
    pub encounters_with_friends: u64,
    /// Seconds per app state, per node.
    pub time_in_state: BTreeMap<String, BTreeMap<AppState, f64>>,
    pub crypto_timings: BTreeMap<CryptoOp, TimingStats>,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

/// Nearest-rank percentile of a sorted, nonempty slice.
pub fn nearest_rank(sorted: &[f64], pct: u32) -> f64 {
    let n = sorted.len();
    let rank = (pct as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

fn summarize(values: &mut [f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some((mean, median(values), nearest_rank(values, 95)))
}

struct Bundle {
    created_t: f64,
    dest: BTreeSet<String>,
}

/// Computes [`Metrics`]; a pure function of the log.
pub fn compute_metrics(log: &EventLog) -> Result<Metrics, AnalyticsError> {
    let mut bundles: BTreeMap<&BundleId, Bundle> = BTreeMap::new();
    let mut delivered: BTreeSet<(&BundleId, &str)> = BTreeSet::new();
    let mut latencies = Vec::new();
    let mut hop_histogram = BTreeMap::new();
    let mut follows: BTreeSet<(&str, &str)> = BTreeSet::new();
    let mut states: BTreeMap<&str, (AppState, f64)> = BTreeMap::new();
    let mut time_in_state: BTreeMap<String, BTreeMap<AppState, f64>> = BTreeMap::new();
    let mut timings: BTreeMap<CryptoOp, Vec<f64>> = BTreeMap::new();
    let mut m = Metrics {
        addressed_pairs: 0,
        delivered_pairs: 0,
        delivery_ratio: 0.0,
        latency: None,
        transfers: 0,
        overhead_ratio: 0.0,
        hop_histogram: BTreeMap::new(),
        bytes_transmitted: 0,
        encounters_total: 0,
        encounters_with_friends: 0,
        time_in_state: BTreeMap::new(),
        crypto_timings: BTreeMap::new(),
    };

    let mut last_t = f64::NEG_INFINITY;
    let mut ended = false;
    for (index, r) in log.records.iter().enumerate() {
        let bad = |reason: String| Err(AnalyticsError::MalformedLog { index, reason });
        let t = r.t();
        if !t.is_finite() || t < last_t {
            return bad(format!("time {t} goes backwards from {last_t}"));
        }
        if ended {
            return bad("record after run_end".into());
        }
        last_t = t;
        match r {
            Record::BundleCreated { bundle, dest, .. } => {
                if dest.is_empty() {
                    return bad(format!("bundle {bundle} has no destinations"));
                }
                let dest: BTreeSet<String> = dest.iter().cloned().collect();
                m.addressed_pairs += dest.len() as u64;
                if bundles.insert(bundle, Bundle { created_t: t, dest }).is_some() {
                    return bad(format!("bundle {bundle} created twice"));
                }
            }
            Record::Transfer { bundle, bytes, .. } => {
                if !bundles.contains_key(bundle) {
                    return bad(format!("transfer of unknown bundle {bundle}"));
                }
                m.transfers += 1;
                m.bytes_transmitted += bytes;
            }
            Record::Delivered {
                bundle,
                recipient,
                hop_count,
                ..
            } => {
                let Some(b) = bundles.get(bundle) else {
                    return bad(format!("delivery of unknown bundle {bundle}"));
                };
                if !b.dest.contains(recipient) {
                    return bad(format!("{recipient} is not a destination of {bundle}"));
                }
                if delivered.insert((bundle, recipient)) {
                    latencies.push(t - b.created_t);
                    *hop_histogram.entry(*hop_count).or_insert(0u64) += 1;
                }
            }
            Record::Follow { follower, followee, .. } => {
                follows.insert((follower, followee));
            }
            Record::ContactStart { a, b, .. } => {
                m.encounters_total += 1;
                if follows.contains(&(a.as_str(), b.as_str())) || follows.contains(&(b.as_str(), a.as_str())) {
                    m.encounters_with_friends += 1;
                }
            }
            Record::AppStateChange { node, state, .. } => {
                if let Some((prev, since)) = states.insert(node, (*state, t)) {
                    *time_in_state
                        .entry(node.clone())
                        .or_default()
                        .entry(prev)
                        .or_insert(0.0) += t - since;
                }
                time_in_state
                    .entry(node.clone())
                    .or_default()
                    .entry(*state)
                    .or_insert(0.0);
            }
            Record::CryptoTiming { op, nanos, .. } => timings.entry(*op).or_default().push(*nanos as f64),
            Record::RunEnd { .. } => ended = true,
            _ => {}
        }
    }

    if last_t.is_finite() {
        for (node, (state, since)) in states {
            *time_in_state
                .entry(node.to_owned())
                .or_default()
                .entry(state)
                .or_insert(0.0) += last_t - since;
        }
    }

    m.delivered_pairs = delivered.len() as u64;
    if m.addressed_pairs > 0 {
        m.delivery_ratio = m.delivered_pairs as f64 / m.addressed_pairs as f64;
    }
    m.overhead_ratio = (m.transfers as f64 - m.delivered_pairs as f64) / m.delivered_pairs.max(1) as f64;
    m.latency = summarize(&mut latencies).map(|(mean_s, median_s, p95_s)| Latency {
        mean_s,
        median_s,
        p95_s,
    });
    m.hop_histogram = hop_histogram;
    m.time_in_state = time_in_state;
    m.crypto_timings = timings
        .into_iter()
        .map(|(op, mut v)| {
            let count = v.len() as u64;
            let (mean, med, _) = summarize(&mut v).expect("nonempty");
            (
                op,
                TimingStats {
                    count,
                    mean_nanos: mean,
                    median_nanos: med,
                },
            )
        })
        .collect();
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scheme: String,
    pub seed: u64,
    pub scenario_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: u32,
    pub run: RunMeta,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl Report {
    pub fn new(run: RunMeta, metrics: Metrics) -> Self {
        Self {
            schema: REPORT_SCHEMA,
            run,
            metrics,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One header row plus one row per report, in the given order.
pub fn write_csv<W: Write>(writer: W, reports: &[Report]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        let m = &r.metrics;
        w.write_record([
            r.run.scheme.clone(),
            r.run.seed.to_string(),
            m.delivery_ratio.to_string(),
            opt(m.latency.map(|l| l.mean_s)),
            opt(m.latency.map(|l| l.median_s)),
            opt(m.latency.map(|l| l.p95_s)),
            m.overhead_ratio.to_string(),
            m.bytes_transmitted.to_string(),
            m.encounters_total.to_string(),
            m.encounters_with_friends.to_string(),
        ])?;
    }
    w.flush()
}

/// A single JSON report is an object, several are an array.
pub fn render_reports(reports: &[Report], format: ReportFormat) -> Vec<u8> {
    match format {
        ReportFormat::Json => {
            let mut s = match reports {
                [one] => serde_json::to_string_pretty(one),
                many => serde_json::to_string_pretty(many),
            }
            .expect("reports serialize");
            s.push('\n');
            s.into_bytes()
        }
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_csv(&mut buf, reports).expect("writing to memory");
            buf
        }
    }
}

pub fn write_report(reports: &[Report], format: ReportFormat, path: &Path) -> Result<(), AnalyticsError> {
    fs::write(path, render_reports(reports, format)).map_err(|e| AnalyticsError::Io(format!("{}: {e}", path.display())))
}
