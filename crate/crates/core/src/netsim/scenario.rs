//! Scenario documents (JSON, `"schema": 1`).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::validate_username;
use crate::routing::{BundleKind, Scheme, DEFAULT_CAPACITY_BYTES, DEFAULT_TTL_S};
use crate::social::{normalize_interests, MAX_TEXT_BYTES};

use super::trace::{load_trace, write_trace, Contact, TraceError};
use super::waypoint::{generate_waypoint_trace, WaypointError, WaypointParams};
use super::AppState;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read scenario: {0}")]
    Io(String),
    #[error("cannot parse scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Waypoint(#[from] WaypointError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ScenarioError> {
    Err(ScenarioError::Invalid(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub state: AppState,
    pub duration_s: f64,
}

fn always_foreground() -> Vec<ScheduleEntry> {
    vec![ScheduleEntry {
        state: AppState::Foreground,
        duration_s: f64::MAX,
    }]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: String,
    pub username: String,
    #[serde(default)]
    pub interests: Vec<String>,
    /// When the account is created; must fall inside an online phase.
    #[serde(default)]
    pub created_t: f64,
    /// Repeating app-state cycle starting at t = 0.
    #[serde(default = "always_foreground")]
    pub schedule: Vec<ScheduleEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FollowSpec {
    pub t: f64,
    /// Node id.
    pub follower: String,
    /// Username.
    pub followee: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficSpec {
    pub t: f64,
    /// Node id.
    pub author: String,
    pub kind: BundleKind,
    /// Recipient username, for direct messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<String>,
    /// Text length in bytes; filler text is generated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
}

impl TrafficSpec {
    pub fn body(&self) -> String {
        match (&self.text, self.size) {
            (Some(t), _) => t.clone(),
            (None, Some(n)) => (0..n).map(|i| char::from(b'a' + (i % 26) as u8)).collect(),
            (None, None) => String::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Connectivity {
    /// CSV trace; relative paths resolve against the scenario file.
    Trace(PathBuf),
    Contacts(Vec<Contact>),
    Waypoint(WaypointParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Limits {
    pub capacity_bytes: u64,
    pub ttl_s: f64,
    /// Treat every contact as infinitely fast.
    pub unlimited_bandwidth: bool,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            capacity_bytes: DEFAULT_CAPACITY_BYTES,
            ttl_s: DEFAULT_TTL_S,
            unlimited_bandwidth: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub t_start: f64,
    pub t_end: f64,
}

impl Phase {
    pub fn contains(&self, t: f64) -> bool {
        self.t_start <= t && t <= self.t_end
    }
}

/// Per-state probability that a node takes part in discovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Discovery {
    pub foreground: f64,
    pub background: f64,
    pub suspended: f64,
}

impl Default for Discovery {
    fn default() -> Self {
        Self {
            foreground: 1.0,
            background: 0.5,
            suspended: 0.0,
        }
    }
}

impl Discovery {
    pub fn probability(&self, state: AppState) -> f64 {
        match state {
            AppState::Foreground => self.foreground,
            AppState::Background => self.background,
            AppState::Suspended => self.suspended,
        }
    }
}

fn default_scheme() -> Scheme {
    Scheme::Epidemic
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: u32,
    pub seed: u64,
    pub horizon_s: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    pub nodes: Vec<NodeSpec>,
    #[serde(default)]
    pub follows: Vec<FollowSpec>,
    pub connectivity: Connectivity,
    #[serde(default)]
    pub traffic: Vec<TrafficSpec>,
    #[serde(default)]
    pub limits: Limits,
    /// Closed intervals during which the registry is reachable.
    #[serde(default)]
    pub online_phases: Vec<Phase>,
    #[serde(default)]
    pub discovery: Discovery,
    /// Minimum Jaccard index for interest matches; 0 means any overlap.
    #[serde(default)]
    pub interest_threshold: f64,
    #[serde(default = "yes")]
    pub record_crypto_timings: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Reads a scenario file; does not validate, so overrides can be
    /// applied first.
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
        let mut s = Self::from_json(&text)?;
        s.base_dir = path.parent().map(Path::to_path_buf);
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn is_online(&self, t: f64) -> bool {
        self.online_phases.iter().any(|p| p.contains(t))
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    /// Loads, inlines or generates the contact list.
    pub fn contacts(&self) -> Result<Vec<Contact>, ScenarioError> {
        let mut contacts = match &self.connectivity {
            Connectivity::Trace(path) => {
                let full = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                load_trace(&full)?
            }
            Connectivity::Contacts(c) => {
                for (i, contact) in c.iter().enumerate() {
                    contact
                        .check()
                        .map_err(|e| ScenarioError::Invalid(format!("contact {i}: {e}")))?;
                }
                let mut c = c.clone();
                c.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
                c
            }
            Connectivity::Waypoint(p) => generate_waypoint_trace(p, self.seed)?,
        };
        if self.limits.unlimited_bandwidth {
            for c in &mut contacts {
                c.bandwidth_bps = f64::INFINITY;
            }
        }
        Ok(contacts)
    }

    /// SHA-256 over the scenario JSON and the resolved contacts in trace
    /// format, hex encoded.
    pub fn digest(&self, contacts: &[Contact]) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(self).expect("scenario serializes"));
        let mut trace = Vec::new();
        write_trace(&mut trace, contacts).expect("writing to memory");
        h.update(&trace);
        hex::encode(h.finalize())
    }

    /// Checks everything that does not need the contact list.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.schema != SCHEMA_VERSION {
            return invalid(format!("unsupported schema {}, expected {SCHEMA_VERSION}", self.schema));
        }
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return invalid(format!("horizon_s must be positive, got {}", self.horizon_s));
        }
        let in_horizon = |t: f64| (0.0..=self.horizon_s).contains(&t);
        for p in &self.online_phases {
            if !(p.t_start <= p.t_end) {
                return invalid(format!("online phase [{}, {}] is empty", p.t_start, p.t_end));
            }
        }

        let mut ids = BTreeSet::new();
        let mut names = BTreeSet::new();
        for n in &self.nodes {
            if n.id.is_empty() {
                return invalid("node id must be nonempty");
            }
            if !ids.insert(n.id.as_str()) {
                return invalid(format!("duplicate node id {:?}", n.id));
            }
            validate_username(&n.username).map_err(|e| ScenarioError::Invalid(format!("node {}: {e}", n.id)))?;
            if !names.insert(n.username.as_str()) {
                return invalid(format!("duplicate username {:?}", n.username));
            }
            normalize_interests(&n.interests).map_err(|e| ScenarioError::Invalid(format!("node {}: {e}", n.id)))?;
            if !in_horizon(n.created_t) {
                return invalid(format!("node {}: created_t {} outside the horizon", n.id, n.created_t));
            }
            if !self.is_online(n.created_t) {
                return invalid(format!(
                    "node {}: account creation at t={} is outside every online phase",
                    n.id, n.created_t
                ));
            }
            if n.schedule.is_empty() {
                return invalid(format!("node {}: empty app-state schedule", n.id));
            }
            if let Some(e) = n.schedule.iter().find(|e| !(e.duration_s > 0.0)) {
                return invalid(format!(
                    "node {}: schedule duration {} is not positive",
                    n.id, e.duration_s
                ));
            }
        }

        for f in &self.follows {
            if !in_horizon(f.t) {
                return invalid(format!("follow at t={} outside the horizon", f.t));
            }
            if !ids.contains(f.follower.as_str()) {
                return invalid(format!("follow by unknown node {:?}", f.follower));
            }
        }

        for (i, tr) in self.traffic.iter().enumerate() {
            if !in_horizon(tr.t) {
                return invalid(format!("traffic {i}: created_t {} outside the horizon", tr.t));
            }
            if !ids.contains(tr.author.as_str()) {
                return invalid(format!("traffic {i}: unknown author {:?}", tr.author));
            }
            if tr.text.is_some() && tr.size.is_some() {
                return invalid(format!("traffic {i}: give either text or size, not both"));
            }
            match (tr.kind, &tr.to) {
                (BundleKind::Dm, None) => return invalid(format!("traffic {i}: direct message needs `to`")),
                (BundleKind::Post, Some(_)) => {
                    return invalid(format!("traffic {i}: posts go to followers, drop `to`"))
                }
                _ => {}
            }
            if tr.size.is_some_and(|n| n > MAX_TEXT_BYTES) {
                return invalid(format!("traffic {i}: size exceeds {MAX_TEXT_BYTES} bytes"));
            }
        }

        if self.limits.capacity_bytes == 0 {
            return invalid("capacity_bytes must be positive");
        }
        if !(self.limits.ttl_s > 0.0) {
            return invalid(format!("ttl_s must be positive, got {}", self.limits.ttl_s));
        }
        for (name, p) in [
            ("foreground", self.discovery.foreground),
            ("background", self.discovery.background),
            ("suspended", self.discovery.suspended),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return invalid(format!("discovery probability {name} must be in [0, 1], got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.interest_threshold) {
            return invalid(format!(
                "interest_threshold must be in [0, 1], got {}",
                self.interest_threshold
            ));
        }
        Ok(())
    }

    /// Checks that every contact names roster nodes.
    pub fn validate_contacts(&self, contacts: &[Contact]) -> Result<(), ScenarioError> {
        for (i, c) in contacts.iter().enumerate() {
            for n in [&c.node_a, &c.node_b] {
                if self.node_index(n).is_none() {
                    return invalid(format!("contact {i} names unknown node {n:?}"));
                }
            }
        }
        Ok(())
    }
}
