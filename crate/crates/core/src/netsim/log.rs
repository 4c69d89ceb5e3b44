//! Simulation event records, serialized as one JSON object per line.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::crypto::{AccountId, CryptoOp};
use crate::routing::{BundleId, BundleKind, Handoff, ReceiveStatus};
use crate::social::RegistryOp;

use super::AppState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferOutcome {
    Accepted,
    Duplicate,
    Expired,
    NoSpace,
    BadSignature,
}

impl From<ReceiveStatus> for TransferOutcome {
    fn from(s: ReceiveStatus) -> Self {
        match s {
            ReceiveStatus::Accepted => TransferOutcome::Accepted,
            ReceiveStatus::Duplicate => TransferOutcome::Duplicate,
            ReceiveStatus::Expired => TransferOutcome::Expired,
            ReceiveStatus::NoSpace => TransferOutcome::NoSpace,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    /// Pushed out of a full buffer.
    Evicted,
    /// Did not fit into its author's buffer at creation.
    NoSpace,
}

/// One log line. Every record carries its simulation time `t`; node fields
/// hold scenario node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Record {
    RunStart {
        t: f64,
        scheme: String,
        seed: u64,
        nodes: usize,
        contacts: usize,
    },
    AccountCreated {
        t: f64,
        node: String,
        username: String,
        account_id: AccountId,
    },
    RegistryCall {
        t: f64,
        node: String,
        op: RegistryOp,
        username: String,
        ok: bool,
    },
    Follow {
        t: f64,
        follower: String,
        followee: String,
    },
    FollowFailed {
        t: f64,
        follower: String,
        followee_username: String,
        reason: String,
    },
    AppStateChange {
        t: f64,
        node: String,
        state: AppState,
    },
    ContactStart {
        t: f64,
        contact: usize,
        a: String,
        b: String,
        t_end: f64,
        /// Absent when unlimited.
        bandwidth_bps: Option<f64>,
    },
    ProfileExchange {
        t: f64,
        contact: usize,
        from: String,
        to: String,
        bytes: u64,
    },
    BundleCreated {
        t: f64,
        bundle: BundleId,
        author: String,
        kind: BundleKind,
        dest: Vec<String>,
        size: u64,
        ttl_s: f64,
        copies: Option<u32>,
    },
    TrafficFailed {
        t: f64,
        node: String,
        kind: BundleKind,
        reason: String,
    },
    Transfer {
        t: f64,
        contact: usize,
        bundle: BundleId,
        from: String,
        to: String,
        bytes: u64,
        handoff: Handoff,
        /// Budget carried by the transferred copy.
        copies: Option<u32>,
        outcome: TransferOutcome,
    },
    Delivered {
        t: f64,
        bundle: BundleId,
        recipient: String,
        hop_count: u32,
    },
    Dropped {
        t: f64,
        bundle: BundleId,
        node: String,
        reason: DropReason,
    },
    Expired {
        t: f64,
        bundle: BundleId,
        node: String,
    },
    CryptoTiming {
        t: f64,
        op: CryptoOp,
        nanos: u64,
    },
    ContactEnd {
        t: f64,
        contact: usize,
        a: String,
        b: String,
    },
    RunEnd {
        t: f64,
    },
}

impl Record {
    pub fn t(&self) -> f64 {
        match self {
            Record::RunStart { t, .. }
            | Record::AccountCreated { t, .. }
            | Record::RegistryCall { t, .. }
            | Record::Follow { t, .. }
            | Record::FollowFailed { t, .. }
            | Record::AppStateChange { t, .. }
            | Record::ContactStart { t, .. }
            | Record::ProfileExchange { t, .. }
            | Record::BundleCreated { t, .. }
            | Record::TrafficFailed { t, .. }
            | Record::Transfer { t, .. }
            | Record::Delivered { t, .. }
            | Record::Dropped { t, .. }
            | Record::Expired { t, .. }
            | Record::CryptoTiming { t, .. }
            | Record::ContactEnd { t, .. }
            | Record::RunEnd { t } => *t,
        }
    }

    pub fn is_crypto_timing(&self) -> bool {
        matches!(self, Record::CryptoTiming { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LogError {
    #[error("event log line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("cannot read event log: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    pub records: Vec<Record>,
}

impl EventLog {
    pub fn new(records: Vec<Record>) -> Self {
        Self { records }
    }

    pub fn iter(&self) -> impl Iterator<Item = &Record> {
        self.records.iter()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// The log minus wall-clock timing records; the part that must be
    /// reproducible.
    pub fn without_crypto_timings(&self) -> EventLog {
        EventLog::new(self.records.iter().filter(|r| !r.is_crypto_timing()).cloned().collect())
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("serde_json emits utf-8")
    }

    /// Blank lines are skipped; line numbers are 1-based.
    pub fn read_ndjson<R: BufRead>(reader: R) -> Result<EventLog, LogError> {
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| LogError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: i + 1,
                reason: e.to_string(),
            })?;
            records.push(r);
        }
        Ok(EventLog { records })
    }
}
