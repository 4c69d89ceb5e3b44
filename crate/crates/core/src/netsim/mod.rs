//! Contact traces, mobility, scenarios and the discrete-event simulator.

// `!(x > 0.0)` style checks are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod log;
mod oracle;
mod scenario;
mod sim;
mod trace;
mod waypoint;

use serde::{Deserialize, Serialize};

pub use log::{DropReason, EventLog, LogError, Record, TransferOutcome};
pub use oracle::foremost_oracle;
pub use scenario::{
    Connectivity, Discovery, FollowSpec, Limits, NodeSpec, Phase, Scenario, ScenarioError, ScheduleEntry, TrafficSpec,
    SCHEMA_VERSION,
};
pub use sim::{run, run_with_contacts, SimError};
pub use trace::{load_trace, parse_trace, write_trace, Contact, TraceError, TRACE_HEADER};
pub use waypoint::{generate_waypoint_trace, node_name, WaypointError, WaypointParams, DEFAULT_WAYPOINT_BANDWIDTH};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppState {
    Foreground,
    Background,
    Suspended,
}

impl AppState {
    pub const ALL: [AppState; 3] = [AppState::Foreground, AppState::Background, AppState::Suspended];

    pub fn as_str(self) -> &'static str {
        match self {
            AppState::Foreground => "foreground",
            AppState::Background => "background",
            AppState::Suspended => "suspended",
        }
    }
}
