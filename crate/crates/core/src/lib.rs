//! Delay-tolerant social networking: signed and sealed messages, a one-time
//! key registry, pluggable store-carry-forward routing, a deterministic
//! contact simulator and run analytics.

pub mod analytics;
pub mod crypto;
pub mod netsim;
pub mod registry;
pub mod routing;
pub mod social;

pub use analytics::{compute_metrics, Metrics, Report, ReportFormat, RunMeta};
pub use crypto::{AccountId, CryptoError, Envelope, Identity, PublicKey, Signature};
pub use netsim::{foremost_oracle, AppState, Contact, EventLog, Record, Scenario};
pub use registry::{Directory, RegistryError, RegistryRecord};
pub use routing::{Bundle, BundleId, BundleKind, Scheme};
