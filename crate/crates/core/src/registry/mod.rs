//! Account/public-key directory used once per account creation.
//!
//! The directory is trusted on first use: a lookup answer is cached by the
//! client forever and never re-validated. Every record is self-certifying
//! (the account id is the digest of the key), so a registry can refuse or
//! withhold a name but cannot make a key verify under someone else's id.
//!
//! The on-disk store is an append-only newline-delimited JSON log, one
//! record per line:
//!
//! ```text
//! {"username":"alice","public_key":"<base64>","account_id":"<hex>","registered_at":1700000000.0}
//! ```
//!
//! Replaying the log from the start rebuilds the index. Every line must be
//! a complete, valid record; a torn or corrupt line stops startup and is
//! reported by line number.

mod client;
mod service;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::crypto::{self, AccountId, PublicKey};

pub use client::RegistryClient;
pub use service::{serve_until_signal, ConcurrentRegistry, RegistryServer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("invalid username {0:?}")]
    InvalidUsername(String),
    #[error("invalid key: {0}")]
    InvalidKey(String),
    #[error("username {0:?} is already registered")]
    DuplicateUsername(String),
    #[error("username {0:?} not found")]
    NotFound(String),
    #[error("registry unreachable: {0}")]
    Unreachable(String),
    #[error("corrupt registry log at line {line}: {reason}")]
    CorruptLog { line: usize, reason: String },
    #[error("failed to bind {addr}: {reason}")]
    Bind { addr: String, reason: String },
    #[error("registry i/o error: {0}")]
    Io(String),
    #[error("unexpected registry response: {0}")]
    Protocol(String),
}

impl From<std::io::Error> for RegistryError {
    fn from(e: std::io::Error) -> Self {
        RegistryError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryRecord {
    pub username: String,
    pub public_key: String,
    pub account_id: AccountId,
    pub registered_at: f64,
}

impl RegistryRecord {
    pub fn key(&self) -> PublicKey {
        PublicKey::from_base64(&self.public_key).expect("records are validated on entry")
    }
}

/// Checks a registration request and returns the decoded key and its id.
pub fn validate_registration(username: &str, public_key_b64: &str) -> Result<(PublicKey, AccountId), RegistryError> {
    crypto::validate_username(username).map_err(|_| RegistryError::InvalidUsername(username.to_owned()))?;
    let key = PublicKey::from_base64(public_key_b64).map_err(|e| RegistryError::InvalidKey(e.to_string()))?;
    let id = key.account_id();
    Ok((key, id))
}

/// Client-side view of the directory.
pub trait Directory {
    fn register(&mut self, username: &str, public_key: &PublicKey) -> Result<AccountId, RegistryError>;
    fn lookup(&mut self, username: &str) -> Result<RegistryRecord, RegistryError>;
}

/// Where `registered_at` comes from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    /// Seconds since the Unix epoch.
    Wall,
    /// An externally driven clock, e.g. simulation time.
    Manual(f64),
}

impl Clock {
    fn now(&self) -> f64 {
        match *self {
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            Clock::Manual(t) => t,
        }
    }
}

/// Replays a registry log, validating every line.
pub fn replay<R: BufRead>(reader: R) -> Result<Vec<RegistryRecord>, RegistryError> {
    let mut records = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (i, line) in reader.split(b'\n').enumerate() {
        let line_no = i + 1;
        let corrupt = |reason: String| RegistryError::CorruptLog { line: line_no, reason };
        let bytes = line?;
        let text = std::str::from_utf8(&bytes).map_err(|e| corrupt(e.to_string()))?;
        let record: RegistryRecord = serde_json::from_str(text).map_err(|e| corrupt(e.to_string()))?;
        let (_, id) =
            validate_registration(&record.username, &record.public_key).map_err(|e| corrupt(e.to_string()))?;
        if id != record.account_id {
            return Err(corrupt("account_id does not match public_key".into()));
        }
        if let Some(first) = seen.insert(record.username.clone(), line_no) {
            return Err(corrupt(format!(
                "username {:?} already registered at line {first}",
                record.username
            )));
        }
        records.push(record);
    }
    Ok(records)
}

pub(crate) fn encode_line(record: &RegistryRecord) -> Vec<u8> {
    let mut line = serde_json::to_vec(record).expect("record serializes");
    line.push(b'\n');
    line
}

pub(crate) fn open_log(path: &Path) -> Result<(Vec<RegistryRecord>, File), RegistryError> {
    let records = match File::open(path) {
        Ok(f) => replay(BufReader::new(f))?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    Ok((records, file))
}

pub(crate) fn append_durably(file: &mut File, record: &RegistryRecord) -> Result<(), RegistryError> {
    file.write_all(&encode_line(record))?;
    file.sync_data()?;
    Ok(())
}

/// Single-threaded store, optionally backed by a log file. This is the
/// in-process registry the simulator talks to.
#[derive(Debug)]
pub struct RegistryStore {
    records: Vec<RegistryRecord>,
    index: HashMap<String, usize>,
    log: Option<File>,
    clock: Clock,
}

impl RegistryStore {
    pub fn in_memory(clock: Clock) -> Self {
        Self {
            records: Vec::new(),
            index: HashMap::new(),
            log: None,
            clock,
        }
    }

    pub fn open(path: &Path, clock: Clock) -> Result<Self, RegistryError> {
        let (records, file) = open_log(path)?;
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.username.clone(), i))
            .collect();
        Ok(Self {
            records,
            index,
            log: Some(file),
            clock,
        })
    }

    pub fn set_time(&mut self, t: f64) {
        self.clock = Clock::Manual(t);
    }

    pub fn register_b64(&mut self, username: &str, public_key: &str) -> Result<AccountId, RegistryError> {
        let (_, account_id) = validate_registration(username, public_key)?;
        if self.index.contains_key(username) {
            return Err(RegistryError::DuplicateUsername(username.to_owned()));
        }
        let record = RegistryRecord {
            username: username.to_owned(),
            public_key: public_key.to_owned(),
            account_id: account_id.clone(),
            registered_at: self.clock.now(),
        };
        if let Some(file) = self.log.as_mut() {
            append_durably(file, &record)?;
        }
        self.index.insert(record.username.clone(), self.records.len());
        self.records.push(record);
        Ok(account_id)
    }

    pub fn get(&self, username: &str) -> Result<&RegistryRecord, RegistryError> {
        self.index
            .get(username)
            .map(|&i| &self.records[i])
            .ok_or_else(|| RegistryError::NotFound(username.to_owned()))
    }

    pub fn records(&self) -> &[RegistryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl Directory for RegistryStore {
    fn register(&mut self, username: &str, public_key: &PublicKey) -> Result<AccountId, RegistryError> {
        self.register_b64(username, &public_key.to_base64())
    }

    fn lookup(&mut self, username: &str) -> Result<RegistryRecord, RegistryError> {
        self.get(username).cloned()
    }
}

/// A directory that is only reachable while `online` is set; used to model
/// offline phases.
#[derive(Debug)]
pub struct Gated<D> {
    pub inner: D,
    pub online: bool,
}

impl<D: Directory> Directory for Gated<D> {
    fn register(&mut self, username: &str, public_key: &PublicKey) -> Result<AccountId, RegistryError> {
        if !self.online {
            return Err(RegistryError::Unreachable("offline".into()));
        }
        self.inner.register(username, public_key)
    }

    fn lookup(&mut self, username: &str) -> Result<RegistryRecord, RegistryError> {
        if !self.online {
            return Err(RegistryError::Unreachable("offline".into()));
        }
        self.inner.lookup(username)
    }
}
