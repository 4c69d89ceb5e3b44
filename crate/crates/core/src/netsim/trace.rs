use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub const TRACE_HEADER: [&str; 5] = ["t_start", "t_end", "node_a", "node_b", "bandwidth_bps"];

fn unlimited() -> f64 {
    f64::INFINITY
}

fn is_unlimited(bw: &f64) -> bool {
    bw.is_infinite()
}

/// An interval during which two nodes can exchange data.
///
/// `bandwidth_bps` is in bytes per second and may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Contact {
    pub t_start: f64,
    pub t_end: f64,
    pub node_a: String,
    pub node_b: String,
    #[serde(default = "unlimited", skip_serializing_if = "is_unlimited")]
    pub bandwidth_bps: f64,
}

impl Contact {
    pub fn check(&self) -> Result<(), String> {
        if !(self.t_start.is_finite() && self.t_end.is_finite()) {
            return Err("contact times must be finite".into());
        }
        if self.t_start < 0.0 {
            return Err(format!("t_start {} is negative", self.t_start));
        }
        if self.t_start >= self.t_end {
            return Err(format!("t_end {} must exceed t_start {}", self.t_end, self.t_start));
        }
        if self.node_a.is_empty() || self.node_b.is_empty() {
            return Err("node ids must be nonempty".into());
        }
        if self.node_a == self.node_b {
            return Err(format!("contact of {} with itself", self.node_a));
        }
        if !(self.bandwidth_bps > 0.0) {
            return Err(format!("bandwidth_bps must be positive, got {}", self.bandwidth_bps));
        }
        Ok(())
    }

    pub fn involves(&self, node: &str) -> bool {
        self.node_a == node || self.node_b == node
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TraceError {
    #[error("cannot read trace: {0}")]
    Io(String),
    #[error("trace line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error("trace line {line}: {reason}")]
    Invariant { line: u64, reason: String },
}

/// Parses a trace and returns its contacts sorted by `t_start` (stable).
pub fn parse_trace<R: Read>(reader: R) -> Result<Vec<Contact>, TraceError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| TraceError::Parse {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if header.iter().ne(TRACE_HEADER) {
        return Err(TraceError::Parse {
            line: 1,
            reason: format!("expected header {:?}", TRACE_HEADER.join(",")),
        });
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| TraceError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let num = |i: usize| -> Result<f64, TraceError> {
            row[i].parse::<f64>().map_err(|_| TraceError::Parse {
                line,
                reason: format!("{} is not a number: {:?}", TRACE_HEADER[i], &row[i]),
            })
        };
        let contact = Contact {
            t_start: num(0)?,
            t_end: num(1)?,
            node_a: row[2].to_owned(),
            node_b: row[3].to_owned(),
            bandwidth_bps: num(4)?,
        };
        contact
            .check()
            .map_err(|reason| TraceError::Invariant { line, reason })?;
        out.push(contact);
    }
    out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    Ok(out)
}

pub fn load_trace(path: &Path) -> Result<Vec<Contact>, TraceError> {
    let file = File::open(path).map_err(|e| TraceError::Io(format!("{}: {e}", path.display())))?;
    parse_trace(file)
}

/// Writes contacts in trace format. Floats use the shortest representation
/// that reads back to the same value; unlimited bandwidth is `inf`.
pub fn write_trace<W: Write>(writer: W, contacts: &[Contact]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(TRACE_HEADER)?;
    for c in contacts {
        w.write_record([
            c.t_start.to_string(),
            c.t_end.to_string(),
            c.node_a.clone(),
            c.node_b.clone(),
            c.bandwidth_bps.to_string(),
        ])?;
    }
    w.flush()
}
