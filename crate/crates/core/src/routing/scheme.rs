use std::fmt;
use std::str::FromStr;

use super::prophet::ProphetParams;

pub const DEFAULT_SNW_COPIES: u32 = 8;

pub const VALID_SCHEMES: &str =
    "direct, first_contact, epidemic, snw:L=<copies>, prophet:p_init=<p>,beta=<b>,gamma=<g>,aging=<s>";

/// A routing scheme and its configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scheme {
    /// Source delivers only to a destination it meets.
    Direct,
    /// Single custody, handed to whichever peer comes next.
    FirstContact,
    Epidemic,
    /// Binary spray-and-wait with an initial budget of `copies`.
    SprayAndWait {
        copies: u32,
    },
    Prophet(ProphetParams),
}

impl Scheme {
    /// Copy budget stamped on freshly created bundles.
    pub fn initial_copies(&self) -> Option<u32> {
        match self {
            Scheme::SprayAndWait { copies } => Some(*copies),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Scheme::Direct => "direct",
            Scheme::FirstContact => "first_contact",
            Scheme::Epidemic => "epidemic",
            Scheme::SprayAndWait { .. } => "snw",
            Scheme::Prophet(_) => "prophet",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::SprayAndWait { copies } => write!(f, "snw:L={copies}"),
            Scheme::Prophet(p) => write!(
                f,
                "prophet:p_init={},beta={},gamma={},aging={}",
                p.p_init, p.beta, p.gamma, p.aging_unit_s
            ),
            other => f.write_str(other.name()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SchemeParseError {
    #[error("unknown scheme {0:?}; valid schemes: {VALID_SCHEMES}")]
    UnknownScheme(String),
    #[error("invalid parameter in {0:?}: {1}; valid schemes: {VALID_SCHEMES}")]
    InvalidParameter(String, String),
}

fn params(s: &str, rest: Option<&str>) -> Result<Vec<(String, String)>, SchemeParseError> {
    let Some(rest) = rest else { return Ok(Vec::new()) };
    rest.split(',')
        .map(|kv| {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                SchemeParseError::InvalidParameter(s.to_owned(), format!("expected key=value, got {kv:?}"))
            })?;
            Ok((k.trim().to_owned(), v.trim().to_owned()))
        })
        .collect()
}

impl FromStr for Scheme {
    type Err = SchemeParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let trimmed = s.trim();
        let (name, rest) = match trimmed.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (trimmed, None),
        };
        let bad = |msg: String| SchemeParseError::InvalidParameter(s.to_owned(), msg);
        match name {
            "direct" | "first_contact" | "epidemic" if rest.is_some() => {
                Err(bad(format!("{name} takes no parameters")))
            }
            "direct" => Ok(Scheme::Direct),
            "first_contact" => Ok(Scheme::FirstContact),
            "epidemic" => Ok(Scheme::Epidemic),
            "snw" => {
                let mut copies = DEFAULT_SNW_COPIES;
                for (k, v) in params(s, rest)? {
                    match k.as_str() {
                        "L" | "l" => {
                            copies = v
                                .parse()
                                .map_err(|_| bad(format!("L must be a positive integer, got {v:?}")))?
                        }
                        other => return Err(bad(format!("unknown snw parameter {other:?}"))),
                    }
                }
                if copies == 0 {
                    return Err(bad("L must be at least 1".into()));
                }
                Ok(Scheme::SprayAndWait { copies })
            }
            "prophet" => {
                let mut p = ProphetParams::default();
                for (k, v) in params(s, rest)? {
                    let x: f64 = v.parse().map_err(|_| bad(format!("{k} must be a number, got {v:?}")))?;
                    match k.as_str() {
                        "p_init" => p.p_init = x,
                        "beta" => p.beta = x,
                        "gamma" => p.gamma = x,
                        "aging" => p.aging_unit_s = x,
                        other => return Err(bad(format!("unknown prophet parameter {other:?}"))),
                    }
                }
                p.validate().map_err(bad)?;
                Ok(Scheme::Prophet(p))
            }
            _ => Err(SchemeParseError::UnknownScheme(s.to_owned())),
        }
    }
}

impl serde::Serialize for Scheme {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for Scheme {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
