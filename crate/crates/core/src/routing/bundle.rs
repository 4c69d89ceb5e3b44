use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::crypto::canonical::Encoder;
use crate::crypto::{self, AccountId, Identity, PublicKey, Signature};

/// Fixed per-bundle header overhead charged on top of the payload.
pub const HEADER_OVERHEAD: u64 = 256;

const BUNDLE_TAG: &[u8] = b"SOSB\x01";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BundleId(String);

impl BundleId {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_hex_unchecked(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for BundleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleKind {
    Post,
    Dm,
}

impl BundleKind {
    fn code(self) -> u8 {
        match self {
            BundleKind::Post => 0,
            BundleKind::Dm => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BundleError {
    #[error("bundle has no destinations")]
    EmptyDestination,
    #[error("copy budget must be at least 1")]
    ZeroCopies,
    #[error("author id does not match the carried key")]
    AuthorMismatch,
    #[error("bundle id does not match its content")]
    IdMismatch,
    #[error("bad signature")]
    BadSignature,
}

/// The signed part of a bundle: everything except the id, the signature
/// and the relay-mutable fields (`hop_count`, `copies`).
///
/// The author's public key travels with the bundle; since the author id is
/// the key's digest, any relay can check origin without a directory lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleContent {
    pub kind: BundleKind,
    pub author: AccountId,
    pub author_key: PublicKey,
    pub dest: BTreeSet<AccountId>,
    pub created_t: f64,
    pub ttl_s: f64,
    pub payload: Vec<u8>,
}

impl BundleContent {
    /// Field order:
    /// `"SOSB" 0x01 | kind u8 | author (u32 len + utf8) | author_key (32 raw) |
    /// dest count u32, then each id (u32 len + utf8) ascending |
    /// created_t f64 bits u64 | ttl_s f64 bits u64 | payload (u32 len + bytes)`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(BUNDLE_TAG);
        enc.u8(self.kind.code())
            .str(self.author.as_str())
            .raw(self.author_key.as_bytes())
            .u32(u32::try_from(self.dest.len()).expect("destination set fits u32"));
        for d in &self.dest {
            enc.str(d.as_str());
        }
        enc.f64(self.created_t).f64(self.ttl_s).bytes(&self.payload);
        enc.finish()
    }

    pub fn id(&self) -> BundleId {
        BundleId(hex::encode(Sha256::digest(self.canonical_bytes())))
    }
}

/// The store-carry-forward unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Bundle {
    pub id: BundleId,
    pub content: BundleContent,
    pub signature: Signature,
    pub hop_count: u32,
    pub copies: Option<u32>,
}

impl Bundle {
    pub fn create(
        author: &Identity,
        kind: BundleKind,
        dest: impl IntoIterator<Item = AccountId>,
        created_t: f64,
        ttl_s: f64,
        payload: Vec<u8>,
        copies: Option<u32>,
    ) -> Result<Self, BundleError> {
        let dest: BTreeSet<AccountId> = dest.into_iter().collect();
        if dest.is_empty() {
            return Err(BundleError::EmptyDestination);
        }
        if copies == Some(0) {
            return Err(BundleError::ZeroCopies);
        }
        let content = BundleContent {
            kind,
            author: author.account_id().clone(),
            author_key: author.signing_public(),
            dest,
            created_t,
            ttl_s,
            payload,
        };
        let bytes = content.canonical_bytes();
        let signature = author.sign(&bytes);
        Ok(Self {
            id: BundleId(hex::encode(Sha256::digest(&bytes))),
            content,
            signature,
            hop_count: 0,
            copies,
        })
    }

    /// Checks origin, integrity and id in one pass.
    pub fn verify(&self) -> Result<(), BundleError> {
        if self.content.author_key.account_id() != self.content.author {
            return Err(BundleError::AuthorMismatch);
        }
        let bytes = self.content.canonical_bytes();
        if BundleId(hex::encode(Sha256::digest(&bytes))) != self.id {
            return Err(BundleError::IdMismatch);
        }
        if !crypto::verify(self.content.author_key.as_bytes(), &bytes, self.signature.as_bytes()) {
            return Err(BundleError::BadSignature);
        }
        Ok(())
    }

    pub fn size_bytes(&self) -> u64 {
        self.content.payload.len() as u64 + HEADER_OVERHEAD
    }

    pub fn expires_at(&self) -> f64 {
        self.content.created_t + self.content.ttl_s
    }

    /// Expired strictly after `created_t + ttl_s`.
    pub fn is_expired(&self, now: f64) -> bool {
        self.expires_at() < now
    }

    pub fn is_addressed_to(&self, node: &AccountId) -> bool {
        self.content.dest.contains(node)
    }
}
