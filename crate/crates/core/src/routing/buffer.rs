use std::collections::BTreeMap;

use super::bundle::{Bundle, BundleId};
use crate::crypto::AccountId;

#[derive(Debug, Clone, PartialEq)]
pub struct StoredBundle {
    pub bundle: Bundle,
    pub receive_t: f64,
}

/// Ids a node holds, with the copy budget where the scheme tracks one.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SummaryVector {
    entries: BTreeMap<BundleId, Option<u32>>,
}

impl SummaryVector {
    pub fn contains(&self, id: &BundleId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn copies(&self, id: &BundleId) -> Option<u32> {
        self.entries.get(id).copied().flatten()
    }

    pub fn ids(&self) -> impl Iterator<Item = &BundleId> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl FromIterator<(BundleId, Option<u32>)> for SummaryVector {
    fn from_iter<T: IntoIterator<Item = (BundleId, Option<u32>)>>(iter: T) -> Self {
        Self {
            entries: iter.into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceiveStatus {
    Accepted,
    Duplicate,
    Expired,
    /// Could not make room without evicting bundles addressed to this node.
    NoSpace,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReceiveOutcome {
    pub status: ReceiveStatus,
    pub evicted: Vec<BundleId>,
    /// The receiving node is one of the bundle's destinations.
    pub delivered: bool,
}

impl ReceiveOutcome {
    fn rejected(status: ReceiveStatus) -> Self {
        Self {
            status,
            evicted: Vec::new(),
            delivered: false,
        }
    }
}

/// Per-node bundle store with a byte capacity and drop-oldest eviction.
///
/// Eviction removes bundles in ascending `(receive_t, id)` order and never
/// touches bundles addressed to the owning node.
#[derive(Debug, Clone)]
pub struct Buffer {
    owner: AccountId,
    capacity_bytes: u64,
    used_bytes: u64,
    entries: BTreeMap<BundleId, StoredBundle>,
}

impl Buffer {
    pub fn new(owner: AccountId, capacity_bytes: u64) -> Self {
        Self {
            owner,
            capacity_bytes,
            used_bytes: 0,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> &AccountId {
        &self.owner
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    pub fn used_bytes(&self) -> u64 {
        self.used_bytes
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: &BundleId) -> bool {
        self.entries.contains_key(id)
    }

    pub fn get(&self, id: &BundleId) -> Option<&StoredBundle> {
        self.entries.get(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &StoredBundle> {
        self.entries.values()
    }

    pub fn summarize(&self, now: f64) -> SummaryVector {
        self.entries
            .values()
            .filter(|s| !s.bundle.is_expired(now))
            .map(|s| (s.bundle.id.clone(), s.bundle.copies))
            .collect()
    }

    /// Stores a bundle this node just created; `hop_count` stays at 0.
    pub fn insert_local(&mut self, bundle: Bundle, now: f64) -> ReceiveOutcome {
        self.store(bundle, now)
    }

    /// Stores a bundle handed over by `from_peer`; on acceptance the hop
    /// count is incremented.
    pub fn receive(&mut self, mut bundle: Bundle, _from_peer: &AccountId, now: f64) -> ReceiveOutcome {
        bundle.hop_count += 1;
        self.store(bundle, now)
    }

    fn store(&mut self, bundle: Bundle, now: f64) -> ReceiveOutcome {
        if self.entries.contains_key(&bundle.id) {
            return ReceiveOutcome::rejected(ReceiveStatus::Duplicate);
        }
        if bundle.is_expired(now) {
            return ReceiveOutcome::rejected(ReceiveStatus::Expired);
        }
        let size = bundle.size_bytes();
        let Some(evicted) = self.make_room(size) else {
            return ReceiveOutcome::rejected(ReceiveStatus::NoSpace);
        };
        for id in &evicted {
            self.remove(id);
        }
        let delivered = bundle.is_addressed_to(&self.owner);
        self.used_bytes += size;
        self.entries
            .insert(bundle.id.clone(), StoredBundle { bundle, receive_t: now });
        ReceiveOutcome {
            status: ReceiveStatus::Accepted,
            evicted,
            delivered,
        }
    }

    /// Picks the eviction victims needed to fit `size` more bytes, or
    /// `None` if that is impossible.
    fn make_room(&self, size: u64) -> Option<Vec<BundleId>> {
        if size > self.capacity_bytes {
            return None;
        }
        let mut free = self.capacity_bytes - self.used_bytes;
        if free >= size {
            return Some(Vec::new());
        }
        let mut candidates: Vec<&StoredBundle> = self
            .entries
            .values()
            .filter(|s| !s.bundle.is_addressed_to(&self.owner))
            .collect();
        candidates.sort_by(|a, b| {
            a.receive_t
                .total_cmp(&b.receive_t)
                .then_with(|| a.bundle.id.cmp(&b.bundle.id))
        });
        let mut victims = Vec::new();
        for c in candidates {
            victims.push(c.bundle.id.clone());
            free += c.bundle.size_bytes();
            if free >= size {
                return Some(victims);
            }
        }
        None
    }

    pub fn remove(&mut self, id: &BundleId) -> Option<StoredBundle> {
        let removed = self.entries.remove(id)?;
        self.used_bytes -= removed.bundle.size_bytes();
        Some(removed)
    }

    pub fn set_copies(&mut self, id: &BundleId, copies: u32) {
        if let Some(s) = self.entries.get_mut(id) {
            s.bundle.copies = Some(copies);
        }
    }

    /// Removes exactly the bundles with `created_t + ttl_s < now`.
    pub fn expire(&mut self, now: f64) -> Vec<BundleId> {
        let stale: Vec<BundleId> = self
            .entries
            .values()
            .filter(|s| s.bundle.is_expired(now))
            .map(|s| s.bundle.id.clone())
            .collect();
        for id in &stale {
            self.remove(id);
        }
        stale
    }
}
