//! Message manager and the pluggable routing layer.
//!
//! A [`RoutingNode`] owns one node's buffer and scheme state. When two nodes
//! are in contact, each asks its own state which bundles to offer the peer
//! ([`plan_transfers`]); after a bundle has crossed the link the sender
//! applies the offer's [`Handoff`] and the receiver stores the bundle with
//! [`Buffer::receive`].
//!
//! Offers are ordered: bundles addressed to the peer first, then ascending
//! `created_t`, then ascending id.

pub mod buffer;
pub mod bundle;
pub mod prophet;
pub mod scheme;

use std::cmp::Ordering;

use crate::crypto::AccountId;

pub use buffer::{Buffer, ReceiveOutcome, ReceiveStatus, StoredBundle, SummaryVector};
pub use bundle::{Bundle, BundleContent, BundleError, BundleId, BundleKind, HEADER_OVERHEAD};
pub use prophet::{prophet_update, PredictabilityTable, ProphetParams};
pub use scheme::{Scheme, SchemeParseError, DEFAULT_SNW_COPIES};

pub const DEFAULT_TTL_S: f64 = 86_400.0;
pub const DEFAULT_CAPACITY_BYTES: u64 = 5 * 1024 * 1024;

/// What happens to the sender's copy once a transfer completes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Handoff {
    /// Sender keeps its copy.
    Copy,
    /// Sender deletes its copy.
    Move,
    /// Spray-and-wait budget split.
    Split { give: u32, keep: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Offer {
    pub bundle: BundleId,
    pub handoff: Handoff,
}

/// What a node learns about its peer at contact time.
#[derive(Debug, Clone, Copy)]
pub struct PeerView<'a> {
    pub id: &'a AccountId,
    pub summary: &'a SummaryVector,
    pub prophet: Option<&'a PredictabilityTable>,
}

fn max_p(table: Option<&PredictabilityTable>, bundle: &Bundle, now: f64) -> f64 {
    let Some(t) = table else { return 0.0 };
    bundle.content.dest.iter().map(|d| t.p_at(d, now)).fold(0.0, f64::max)
}

/// Bundles `buffer` offers to `peer` under `scheme`, in priority order.
///
/// Never offers bundles in the peer's summary or expired at `now`.
pub fn plan_transfers(
    scheme: &Scheme,
    buffer: &Buffer,
    own_table: Option<&PredictabilityTable>,
    peer: &PeerView<'_>,
    now: f64,
) -> Vec<Offer> {
    let mut planned: Vec<(bool, f64, &BundleId, Handoff)> = Vec::new();
    for stored in buffer.iter() {
        let b = &stored.bundle;
        if b.is_expired(now) || peer.summary.contains(&b.id) {
            continue;
        }
        let to_peer = b.is_addressed_to(peer.id);
        let handoff = match scheme {
            // Only the source delivers, so delivery is always one hop.
            Scheme::Direct if to_peer && b.hop_count == 0 => Handoff::Copy,
            Scheme::Direct => continue,
            // Custody stops at a node that is the bundle's only destination.
            Scheme::FirstContact if b.content.dest.iter().all(|d| d == buffer.owner()) => continue,
            Scheme::FirstContact => Handoff::Move,
            Scheme::Epidemic => Handoff::Copy,
            Scheme::SprayAndWait { .. } => match b.copies.unwrap_or(1) {
                c if c > 1 => Handoff::Split {
                    give: c / 2,
                    keep: c - c / 2,
                },
                _ if to_peer => Handoff::Move,
                _ => continue,
            },
            Scheme::Prophet(_) => {
                if to_peer || max_p(peer.prophet, b, now) > max_p(own_table, b, now) {
                    Handoff::Copy
                } else {
                    continue;
                }
            }
        };
        planned.push((to_peer, b.content.created_t, &b.id, handoff));
    }
    planned.sort_by(|a, b| offer_priority((a.0, a.1, a.2), (b.0, b.1, b.2)));
    planned
        .into_iter()
        .map(|(_, _, id, handoff)| Offer {
            bundle: id.clone(),
            handoff,
        })
        .collect()
}

/// One node's routing state: its buffer plus scheme-local tables.
#[derive(Debug, Clone)]
pub struct RoutingNode {
    scheme: Scheme,
    buffer: Buffer,
    prophet: Option<PredictabilityTable>,
}

impl RoutingNode {
    pub fn new(owner: AccountId, scheme: Scheme, capacity_bytes: u64) -> Self {
        let prophet = match scheme {
            Scheme::Prophet(p) => Some(PredictabilityTable::new(owner.clone(), p)),
            _ => None,
        };
        Self {
            scheme,
            buffer: Buffer::new(owner, capacity_bytes),
            prophet,
        }
    }

    pub fn id(&self) -> &AccountId {
        self.buffer.owner()
    }

    pub fn scheme(&self) -> &Scheme {
        &self.scheme
    }

    pub fn buffer(&self) -> &Buffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut Buffer {
        &mut self.buffer
    }

    pub fn prophet(&self) -> Option<&PredictabilityTable> {
        self.prophet.as_ref()
    }

    pub fn summarize(&self, now: f64) -> SummaryVector {
        self.buffer.summarize(now)
    }

    pub fn plan(&self, peer: &PeerView<'_>, now: f64) -> Vec<Offer> {
        plan_transfers(&self.scheme, &self.buffer, self.prophet.as_ref(), peer, now)
    }

    /// The copy that goes on the wire for `offer`.
    pub fn outgoing(&self, offer: &Offer) -> Option<Bundle> {
        let mut b = self.buffer.get(&offer.bundle)?.bundle.clone();
        if let Handoff::Split { give, .. } = offer.handoff {
            b.copies = Some(give);
        }
        Some(b)
    }

    /// Applies the sender side of a completed transfer. Returns whether the
    /// local copy was removed.
    pub fn commit(&mut self, offer: &Offer) -> bool {
        match offer.handoff {
            Handoff::Copy => false,
            Handoff::Move => self.buffer.remove(&offer.bundle).is_some(),
            Handoff::Split { keep, .. } => {
                self.buffer.set_copies(&offer.bundle, keep);
                false
            }
        }
    }

    /// Encounter bookkeeping that happens before any planning.
    pub fn encounter(a: &mut RoutingNode, b: &mut RoutingNode, now: f64) {
        if let (Some(ta), Some(tb)) = (a.prophet.as_mut(), b.prophet.as_mut()) {
            prophet_update(ta, tb, now);
        }
    }
}

/// Offer order on `(addressed_to_peer, created_t, id)`.
pub fn offer_priority(a: (bool, f64, &BundleId), b: (bool, f64, &BundleId)) -> Ordering {
    b.0.cmp(&a.0)
        .then_with(|| a.1.total_cmp(&b.1))
        .then_with(|| a.2.cmp(b.2))
}
