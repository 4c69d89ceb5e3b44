//! PRoPHET delivery predictabilities.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::crypto::AccountId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProphetParams {
    pub p_init: f64,
    pub beta: f64,
    pub gamma: f64,
    pub aging_unit_s: f64,
}

impl Default for ProphetParams {
    fn default() -> Self {
        Self {
            p_init: 0.75,
            beta: 0.25,
            gamma: 0.98,
            aging_unit_s: 1.0,
        }
    }
}

impl ProphetParams {
    pub fn validate(&self) -> Result<(), String> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(format!("{name} must be in [0, 1], got {v}"))
            }
        };
        unit("p_init", self.p_init)?;
        unit("beta", self.beta)?;
        unit("gamma", self.gamma)?;
        if !(self.aging_unit_s > 0.0 && self.aging_unit_s.is_finite()) {
            return Err(format!("aging must be positive, got {}", self.aging_unit_s));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictability {
    pub p: f64,
    pub last_update_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictabilityTable {
    owner: AccountId,
    params: ProphetParams,
    entries: BTreeMap<AccountId, Predictability>,
}

impl PredictabilityTable {
    pub fn new(owner: AccountId, params: ProphetParams) -> Self {
        Self {
            owner,
            params,
            entries: BTreeMap::new(),
        }
    }

    pub fn owner(&self) -> &AccountId {
        &self.owner
    }

    pub fn params(&self) -> &ProphetParams {
        &self.params
    }

    pub fn entries(&self) -> impl Iterator<Item = (&AccountId, &Predictability)> {
        self.entries.iter()
    }

    /// Stored value, without aging; 0 for unknown destinations.
    pub fn p(&self, dest: &AccountId) -> f64 {
        self.entries.get(dest).map_or(0.0, |e| e.p)
    }

    /// Value aged to `now`, without modifying the table.
    pub fn p_at(&self, dest: &AccountId, now: f64) -> f64 {
        self.entries
            .get(dest)
            .map_or(0.0, |e| e.p * self.decay(now - e.last_update_t))
    }

    pub fn set(&mut self, dest: AccountId, p: f64, t: f64) {
        self.entries.insert(
            dest,
            Predictability {
                p: p.clamp(0.0, 1.0),
                last_update_t: t,
            },
        );
    }

    fn decay(&self, elapsed: f64) -> f64 {
        let k = elapsed.max(0.0) / self.params.aging_unit_s;
        self.params.gamma.powf(k)
    }

    /// `P <- P * gamma^k`, `k = (now - last_update_t) / aging_unit_s`.
    pub fn age(&mut self, now: f64) {
        let params = self.params;
        for e in self.entries.values_mut() {
            let k = (now - e.last_update_t).max(0.0) / params.aging_unit_s;
            e.p *= params.gamma.powf(k);
            e.last_update_t = now;
        }
    }
}

/// Encounter update between the owners of `a` and `b`: aging, then the
/// direct update, then transitivity.
pub fn prophet_update(a: &mut PredictabilityTable, b: &mut PredictabilityTable, now: f64) {
    a.age(now);
    b.age(now);

    let (a_id, b_id) = (a.owner.clone(), b.owner.clone());
    let direct = |t: &mut PredictabilityTable, peer: &AccountId| {
        let old = t.p(peer);
        let p_init = t.params.p_init;
        t.set(peer.clone(), old + (1.0 - old) * p_init, now);
    };
    direct(a, &b_id);
    direct(b, &a_id);

    let snap_a = a.clone();
    let snap_b = b.clone();
    transitive(a, &snap_a, &snap_b, now);
    transitive(b, &snap_b, &snap_a, now);
}

/// `P_t(d) <- max(P_t(d), P_t(peer) * P_peer(d) * beta)` for every `d` the
/// peer knows, reading both sides from the given snapshots.
fn transitive(target: &mut PredictabilityTable, own: &PredictabilityTable, peer: &PredictabilityTable, now: f64) {
    let via = own.p(&peer.owner);
    let beta = own.params.beta;
    for (d, e) in &peer.entries {
        if *d == own.owner {
            continue;
        }
        let candidate = via * e.p * beta;
        if candidate > own.p(d) {
            target.set(d.clone(), candidate, now);
        }
    }
}
