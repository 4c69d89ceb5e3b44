use std::collections::BTreeMap;

use super::trace::Contact;

/// Earliest time a message at `src` from `t0` can reach `dst` over
/// time-respecting paths, with instantaneous transfers and no resource
/// limits. A holder at time `t` can cross contact `[s, e]` iff `t <= e`,
/// arriving at `max(t, s)`.
///
/// Label-correcting: relax every contact until nothing improves.
pub fn foremost_oracle(contacts: &[Contact], src: &str, dst: &str, t0: f64) -> Option<f64> {
    let mut arrival: BTreeMap<&str, f64> = BTreeMap::new();
    arrival.insert(src, t0);
    loop {
        let mut changed = false;
        for c in contacts {
            for (u, v) in [(&c.node_a, &c.node_b), (&c.node_b, &c.node_a)] {
                let Some(&t) = arrival.get(u.as_str()) else { continue };
                if t > c.t_end {
                    continue;
                }
                let reach = t.max(c.t_start);
                let better = arrival.get(v.as_str()).map_or(true, |&cur| reach < cur);
                if better {
                    arrival.insert(v.as_str(), reach);
                    changed = true;
                }
            }
        }
        if !changed {
            return arrival.get(dst).copied();
        }
    }
}
