//! Random-waypoint mobility and contact extraction.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::trace::Contact;

/// Default link rate for generated contacts, in bytes per second.
pub const DEFAULT_WAYPOINT_BANDWIDTH: f64 = 250_000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaypointParams {
    pub width_m: f64,
    pub height_m: f64,
    pub nodes: usize,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_min: f64,
    pub pause_max: f64,
    pub range_m: f64,
    pub dt_s: f64,
    pub horizon_s: f64,
    pub bandwidth_bps: f64,
    /// Starting positions; drawn uniformly when absent.
    pub initial_positions: Option<Vec<(f64, f64)>>,
    /// Overrides the caller's seed when set.
    pub seed: Option<u64>,
}

impl Default for WaypointParams {
    fn default() -> Self {
        Self {
            width_m: 1000.0,
            height_m: 1000.0,
            nodes: 10,
            speed_min: 0.5,
            speed_max: 1.5,
            pause_min: 0.0,
            pause_max: 120.0,
            range_m: 10.0,
            dt_s: 1.0,
            horizon_s: 3600.0,
            bandwidth_bps: DEFAULT_WAYPOINT_BANDWIDTH,
            initial_positions: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid waypoint parameters: {0}")]
pub struct WaypointError(pub String);

impl WaypointParams {
    pub fn validate(&self) -> Result<(), WaypointError> {
        let err = |m: String| Err(WaypointError(m));
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(WaypointError(format!("{name} must be positive, got {v}")))
            }
        };
        positive("width", self.width_m)?;
        positive("height", self.height_m)?;
        positive("range", self.range_m)?;
        positive("dt", self.dt_s)?;
        positive("horizon", self.horizon_s)?;
        if !(self.bandwidth_bps > 0.0) {
            return err(format!("bandwidth must be positive, got {}", self.bandwidth_bps));
        }
        if !(self.speed_min >= 0.0 && self.speed_min <= self.speed_max && self.speed_max.is_finite()) {
            return err(format!(
                "speed range [{}, {}] is empty or negative",
                self.speed_min, self.speed_max
            ));
        }
        if !(self.pause_min >= 0.0 && self.pause_min <= self.pause_max && self.pause_max.is_finite()) {
            return err(format!(
                "pause range [{}, {}] is empty or negative",
                self.pause_min, self.pause_max
            ));
        }
        if let Some(pos) = &self.initial_positions {
            if pos.len() != self.nodes {
                return err(format!("{} initial positions for {} nodes", pos.len(), self.nodes));
            }
            for &(x, y) in pos {
                if !((0.0..=self.width_m).contains(&x) && (0.0..=self.height_m).contains(&y)) {
                    return err(format!("initial position ({x}, {y}) is outside the area"));
                }
            }
        }
        Ok(())
    }
}

pub fn node_name(i: usize) -> String {
    format!("n{i}")
}

fn uniform(rng: &mut ChaCha20Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.gen::<f64>()
}

struct Walker {
    x: f64,
    y: f64,
    tx: f64,
    ty: f64,
    speed: f64,
    moving: bool,
    pause_until: f64,
}

impl Walker {
    /// Moves the walker from `now` to `to`.
    fn advance(&mut self, mut now: f64, to: f64, p: &WaypointParams, rng: &mut ChaCha20Rng) {
        loop {
            if !self.moving {
                if self.pause_until >= to {
                    return;
                }
                now = self.pause_until;
                self.tx = uniform(rng, 0.0, p.width_m);
                self.ty = uniform(rng, 0.0, p.height_m);
                self.speed = uniform(rng, p.speed_min, p.speed_max);
                if self.speed <= 0.0 {
                    self.pause_until = f64::INFINITY;
                    return;
                }
                self.moving = true;
            }
            let (dx, dy) = (self.tx - self.x, self.ty - self.y);
            let dist = dx.hypot(dy);
            let arrive = now + dist / self.speed;
            if arrive > to {
                let f = (to - now) * self.speed / dist;
                self.x += dx * f;
                self.y += dy * f;
                return;
            }
            self.x = self.tx;
            self.y = self.ty;
            now = arrive;
            self.moving = false;
            self.pause_until = now + uniform(rng, p.pause_min, p.pause_max);
        }
    }
}

/// Samples random-waypoint motion every `dt_s` (plus the horizon itself)
/// and returns each maximal in-range run of samples as a contact, sorted by
/// start time then node index. Runs of a single sample have zero length
/// and are dropped.
pub fn generate_waypoint_trace(params: &WaypointParams, seed: u64) -> Result<Vec<Contact>, WaypointError> {
    params.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(params.seed.unwrap_or(seed));
    let n = params.nodes;
    let stationary = params.speed_max <= 0.0;
    let mut walkers: Vec<Walker> = (0..n)
        .map(|i| {
            let (x, y) = match &params.initial_positions {
                Some(p) => p[i],
                None => (
                    uniform(&mut rng, 0.0, params.width_m),
                    uniform(&mut rng, 0.0, params.height_m),
                ),
            };
            Walker {
                x,
                y,
                tx: x,
                ty: y,
                speed: 0.0,
                moving: false,
                pause_until: if stationary { f64::INFINITY } else { 0.0 },
            }
        })
        .collect();

    let mut times = Vec::new();
    let mut k = 0u64;
    loop {
        let t = k as f64 * params.dt_s;
        if t >= params.horizon_s {
            break;
        }
        times.push(t);
        k += 1;
    }
    times.push(params.horizon_s);

    // run_start[i][j] for i < j: first sample time of the current in-range run.
    let mut run_start: Vec<Vec<Option<f64>>> = vec![vec![None; n]; n];
    let mut last_in = vec![vec![0.0f64; n]; n];
    let mut found: Vec<(f64, usize, usize, f64)> = Vec::new();
    let mut prev_t = 0.0;
    for &t in &times {
        for w in walkers.iter_mut() {
            w.advance(prev_t, t, params, &mut rng);
        }
        prev_t = t;
        for i in 0..n {
            for j in i + 1..n {
                let d = (walkers[i].x - walkers[j].x).hypot(walkers[i].y - walkers[j].y);
                if d <= params.range_m {
                    run_start[i][j].get_or_insert(t);
                    last_in[i][j] = t;
                } else if let Some(s) = run_start[i][j].take() {
                    found.push((s, i, j, last_in[i][j]));
                }
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            if let Some(s) = run_start[i][j].take() {
                found.push((s, i, j, last_in[i][j]));
            }
        }
    }
    found.retain(|&(s, _, _, e)| e > s);
    found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    Ok(found
        .into_iter()
        .map(|(s, i, j, e)| Contact {
            t_start: s,
            t_end: e,
            node_a: node_name(i),
            node_b: node_name(j),
            bandwidth_bps: params.bandwidth_bps,
        })
        .collect())
}
