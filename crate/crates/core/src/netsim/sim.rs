//! Deterministic discrete-event run of a scenario.
//!
//! Events at equal times are ordered by class, then by insertion order:
//! account creation, follows, app-state changes, contact starts, traffic,
//! transfer completions, contact ends, run end. Transfers finishing exactly
//! at a contact's end still complete, which matches the closed contact
//! intervals of [`foremost_oracle`](super::foremost_oracle).
//!
//! Each realized contact is a half-duplex link. Whenever a link is idle it
//! picks the next item to send, alternating directions: first each side's
//! profile card, then bundles in the sender's offer order. An item is sent
//! only if it finishes before the contact ends; transfers are atomic. A
//! bundle crosses a given contact at most once, and a bundle that is in
//! flight on one link is not offered on another.
//!
//! Randomness comes from ChaCha20 seeded with the scenario seed, one stream
//! per purpose, so runs reproduce across platforms.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::crypto::{self, generate_identity, AccountId, CryptoOp, Identity};
use crate::registry::{Clock, Gated, RegistryStore};
use crate::routing::{Bundle, BundleId, BundleKind, Offer, PeerView, ReceiveStatus, RoutingNode};
use crate::social::{self, normalize_interests, FollowGraph, Recording, SendOptions, SocialNode, PROFILE_CARD_BYTES};

use super::log::{DropReason, EventLog, Record, TransferOutcome};
use super::scenario::{Scenario, ScenarioError};
use super::trace::Contact;
use super::AppState;

const STREAM_DISCOVERY: u64 = 1;
const STREAM_IDENTITY: u64 = 2;
const STREAM_SEAL: u64 = 3;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("simulation failed: {0}")]
    Runtime(String),
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Account(usize),
    Follow(usize),
    AppState { node: usize, step: u64 },
    ContactStart(usize),
    Traffic(usize),
    TransferComplete(usize),
    ContactEnd(usize),
    RunEnd,
}

impl Kind {
    fn class(self) -> u8 {
        match self {
            Kind::Account(_) => 0,
            Kind::Follow(_) => 1,
            Kind::AppState { .. } => 2,
            Kind::ContactStart(_) => 3,
            Kind::Traffic(_) => 4,
            Kind::TransferComplete(_) => 5,
            Kind::ContactEnd(_) => 6,
            Kind::RunEnd => 7,
        }
    }
}

#[derive(Debug)]
struct Event {
    t: f64,
    seq: u64,
    kind: Kind,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.t, self.kind.class(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

#[derive(Debug)]
enum Job {
    Card,
    Bundle { offer: Offer, bundle: Box<Bundle> },
}

#[derive(Debug)]
struct InFlight {
    dir: usize,
    job: Job,
    bytes: u64,
}

#[derive(Debug)]
struct Link {
    ends: [usize; 2],
    t_end: f64,
    bandwidth: f64,
    busy: Option<InFlight>,
    turn: usize,
    cards_done: [bool; 2],
    sent: BTreeSet<BundleId>,
}

impl Link {
    fn finish_time(&self, bytes: u64, now: f64) -> f64 {
        if self.bandwidth.is_infinite() {
            now
        } else {
            now + bytes as f64 / self.bandwidth
        }
    }

    fn fits(&self, bytes: u64, now: f64) -> bool {
        self.finish_time(bytes, now) <= self.t_end
    }
}

struct Node {
    id: String,
    identity: Option<Identity>,
    social: Option<SocialNode>,
    routing: Option<RoutingNode>,
    state: AppState,
    links: BTreeSet<usize>,
    in_flight: BTreeSet<BundleId>,
}

fn pair_mut<T>(v: &mut [T], a: usize, b: usize) -> (&mut T, &mut T) {
    assert_ne!(a, b);
    if a < b {
        let (lo, hi) = v.split_at_mut(b);
        (&mut lo[a], &mut hi[0])
    } else {
        let (lo, hi) = v.split_at_mut(a);
        (&mut hi[0], &mut lo[b])
    }
}

fn stream(seed: u64, n: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(n);
    rng
}

/// Validates `scenario`, resolves its contacts and runs it.
pub fn run(scenario: &Scenario) -> Result<EventLog, SimError> {
    scenario.validate()?;
    let contacts = scenario.contacts()?;
    run_with_contacts(scenario, &contacts)
}

/// Runs `scenario` over an already resolved contact list.
pub fn run_with_contacts(scenario: &Scenario, contacts: &[Contact]) -> Result<EventLog, SimError> {
    scenario.validate()?;
    scenario.validate_contacts(contacts)?;
    Simulation::new(scenario, contacts).run()
}

struct Simulation<'a> {
    scenario: &'a Scenario,
    contacts: &'a [Contact],
    nodes: Vec<Node>,
    by_account: BTreeMap<AccountId, usize>,
    graph: FollowGraph,
    /// Every attempt is recorded, including those refused while offline.
    registry: Recording<Gated<RegistryStore>>,
    queue: BinaryHeap<Reverse<Event>>,
    seq: u64,
    links: BTreeMap<usize, Link>,
    discovery_rng: ChaCha20Rng,
    seal_rng: ChaCha20Rng,
    timings: Vec<(CryptoOp, u64)>,
    delivered: BTreeSet<(BundleId, usize)>,
    log: Vec<Record>,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario, contacts: &'a [Contact]) -> Self {
        let mut id_rng = stream(scenario.seed, STREAM_IDENTITY);
        let nodes = scenario
            .nodes
            .iter()
            .map(|spec| {
                let mut seed = [0u8; 32];
                id_rng.fill_bytes(&mut seed);
                Node {
                    id: spec.id.clone(),
                    identity: Some(generate_identity(&spec.username, Some(seed)).expect("username validated")),
                    social: None,
                    routing: None,
                    state: spec.schedule[0].state,
                    links: BTreeSet::new(),
                    in_flight: BTreeSet::new(),
                }
            })
            .collect();
        let mut sim = Self {
            scenario,
            contacts,
            nodes,
            by_account: BTreeMap::new(),
            graph: FollowGraph::new(),
            registry: Recording::new(Gated {
                inner: RegistryStore::in_memory(Clock::Manual(0.0)),
                online: false,
            }),
            queue: BinaryHeap::new(),
            seq: 0,
            links: BTreeMap::new(),
            discovery_rng: stream(scenario.seed, STREAM_DISCOVERY),
            seal_rng: stream(scenario.seed, STREAM_SEAL),
            timings: Vec::new(),
            delivered: BTreeSet::new(),
            log: Vec::new(),
        };
        sim.seed_events();
        sim
    }

    fn push(&mut self, t: f64, kind: Kind) {
        self.seq += 1;
        self.queue.push(Reverse(Event { t, seq: self.seq, kind }));
    }

    fn seed_events(&mut self) {
        let s = self.scenario;
        let mut accounts: Vec<usize> = (0..s.nodes.len()).collect();
        accounts.sort_by(|&a, &b| s.nodes[a].created_t.total_cmp(&s.nodes[b].created_t));
        for i in accounts {
            self.push(s.nodes[i].created_t, Kind::Account(i));
        }
        for (i, f) in s.follows.iter().enumerate() {
            self.push(f.t, Kind::Follow(i));
        }
        for node in 0..s.nodes.len() {
            self.push(0.0, Kind::AppState { node, step: 0 });
        }
        for (i, c) in self.contacts.iter().enumerate() {
            if c.t_start <= s.horizon_s {
                self.push(c.t_start, Kind::ContactStart(i));
            }
        }
        for (i, tr) in s.traffic.iter().enumerate() {
            self.push(tr.t, Kind::Traffic(i));
        }
        self.push(s.horizon_s, Kind::RunEnd);
    }

    fn run(mut self) -> Result<EventLog, SimError> {
        self.log.push(Record::RunStart {
            t: 0.0,
            scheme: self.scenario.scheme.to_string(),
            seed: self.scenario.seed,
            nodes: self.nodes.len(),
            contacts: self.contacts.len(),
        });
        while let Some(Reverse(ev)) = self.queue.pop() {
            let t = ev.t;
            match ev.kind {
                Kind::Account(i) => self.on_account(t, i)?,
                Kind::Follow(i) => self.on_follow(t, i),
                Kind::AppState { node, step } => self.on_app_state(t, node, step),
                Kind::ContactStart(ci) => self.on_contact_start(t, ci),
                Kind::Traffic(i) => self.on_traffic(t, i),
                Kind::TransferComplete(ci) => self.on_transfer_complete(t, ci),
                Kind::ContactEnd(ci) => self.on_contact_end(t, ci),
                Kind::RunEnd => {
                    for n in 0..self.nodes.len() {
                        self.expire_node(n, t);
                    }
                    self.log.push(Record::RunEnd { t });
                    break;
                }
            }
        }
        Ok(EventLog::new(self.log))
    }

    fn flush_timings(&mut self, t: f64) {
        let pending = std::mem::take(&mut self.timings);
        if self.scenario.record_crypto_timings {
            self.log.extend(
                pending
                    .into_iter()
                    .map(|(op, nanos)| Record::CryptoTiming { t, op, nanos }),
            );
        }
    }

    fn enter_registry(&mut self, t: f64) {
        self.registry.inner.online = self.scenario.is_online(t);
        self.registry.inner.inner.set_time(t);
    }

    fn flush_registry_calls(&mut self, t: f64, node: usize) {
        for call in std::mem::take(&mut self.registry.calls) {
            self.log.push(Record::RegistryCall {
                t,
                node: self.nodes[node].id.clone(),
                op: call.op,
                username: call.username,
                ok: call.ok,
            });
        }
    }

    fn node_of(&self, account: &AccountId) -> String {
        self.by_account
            .get(account)
            .map_or_else(|| account.to_string(), |&i| self.nodes[i].id.clone())
    }

    fn send_options(&self) -> SendOptions {
        SendOptions {
            ttl_s: self.scenario.limits.ttl_s,
            copies: self.scenario.scheme.initial_copies(),
        }
    }

    fn on_account(&mut self, t: f64, i: usize) -> Result<(), SimError> {
        let spec = &self.scenario.nodes[i];
        let identity = self.nodes[i].identity.take().expect("one creation per node");
        let interests = normalize_interests(&spec.interests).expect("validated");
        self.enter_registry(t);
        let created = social::create_account(identity, interests, &mut self.registry);
        self.flush_registry_calls(t, i);
        let social = created.map_err(|e| SimError::Runtime(format!("account for node {}: {e}", spec.id)))?;
        let account = social.account_id().clone();
        self.log.push(Record::AccountCreated {
            t,
            node: spec.id.clone(),
            username: spec.username.clone(),
            account_id: account.clone(),
        });
        let node = &mut self.nodes[i];
        node.routing = Some(RoutingNode::new(
            account.clone(),
            self.scenario.scheme,
            self.scenario.limits.capacity_bytes,
        ));
        node.social = Some(social);
        self.by_account.insert(account, i);
        Ok(())
    }

    fn on_follow(&mut self, t: f64, i: usize) {
        let spec = &self.scenario.follows[i];
        let follower = self.scenario.node_index(&spec.follower).expect("validated");
        self.enter_registry(t);
        let node = &mut self.nodes[follower];
        let result = match node.social.as_mut() {
            Some(s) => s
                .follow(&mut self.graph, &spec.followee, &mut self.registry)
                .map_err(|e| e.to_string()),
            None => Err("follower has no account".to_owned()),
        };
        self.flush_registry_calls(t, follower);
        let rec = match result {
            Ok(acct) => Record::Follow {
                t,
                follower: spec.follower.clone(),
                followee: self.node_of(&acct),
            },
            Err(reason) => Record::FollowFailed {
                t,
                follower: spec.follower.clone(),
                followee_username: spec.followee.clone(),
                reason,
            },
        };
        self.log.push(rec);
    }

    fn on_app_state(&mut self, t: f64, node: usize, step: u64) {
        let schedule = &self.scenario.nodes[node].schedule;
        let entry = schedule[(step % schedule.len() as u64) as usize];
        if step == 0 || entry.state != self.nodes[node].state {
            self.nodes[node].state = entry.state;
            self.log.push(Record::AppStateChange {
                t,
                node: self.nodes[node].id.clone(),
                state: entry.state,
            });
        }
        if schedule.len() > 1 {
            let next = t + entry.duration_s;
            if next <= self.scenario.horizon_s {
                self.push(next, Kind::AppState { node, step: step + 1 });
            }
        }
    }

    fn on_contact_start(&mut self, t: f64, ci: usize) {
        let c = &self.contacts[ci];
        let a = self.scenario.node_index(&c.node_a).expect("validated");
        let b = self.scenario.node_index(&c.node_b).expect("validated");
        // Drawn for every contact so the stream stays aligned across schemes.
        let u: f64 = self.discovery_rng.gen();
        let d = &self.scenario.discovery;
        let p = d.probability(self.nodes[a].state) * d.probability(self.nodes[b].state);
        let accounts = self.nodes[a].routing.is_some() && self.nodes[b].routing.is_some();
        if !(u < p) || !accounts {
            return;
        }
        let t_end = c.t_end.min(self.scenario.horizon_s);
        self.log.push(Record::ContactStart {
            t,
            contact: ci,
            a: c.node_a.clone(),
            b: c.node_b.clone(),
            t_end,
            bandwidth_bps: c.bandwidth_bps.is_finite().then_some(c.bandwidth_bps),
        });
        self.links.insert(
            ci,
            Link {
                ends: [a, b],
                t_end,
                bandwidth: c.bandwidth_bps,
                busy: None,
                turn: 0,
                cards_done: [false; 2],
                sent: BTreeSet::new(),
            },
        );
        self.nodes[a].links.insert(ci);
        self.nodes[b].links.insert(ci);
        let (na, nb) = pair_mut(&mut self.nodes, a, b);
        RoutingNode::encounter(
            na.routing.as_mut().expect("checked"),
            nb.routing.as_mut().expect("checked"),
            t,
        );
        self.push(t_end, Kind::ContactEnd(ci));
        self.pump_nodes(&[a, b], t);
    }

    fn on_contact_end(&mut self, t: f64, ci: usize) {
        let Some(link) = self.links.remove(&ci) else { return };
        if let Some(InFlight {
            dir,
            job: Job::Bundle { offer, .. },
            ..
        }) = link.busy
        {
            self.nodes[link.ends[dir]].in_flight.remove(&offer.bundle);
        }
        for n in link.ends {
            self.nodes[n].links.remove(&ci);
        }
        let c = &self.contacts[ci];
        self.log.push(Record::ContactEnd {
            t,
            contact: ci,
            a: c.node_a.clone(),
            b: c.node_b.clone(),
        });
    }

    fn on_traffic(&mut self, t: f64, i: usize) {
        let spec = &self.scenario.traffic[i];
        let author = self.scenario.node_index(&spec.author).expect("validated");
        let opts = self.send_options();
        self.enter_registry(t);
        let body = spec.body();
        let node = &mut self.nodes[author];
        let created = match node.social.as_mut() {
            None => Err("author has no account".to_owned()),
            Some(s) => match spec.kind {
                BundleKind::Post => s.publish(&self.graph, &body, t, opts, &mut self.timings),
                BundleKind::Dm => s.direct_message(
                    spec.to.as_deref().expect("validated"),
                    &body,
                    t,
                    opts,
                    &mut self.registry,
                    &mut self.seal_rng,
                    &mut self.timings,
                ),
            }
            .map_err(|e| e.to_string()),
        };
        self.flush_registry_calls(t, author);
        let bundle = match created {
            Ok(b) => b,
            Err(reason) => {
                self.log.push(Record::TrafficFailed {
                    t,
                    node: spec.author.clone(),
                    kind: spec.kind,
                    reason,
                });
                self.flush_timings(t);
                return;
            }
        };
        self.log.push(Record::BundleCreated {
            t,
            bundle: bundle.id.clone(),
            author: spec.author.clone(),
            kind: spec.kind,
            dest: bundle.content.dest.iter().map(|d| self.node_of(d)).collect(),
            size: bundle.size_bytes(),
            ttl_s: bundle.content.ttl_s,
            copies: bundle.copies,
        });
        self.flush_timings(t);
        let id = bundle.id.clone();
        let routing = self.nodes[author].routing.as_mut().expect("account exists");
        let outcome = routing.buffer_mut().insert_local(bundle, t);
        self.log_evictions(t, author, outcome.evicted);
        if outcome.status == ReceiveStatus::NoSpace {
            self.log.push(Record::Dropped {
                t,
                bundle: id,
                node: spec.author.clone(),
                reason: DropReason::NoSpace,
            });
        }
        self.pump_nodes(&[author], t);
    }

    fn log_evictions(&mut self, t: f64, node: usize, evicted: Vec<BundleId>) {
        for bundle in evicted {
            self.log.push(Record::Dropped {
                t,
                bundle,
                node: self.nodes[node].id.clone(),
                reason: DropReason::Evicted,
            });
        }
    }

    fn expire_node(&mut self, n: usize, t: f64) {
        let Some(routing) = self.nodes[n].routing.as_mut() else {
            return;
        };
        for bundle in routing.buffer_mut().expire(t) {
            self.log.push(Record::Expired {
                t,
                bundle,
                node: self.nodes[n].id.clone(),
            });
        }
    }

    fn pump_nodes(&mut self, nodes: &[usize], t: f64) {
        let links: BTreeSet<usize> = nodes
            .iter()
            .flat_map(|&n| self.nodes[n].links.iter().copied())
            .collect();
        for ci in links {
            self.pump(ci, t);
        }
    }

    /// Starts the next transfer on an idle link, if there is one.
    fn pump(&mut self, ci: usize, t: f64) {
        let Some(link) = self.links.get(&ci) else { return };
        if link.busy.is_some() {
            return;
        }
        let first = link.turn;
        for k in 0..2 {
            let dir = (first + k) % 2;
            if let Some(job) = self.next_job(ci, dir, t) {
                let link = self.links.get_mut(&ci).expect("present");
                let bytes = match &job {
                    Job::Card => PROFILE_CARD_BYTES,
                    Job::Bundle { bundle, .. } => bundle.size_bytes(),
                };
                if let Job::Bundle { offer, .. } = &job {
                    self.nodes[link.ends[dir]].in_flight.insert(offer.bundle.clone());
                }
                let done = link.finish_time(bytes, t);
                link.busy = Some(InFlight { dir, job, bytes });
                link.turn = 1 - dir;
                self.push(done, Kind::TransferComplete(ci));
                return;
            }
        }
    }

    fn next_job(&mut self, ci: usize, dir: usize, t: f64) -> Option<Job> {
        let link = self.links.get_mut(&ci)?;
        let (s, r) = (link.ends[dir], link.ends[1 - dir]);
        if !link.cards_done[dir] {
            if link.fits(PROFILE_CARD_BYTES, t) {
                return Some(Job::Card);
            }
            link.cards_done[dir] = true;
        }
        self.expire_node(s, t);
        let link = &self.links[&ci];
        let (sender, receiver) = (&self.nodes[s], &self.nodes[r]);
        let (sr, rr) = (sender.routing.as_ref()?, receiver.routing.as_ref()?);
        let summary = rr.summarize(t);
        let view = PeerView {
            id: rr.id(),
            summary: &summary,
            prophet: rr.prophet(),
        };
        for offer in sr.plan(&view, t) {
            if link.sent.contains(&offer.bundle) || sender.in_flight.contains(&offer.bundle) {
                continue;
            }
            let bundle = sr.outgoing(&offer).expect("planned from buffer");
            if link.fits(bundle.size_bytes(), t) {
                return Some(Job::Bundle {
                    offer,
                    bundle: Box::new(bundle),
                });
            }
        }
        None
    }

    fn on_transfer_complete(&mut self, t: f64, ci: usize) {
        let Some(link) = self.links.get_mut(&ci) else { return };
        let Some(InFlight { dir, job, bytes }) = link.busy.take() else {
            return;
        };
        let (s, r) = (link.ends[dir], link.ends[1 - dir]);
        match job {
            Job::Card => {
                link.cards_done[dir] = true;
                let card = self.nodes[s].social.as_ref().expect("account exists").profile().clone();
                self.nodes[r]
                    .social
                    .as_mut()
                    .expect("account exists")
                    .receive_card(card);
                self.log.push(Record::ProfileExchange {
                    t,
                    contact: ci,
                    from: self.nodes[s].id.clone(),
                    to: self.nodes[r].id.clone(),
                    bytes,
                });
            }
            Job::Bundle { offer, bundle } => {
                link.sent.insert(bundle.id.clone());
                self.nodes[s].in_flight.remove(&bundle.id);
                self.deliver_bundle(t, ci, s, r, offer, *bundle, bytes);
            }
        }
        self.flush_timings(t);
        self.pump_nodes(&[s, r], t);
    }

    #[allow(clippy::too_many_arguments)]
    fn deliver_bundle(&mut self, t: f64, ci: usize, s: usize, r: usize, offer: Offer, bundle: Bundle, bytes: u64) {
        let verified = crypto::timed(CryptoOp::Verify, &mut self.timings, || bundle.verify().is_ok());
        let id = bundle.id.clone();
        let copies = bundle.copies;
        let mut evicted = Vec::new();
        let mut hop_count = None;
        let outcome = if verified {
            let (sn, rn) = pair_mut(&mut self.nodes, s, r);
            let sender_id = sn.routing.as_ref().expect("account exists").id().clone();
            let receiver = rn.routing.as_mut().expect("account exists");
            let result = receiver.buffer_mut().receive(bundle, &sender_id, t);
            if result.status == ReceiveStatus::Accepted {
                sn.routing.as_mut().expect("account exists").commit(&offer);
                if result.delivered {
                    hop_count = receiver.buffer().get(&id).map(|b| b.bundle.hop_count);
                }
            }
            evicted = result.evicted;
            TransferOutcome::from(result.status)
        } else {
            TransferOutcome::BadSignature
        };
        self.log.push(Record::Transfer {
            t,
            contact: ci,
            bundle: id.clone(),
            from: self.nodes[s].id.clone(),
            to: self.nodes[r].id.clone(),
            bytes,
            handoff: offer.handoff,
            copies,
            outcome,
        });
        self.log_evictions(t, r, evicted);
        if let Some(hop_count) = hop_count {
            if self.delivered.insert((id.clone(), r)) {
                self.log.push(Record::Delivered {
                    t,
                    bundle: id.clone(),
                    recipient: self.nodes[r].id.clone(),
                    hop_count,
                });
                let rn = &mut self.nodes[r];
                let stored = rn
                    .routing
                    .as_ref()
                    .and_then(|x| x.buffer().get(&id))
                    .map(|b| b.bundle.clone());
                if let (Some(social), Some(b)) = (rn.social.as_mut(), stored) {
                    let opened = social.accept(&b, &mut self.timings);
                    debug_assert!(opened.is_ok(), "delivered bundle did not open: {opened:?}");
                }
            }
        }
    }
}
