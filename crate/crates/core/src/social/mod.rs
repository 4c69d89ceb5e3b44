//! Accounts, follows, posts, direct messages, feeds and interest discovery.
//!
//! A [`SocialNode`] holds one user's state: identity, profile, a cache of
//! looked-up keys and everything delivered to it. Registry access goes
//! through a [`Directory`]; once a key is cached it is never looked up again.

mod post;

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::crypto::{self, AccountId, CryptoError, CryptoOp, Envelope, Identity, PublicKey, TimingSink};
use crate::registry::{Directory, RegistryError, RegistryRecord};
use crate::routing::{Bundle, BundleError, BundleKind};

pub use post::{Post, PostError};

pub const MAX_TEXT_BYTES: usize = 560;
pub const MAX_INTERESTS: usize = 16;
pub const MAX_TAG_CHARS: usize = 24;
/// Bytes charged against a link for each profile card.
pub const PROFILE_CARD_BYTES: u64 = 512;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SocialError {
    #[error("text is {len} bytes, limit is {MAX_TEXT_BYTES}")]
    TextTooLong { len: usize },
    #[error("author has no followers")]
    NoAudience,
    #[error("unknown recipient {0:?}")]
    UnknownRecipient(String),
    #[error("cannot message yourself")]
    SelfMessage,
    #[error("cannot follow yourself")]
    SelfFollow,
    #[error("interest tag {0:?} is empty or longer than {MAX_TAG_CHARS} characters")]
    InvalidInterest(String),
    #[error("more than {MAX_INTERESTS} interests")]
    TooManyInterests,
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

/// Trims, lowercases and deduplicates interest tags.
pub fn normalize_interests<I, S>(tags: I) -> Result<BTreeSet<String>, SocialError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut out = BTreeSet::new();
    for tag in tags {
        let t = tag.as_ref().trim().to_lowercase();
        if t.is_empty() || t.chars().count() > MAX_TAG_CHARS {
            return Err(SocialError::InvalidInterest(tag.as_ref().to_owned()));
        }
        out.insert(t);
    }
    if out.len() > MAX_INTERESTS {
        return Err(SocialError::TooManyInterests);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub username: String,
    pub account_id: AccountId,
    pub public_key: PublicKey,
    pub interests: BTreeSet<String>,
}

/// Directed follower -> followee edges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FollowGraph {
    edges: BTreeSet<(AccountId, AccountId)>,
}

impl FollowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns false if the edge already existed.
    pub fn add(&mut self, follower: AccountId, followee: AccountId) -> Result<bool, SocialError> {
        if follower == followee {
            return Err(SocialError::SelfFollow);
        }
        Ok(self.edges.insert((follower, followee)))
    }

    pub fn follows(&self, follower: &AccountId, followee: &AccountId) -> bool {
        self.edges.contains(&(follower.clone(), followee.clone()))
    }

    /// Either endpoint follows the other.
    pub fn are_friends(&self, a: &AccountId, b: &AccountId) -> bool {
        self.follows(a, b) || self.follows(b, a)
    }

    pub fn followers_of(&self, who: &AccountId) -> BTreeSet<AccountId> {
        self.edges
            .iter()
            .filter(|(_, e)| e == who)
            .map(|(f, _)| f.clone())
            .collect()
    }

    pub fn followees_of(&self, who: &AccountId) -> BTreeSet<AccountId> {
        self.edges
            .iter()
            .filter(|(f, _)| f == who)
            .map(|(_, e)| e.clone())
            .collect()
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistryOp {
    Register,
    Lookup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryCall {
    pub op: RegistryOp,
    pub username: String,
    pub ok: bool,
}

/// Passes calls through to `inner` and remembers each one.
#[derive(Debug)]
pub struct Recording<D> {
    pub inner: D,
    pub calls: Vec<RegistryCall>,
}

impl<D> Recording<D> {
    pub fn new(inner: D) -> Self {
        Self {
            inner,
            calls: Vec::new(),
        }
    }
}

impl<D: Directory> Directory for Recording<D> {
    fn register(&mut self, username: &str, public_key: &PublicKey) -> Result<AccountId, RegistryError> {
        let r = self.inner.register(username, public_key);
        self.calls.push(RegistryCall {
            op: RegistryOp::Register,
            username: username.to_owned(),
            ok: r.is_ok(),
        });
        r
    }

    fn lookup(&mut self, username: &str) -> Result<RegistryRecord, RegistryError> {
        let r = self.inner.lookup(username);
        self.calls.push(RegistryCall {
            op: RegistryOp::Lookup,
            username: username.to_owned(),
            ok: r.is_ok(),
        });
        r
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectMessage {
    pub from: AccountId,
    pub text: String,
    pub created_t: f64,
}

/// What a delivered bundle turned into at its recipient.
#[derive(Debug, Clone, PartialEq)]
pub enum Delivery {
    Post(Post),
    Message(DirectMessage),
}

#[derive(Debug, Clone)]
struct CachedKey {
    account_id: AccountId,
    key: PublicKey,
}

/// Bundle options chosen by the routing configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SendOptions {
    pub ttl_s: f64,
    pub copies: Option<u32>,
}

/// One user's device-local social state.
#[derive(Debug, Clone)]
pub struct SocialNode {
    identity: Identity,
    profile: Profile,
    keys: BTreeMap<String, CachedKey>,
    keys_by_account: BTreeMap<AccountId, PublicKey>,
    next_seq: u64,
    posts: Vec<Post>,
    messages: Vec<DirectMessage>,
    cards: BTreeMap<AccountId, Profile>,
}

/// Generates an identity, registers it (one registry call) and returns the
/// new node.
pub fn create_account(
    identity: Identity,
    interests: BTreeSet<String>,
    directory: &mut dyn Directory,
) -> Result<SocialNode, SocialError> {
    let key = identity.signing_public();
    directory.register(identity.username(), &key)?;
    let profile = Profile {
        username: identity.username().to_owned(),
        account_id: identity.account_id().clone(),
        public_key: key,
        interests,
    };
    Ok(SocialNode {
        identity,
        profile,
        keys: BTreeMap::new(),
        keys_by_account: BTreeMap::new(),
        next_seq: 0,
        posts: Vec::new(),
        messages: Vec::new(),
        cards: BTreeMap::new(),
    })
}

fn check_text(text: &str) -> Result<(), SocialError> {
    if text.len() > MAX_TEXT_BYTES {
        return Err(SocialError::TextTooLong { len: text.len() });
    }
    Ok(())
}

impl SocialNode {
    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn account_id(&self) -> &AccountId {
        self.identity.account_id()
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    /// Key for `username`, from the cache or a registry lookup that is then
    /// cached.
    pub fn resolve(
        &mut self,
        username: &str,
        directory: &mut dyn Directory,
    ) -> Result<(AccountId, PublicKey), SocialError> {
        if let Some(c) = self.keys.get(username) {
            return Ok((c.account_id.clone(), c.key));
        }
        let record = directory.lookup(username)?;
        let key = record.key();
        let account_id = key.account_id();
        if account_id != record.account_id {
            return Err(RegistryError::Protocol("account id does not match key".into()).into());
        }
        self.keys.insert(
            username.to_owned(),
            CachedKey {
                account_id: account_id.clone(),
                key,
            },
        );
        self.keys_by_account.insert(account_id.clone(), key);
        Ok((account_id, key))
    }

    pub fn cached_key(&self, username: &str) -> Option<(&AccountId, &PublicKey)> {
        self.keys.get(username).map(|c| (&c.account_id, &c.key))
    }

    /// Adds the follow edge, looking the followee up only if uncached.
    pub fn follow(
        &mut self,
        graph: &mut FollowGraph,
        followee_username: &str,
        directory: &mut dyn Directory,
    ) -> Result<AccountId, SocialError> {
        if followee_username == self.profile.username {
            return Err(SocialError::SelfFollow);
        }
        let (followee, _) = self.resolve(followee_username, directory)?;
        graph.add(self.account_id().clone(), followee.clone())?;
        Ok(followee)
    }

    /// Signs a post and wraps it in a bundle addressed to the author's
    /// followers as of `now`.
    pub fn publish(
        &mut self,
        graph: &FollowGraph,
        text: &str,
        now: f64,
        opts: SendOptions,
        timings: &mut dyn TimingSink,
    ) -> Result<Bundle, SocialError> {
        check_text(text)?;
        let dest = graph.followers_of(self.account_id());
        if dest.is_empty() {
            return Err(SocialError::NoAudience);
        }
        let post = crypto::timed(CryptoOp::Sign, timings, || {
            Post::sign(&self.identity, self.next_seq, text, now)
        });
        let payload = post.to_bytes();
        let bundle = crypto::timed(CryptoOp::Sign, timings, || {
            Bundle::create(
                &self.identity,
                BundleKind::Post,
                dest,
                now,
                opts.ttl_s,
                payload,
                opts.copies,
            )
        })?;
        self.next_seq += 1;
        Ok(bundle)
    }

    /// Seals `text` to `recipient_username`. Uses the cached key when there
    /// is one; otherwise tries the registry.
    #[allow(clippy::too_many_arguments)]
    pub fn direct_message<R: RngCore + CryptoRng>(
        &mut self,
        recipient_username: &str,
        text: &str,
        now: f64,
        opts: SendOptions,
        directory: &mut dyn Directory,
        rng: &mut R,
        timings: &mut dyn TimingSink,
    ) -> Result<Bundle, SocialError> {
        check_text(text)?;
        if recipient_username == self.profile.username {
            return Err(SocialError::SelfMessage);
        }
        let (recipient, key) = match self.resolve(recipient_username, directory) {
            Ok(k) => k,
            Err(SocialError::Registry(RegistryError::NotFound(_) | RegistryError::Unreachable(_))) => {
                return Err(SocialError::UnknownRecipient(recipient_username.to_owned()))
            }
            Err(e) => return Err(e),
        };
        let envelope = crypto::timed(CryptoOp::Seal, timings, || {
            crypto::seal_with_rng(&self.identity, key.as_bytes(), text.as_bytes(), now, rng)
        })?;
        let bundle = crypto::timed(CryptoOp::Sign, timings, || {
            Bundle::create(
                &self.identity,
                BundleKind::Dm,
                [recipient],
                now,
                opts.ttl_s,
                envelope.to_bytes(),
                opts.copies,
            )
        })?;
        Ok(bundle)
    }

    /// Consumes a bundle delivered to this node. The bundle itself must
    /// already have been verified.
    pub fn accept(&mut self, bundle: &Bundle, timings: &mut dyn TimingSink) -> Result<Delivery, SocialError> {
        match bundle.content.kind {
            BundleKind::Post => {
                let post = Post::from_bytes(&bundle.content.payload)
                    .map_err(|e| CryptoError::MalformedEnvelope(e.to_string()))?;
                self.posts.push(post.clone());
                Ok(Delivery::Post(post))
            }
            BundleKind::Dm => {
                let envelope = Envelope::from_bytes(&bundle.content.payload)?;
                let secret = self.identity.signing_secret();
                let sender_key = bundle.content.author_key;
                let plain = crypto::timed(CryptoOp::Open, timings, || {
                    crypto::open(&secret, &envelope, sender_key.as_bytes())
                })?;
                let msg = DirectMessage {
                    from: bundle.content.author.clone(),
                    text: String::from_utf8_lossy(&plain).into_owned(),
                    created_t: envelope.created_t,
                };
                self.messages.push(msg.clone());
                Ok(Delivery::Message(msg))
            }
        }
    }

    /// Stores a post that arrived by some other path; the feed still
    /// verifies it.
    pub fn store_post(&mut self, post: Post) {
        self.posts.push(post);
    }

    pub fn messages(&self) -> &[DirectMessage] {
        &self.messages
    }

    /// Verified posts by followees, newest first; ties by author then
    /// sequence.
    pub fn feed(&self, graph: &FollowGraph, timings: &mut dyn TimingSink) -> Vec<Post> {
        let followees = graph.followees_of(self.account_id());
        let mut seen = BTreeSet::new();
        let mut out: Vec<Post> = self
            .posts
            .iter()
            .filter(|p| followees.contains(&p.author))
            .filter(|p| {
                self.keys_by_account
                    .get(&p.author)
                    .is_some_and(|k| crypto::timed(CryptoOp::Verify, timings, || p.verify(k)))
            })
            .filter(|p| seen.insert((p.author.clone(), p.seq)))
            .cloned()
            .collect();
        out.sort_by(|a, b| {
            b.created_t
                .total_cmp(&a.created_t)
                .then_with(|| a.author.cmp(&b.author))
                .then_with(|| a.seq.cmp(&b.seq))
        });
        out
    }

    pub fn receive_card(&mut self, card: Profile) {
        if card.account_id != *self.account_id() && card.public_key.account_id() == card.account_id {
            self.cards.insert(card.account_id.clone(), card);
        }
    }

    pub fn cards(&self) -> impl Iterator<Item = &Profile> {
        self.cards.values()
    }

    /// Peers met so far whose interests match ours, by shared count
    /// descending then account id.
    ///
    /// With `jaccard_threshold` of 0 any overlap matches; otherwise the
    /// Jaccard index must reach the threshold.
    pub fn discover(&self, jaccard_threshold: f64) -> Vec<(AccountId, usize)> {
        let mine = &self.profile.interests;
        let mut out: Vec<(AccountId, usize)> = self
            .cards
            .values()
            .filter_map(|c| {
                let shared = c.interests.intersection(mine).count();
                if shared == 0 {
                    return None;
                }
                let union = c.interests.union(mine).count();
                (shared as f64 / union as f64 >= jaccard_threshold).then(|| (c.account_id.clone(), shared))
            })
            .collect();
        out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        out
    }
}
