//! Identities, signatures and sealed envelopes.
//!
//! Algorithm choices (fixed for the whole system):
//!
//! | purpose               | algorithm                                                        |
//! |-----------------------|------------------------------------------------------------------|
//! | signatures            | Ed25519 (RFC 8032)                                               |
//! | account identifiers   | SHA-256 of the raw 32-byte Ed25519 public key, lowercase hex     |
//! | sealed direct messages| HPKE `mode_auth`, DHKEM(X25519, HKDF-SHA256), HKDF-SHA256, ChaCha20Poly1305 (RFC 9180) |
//!
//! An identity has a single Ed25519 keypair. Its X25519 counterpart, used
//! for sealing, is the birational image of the same key (the secret scalar
//! is the clamped SHA-512 expansion of the Ed25519 seed), so no second key
//! needs to be registered.

pub mod canonical;
pub mod hpke;

use std::fmt;
use std::time::Instant;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use ed25519_dalek::{Signer, SigningKey, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use self::canonical::{Decoder, Encoder};

pub const PUBLIC_KEY_LEN: usize = 32;
pub const SECRET_KEY_LEN: usize = 32;
pub const SIGNATURE_LEN: usize = 64;
pub const USERNAME_MAX_LEN: usize = 32;

const ENVELOPE_TAG: &[u8] = b"SOSE\x01";
const ENVELOPE_INFO: &[u8] = b"sos direct message v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid username {0:?}: expected 1-32 characters from [a-z0-9_]")]
    InvalidUsername(String),
    #[error("malformed key: {0}")]
    MalformedKey(&'static str),
    #[error("authentication failure")]
    AuthenticationFailure,
    #[error("malformed envelope: {0}")]
    MalformedEnvelope(String),
}

pub fn validate_username(username: &str) -> Result<(), CryptoError> {
    let ok = !username.is_empty()
        && username.len() <= USERNAME_MAX_LEN
        && username
            .bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
    if ok {
        Ok(())
    } else {
        Err(CryptoError::InvalidUsername(username.to_owned()))
    }
}

/// Self-certifying account identifier: hex SHA-256 of the signing key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AccountId(String);

impl AccountId {
    pub fn of(key: &PublicKey) -> Self {
        Self(hex::encode(Sha256::digest(key.as_bytes())))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Wraps an existing hex string without checking it.
    pub fn from_hex_unchecked(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for AccountId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Raw Ed25519 public key. Serialized as standard (padded) base64.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PublicKey([u8; PUBLIC_KEY_LEN]);

impl PublicKey {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; PUBLIC_KEY_LEN] = bytes
            .try_into()
            .map_err(|_| CryptoError::MalformedKey("public key must be 32 bytes"))?;
        VerifyingKey::from_bytes(&arr).map_err(|_| CryptoError::MalformedKey("not a valid Ed25519 point"))?;
        Ok(Self(arr))
    }

    pub fn as_bytes(&self) -> &[u8; PUBLIC_KEY_LEN] {
        &self.0
    }

    pub fn to_base64(&self) -> String {
        BASE64.encode(self.0)
    }

    pub fn from_base64(s: &str) -> Result<Self, CryptoError> {
        let bytes = BASE64
            .decode(s)
            .map_err(|_| CryptoError::MalformedKey("public key is not valid base64"))?;
        Self::from_bytes(&bytes)
    }

    pub fn account_id(&self) -> AccountId {
        AccountId::of(self)
    }

    fn x25519(&self) -> x25519_dalek::PublicKey {
        let vk = VerifyingKey::from_bytes(&self.0).expect("validated at construction");
        x25519_dalek::PublicKey::from(vk.to_montgomery().to_bytes())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", self.to_base64())
    }
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_base64())
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Self::from_base64(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature([u8; SIGNATURE_LEN]);

impl Signature {
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        bytes.try_into().ok().map(Self)
    }

    pub fn as_bytes(&self) -> &[u8; SIGNATURE_LEN] {
        &self.0
    }
}

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

/// A user's keypair plus the username it was created for.
#[derive(Clone)]
pub struct Identity {
    username: String,
    signing: SigningKey,
    public: PublicKey,
    account_id: AccountId,
}

impl Identity {
    pub fn username(&self) -> &str {
        &self.username
    }

    pub fn signing_public(&self) -> PublicKey {
        self.public
    }

    pub fn signing_secret(&self) -> [u8; SECRET_KEY_LEN] {
        self.signing.to_bytes()
    }

    pub fn account_id(&self) -> &AccountId {
        &self.account_id
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }

    fn x25519_secret(&self) -> x25519_dalek::StaticSecret {
        x25519_dalek::StaticSecret::from(self.signing.to_scalar_bytes())
    }
}

impl fmt::Debug for Identity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Identity")
            .field("username", &self.username)
            .field("account_id", &self.account_id)
            .finish_non_exhaustive()
    }
}

impl PartialEq for Identity {
    fn eq(&self, other: &Self) -> bool {
        self.username == other.username && self.signing.to_bytes() == other.signing.to_bytes()
    }
}

/// Creates a fresh identity. With a seed, the keypair is a pure function of
/// the seed.
pub fn generate_identity(username: &str, seed: Option<[u8; 32]>) -> Result<Identity, CryptoError> {
    validate_username(username)?;
    let signing = match seed {
        Some(seed) => SigningKey::from_bytes(&seed),
        None => SigningKey::generate(&mut rand::rngs::OsRng),
    };
    Ok(identity_from_signing(username, signing))
}

/// Rebuilds an identity from stored secret key bytes.
pub fn identity_from_secret(username: &str, secret: &[u8]) -> Result<Identity, CryptoError> {
    validate_username(username)?;
    Ok(identity_from_signing(username, signing_key(secret)?))
}

fn identity_from_signing(username: &str, signing: SigningKey) -> Identity {
    let public = PublicKey(signing.verifying_key().to_bytes());
    Identity {
        username: username.to_owned(),
        account_id: AccountId::of(&public),
        signing,
        public,
    }
}

fn signing_key(secret: &[u8]) -> Result<SigningKey, CryptoError> {
    let arr: [u8; SECRET_KEY_LEN] = secret
        .try_into()
        .map_err(|_| CryptoError::MalformedKey("secret key must be 32 bytes"))?;
    Ok(SigningKey::from_bytes(&arr))
}

pub fn sign(secret_key: &[u8], message: &[u8]) -> Result<Signature, CryptoError> {
    Ok(Signature(signing_key(secret_key)?.sign(message).to_bytes()))
}

/// Total: malformed keys or signatures are a plain `false`.
pub fn verify(public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    let Ok(pk) = <[u8; PUBLIC_KEY_LEN]>::try_from(public_key) else {
        return false;
    };
    let Ok(vk) = VerifyingKey::from_bytes(&pk) else {
        return false;
    };
    let Ok(sig) = ed25519_dalek::Signature::from_slice(signature) else {
        return false;
    };
    vk.verify_strict(message, &sig).is_ok()
}

/// A direct message sealed to one recipient and authenticated to its sender.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub sender_account_id: AccountId,
    pub recipient_account_id: AccountId,
    pub ephemeral_public: [u8; hpke::N_ENC],
    pub ciphertext: Vec<u8>,
    pub created_t: f64,
}

impl Envelope {
    /// Everything but the ciphertext; bound into the AEAD as associated data.
    fn header_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_tag(ENVELOPE_TAG);
        enc.str(self.sender_account_id.as_str())
            .str(self.recipient_account_id.as_str())
            .raw(&self.ephemeral_public)
            .f64(self.created_t);
        enc.finish()
    }

    /// Wire layout: `"SOSE" 0x01 | sender_id (u32 len + utf8) |
    /// recipient_id (u32 len + utf8) | ephemeral_public (32 raw) |
    /// created_t (f64 bits, u64 BE) | ciphertext (u32 len + bytes)`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header_bytes();
        let mut enc = Encoder::new();
        enc.bytes(&self.ciphertext);
        out.extend_from_slice(&enc.finish());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        let malformed = |e: canonical::DecodeError| CryptoError::MalformedEnvelope(e.to_string());
        let mut dec = Decoder::new(bytes);
        dec.expect_tag(ENVELOPE_TAG).map_err(malformed)?;
        let sender = dec.str().map_err(malformed)?.to_owned();
        let recipient = dec.str().map_err(malformed)?.to_owned();
        let ephemeral_public = dec.array::<{ hpke::N_ENC }>().map_err(malformed)?;
        let created_t = dec.f64().map_err(malformed)?;
        let ciphertext = dec.bytes().map_err(malformed)?.to_vec();
        dec.finish().map_err(malformed)?;
        Ok(Self {
            sender_account_id: AccountId(sender),
            recipient_account_id: AccountId(recipient),
            ephemeral_public,
            ciphertext,
            created_t,
        })
    }
}

/// Seals `plaintext` to `recipient_public_key` using OS randomness.
pub fn seal(
    sender: &Identity,
    recipient_public_key: &[u8],
    plaintext: &[u8],
    created_t: f64,
) -> Result<Envelope, CryptoError> {
    seal_with_rng(
        sender,
        recipient_public_key,
        plaintext,
        created_t,
        &mut rand::rngs::OsRng,
    )
}

/// Like [`seal`] but draws the ephemeral key from `rng`; the simulator uses
/// a seeded generator so runs reproduce.
pub fn seal_with_rng<R: RngCore + CryptoRng>(
    sender: &Identity,
    recipient_public_key: &[u8],
    plaintext: &[u8],
    created_t: f64,
    rng: &mut R,
) -> Result<Envelope, CryptoError> {
    let recipient = PublicKey::from_bytes(recipient_public_key)?;
    let mut ikm = [0u8; 32];
    rng.fill_bytes(&mut ikm);
    let (_, ephemeral_public) = hpke::derive_key_pair(&ikm);

    let mut envelope = Envelope {
        sender_account_id: sender.account_id.clone(),
        recipient_account_id: recipient.account_id(),
        ephemeral_public: ephemeral_public.to_bytes(),
        ciphertext: Vec::new(),
        created_t,
    };
    let aad = envelope.header_bytes();
    let (enc, ct) = hpke::seal_auth(
        &ikm,
        &recipient.x25519(),
        &sender.x25519_secret(),
        ENVELOPE_INFO,
        &aad,
        plaintext,
    )
    .map_err(|_| CryptoError::MalformedKey("recipient key has small order"))?;
    debug_assert_eq!(enc, envelope.ephemeral_public);
    envelope.ciphertext = ct;
    Ok(envelope)
}

/// Opens an envelope addressed to the holder of `recipient_secret_key` and
/// checks that it was sealed by the owner of `sender_public_key`.
pub fn open(
    recipient_secret_key: &[u8],
    envelope: &Envelope,
    sender_public_key: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    let recipient = signing_key(recipient_secret_key)?;
    let sender = PublicKey::from_bytes(sender_public_key)?;
    let recipient_id = AccountId::of(&PublicKey(recipient.verifying_key().to_bytes()));
    if envelope.sender_account_id != sender.account_id() || envelope.recipient_account_id != recipient_id {
        return Err(CryptoError::AuthenticationFailure);
    }
    let sk = x25519_dalek::StaticSecret::from(recipient.to_scalar_bytes());
    hpke::open_auth(
        &envelope.ephemeral_public,
        &sk,
        &sender.x25519(),
        ENVELOPE_INFO,
        &envelope.header_bytes(),
        &envelope.ciphertext,
    )
    .map_err(|_| CryptoError::AuthenticationFailure)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CryptoOp {
    Sign,
    Verify,
    Seal,
    Open,
}

impl CryptoOp {
    pub const ALL: [CryptoOp; 4] = [CryptoOp::Sign, CryptoOp::Verify, CryptoOp::Seal, CryptoOp::Open];

    pub fn as_str(self) -> &'static str {
        match self {
            CryptoOp::Sign => "sign",
            CryptoOp::Verify => "verify",
            CryptoOp::Seal => "seal",
            CryptoOp::Open => "open",
        }
    }
}

/// Receives wall-clock durations of crypto operations.
pub trait TimingSink {
    fn record(&mut self, op: CryptoOp, nanos: u64);
}

/// Discards all timings.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoTimings;

impl TimingSink for NoTimings {
    fn record(&mut self, _op: CryptoOp, _nanos: u64) {}
}

impl TimingSink for Vec<(CryptoOp, u64)> {
    fn record(&mut self, op: CryptoOp, nanos: u64) {
        self.push((op, nanos));
    }
}

/// Runs `f`, reporting its wall-clock duration to `sink` under `op`.
pub fn timed<T>(op: CryptoOp, sink: &mut dyn TimingSink, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    let nanos = u64::try_from(start.elapsed().as_nanos()).unwrap_or(u64::MAX);
    sink.record(op, nanos);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alice() -> Identity {
        generate_identity("alice", Some([1; 32])).unwrap()
    }
    fn bob() -> Identity {
        generate_identity("bob", Some([2; 32])).unwrap()
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        assert_eq!(alice(), alice());
        assert_eq!(alice().account_id(), alice().account_id());
    }

    #[test]
    fn unseeded_generation_is_fresh() {
        let a = generate_identity("alice", None).unwrap();
        let b = generate_identity("alice", None).unwrap();
        assert_ne!(a.signing_public(), b.signing_public());
    }

    #[test]
    fn username_rules() {
        for bad in ["Alice!", "", "Alice", "al ice", &"a".repeat(33)] {
            assert_eq!(
                generate_identity(bad, None).unwrap_err(),
                CryptoError::InvalidUsername(bad.to_string())
            );
        }
        for good in ["a", "alice_01", &"z".repeat(32)] {
            generate_identity(good, None).unwrap();
        }
    }

    #[test]
    fn account_id_is_digest_of_key() {
        let id = alice();
        let expected = hex::encode(Sha256::digest(id.signing_public().as_bytes()));
        assert_eq!(id.account_id().as_str(), expected);
        assert_eq!(id.account_id().as_str().len(), 64);
    }

    #[test]
    fn sign_verify_roundtrip_and_bitflip() {
        let id = alice();
        let msg = b"hello world";
        let sig = sign(&id.signing_secret(), msg).unwrap();
        let pk = id.signing_public();
        assert!(verify(pk.as_bytes(), msg, sig.as_bytes()));
        let mut flipped = msg.to_vec();
        flipped[3] ^= 0x01;
        assert!(!verify(pk.as_bytes(), &flipped, sig.as_bytes()));
    }

    #[test]
    fn verify_is_total() {
        let id = alice();
        let sig = id.sign(b"m");
        let pk = id.signing_public();
        assert!(!verify(pk.as_bytes(), b"m", &sig.as_bytes()[..63]));
        assert!(!verify(&pk.as_bytes()[..5], b"m", sig.as_bytes()));
        assert!(!verify(&[0xff; 32], b"m", sig.as_bytes()));
        assert!(!verify(bob().signing_public().as_bytes(), b"m", sig.as_bytes()));
    }

    #[test]
    fn sign_rejects_malformed_key() {
        assert!(matches!(sign(&[0; 5], b"m"), Err(CryptoError::MalformedKey(_))));
    }

    #[test]
    fn seal_open_roundtrip() {
        let (a, b) = (alice(), bob());
        let env = seal(&a, b.signing_public().as_bytes(), b"hi", 3.0).unwrap();
        let pt = open(&b.signing_secret(), &env, a.signing_public().as_bytes()).unwrap();
        assert_eq!(pt, b"hi");
        assert_eq!(&env.sender_account_id, a.account_id());
    }

    #[test]
    fn seal_is_randomized() {
        let (a, b) = (alice(), bob());
        let e1 = seal(&a, b.signing_public().as_bytes(), b"hi", 0.0).unwrap();
        let e2 = seal(&a, b.signing_public().as_bytes(), b"hi", 0.0).unwrap();
        assert_ne!(e1.ciphertext, e2.ciphertext);
        assert_ne!(e1.ephemeral_public, e2.ephemeral_public);
    }

    #[test]
    fn wrong_recipient_or_sender_fails() {
        let (a, b) = (alice(), bob());
        let carol = generate_identity("carol", Some([3; 32])).unwrap();
        let env = seal(&a, b.signing_public().as_bytes(), b"hi", 0.0).unwrap();
        assert_eq!(
            open(&carol.signing_secret(), &env, a.signing_public().as_bytes()),
            Err(CryptoError::AuthenticationFailure)
        );
        assert_eq!(
            open(&b.signing_secret(), &env, carol.signing_public().as_bytes()),
            Err(CryptoError::AuthenticationFailure)
        );
    }

    #[test]
    fn empty_plaintext() {
        let (a, b) = (alice(), bob());
        let env = seal(&a, b.signing_public().as_bytes(), b"", 0.0).unwrap();
        let pt = open(&b.signing_secret(), &env, a.signing_public().as_bytes()).unwrap();
        assert!(pt.is_empty());
    }

    #[test]
    fn every_single_byte_mutation_of_wire_envelope_is_rejected() {
        let (a, b) = (alice(), bob());
        let env = seal(&a, b.signing_public().as_bytes(), b"attack at dawn", 1.0).unwrap();
        let wire = env.to_bytes();
        assert_eq!(Envelope::from_bytes(&wire).unwrap(), env);
        for i in 0..wire.len() {
            let mut m = wire.clone();
            m[i] ^= 0x80;
            let rejected = match Envelope::from_bytes(&m) {
                Err(_) => true,
                Ok(e) => open(&b.signing_secret(), &e, a.signing_public().as_bytes()).is_err(),
            };
            assert!(rejected, "mutation at byte {i} was accepted");
        }
    }

    #[test]
    fn public_key_base64() {
        let pk = alice().signing_public();
        let s = pk.to_base64();
        assert!(s.ends_with('='));
        assert_eq!(PublicKey::from_base64(&s).unwrap(), pk);
        assert!(PublicKey::from_base64("AAAAAAA=").is_err());
    }

    #[test]
    fn timed_reports_to_sink() {
        let mut sink: Vec<(CryptoOp, u64)> = Vec::new();
        let id = alice();
        let sig = timed(CryptoOp::Sign, &mut sink, || id.sign(b"x"));
        assert!(verify(id.signing_public().as_bytes(), b"x", sig.as_bytes()));
        assert_eq!(sink.len(), 1);
        assert_eq!(sink[0].0, CryptoOp::Sign);
    }

    // RFC 8032 section 7.1, TEST 1-3.
    const RFC8032: [(&str, &str, &str, &str); 3] = [
        (
            "9d61b19deffd5a60ba844af492ec2cc44449c5697b326919703bac031cae7f60",
            "d75a980182b10ab7d54bfed3c964073a0ee172f3daa62325af021a68f707511a",
            "",
            "e5564300c360ac729086e2cc806e828a84877f1eb8e5d974d873e065224901555fb8821590a33bacc61e39701cf9b46bd25bf5f0595bbe24655141438e7a100b",
        ),
        (
            "4ccd089b28ff96da9db6c346ec114e0f5b8a319f35aba624da8cf6ed4fb8a6fb",
            "3d4017c3e843895a92b70aa74d1b7ebc9c982ccf2ec4968cc0cd55f12af4660c",
            "72",
            "92a009a9f0d4cab8720e820b5f642540a2b27b5416503f8fb3762223ebdb69da085ac1e43e15996e458f3613d0f11d8c387b2eaeb4302aeeb00d291612bb0c00",
        ),
        (
            "c5aa8df43f9f837bedb7442f31dcb7b166d38535076f094b85ce3a2e0b4458f7",
            "fc51cd8e6218a1a38da47ed00230f0580816ed13ba3303ac5deb911548908025",
            "af82",
            "6291d657deec24024827e69c3abe01a30ce548a284743a445e3680d7db5ac3ac18ff9b538d16f290ae67f760984dc6594a7c15e9716ed28dc027beceea1ec40a",
        ),
    ];

    #[test]
    fn ed25519_known_answers() {
        for (sk, pk, msg, sig) in RFC8032 {
            let sk = hex::decode(sk).unwrap();
            let msg = hex::decode(msg).unwrap();
            let id = identity_from_secret("kat", &sk).unwrap();
            assert_eq!(hex::encode(id.signing_public().as_bytes()), pk);
            let produced = sign(&sk, &msg).unwrap();
            assert_eq!(hex::encode(produced.as_bytes()), sig);
            assert!(verify(&hex::decode(pk).unwrap(), &msg, &hex::decode(sig).unwrap()));
        }
    }
}
