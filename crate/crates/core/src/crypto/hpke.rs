//! HPKE in authenticated mode (RFC 9180, `mode_auth`) for the single suite
//! DHKEM(X25519, HKDF-SHA256) / HKDF-SHA256 / ChaCha20Poly1305.
//!
//! Only single-shot seal/open (sequence number 0) is provided; envelopes
//! carry exactly one message.

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use sha2::Sha256;
use x25519_dalek::{PublicKey, StaticSecret};

const KEM_ID: u16 = 0x0020;
const KDF_ID: u16 = 0x0001;
const AEAD_ID: u16 = 0x0003;
const MODE_AUTH: u8 = 0x02;

pub const N_ENC: usize = 32;
pub const N_SK: usize = 32;
const N_SECRET: usize = 32;
const N_K: usize = 32;
const N_N: usize = 12;
pub const TAG_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum HpkeError {
    #[error("Diffie-Hellman output was all zero")]
    NonContributory,
    #[error("AEAD open failed")]
    OpenFailed,
}

fn kem_suite_id() -> [u8; 5] {
    let mut id = [0u8; 5];
    id[..3].copy_from_slice(b"KEM");
    id[3..].copy_from_slice(&KEM_ID.to_be_bytes());
    id
}

fn hpke_suite_id() -> [u8; 10] {
    let mut id = [0u8; 10];
    id[..4].copy_from_slice(b"HPKE");
    id[4..6].copy_from_slice(&KEM_ID.to_be_bytes());
    id[6..8].copy_from_slice(&KDF_ID.to_be_bytes());
    id[8..].copy_from_slice(&AEAD_ID.to_be_bytes());
    id
}

fn labeled_extract(suite_id: &[u8], salt: &[u8], label: &[u8], ikm: &[u8]) -> [u8; N_SECRET] {
    let mut labeled = Vec::with_capacity(7 + suite_id.len() + label.len() + ikm.len());
    labeled.extend_from_slice(b"HPKE-v1");
    labeled.extend_from_slice(suite_id);
    labeled.extend_from_slice(label);
    labeled.extend_from_slice(ikm);
    let (prk, _) = Hkdf::<Sha256>::extract(Some(salt), &labeled);
    prk.into()
}

fn labeled_expand(suite_id: &[u8], prk: &[u8], label: &[u8], info: &[u8], out: &mut [u8]) {
    let len = u16::try_from(out.len()).expect("expand length fits u16");
    let mut labeled = Vec::with_capacity(9 + suite_id.len() + label.len() + info.len());
    labeled.extend_from_slice(&len.to_be_bytes());
    labeled.extend_from_slice(b"HPKE-v1");
    labeled.extend_from_slice(suite_id);
    labeled.extend_from_slice(label);
    labeled.extend_from_slice(info);
    Hkdf::<Sha256>::from_prk(prk)
        .expect("PRK has hash length")
        .expand(&labeled, out)
        .expect("output length within HKDF bound");
}

/// `DeriveKeyPair` for X25519: the expanded bytes are used directly as the
/// private scalar (clamping happens inside X25519).
pub fn derive_key_pair(ikm: &[u8]) -> (StaticSecret, PublicKey) {
    let suite = kem_suite_id();
    let prk = labeled_extract(&suite, b"", b"dkp_prk", ikm);
    let mut sk = [0u8; N_SK];
    labeled_expand(&suite, &prk, b"sk", b"", &mut sk);
    let secret = StaticSecret::from(sk);
    let public = PublicKey::from(&secret);
    (secret, public)
}

fn dh(sk: &StaticSecret, pk: &PublicKey) -> Result<[u8; 32], HpkeError> {
    let shared = sk.diffie_hellman(pk);
    if !shared.was_contributory() {
        return Err(HpkeError::NonContributory);
    }
    Ok(shared.to_bytes())
}

fn extract_and_expand(dh: &[u8], kem_context: &[u8]) -> [u8; N_SECRET] {
    let suite = kem_suite_id();
    let prk = labeled_extract(&suite, b"", b"eae_prk", dh);
    let mut shared = [0u8; N_SECRET];
    labeled_expand(&suite, &prk, b"shared_secret", kem_context, &mut shared);
    shared
}

fn kem_context(enc: &[u8; N_ENC], pk_r: &PublicKey, pk_s: &PublicKey) -> [u8; 3 * N_ENC] {
    let mut ctx = [0u8; 3 * N_ENC];
    ctx[..32].copy_from_slice(enc);
    ctx[32..64].copy_from_slice(pk_r.as_bytes());
    ctx[64..].copy_from_slice(pk_s.as_bytes());
    ctx
}

/// Sender-side `AuthEncap`, with the ephemeral key derived from `ikm_e`.
pub fn auth_encap(
    ikm_e: &[u8],
    pk_r: &PublicKey,
    sk_s: &StaticSecret,
) -> Result<([u8; N_SECRET], [u8; N_ENC]), HpkeError> {
    let (sk_e, pk_e) = derive_key_pair(ikm_e);
    let mut dh_bytes = [0u8; 64];
    dh_bytes[..32].copy_from_slice(&dh(&sk_e, pk_r)?);
    dh_bytes[32..].copy_from_slice(&dh(sk_s, pk_r)?);
    let enc = pk_e.to_bytes();
    let pk_s = PublicKey::from(sk_s);
    let shared = extract_and_expand(&dh_bytes, &kem_context(&enc, pk_r, &pk_s));
    Ok((shared, enc))
}

pub fn auth_decap(enc: &[u8; N_ENC], sk_r: &StaticSecret, pk_s: &PublicKey) -> Result<[u8; N_SECRET], HpkeError> {
    let pk_e = PublicKey::from(*enc);
    let mut dh_bytes = [0u8; 64];
    dh_bytes[..32].copy_from_slice(&dh(sk_r, &pk_e)?);
    dh_bytes[32..].copy_from_slice(&dh(sk_r, pk_s)?);
    let pk_r = PublicKey::from(sk_r);
    Ok(extract_and_expand(&dh_bytes, &kem_context(enc, &pk_r, pk_s)))
}

/// Output of the key schedule for a context with no PSK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeySchedule {
    pub key: [u8; N_K],
    pub base_nonce: [u8; N_N],
}

pub fn key_schedule(shared_secret: &[u8], info: &[u8]) -> KeySchedule {
    let suite = hpke_suite_id();
    let psk_id_hash = labeled_extract(&suite, b"", b"psk_id_hash", b"");
    let info_hash = labeled_extract(&suite, b"", b"info_hash", info);
    let mut context = Vec::with_capacity(1 + 2 * N_SECRET);
    context.push(MODE_AUTH);
    context.extend_from_slice(&psk_id_hash);
    context.extend_from_slice(&info_hash);
    let secret = labeled_extract(&suite, shared_secret, b"secret", b"");
    let mut key = [0u8; N_K];
    labeled_expand(&suite, &secret, b"key", &context, &mut key);
    let mut base_nonce = [0u8; N_N];
    labeled_expand(&suite, &secret, b"base_nonce", &context, &mut base_nonce);
    KeySchedule { key, base_nonce }
}

/// Single-shot `SealAuth`. Returns `(enc, ciphertext || tag)`.
pub fn seal_auth(
    ikm_e: &[u8],
    pk_r: &PublicKey,
    sk_s: &StaticSecret,
    info: &[u8],
    aad: &[u8],
    plaintext: &[u8],
) -> Result<([u8; N_ENC], Vec<u8>), HpkeError> {
    let (shared, enc) = auth_encap(ikm_e, pk_r, sk_s)?;
    let ks = key_schedule(&shared, info);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&ks.key));
    let ct = cipher
        .encrypt(Nonce::from_slice(&ks.base_nonce), Payload { msg: plaintext, aad })
        .expect("ChaCha20Poly1305 encryption is infallible for in-range lengths");
    Ok((enc, ct))
}

/// Single-shot `OpenAuth`.
pub fn open_auth(
    enc: &[u8; N_ENC],
    sk_r: &StaticSecret,
    pk_s: &PublicKey,
    info: &[u8],
    aad: &[u8],
    ciphertext: &[u8],
) -> Result<Vec<u8>, HpkeError> {
    let shared = auth_decap(enc, sk_r, pk_s)?;
    let ks = key_schedule(&shared, info);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&ks.key));
    cipher
        .decrypt(Nonce::from_slice(&ks.base_nonce), Payload { msg: ciphertext, aad })
        .map_err(|_| HpkeError::OpenFailed)
}
