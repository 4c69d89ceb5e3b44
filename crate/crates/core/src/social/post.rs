use crate::crypto::canonical::{DecodeError, Decoder, Encoder};
use crate::crypto::{self, AccountId, Identity, PublicKey, Signature, SIGNATURE_LEN};

const POST_TAG: &[u8] = b"SOSP\x01";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PostError {
    #[error("malformed post: {0}")]
    Malformed(#[from] DecodeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Post {
    pub author: AccountId,
    pub seq: u64,
    pub text: String,
    pub created_t: f64,
    pub signature: Signature,
}

fn signed_bytes(author: &AccountId, seq: u64, text: &str, created_t: f64) -> Vec<u8> {
    let mut enc = Encoder::with_tag(POST_TAG);
    enc.str(author.as_str()).u64(seq).f64(created_t).str(text);
    enc.finish()
}

impl Post {
    pub fn sign(author: &Identity, seq: u64, text: &str, created_t: f64) -> Self {
        let signature = author.sign(&signed_bytes(author.account_id(), seq, text, created_t));
        Self {
            author: author.account_id().clone(),
            seq,
            text: text.to_owned(),
            created_t,
            signature,
        }
    }

    /// `"SOSP" 0x01 | author (u32 len + utf8) | seq u64 | created_t f64 bits |
    /// text (u32 len + utf8)`.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        signed_bytes(&self.author, self.seq, &self.text, self.created_t)
    }

    pub fn verify(&self, author_key: &PublicKey) -> bool {
        author_key.account_id() == self.author
            && crypto::verify(
                author_key.as_bytes(),
                &self.canonical_bytes(),
                self.signature.as_bytes(),
            )
    }

    /// Canonical bytes followed by the raw signature.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.canonical_bytes();
        out.extend_from_slice(self.signature.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PostError> {
        let mut dec = Decoder::new(bytes);
        dec.expect_tag(POST_TAG)?;
        let author = AccountId::from_hex_unchecked(dec.str()?);
        let seq = dec.u64()?;
        let created_t = dec.f64()?;
        let text = dec.str()?.to_owned();
        let sig = dec.array::<SIGNATURE_LEN>()?;
        dec.finish()?;
        Ok(Self {
            author,
            seq,
            text,
            created_t,
            signature: Signature::from_bytes(&sig).expect("length checked"),
        })
    }
}
