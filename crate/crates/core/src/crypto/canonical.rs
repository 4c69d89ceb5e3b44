//! Deterministic byte encoding shared by everything that gets signed or put
//! on the wire.
//!
//! Conventions:
//! - integers are fixed-width big-endian;
//! - `f64` values are encoded as their IEEE-754 bit pattern (`u64`, big-endian);
//! - variable-length fields (byte strings, UTF-8 text) carry a `u32` length prefix;
//! - fixed-size keys are written raw, with no prefix;
//! - sets are written as a `u32` count followed by elements in ascending order.

use std::collections::BTreeSet;

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tag(tag: &[u8]) -> Self {
        let mut enc = Self::new();
        enc.buf.extend_from_slice(tag);
        enc
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn bytes(&mut self, bytes: &[u8]) -> &mut Self {
        let len = u32::try_from(bytes.len()).expect("field longer than u32::MAX");
        self.u32(len);
        self.raw(bytes)
    }

    pub fn str(&mut self, s: &str) -> &mut Self {
        self.bytes(s.as_bytes())
    }

    pub fn str_set(&mut self, set: &BTreeSet<String>) -> &mut Self {
        let len = u32::try_from(set.len()).expect("set larger than u32::MAX");
        self.u32(len);
        for item in set {
            self.str(item);
        }
        self
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

/// Error returned when a byte string does not follow the encoding above.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("truncated or malformed field at offset {offset}")]
pub struct DecodeError {
    pub offset: usize,
}

#[derive(Debug)]
pub struct Decoder<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn expect_tag(&mut self, tag: &[u8]) -> Result<(), DecodeError> {
        let got = self.raw(tag.len())?;
        if got != tag {
            return Err(DecodeError {
                offset: self.pos - tag.len(),
            });
        }
        Ok(())
    }

    pub fn raw(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.buf.len())
            .ok_or(DecodeError { offset: self.pos })?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.raw(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.raw(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn f64(&mut self) -> Result<f64, DecodeError> {
        Ok(f64::from_bits(self.u64()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.raw(len)
    }

    pub fn str(&mut self) -> Result<&'a str, DecodeError> {
        let start = self.pos;
        let bytes = self.bytes()?;
        std::str::from_utf8(bytes).map_err(|_| DecodeError { offset: start })
    }

    pub fn str_set(&mut self) -> Result<BTreeSet<String>, DecodeError> {
        let start = self.pos;
        let n = self.u32()?;
        let mut out = BTreeSet::new();
        let mut prev: Option<&str> = None;
        for _ in 0..n {
            let item = self.str()?;
            // Canonical sets are strictly ascending; anything else is a
            // second encoding of the same value.
            if prev.is_some_and(|p| p >= item) {
                return Err(DecodeError { offset: start });
            }
            prev = Some(item);
            out.insert(item.to_owned());
        }
        Ok(out)
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(DecodeError { offset: self.pos })
        }
    }
}
