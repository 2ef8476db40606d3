//! Canonical length-prefixed binary encoding.
//!
//! Every field is a 4-octet big-endian length followed by the field's
//! octets, in declared field order. Integers encode as their minimal
//! big-endian byte string; zero is the single octet `0x00`. Certificates,
//! protocol messages, and key files all share this encoding, so the hash
//! bindings inside the contract certificate are computed over exactly the
//! bytes that travel on the wire.

use crate::Nat;
use num_traits::ToPrimitive;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes after the last field")]
    TrailingBytes(usize),
    #[error("unknown message tag {0}")]
    UnknownTag(u8),
    #[error("unknown party octet {0}")]
    UnknownParty(u8),
    #[error("unknown rejection reason octet {0}")]
    UnknownReason(u8),
    #[error("digest field must be 32 octets, got {0}")]
    BadDigestLength(usize),
    #[error("contract field must not be empty")]
    EmptyContract,
    #[error("integer field does not fit in 64 bits")]
    IntegerOverflow,
    #[error("bad magic in key file")]
    BadMagic,
    #[error("key fails basic validity checks")]
    InvalidKey,
}

/// Appends one length-prefixed field.
pub fn put_bytes(out: &mut Vec<u8>, field: &[u8]) {
    out.extend_from_slice(&(field.len() as u32).to_be_bytes());
    out.extend_from_slice(field);
}

/// Appends an integer as a length-prefixed minimal big-endian field.
pub fn put_uint(out: &mut Vec<u8>, value: &Nat) {
    put_bytes(out, &value.to_bytes_be());
}

pub fn put_u64(out: &mut Vec<u8>, value: u64) {
    put_uint(out, &Nat::from(value));
}

/// Canonical standalone encoding of a single integer. The hash bindings
/// (`heSig`) are computed over this form.
pub fn uint_bytes(value: &Nat) -> Vec<u8> {
    let mut out = Vec::new();
    put_uint(&mut out, value);
    out
}

/// Sequential reader over length-prefixed fields.
pub struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len()
    }

    pub fn take_u8(&mut self) -> Result<u8, DecodeError> {
        let (&first, rest) = self.buf.split_first().ok_or(DecodeError::Truncated)?;
        self.buf = rest;
        Ok(first)
    }

    pub fn take_bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        if self.buf.len() < 4 {
            return Err(DecodeError::Truncated);
        }
        let (len_bytes, rest) = self.buf.split_at(4);
        let len = u32::from_be_bytes(len_bytes.try_into().unwrap()) as usize;
        if rest.len() < len {
            return Err(DecodeError::Truncated);
        }
        let (field, rest) = rest.split_at(len);
        self.buf = rest;
        Ok(field)
    }

    pub fn take_uint(&mut self) -> Result<Nat, DecodeError> {
        Ok(Nat::from_bytes_be(self.take_bytes()?))
    }

    pub fn take_u64(&mut self) -> Result<u64, DecodeError> {
        self.take_uint()?
            .to_u64()
            .ok_or(DecodeError::IntegerOverflow)
    }

    pub fn take_digest(&mut self) -> Result<[u8; 32], DecodeError> {
        let field = self.take_bytes()?;
        field
            .try_into()
            .map_err(|_| DecodeError::BadDigestLength(field.len()))
    }

    /// Asserts the input is exhausted.
    pub fn finish(self) -> Result<(), DecodeError> {
        if self.buf.is_empty() {
            Ok(())
        } else {
            Err(DecodeError::TrailingBytes(self.buf.len()))
        }
    }
}
