//! Key files for the CLI.
//!
//! Binary, canonical integer encoding throughout:
//!
//! ```text
//! key pair:    "FSIGKEY1" | uint(e) | uint(n) | uint(d)
//! public key:  "FSIGPUB1" | uint(e) | uint(n)
//! ```
//!
//! where `uint(x)` is the 4-octet big-endian length prefix followed by
//! the minimal big-endian bytes of `x`.

use std::io;
use std::path::Path;

use num_traits::One;
use thiserror::Error;

use crate::crypto::{RsaKeyPair, RsaPrivateKey, RsaPublicKey};
use crate::encoding::{put_uint, DecodeError, Reader};
use crate::Nat;

const KEYPAIR_MAGIC: &[u8; 8] = b"FSIGKEY1";
const PUBLIC_MAGIC: &[u8; 8] = b"FSIGPUB1";

#[derive(Debug, Error)]
pub enum KeyfileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Decode {
        path: String,
        #[source]
        source: DecodeError,
    },
}

pub fn keypair_to_bytes(pair: &RsaKeyPair) -> Vec<u8> {
    let mut out = KEYPAIR_MAGIC.to_vec();
    put_uint(&mut out, &pair.public.e);
    put_uint(&mut out, &pair.public.n);
    put_uint(&mut out, &pair.private.d);
    out
}

pub fn public_key_to_bytes(pk: &RsaPublicKey) -> Vec<u8> {
    let mut out = PUBLIC_MAGIC.to_vec();
    put_uint(&mut out, &pk.e);
    put_uint(&mut out, &pk.n);
    out
}

pub fn keypair_from_bytes(bytes: &[u8]) -> Result<RsaKeyPair, DecodeError> {
    let body = strip_magic(bytes, KEYPAIR_MAGIC)?;
    let mut r = Reader::new(body);
    let e = r.take_uint()?;
    let n = r.take_uint()?;
    let d = r.take_uint()?;
    r.finish()?;
    check_key_range(&e, &n)?;
    check_key_range(&d, &n)?;
    Ok(RsaKeyPair {
        public: RsaPublicKey { e, n: n.clone() },
        private: RsaPrivateKey { d, n },
    })
}

pub fn public_key_from_bytes(bytes: &[u8]) -> Result<RsaPublicKey, DecodeError> {
    let body = strip_magic(bytes, PUBLIC_MAGIC)?;
    let mut r = Reader::new(body);
    let e = r.take_uint()?;
    let n = r.take_uint()?;
    r.finish()?;
    check_key_range(&e, &n)?;
    Ok(RsaPublicKey { e, n })
}

fn strip_magic<'a>(bytes: &'a [u8], magic: &[u8; 8]) -> Result<&'a [u8], DecodeError> {
    match bytes.split_at_checked(8) {
        Some((head, rest)) if head == magic => Ok(rest),
        _ => Err(DecodeError::BadMagic),
    }
}

fn check_key_range(exponent: &Nat, modulus: &Nat) -> Result<(), DecodeError> {
    if exponent <= &Nat::one() || exponent >= modulus {
        return Err(DecodeError::InvalidKey);
    }
    Ok(())
}

/// Writes `<path>` with the full key pair and a sibling `.pub` file with
/// the public half.
pub fn write_keypair(path: &Path, pair: &RsaKeyPair) -> Result<(), KeyfileError> {
    let write = |path: &Path, bytes: &[u8]| {
        std::fs::write(path, bytes).map_err(|source| KeyfileError::Io {
            path: path.display().to_string(),
            source,
        })
    };
    write(path, &keypair_to_bytes(pair))?;
    write(
        &path.with_extension("pub"),
        &public_key_to_bytes(&pair.public),
    )
}

pub fn read_keypair(path: &Path) -> Result<RsaKeyPair, KeyfileError> {
    let bytes = std::fs::read(path).map_err(|source| KeyfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    keypair_from_bytes(&bytes).map_err(|source| KeyfileError::Decode {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_public_key(path: &Path) -> Result<RsaPublicKey, KeyfileError> {
    let bytes = std::fs::read(path).map_err(|source| KeyfileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    public_key_from_bytes(&bytes).map_err(|source| KeyfileError::Decode {
        path: path.display().to_string(),
        source,
    })
}
