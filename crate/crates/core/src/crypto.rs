//! Textbook RSA primitives with an exponentiation counter.
//!
//! Encryption is deliberately unpadded and deterministic: the certificate
//! authority and the initiator must arrive at the identical ciphertext
//! `enc.pk_at(Sig_a(C))` for the certificate's hash binding to be
//! checkable by the responder. The usual caveats about unpadded RSA apply;
//! this is a protocol study, not a hardened library.
//!
//! Signatures are hash-then-sign: the SHA-256 digest of the message,
//! read as a big-endian integer, raised to the private exponent. The
//! modulus floor of [`MIN_MODULUS_BITS`] keeps every digest below the
//! modulus.
//!
//! Every encryption, decryption, signing, and verification performs
//! exactly one modular exponentiation, optionally booked to a
//! `(party, phase)` slot of an [`ExpCounter`]. Key generation is never
//! booked: the cost table this reproduces covers protocol runs, not
//! setup.

use std::collections::BTreeMap;

use num_bigint::RandBigInt;
use num_integer::Integer;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::arith::{self, ArithError};
use crate::encoding::{put_u64, put_uint, DecodeError, Reader};
use crate::{Nat, PartyId, Phase};

/// Smallest accepted modulus size: a 256-bit digest plus one spare octet.
pub const MIN_MODULUS_BITS: u64 = 264;

/// Fixed public exponent; regenerated primes on the rare gcd collision.
pub const PUBLIC_EXPONENT: u32 = 65537;

const MILLER_RABIN_ROUNDS: u32 = 40;

const SMALL_PRIMES: &[u32] = &[
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223, 227, 229, 233, 239, 241, 251,
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CryptoError {
    #[error("modulus of {0} bits is below the {MIN_MODULUS_BITS}-bit floor")]
    ModulusTooSmall(u64),
    #[error("plaintext is not smaller than the modulus")]
    PlaintextTooLarge,
    #[error("ciphertext is not smaller than the modulus")]
    CiphertextOutOfRange,
    #[error("signature value is not smaller than the verifier's modulus")]
    MalformedSignature,
    #[error(transparent)]
    Arith(#[from] ArithError),
}

/// RSA public key `(e, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPublicKey {
    pub e: Nat,
    pub n: Nat,
}

/// RSA private key `(d, n)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaPrivateKey {
    pub d: Nat,
    pub n: Nat,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RsaKeyPair {
    pub public: RsaPublicKey,
    pub private: RsaPrivateKey,
}

impl RsaKeyPair {
    pub fn modulus_bits(&self) -> u64 {
        self.public.n.bits()
    }
}

/// SHA-256 output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    /// Big-endian integer reading of the digest. Always below any modulus
    /// that satisfies [`MIN_MODULUS_BITS`].
    pub fn as_uint(&self) -> Nat {
        Nat::from_bytes_be(&self.0)
    }

    pub fn to_hex(&self) -> String {
        let mut s = String::with_capacity(64);
        for b in self.0 {
            s.push_str(&format!("{b:02x}"));
        }
        s
    }
}

impl std::fmt::Display for Digest {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// RSA signature: the signed digest plus the signer's modulus width, kept
/// so serialized signatures are self-describing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub value: Nat,
    pub signer_modulus_bits: u64,
}

impl Signature {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        put_uint(&mut out, &self.value);
        put_u64(&mut out, self.signer_modulus_bits);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let value = r.take_uint()?;
        let signer_modulus_bits = r.take_u64()?;
        r.finish()?;
        Ok(Signature {
            value,
            signer_modulus_bits,
        })
    }
}

/// `enc.pk_at(Sig_a(C))`: the initiator's signature encrypted under the
/// key shared with the TTP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncryptedSignature {
    pub value: Nat,
}

/// Modular-exponentiation tally keyed by `(party, phase)`.
///
/// One counter belongs to one run context and is only ever touched from
/// that context's thread.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExpCounter {
    counts: BTreeMap<(PartyId, Phase), u64>,
}

impl ExpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Borrows a single bookable slot.
    pub fn slot(&mut self, party: PartyId, phase: Phase) -> CounterSlot<'_> {
        CounterSlot {
            counter: self,
            party,
            phase,
        }
    }

    pub fn bump(&mut self, party: PartyId, phase: Phase) {
        *self.counts.entry((party, phase)).or_insert(0) += 1;
    }

    pub fn get(&self, party: PartyId, phase: Phase) -> u64 {
        self.counts.get(&(party, phase)).copied().unwrap_or(0)
    }

    /// Total over all parties for one phase.
    pub fn phase_total(&self, phase: Phase) -> u64 {
        self.counts
            .iter()
            .filter(|((_, p), _)| *p == phase)
            .map(|(_, c)| c)
            .sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn reset(&mut self) {
        self.counts.clear();
    }

    pub fn iter(&self) -> impl Iterator<Item = ((PartyId, Phase), u64)> + '_ {
        self.counts.iter().map(|(k, v)| (*k, *v))
    }
}

/// One increment of one `(party, phase)` cell, handed to a crypto
/// operation that performs a single exponentiation.
pub struct CounterSlot<'a> {
    counter: &'a mut ExpCounter,
    party: PartyId,
    phase: Phase,
}

impl CounterSlot<'_> {
    fn record(self) {
        self.counter.bump(self.party, self.phase);
    }
}

/// Counted modular exponentiation over [`Nat`].
pub fn mod_exp(
    base: &Nat,
    exponent: &Nat,
    modulus: &Nat,
    slot: Option<CounterSlot<'_>>,
) -> Result<Nat, CryptoError> {
    let result = arith::mod_exp(base, exponent, modulus)?;
    if let Some(slot) = slot {
        slot.record();
    }
    Ok(result)
}

/// SHA-256. Not an exponentiation; never booked.
pub fn hash(data: &[u8]) -> Digest {
    use sha2::Digest as _;
    let out = sha2::Sha256::digest(data);
    let mut bytes = [0u8; 32];
    bytes.copy_from_slice(&out);
    Digest(bytes)
}

/// `m^e mod n`; exactly one counted exponentiation.
pub fn rsa_encrypt(
    m: &Nat,
    pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<Nat, CryptoError> {
    if m >= &pk.n {
        return Err(CryptoError::PlaintextTooLarge);
    }
    mod_exp(m, &pk.e, &pk.n, slot)
}

/// `c^d mod n`; inverse of [`rsa_encrypt`] under the paired key.
pub fn rsa_decrypt(
    c: &Nat,
    sk: &RsaPrivateKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<Nat, CryptoError> {
    if c >= &sk.n {
        return Err(CryptoError::CiphertextOutOfRange);
    }
    mod_exp(c, &sk.d, &sk.n, slot)
}

/// Hash-then-sign: `hash(message)^d mod n`.
pub fn sign(
    message: &[u8],
    sk: &RsaPrivateKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<Signature, CryptoError> {
    if sk.n.bits() < MIN_MODULUS_BITS {
        return Err(CryptoError::ModulusTooSmall(sk.n.bits()));
    }
    let digest = hash(message).as_uint();
    let value = mod_exp(&digest, &sk.d, &sk.n, slot)?;
    Ok(Signature {
        value,
        signer_modulus_bits: sk.n.bits(),
    })
}

/// Checks `sig^e mod n == hash(message)`.
pub fn verify_sig(
    message: &[u8],
    sig: &Signature,
    pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<bool, CryptoError> {
    verify_sig_digest(&hash(message), sig, pk, slot)
}

/// Signature check against an already-known digest. The protocol verifies
/// signatures against the certified contract hash, not against a locally
/// rehashed message, so this is the form the roles use.
///
/// A signature whose value or self-described modulus width disagrees with
/// the verification key is malformed, not merely invalid. The width check
/// keeps every byte of a serialized signature tamper-evident.
pub fn verify_sig_digest(
    digest: &Digest,
    sig: &Signature,
    pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<bool, CryptoError> {
    if sig.value >= pk.n || sig.signer_modulus_bits != pk.n.bits() {
        return Err(CryptoError::MalformedSignature);
    }
    let recovered = mod_exp(&sig.value, &pk.e, &pk.n, slot)?;
    Ok(recovered == digest.as_uint())
}

/// Generates an RSA key pair with a modulus of exactly `bits` bits.
/// Deterministic for a given seed.
pub fn generate_keypair(bits: u64, seed: Option<u64>) -> Result<RsaKeyPair, CryptoError> {
    generate_keypair_with_factors(bits, seed).map(|(pair, _, _)| pair)
}

/// As [`generate_keypair`], additionally returning the primes so tests can
/// recompute φ(n) independently.
pub fn generate_keypair_with_factors(
    bits: u64,
    seed: Option<u64>,
) -> Result<(RsaKeyPair, Nat, Nat), CryptoError> {
    let mut rng = match seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    keypair_from_rng(bits, &mut rng)
}

pub(crate) fn keypair_from_rng(
    bits: u64,
    rng: &mut ChaCha20Rng,
) -> Result<(RsaKeyPair, Nat, Nat), CryptoError> {
    if bits < MIN_MODULUS_BITS {
        return Err(CryptoError::ModulusTooSmall(bits));
    }
    let e = Nat::from(PUBLIC_EXPONENT);
    loop {
        let p = random_prime(bits - bits / 2, rng);
        let q = random_prime(bits / 2, rng);
        if p == q {
            continue;
        }
        let n = &p * &q;
        debug_assert_eq!(n.bits(), bits);
        let phi = (&p - 1u32) * (&q - 1u32);
        if e.gcd(&phi) != Nat::one() {
            continue;
        }
        let d = mod_inverse(&e, &phi).expect("e is invertible once the gcd check passes");
        let pair = RsaKeyPair {
            public: RsaPublicKey {
                e: e.clone(),
                n: n.clone(),
            },
            private: RsaPrivateKey { d, n },
        };
        return Ok((pair, p, q));
    }
}

/// Random probable prime of exactly `bits` bits. The top two bits are
/// forced so the product of two such primes has full length.
fn random_prime(bits: u64, rng: &mut ChaCha20Rng) -> Nat {
    loop {
        let mut candidate = rng.gen_biguint(bits);
        candidate |= Nat::one() << (bits - 1);
        candidate |= Nat::one() << (bits - 2);
        candidate |= Nat::one();
        if is_probable_prime(&candidate, MILLER_RABIN_ROUNDS, rng) {
            return candidate;
        }
    }
}

fn is_probable_prime(n: &Nat, rounds: u32, rng: &mut ChaCha20Rng) -> bool {
    let two = Nat::from(2u32);
    if n < &two {
        return false;
    }
    for &p in SMALL_PRIMES {
        let p = Nat::from(p);
        if *n == p {
            return true;
        }
        if (n % &p).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let s = n_minus_1.trailing_zeros().expect("n is odd and > 1");
    let d = &n_minus_1 >> s;
    'witness: for _ in 0..rounds {
        let a = rng.gen_biguint_range(&two, &n_minus_1);
        let mut x = arith::mod_exp(&a, &d, n).expect("operands in range");
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = arith::mod_exp(&x, &two, n).expect("operands in range");
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

/// Modular inverse by the extended Euclidean algorithm.
fn mod_inverse(a: &Nat, modulus: &Nat) -> Option<Nat> {
    use num_bigint::BigInt;
    let mut r0 = BigInt::from(modulus.clone());
    let mut r1 = BigInt::from(a.clone());
    let mut t0 = BigInt::from(0);
    let mut t1 = BigInt::from(1);
    while !r1.is_zero() {
        let q = &r0 / &r1;
        let r2 = &r0 - &q * &r1;
        r0 = std::mem::replace(&mut r1, r2);
        let t2 = &t0 - &q * &t1;
        t0 = std::mem::replace(&mut t1, t2);
    }
    if !r0.is_one() {
        return None;
    }
    let m = BigInt::from(modulus.clone());
    let inv = ((t0 % &m) + &m) % &m;
    inv.to_biguint()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_pk() -> RsaPublicKey {
        // p=61, q=53.
        RsaPublicKey {
            e: Nat::from(17u32),
            n: Nat::from(3233u32),
        }
    }

    fn toy_sk() -> RsaPrivateKey {
        RsaPrivateKey {
            d: Nat::from(2753u32),
            n: Nat::from(3233u32),
        }
    }

    #[test]
    fn keypair_generation_is_deterministic_under_a_seed() {
        let a = generate_keypair(512, Some(1)).unwrap();
        let b = generate_keypair(512, Some(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.modulus_bits(), 512);
    }

    #[test]
    fn different_seeds_give_different_keys() {
        let a = generate_keypair(512, Some(1)).unwrap();
        let b = generate_keypair(512, Some(2)).unwrap();
        assert_ne!(a.public.n, b.public.n);
    }

    #[test]
    fn encrypt_then_decrypt_round_trips() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let m = Nat::from(42u32);
        let c = rsa_encrypt(&m, &pair.public, None).unwrap();
        assert_eq!(rsa_decrypt(&c, &pair.private, None).unwrap(), m);
    }

    #[test]
    fn private_exponent_inverts_e_mod_phi() {
        let (pair, p, q) = generate_keypair_with_factors(512, Some(1)).unwrap();
        let phi = (&p - 1u32) * (&q - 1u32);
        assert_eq!((pair.public.e * pair.private.d) % phi, Nat::one());
    }

    #[test]
    fn undersized_modulus_is_rejected() {
        assert_eq!(
            generate_keypair(263, Some(1)),
            Err(CryptoError::ModulusTooSmall(263))
        );
        assert!(generate_keypair(264, Some(1)).is_ok());
    }

    #[test]
    fn sha256_known_vectors() {
        assert_eq!(
            hash(b"").to_hex(),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            hash(b"abc").to_hex(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(hash(b"same"), hash(b"same"));
    }

    #[test]
    fn encryption_fixed_points_and_toy_values() {
        let pk = toy_pk();
        assert_eq!(rsa_encrypt(&Nat::zero(), &pk, None).unwrap(), Nat::zero());
        assert_eq!(rsa_encrypt(&Nat::one(), &pk, None).unwrap(), Nat::one());
        assert_eq!(
            rsa_encrypt(&Nat::from(65u32), &pk, None).unwrap(),
            Nat::from(2790u32)
        );
        assert_eq!(
            rsa_decrypt(&Nat::from(2790u32), &toy_sk(), None).unwrap(),
            Nat::from(65u32)
        );
        assert_eq!(
            rsa_decrypt(&Nat::zero(), &toy_sk(), None).unwrap(),
            Nat::zero()
        );
    }

    #[test]
    fn out_of_range_operands_are_rejected() {
        let pk = toy_pk();
        assert_eq!(
            rsa_encrypt(&Nat::from(3233u32), &pk, None),
            Err(CryptoError::PlaintextTooLarge)
        );
        assert_eq!(
            rsa_decrypt(&Nat::from(9999u32), &toy_sk(), None),
            Err(CryptoError::CiphertextOutOfRange)
        );
    }

    #[test]
    fn sign_verify_round_trip_and_mismatch() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let other = generate_keypair(512, Some(2)).unwrap();
        let sig = sign(b"contract", &pair.private, None).unwrap();
        assert!(verify_sig(b"contract", &sig, &pair.public, None).unwrap());
        assert!(!verify_sig(b"contract2", &sig, &pair.public, None).unwrap());
        assert!(!verify_sig(b"contract", &sig, &other.public, None).unwrap());

        let sig2 = sign(b"contract2", &pair.private, None).unwrap();
        assert_ne!(sig.value, sig2.value);
    }

    #[test]
    fn signing_is_hash_then_mod_exp() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let sig = sign(b"abc", &pair.private, None).unwrap();
        let expected = mod_exp(
            &hash(b"abc").as_uint(),
            &pair.private.d,
            &pair.private.n,
            None,
        )
        .unwrap();
        assert_eq!(sig.value, expected);
    }

    #[test]
    fn flipped_signature_bit_fails_verification() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let mut sig = sign(b"contract", &pair.private, None).unwrap();
        sig.value ^= Nat::one() << 37;
        if sig.value < pair.public.n {
            assert!(!verify_sig(b"contract", &sig, &pair.public, None).unwrap());
        }
    }

    #[test]
    fn oversized_signature_value_is_malformed_not_false() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let sig = Signature {
            value: pair.public.n.clone(),
            signer_modulus_bits: 512,
        };
        assert_eq!(
            verify_sig(b"contract", &sig, &pair.public, None),
            Err(CryptoError::MalformedSignature)
        );
    }

    #[test]
    fn signing_with_a_toy_modulus_is_rejected() {
        assert_eq!(
            sign(b"m", &toy_sk(), None),
            Err(CryptoError::ModulusTooSmall(12))
        );
    }

    #[test]
    fn counter_books_exactly_one_per_operation() {
        let pair = generate_keypair(512, Some(1)).unwrap();
        let mut counter = ExpCounter::new();
        let m = Nat::from(42u32);

        let c = rsa_encrypt(
            &m,
            &pair.public,
            Some(counter.slot(PartyId::A, Phase::Exchange)),
        )
        .unwrap();
        assert_eq!(counter.get(PartyId::A, Phase::Exchange), 1);

        rsa_decrypt(
            &c,
            &pair.private,
            Some(counter.slot(PartyId::A, Phase::Exchange)),
        )
        .unwrap();
        assert_eq!(counter.get(PartyId::A, Phase::Exchange), 2);

        let sig = sign(
            b"m",
            &pair.private,
            Some(counter.slot(PartyId::B, Phase::Dispute)),
        )
        .unwrap();
        verify_sig(
            b"m",
            &sig,
            &pair.public,
            Some(counter.slot(PartyId::B, Phase::Dispute)),
        )
        .unwrap();
        assert_eq!(counter.get(PartyId::B, Phase::Dispute), 2);

        // Hashing books nothing.
        hash(b"anything");
        assert_eq!(counter.total(), 4);

        assert_eq!(counter.phase_total(Phase::Exchange), 2);
        counter.reset();
        assert_eq!(counter.total(), 0);
    }

    #[test]
    fn signature_bytes_round_trip() {
        let pair = generate_keypair(512, Some(3)).unwrap();
        let sig = sign(b"payload", &pair.private, None).unwrap();
        let back = Signature::from_bytes(&sig.to_bytes()).unwrap();
        assert_eq!(back, sig);
    }
}
