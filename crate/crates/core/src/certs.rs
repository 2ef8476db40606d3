//! The two certificates the protocol runs on.
//!
//! `C_at` binds the public key the initiator shares with the TTP; the TTP
//! issues it and keeps the private half. `C-Cert` binds the hash of the
//! contract and the hash of the initiator's encrypted signature; the CA
//! issues one per exchange. Both are signed over a canonical
//! length-prefixed encoding of their fields — a deliberately minimal
//! stand-in for X.509, which would add nothing but encoding work here.

use thiserror::Error;

use crate::crypto::{
    self, hash, rsa_encrypt, verify_sig_digest, CounterSlot, CryptoError, Digest,
    EncryptedSignature, ExpCounter, RsaKeyPair, RsaPublicKey, Signature,
};
use crate::encoding::{put_bytes, put_u64, put_uint, uint_bytes, DecodeError, Reader};
use crate::{PartyId, Phase};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CertError {
    #[error("contract body must not be empty")]
    EmptyContract,
    #[error("shared modulus of {shared_bits} bits is too small for a {subject_bits}-bit subject modulus")]
    SharedModulusTooSmall { shared_bits: u64, subject_bits: u64 },
    #[error("signature in the certification request does not verify over the submitted contract")]
    SignatureRejected,
    #[error("shared-key certificate in the certification request does not verify")]
    CertificateRejected,
    #[error("malformed certificate: {0}")]
    Malformed(#[from] DecodeError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// The agreed contract text. Non-empty by construction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Contract {
    body: Vec<u8>,
}

impl Contract {
    pub fn new(body: impl Into<Vec<u8>>) -> Result<Self, CertError> {
        let body = body.into();
        if body.is_empty() {
            return Err(CertError::EmptyContract);
        }
        Ok(Contract { body })
    }

    pub fn body(&self) -> &[u8] {
        &self.body
    }

    /// `hC`.
    pub fn digest(&self) -> Digest {
        hash(&self.body)
    }
}

/// Margin enforced between the shared modulus and the subject's modulus,
/// in bits. Any signature value under the subject key is then a valid
/// plaintext under the shared key, so encryption is total and injective.
pub const SHARED_MODULUS_MARGIN_BITS: u64 = 8;

/// `C_at`: TTP-issued certificate for the public key shared between the
/// subject party and the TTP.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedKeyCert {
    pub shared_pk: RsaPublicKey,
    pub subject_pair: (PartyId, PartyId),
    pub serial: u64,
    pub issuer_sig: Signature,
}

impl SharedKeyCert {
    /// Canonical encoding of everything the issuer signs.
    pub fn canonical_body(&self) -> Vec<u8> {
        canonical_shared_key_body(&self.shared_pk, self.subject_pair, self.serial)
    }

    /// Human-readable field dump for the CLI. Never the signed form.
    pub fn render_debug(&self) -> String {
        format!(
            "shared_pk.e: {:x}\nshared_pk.n: {:x}\nsubject: {}\nissuer: {}\nserial: {:x}\nissuer_sig: {:x}",
            self.shared_pk.e,
            self.shared_pk.n,
            self.subject_pair.0,
            self.subject_pair.1,
            self.serial,
            self.issuer_sig.value
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.canonical_body();
        put_bytes(&mut out, &self.issuer_sig.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = Reader::new(bytes);
        let e = r.take_uint()?;
        let n = r.take_uint()?;
        let subject = take_party(&mut r)?;
        let issuer = take_party(&mut r)?;
        let serial = r.take_u64()?;
        let issuer_sig = Signature::from_bytes(r.take_bytes()?)?;
        r.finish()?;
        Ok(SharedKeyCert {
            shared_pk: RsaPublicKey { e, n },
            subject_pair: (subject, issuer),
            serial,
            issuer_sig,
        })
    }
}

/// `C-Cert`: CA-issued contract certificate. Fresh for every exchange.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContractCert {
    /// `heSig`: hash of the encrypted signature, in its canonical integer
    /// encoding.
    pub he_sig: Digest,
    /// `hC`: hash of the contract.
    pub h_c: Digest,
    pub serial: u64,
    pub issuer_sig: Signature,
}

impl ContractCert {
    pub fn canonical_body(&self) -> Vec<u8> {
        canonical_contract_cert_body(&self.he_sig, &self.h_c, self.serial)
    }

    /// Human-readable field dump for the CLI. Never the signed form.
    pub fn render_debug(&self) -> String {
        format!(
            "he_sig: {}\nh_c: {}\nserial: {:x}\nissuer_sig: {:x}",
            self.he_sig, self.h_c, self.serial, self.issuer_sig.value
        )
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.canonical_body();
        put_bytes(&mut out, &self.issuer_sig.to_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CertError> {
        let mut r = Reader::new(bytes);
        let he_sig = Digest(r.take_digest()?);
        let h_c = Digest(r.take_digest()?);
        let serial = r.take_u64()?;
        let issuer_sig = Signature::from_bytes(r.take_bytes()?)?;
        r.finish()?;
        Ok(ContractCert {
            he_sig,
            h_c,
            serial,
            issuer_sig,
        })
    }
}

fn take_party(r: &mut Reader<'_>) -> Result<PartyId, CertError> {
    let field = r.take_bytes()?;
    if field.len() != 1 {
        return Err(CertError::Malformed(DecodeError::UnknownParty(0)));
    }
    PartyId::from_octet(field[0]).ok_or(CertError::Malformed(DecodeError::UnknownParty(field[0])))
}

fn put_party(out: &mut Vec<u8>, party: PartyId) {
    put_bytes(out, &[party.octet()]);
}

fn canonical_shared_key_body(
    shared_pk: &RsaPublicKey,
    subject_pair: (PartyId, PartyId),
    serial: u64,
) -> Vec<u8> {
    let mut out = Vec::new();
    put_uint(&mut out, &shared_pk.e);
    put_uint(&mut out, &shared_pk.n);
    put_party(&mut out, subject_pair.0);
    put_party(&mut out, subject_pair.1);
    put_u64(&mut out, serial);
    out
}

fn canonical_contract_cert_body(he_sig: &Digest, h_c: &Digest, serial: u64) -> Vec<u8> {
    let mut out = Vec::new();
    put_bytes(&mut out, &he_sig.0);
    put_bytes(&mut out, &h_c.0);
    put_u64(&mut out, serial);
    out
}

/// `heSig` is computed over the ciphertext's canonical integer encoding.
/// Everyone — CA, initiator, responder, TTP — must use this exact helper
/// for the binding to hold.
pub fn encrypted_signature_digest(enc: &EncryptedSignature) -> Digest {
    hash(&uint_bytes(&enc.value))
}

/// TTP-side issuance of `C_at`. The TTP keeps `shared.private`; only the
/// public half enters the certificate. Fails unless the shared modulus is
/// at least [`SHARED_MODULUS_MARGIN_BITS`] bits longer than the subject's.
pub fn issue_shared_key_cert(
    ttp_keys: &RsaKeyPair,
    subject_pk: &RsaPublicKey,
    shared: &RsaKeyPair,
    subject_pair: (PartyId, PartyId),
    serial: u64,
    slot: Option<CounterSlot<'_>>,
) -> Result<SharedKeyCert, CertError> {
    let shared_bits = shared.public.n.bits();
    let subject_bits = subject_pk.n.bits();
    if shared_bits < subject_bits + SHARED_MODULUS_MARGIN_BITS {
        return Err(CertError::SharedModulusTooSmall {
            shared_bits,
            subject_bits,
        });
    }
    let body = canonical_shared_key_body(&shared.public, subject_pair, serial);
    let issuer_sig = crypto::sign(&body, &ttp_keys.private, slot)?;
    Ok(SharedKeyCert {
        shared_pk: shared.public.clone(),
        subject_pair,
        serial,
        issuer_sig,
    })
}

/// Checks the issuer signature over the canonical body; one counted
/// exponentiation. A signature value out of range for the offered key is
/// a verification failure, not an error.
pub fn verify_shared_key_cert(
    cert: &SharedKeyCert,
    ttp_pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<bool, CertError> {
    verify_cert_sig(&cert.canonical_body(), &cert.issuer_sig, ttp_pk, slot)
}

pub fn verify_contract_cert(
    cert: &ContractCert,
    ca_pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<bool, CertError> {
    verify_cert_sig(&cert.canonical_body(), &cert.issuer_sig, ca_pk, slot)
}

fn verify_cert_sig(
    body: &[u8],
    sig: &Signature,
    issuer_pk: &RsaPublicKey,
    slot: Option<CounterSlot<'_>>,
) -> Result<bool, CertError> {
    match verify_sig_digest(&hash(body), sig, issuer_pk, slot) {
        Ok(ok) => Ok(ok),
        Err(CryptoError::MalformedSignature) => Ok(false),
        Err(e) => Err(e.into()),
    }
}

/// What the subject submits to the CA: `Sig_a(C) + C + C_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertRequest {
    pub sig_a: Signature,
    pub contract: Contract,
    pub c_at: SharedKeyCert,
}

/// CA-side issuance of `C-Cert`.
///
/// Verifies the submitted signature over the submitted contract, verifies
/// `C_at`, encrypts the signature under the shared key, and signs a
/// certificate over `heSig` and `hC`. The ciphertext is returned alongside
/// the certificate; the subject recomputes its own identical copy, which
/// deterministic encryption guarantees.
///
/// Books four exponentiations to the CA's registration slot.
pub fn ca_issue_contract_cert(
    ca_keys: &RsaKeyPair,
    request: &CertRequest,
    subject_pk: &RsaPublicKey,
    ttp_pk: &RsaPublicKey,
    serial: u64,
    mut counter: Option<&mut ExpCounter>,
) -> Result<(ContractCert, EncryptedSignature), CertError> {
    fn slot<'c>(counter: &'c mut Option<&mut ExpCounter>) -> Option<CounterSlot<'c>> {
        counter
            .as_deref_mut()
            .map(|c| c.slot(PartyId::Ca, Phase::Registration))
    }

    let sig_ok = match verify_sig_digest(
        &request.contract.digest(),
        &request.sig_a,
        subject_pk,
        slot(&mut counter),
    ) {
        Ok(ok) => ok,
        Err(CryptoError::MalformedSignature) => false,
        Err(e) => return Err(e.into()),
    };
    if !sig_ok {
        return Err(CertError::SignatureRejected);
    }
    if !verify_shared_key_cert(&request.c_at, ttp_pk, slot(&mut counter))? {
        return Err(CertError::CertificateRejected);
    }

    let ciphertext = rsa_encrypt(
        &request.sig_a.value,
        &request.c_at.shared_pk,
        slot(&mut counter),
    )?;
    let enc = EncryptedSignature { value: ciphertext };

    let he_sig = encrypted_signature_digest(&enc);
    let h_c = request.contract.digest();
    let body = canonical_contract_cert_body(&he_sig, &h_c, serial);
    let issuer_sig = crypto::sign(&body, &ca_keys.private, slot(&mut counter))?;
    Ok((
        ContractCert {
            he_sig,
            h_c,
            serial,
            issuer_sig,
        },
        enc,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;
    use crate::Nat;

    fn keys() -> (RsaKeyPair, RsaKeyPair, RsaKeyPair, RsaKeyPair) {
        let a = generate_keypair(512, Some(11)).unwrap();
        let ttp = generate_keypair(512, Some(13)).unwrap();
        let ca = generate_keypair(512, Some(14)).unwrap();
        let shared = generate_keypair(528, Some(15)).unwrap();
        (a, ttp, ca, shared)
    }

    fn sample_shared_cert() -> (SharedKeyCert, RsaKeyPair) {
        let (a, ttp, _, shared) = keys();
        let cert = issue_shared_key_cert(
            &ttp,
            &a.public,
            &shared,
            (PartyId::A, PartyId::Ttp),
            1,
            None,
        )
        .unwrap();
        (cert, ttp)
    }

    #[test]
    fn canonical_body_is_deterministic_and_field_sensitive() {
        let (cert, _) = sample_shared_cert();
        assert_eq!(cert.canonical_body(), cert.canonical_body());
        let mut other = cert.clone();
        other.serial = 2;
        assert_ne!(cert.canonical_body(), other.canonical_body());
    }

    #[test]
    fn shared_key_cert_round_trips_and_verifies() {
        let (cert, ttp) = sample_shared_cert();
        assert!(verify_shared_key_cert(&cert, &ttp.public, None).unwrap());
        let back = SharedKeyCert::from_bytes(&cert.to_bytes()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn wrong_issuer_key_fails_verification() {
        let (cert, _) = sample_shared_cert();
        let other = generate_keypair(512, Some(99)).unwrap();
        assert!(!verify_shared_key_cert(&cert, &other.public, None).unwrap());
    }

    #[test]
    fn tampered_field_fails_verification() {
        let (mut cert, ttp) = sample_shared_cert();
        cert.shared_pk.n ^= Nat::from(1u32) << 5;
        assert!(!verify_shared_key_cert(&cert, &ttp.public, None).unwrap());
    }

    #[test]
    fn equal_moduli_violate_the_ordering_rule() {
        let (a, ttp, _, _) = keys();
        let same_size = generate_keypair(512, Some(16)).unwrap();
        let err = issue_shared_key_cert(
            &ttp,
            &a.public,
            &same_size,
            (PartyId::A, PartyId::Ttp),
            1,
            None,
        )
        .unwrap_err();
        assert_eq!(
            err,
            CertError::SharedModulusTooSmall {
                shared_bits: 512,
                subject_bits: 512
            }
        );

        // Why the rule exists: whenever n_shared <= n_subject there is a
        // signature value that cannot be encrypted at all.
        let (shared_pk, subject_n) = if same_size.public.n <= a.public.n {
            (&same_size.public, &a.public.n)
        } else {
            (&a.public, &same_size.public.n)
        };
        let stuck = subject_n - 1u32;
        assert!(stuck >= shared_pk.n);
        assert_eq!(
            rsa_encrypt(&stuck, shared_pk, None).unwrap_err(),
            CryptoError::PlaintextTooLarge
        );
    }

    fn registration() -> (
        RsaKeyPair,
        RsaKeyPair,
        RsaKeyPair,
        SharedKeyCert,
        Contract,
        Signature,
        ContractCert,
        EncryptedSignature,
    ) {
        let (a, ttp, ca, shared) = keys();
        let c_at = issue_shared_key_cert(
            &ttp,
            &a.public,
            &shared,
            (PartyId::A, PartyId::Ttp),
            1,
            None,
        )
        .unwrap();
        let contract = Contract::new(&b"sale of one used bicycle"[..]).unwrap();
        let sig_a = crypto::sign(contract.body(), &a.private, None).unwrap();
        let request = CertRequest {
            sig_a: sig_a.clone(),
            contract: contract.clone(),
            c_at: c_at.clone(),
        };
        let (cert, enc) =
            ca_issue_contract_cert(&ca, &request, &a.public, &ttp.public, 1, None).unwrap();
        (a, ttp, ca, c_at, contract, sig_a, cert, enc)
    }

    #[test]
    fn contract_cert_binds_the_subjects_own_ciphertext() {
        let (_a, _, ca, c_at, contract, sig_a, cert, enc) = registration();
        assert!(verify_contract_cert(&cert, &ca.public, None).unwrap());
        assert_eq!(cert.h_c, contract.digest());

        // Independent recomputation on the subject's side.
        let own_ct = rsa_encrypt(&sig_a.value, &c_at.shared_pk, None).unwrap();
        assert_eq!(own_ct, enc.value);
        assert_eq!(
            encrypted_signature_digest(&EncryptedSignature { value: own_ct }),
            cert.he_sig
        );
    }

    #[test]
    fn signature_over_a_different_contract_is_rejected() {
        let (a, ttp, ca, c_at, contract, _, _, _) = registration();
        let wrong = crypto::sign(b"a different contract", &a.private, None).unwrap();
        let request = CertRequest {
            sig_a: wrong,
            contract,
            c_at,
        };
        assert_eq!(
            ca_issue_contract_cert(&ca, &request, &a.public, &ttp.public, 2, None).unwrap_err(),
            CertError::SignatureRejected
        );
    }

    #[test]
    fn forged_shared_key_cert_is_rejected() {
        let (a, ttp, ca, mut c_at, contract, sig_a, _, _) = registration();
        c_at.serial ^= 1;
        let request = CertRequest {
            sig_a,
            contract,
            c_at,
        };
        assert_eq!(
            ca_issue_contract_cert(&ca, &request, &a.public, &ttp.public, 2, None).unwrap_err(),
            CertError::CertificateRejected
        );
    }

    #[test]
    fn contract_cert_round_trips() {
        let (_, _, _, _, _, _, cert, _) = registration();
        let back = ContractCert::from_bytes(&cert.to_bytes()).unwrap();
        assert_eq!(back, cert);
    }

    #[test]
    fn contract_cert_rejects_the_wrong_issuer_key_and_mutation() {
        let (_, ttp, ca, _, _, _, cert, _) = registration();
        assert!(verify_contract_cert(&cert, &ca.public, None).unwrap());
        assert!(!verify_contract_cert(&cert, &ttp.public, None).unwrap());
        let mut mutated = cert;
        mutated.h_c.0[0] ^= 1;
        assert!(!verify_contract_cert(&mutated, &ca.public, None).unwrap());
    }

    #[test]
    fn debug_rendering_differs_from_the_signed_form() {
        let (cert, _) = sample_shared_cert();
        let rendered = cert.render_debug();
        assert!(rendered.contains("serial:"));
        assert_ne!(rendered.as_bytes(), cert.canonical_body().as_slice());
    }

    #[test]
    fn empty_contract_is_rejected() {
        assert_eq!(
            Contract::new(Vec::new()).unwrap_err(),
            CertError::EmptyContract
        );
    }
}
