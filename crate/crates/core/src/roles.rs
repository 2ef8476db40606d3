//! State machines for the four roles.
//!
//! `PartyState` drives both contracting parties: the initiator registers,
//! opens with E-M1, and releases its signature only after verifying E-M2;
//! the responder releases its signature only after verifying E-M1, and
//! falls back to the TTP when E-M3 is missing or bad. `TtpRole` resolves
//! disputes and issues shared-key certificates; `CaRole` issues contract
//! certificates.
//!
//! The honest machines enforce their phase preconditions unconditionally.
//! Adversarial behavior lives in the simulation harness, which deviates by
//! constructing its own messages around these machines, never by flags
//! inside them.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::certs::{
    ca_issue_contract_cert, encrypted_signature_digest, issue_shared_key_cert,
    verify_contract_cert, verify_shared_key_cert, CertError, CertRequest, Contract, ContractCert,
    SharedKeyCert,
};
use crate::crypto::{
    self, keypair_from_rng, rsa_decrypt, rsa_encrypt, verify_sig_digest, CryptoError, Digest,
    EncryptedSignature, ExpCounter, RsaKeyPair, RsaPublicKey, Signature,
};
use crate::messages::{DisputeRejectReason, MsgDrm1, MsgDrm2, MsgDrm3, MsgEm1, MsgEm2, MsgEm3};
use crate::{PartyId, Phase};

/// Extra modulus length the TTP gives the shared key over the subject's
/// key, in bits. Comfortably above the 8-bit issuance floor.
pub const SHARED_MODULUS_EXTRA_BITS: u64 = 16;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("{op} is not permitted for {role} in phase {phase:?}")]
    ProtocolOrder {
        role: PartyId,
        phase: PartyPhase,
        op: &'static str,
    },
    #[error("{op} is a {expected} operation, called on {role}")]
    WrongRole {
        role: PartyId,
        expected: PartyId,
        op: &'static str,
    },
    #[error("trusted party sent invalid material: {0}")]
    TrustedPartyViolation(&'static str),
    #[error("party state is missing {0}")]
    MissingMaterial(&'static str),
    #[error("keyring has no public key for {0}")]
    UnknownPeer(PartyId),
    #[error(transparent)]
    Cert(#[from] CertError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Where a party currently stands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PartyPhase {
    Init,
    Registered,
    Em1Sent,
    Em1Verified,
    Em2Sent,
    Em2Verified,
    Em3Sent,
    Done,
    DisputePending,
    Resolved,
    Aborted,
}

impl PartyPhase {
    pub fn name(self) -> &'static str {
        match self {
            PartyPhase::Init => "Init",
            PartyPhase::Registered => "Registered",
            PartyPhase::Em1Sent => "Em1Sent",
            PartyPhase::Em1Verified => "Em1Verified",
            PartyPhase::Em2Sent => "Em2Sent",
            PartyPhase::Em2Verified => "Em2Verified",
            PartyPhase::Em3Sent => "Em3Sent",
            PartyPhase::Done => "Done",
            PartyPhase::DisputePending => "DisputePending",
            PartyPhase::Resolved => "Resolved",
            PartyPhase::Aborted => "Aborted",
        }
    }
}

/// Own key pair plus the pre-certified public keys of the other roles.
#[derive(Debug, Clone)]
pub struct Keyring {
    pub own: RsaKeyPair,
    pub peers: BTreeMap<PartyId, RsaPublicKey>,
}

impl Keyring {
    pub fn new(own: RsaKeyPair, peers: BTreeMap<PartyId, RsaPublicKey>) -> Self {
        Keyring { own, peers }
    }

    pub fn pk(&self, party: PartyId) -> Result<&RsaPublicKey, ProtocolError> {
        self.peers
            .get(&party)
            .ok_or(ProtocolError::UnknownPeer(party))
    }
}

/// Why the responder refused E-M1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Em1RejectReason {
    /// One of the two certificates does not verify.
    CertInvalid,
    /// The contract does not hash to `hC`, or is not the agreed contract.
    ContractMismatch,
    /// The encrypted signature does not hash to `heSig`.
    CiphertextMismatch,
}

impl Em1RejectReason {
    pub fn name(self) -> &'static str {
        match self {
            Em1RejectReason::CertInvalid => "cert-invalid",
            Em1RejectReason::ContractMismatch => "contract-mismatch",
            Em1RejectReason::CiphertextMismatch => "ciphertext-mismatch",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Em1Verdict {
    Accept,
    Reject(Em1RejectReason),
}

/// The initiator's decision after E-M2: release E-M3, or abort silently.
/// Aborting is a legal protocol outcome, not an error.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Em2Verdict {
    Release(MsgEm3),
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Em3Verdict {
    Accepted,
    /// Bad or missing signature; the responder moves to the dispute path.
    Rejected,
}

/// State of one contracting party (initiator or responder).
#[derive(Debug, Clone)]
pub struct PartyState {
    pub role: PartyId,
    pub phase: PartyPhase,
    pub keyring: Keyring,
    /// The pre-agreed contract.
    pub contract: Contract,
    pub own_sig: Option<Signature>,
    pub obtained_counterpart_sig: Option<Signature>,
    pub c_at: Option<SharedKeyCert>,
    pub c_cert: Option<ContractCert>,
    pub enc_sig_a: Option<EncryptedSignature>,
}

impl PartyState {
    pub fn new(role: PartyId, keyring: Keyring, contract: Contract) -> Self {
        debug_assert!(matches!(role, PartyId::A | PartyId::B));
        PartyState {
            role,
            phase: PartyPhase::Init,
            keyring,
            contract,
            own_sig: None,
            obtained_counterpart_sig: None,
            c_at: None,
            c_cert: None,
            enc_sig_a: None,
        }
    }

    fn expect_role(&self, expected: PartyId, op: &'static str) -> Result<(), ProtocolError> {
        if self.role != expected {
            return Err(ProtocolError::WrongRole {
                role: self.role,
                expected,
                op,
            });
        }
        Ok(())
    }

    fn expect_phase(&self, expected: PartyPhase, op: &'static str) -> Result<(), ProtocolError> {
        if self.phase != expected {
            return Err(ProtocolError::ProtocolOrder {
                role: self.role,
                phase: self.phase,
                op,
            });
        }
        Ok(())
    }

    fn c_cert(&self) -> Result<&ContractCert, ProtocolError> {
        self.c_cert
            .as_ref()
            .ok_or(ProtocolError::MissingMaterial("C-Cert"))
    }

    /// Registration against in-process TTP and CA handles: obtain `C_at`,
    /// sign the contract, have the CA certify the encrypted signature.
    ///
    /// Books to the registration phase: the initiator's signing and local
    /// encryption, plus the issuers' own work on their slots.
    pub fn pa_register(
        &mut self,
        ttp: &mut TtpRole,
        ca: &mut CaRole,
        counter: &mut ExpCounter,
    ) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::A, "pa_register")?;
        self.expect_phase(PartyPhase::Init, "pa_register")?;

        let c_at = ttp.establish_shared_key(PartyId::A, counter)?;
        let sig_a = crypto::sign(
            self.contract.body(),
            &self.keyring.own.private,
            Some(counter.slot(self.role, Phase::Registration)),
        )?;
        let (c_cert, _) = ca.issue_contract_cert(
            &CertRequest {
                sig_a: sig_a.clone(),
                contract: self.contract.clone(),
                c_at: c_at.clone(),
            },
            counter,
        )?;
        self.pa_complete_registration(c_at, c_cert, sig_a, counter)
    }

    /// Second half of registration, usable when the TTP and CA answered
    /// over a transport: locally encrypt the signature and check both hash
    /// bindings in the received `C-Cert`.
    pub fn pa_complete_registration(
        &mut self,
        c_at: SharedKeyCert,
        c_cert: ContractCert,
        sig_a: Signature,
        counter: &mut ExpCounter,
    ) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::A, "pa_complete_registration")?;
        self.expect_phase(PartyPhase::Init, "pa_complete_registration")?;

        let ciphertext = rsa_encrypt(
            &sig_a.value,
            &c_at.shared_pk,
            Some(counter.slot(self.role, Phase::Registration)),
        )?;
        let enc = EncryptedSignature { value: ciphertext };
        if c_cert.h_c != self.contract.digest() {
            return Err(ProtocolError::TrustedPartyViolation("hC in C-Cert"));
        }
        if c_cert.he_sig != encrypted_signature_digest(&enc) {
            return Err(ProtocolError::TrustedPartyViolation("heSig in C-Cert"));
        }

        self.own_sig = Some(sig_a);
        self.c_at = Some(c_at);
        self.c_cert = Some(c_cert);
        self.enc_sig_a = Some(enc);
        self.phase = PartyPhase::Registered;
        Ok(())
    }

    /// Builds E-M1. The encryption of `Sig_a(C)` is performed here and
    /// booked to the exchange phase — the cost model treats it as part of
    /// step E-M1, which is what makes the exchange total come out at six.
    /// Determinism makes the ciphertext identical to the registration-time
    /// copy.
    pub fn pa_build_em1(&mut self, counter: &mut ExpCounter) -> Result<MsgEm1, ProtocolError> {
        self.expect_role(PartyId::A, "pa_build_em1")?;
        self.expect_phase(PartyPhase::Registered, "pa_build_em1")?;

        let sig_a = self
            .own_sig
            .as_ref()
            .ok_or(ProtocolError::MissingMaterial("Sig_a"))?;
        let c_at = self
            .c_at
            .as_ref()
            .ok_or(ProtocolError::MissingMaterial("C_at"))?;
        let ciphertext = rsa_encrypt(
            &sig_a.value,
            &c_at.shared_pk,
            Some(counter.slot(self.role, Phase::Exchange)),
        )?;
        let enc = EncryptedSignature { value: ciphertext };
        debug_assert_eq!(Some(&enc), self.enc_sig_a.as_ref());

        let msg = MsgEm1 {
            contract: self.contract.clone(),
            c_at: c_at.clone(),
            c_cert: self.c_cert()?.clone(),
            enc_sig_a: enc,
        };
        self.phase = PartyPhase::Em1Sent;
        Ok(msg)
    }

    /// The responder's three E-M1 checks, in order: certificate
    /// signatures (two exponentiations), contract hash against `hC`
    /// (free), ciphertext hash against `heSig` (free). Any failure aborts
    /// with a distinct reason and nothing released.
    pub fn pb_verify_em1(
        &mut self,
        msg: &MsgEm1,
        counter: &mut ExpCounter,
    ) -> Result<Em1Verdict, ProtocolError> {
        self.expect_role(PartyId::B, "pb_verify_em1")?;
        self.expect_phase(PartyPhase::Init, "pb_verify_em1")?;

        let ttp_pk = self.keyring.pk(PartyId::Ttp)?.clone();
        let ca_pk = self.keyring.pk(PartyId::Ca)?.clone();

        let c_at_ok = verify_shared_key_cert(
            &msg.c_at,
            &ttp_pk,
            Some(counter.slot(self.role, Phase::Exchange)),
        )? && msg.c_at.subject_pair == (PartyId::A, PartyId::Ttp);
        if !c_at_ok {
            self.phase = PartyPhase::Aborted;
            return Ok(Em1Verdict::Reject(Em1RejectReason::CertInvalid));
        }
        let c_cert_ok = verify_contract_cert(
            &msg.c_cert,
            &ca_pk,
            Some(counter.slot(self.role, Phase::Exchange)),
        )?;
        if !c_cert_ok {
            self.phase = PartyPhase::Aborted;
            return Ok(Em1Verdict::Reject(Em1RejectReason::CertInvalid));
        }

        if msg.contract.digest() != msg.c_cert.h_c || msg.contract != self.contract {
            self.phase = PartyPhase::Aborted;
            return Ok(Em1Verdict::Reject(Em1RejectReason::ContractMismatch));
        }

        if encrypted_signature_digest(&msg.enc_sig_a) != msg.c_cert.he_sig {
            self.phase = PartyPhase::Aborted;
            return Ok(Em1Verdict::Reject(Em1RejectReason::CiphertextMismatch));
        }

        self.c_at = Some(msg.c_at.clone());
        self.c_cert = Some(msg.c_cert.clone());
        self.enc_sig_a = Some(msg.enc_sig_a.clone());
        self.phase = PartyPhase::Em1Verified;
        Ok(Em1Verdict::Accept)
    }

    /// Signs the contract and releases E-M2. Unreachable before
    /// [`PartyState::pb_verify_em1`] accepts.
    pub fn pb_build_em2(&mut self, counter: &mut ExpCounter) -> Result<MsgEm2, ProtocolError> {
        self.expect_role(PartyId::B, "pb_build_em2")?;
        self.expect_phase(PartyPhase::Em1Verified, "pb_build_em2")?;

        let sig_b = crypto::sign(
            self.contract.body(),
            &self.keyring.own.private,
            Some(counter.slot(self.role, Phase::Exchange)),
        )?;
        self.own_sig = Some(sig_b.clone());
        self.phase = PartyPhase::Em2Sent;
        Ok(MsgEm2 { sig_b })
    }

    /// Verifies E-M2 against `hC` and either releases E-M3 (the signature
    /// computed at registration; no new exponentiation) or aborts
    /// silently.
    pub fn pa_verify_em2_and_build_em3(
        &mut self,
        msg: &MsgEm2,
        counter: &mut ExpCounter,
    ) -> Result<Em2Verdict, ProtocolError> {
        self.expect_role(PartyId::A, "pa_verify_em2_and_build_em3")?;
        self.expect_phase(PartyPhase::Em1Sent, "pa_verify_em2_and_build_em3")?;

        let h_c = self.c_cert()?.h_c;
        let pk_b = self.keyring.pk(PartyId::B)?.clone();
        let ok = match verify_sig_digest(
            &h_c,
            &msg.sig_b,
            &pk_b,
            Some(counter.slot(self.role, Phase::Exchange)),
        ) {
            Ok(ok) => ok,
            Err(CryptoError::MalformedSignature) => false,
            Err(e) => return Err(e.into()),
        };
        if !ok {
            self.phase = PartyPhase::Aborted;
            return Ok(Em2Verdict::Abort);
        }

        self.obtained_counterpart_sig = Some(msg.sig_b.clone());
        self.phase = PartyPhase::Em2Verified;
        let sig_a = self
            .own_sig
            .clone()
            .ok_or(ProtocolError::MissingMaterial("Sig_a"))?;
        self.phase = PartyPhase::Em3Sent;
        Ok(Em2Verdict::Release(MsgEm3 { sig_a }))
    }

    /// Verifies E-M3 against `hC`. Rejection is not terminal: it opens the
    /// dispute path.
    pub fn pb_verify_em3(
        &mut self,
        msg: &MsgEm3,
        counter: &mut ExpCounter,
    ) -> Result<Em3Verdict, ProtocolError> {
        self.expect_role(PartyId::B, "pb_verify_em3")?;
        self.expect_phase(PartyPhase::Em2Sent, "pb_verify_em3")?;

        let h_c = self.c_cert()?.h_c;
        let pk_a = self.keyring.pk(PartyId::A)?.clone();
        let ok = match verify_sig_digest(
            &h_c,
            &msg.sig_a,
            &pk_a,
            Some(counter.slot(self.role, Phase::Exchange)),
        ) {
            Ok(ok) => ok,
            Err(CryptoError::MalformedSignature) => false,
            Err(e) => return Err(e.into()),
        };
        if ok {
            self.obtained_counterpart_sig = Some(msg.sig_a.clone());
            self.phase = PartyPhase::Done;
            Ok(Em3Verdict::Accepted)
        } else {
            self.phase = PartyPhase::DisputePending;
            Ok(Em3Verdict::Rejected)
        }
    }

    /// E-M3 never arrived.
    pub fn pb_mark_em3_timeout(&mut self) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::B, "pb_mark_em3_timeout")?;
        self.expect_phase(PartyPhase::Em2Sent, "pb_mark_em3_timeout")?;
        self.phase = PartyPhase::DisputePending;
        Ok(())
    }

    /// Assembles DR-M1 from material the responder already holds; no new
    /// exponentiations on the honest path.
    pub fn pb_build_drm1(&self) -> Result<MsgDrm1, ProtocolError> {
        self.expect_role(PartyId::B, "pb_build_drm1")?;
        self.expect_phase(PartyPhase::DisputePending, "pb_build_drm1")?;

        Ok(MsgDrm1 {
            contract: self.contract.clone(),
            c_at: self
                .c_at
                .clone()
                .ok_or(ProtocolError::MissingMaterial("C_at"))?,
            c_cert: self.c_cert()?.clone(),
            enc_sig_a: self
                .enc_sig_a
                .clone()
                .ok_or(ProtocolError::MissingMaterial("enc.pk_at(Sig_a)"))?,
            sig_b: self
                .own_sig
                .clone()
                .ok_or(ProtocolError::MissingMaterial("Sig_b"))?,
        })
    }

    /// The TTP forwarded the responder's signature. Accepted in any
    /// phase — in the early-dispute case it arrives before E-M2 ever did.
    /// The TTP is trusted, so an invalid signature here is a harness
    /// misconfiguration, not a protocol outcome.
    pub fn pa_apply_drm2(
        &mut self,
        msg: &MsgDrm2,
        counter: &mut ExpCounter,
    ) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::A, "pa_apply_drm2")?;

        let h_c = self.c_cert()?.h_c;
        let pk_b = self.keyring.pk(PartyId::B)?.clone();
        let ok = match verify_sig_digest(
            &h_c,
            &msg.sig_b,
            &pk_b,
            Some(counter.slot(self.role, Phase::Dispute)),
        ) {
            Ok(ok) => ok,
            Err(CryptoError::MalformedSignature) => false,
            Err(e) => return Err(e.into()),
        };
        if !ok {
            return Err(ProtocolError::TrustedPartyViolation("Sig_b in DR-M2"));
        }
        self.obtained_counterpart_sig = Some(msg.sig_b.clone());
        self.phase = PartyPhase::Resolved;
        Ok(())
    }

    /// The TTP recovered the initiator's signature.
    pub fn pb_apply_drm3(
        &mut self,
        msg: &MsgDrm3,
        counter: &mut ExpCounter,
    ) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::B, "pb_apply_drm3")?;
        if !matches!(
            self.phase,
            PartyPhase::DisputePending | PartyPhase::Em1Verified
        ) {
            return Err(ProtocolError::ProtocolOrder {
                role: self.role,
                phase: self.phase,
                op: "pb_apply_drm3",
            });
        }

        let h_c = self.c_cert()?.h_c;
        let pk_a = self.keyring.pk(PartyId::A)?.clone();
        let ok = match verify_sig_digest(
            &h_c,
            &msg.sig_a,
            &pk_a,
            Some(counter.slot(self.role, Phase::Dispute)),
        ) {
            Ok(ok) => ok,
            Err(CryptoError::MalformedSignature) => false,
            Err(e) => return Err(e.into()),
        };
        if !ok {
            return Err(ProtocolError::TrustedPartyViolation("Sig_a in DR-M3"));
        }
        self.obtained_counterpart_sig = Some(msg.sig_a.clone());
        self.phase = PartyPhase::Resolved;
        Ok(())
    }

    /// The TTP refused the dispute; nothing is recoverable.
    pub fn pb_apply_dispute_rejected(&mut self) -> Result<(), ProtocolError> {
        self.expect_role(PartyId::B, "pb_apply_dispute_rejected")?;
        self.phase = PartyPhase::Aborted;
        Ok(())
    }
}

/// How the TTP checks the encrypted signature in DR-M1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TtpVerifyOption {
    /// Option (i): hash the ciphertext and compare against `heSig`; the
    /// recovery decryption then happens only after all checks pass. One
    /// exponentiation fewer than the default, and a deviation from the
    /// published dispute cost of seven.
    HashCompare,
    /// Option (ii), the default: decrypt with `sk_at` and verify the
    /// recovered signature. The decryption doubles as recovery for DR-M3.
    DecryptAndVerify,
}

impl TtpVerifyOption {
    pub fn name(self) -> &'static str {
        match self {
            TtpVerifyOption::HashCompare => "i",
            TtpVerifyOption::DecryptAndVerify => "ii",
        }
    }
}

/// Resolutions already granted, keyed by contract hash. A repeated
/// dispute is answered from here verbatim, at zero exponentiations.
#[derive(Debug, Clone, Default)]
pub struct TtpLedger {
    resolved: BTreeMap<Digest, (Signature, Signature)>,
}

impl TtpLedger {
    pub fn get(&self, h_c: &Digest) -> Option<&(Signature, Signature)> {
        self.resolved.get(h_c)
    }

    pub fn insert(&mut self, h_c: Digest, sig_a: Signature, sig_b: Signature) {
        self.resolved.insert(h_c, (sig_a, sig_b));
    }

    pub fn len(&self) -> usize {
        self.resolved.len()
    }

    pub fn is_empty(&self) -> bool {
        self.resolved.is_empty()
    }
}

/// The TTP's answer to DR-M1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TtpDecision {
    Resolved { drm2: MsgDrm2, drm3: MsgDrm3 },
    Rejected(DisputeRejectReason),
}

/// The offline trusted third party. Passive until a dispute arrives.
#[derive(Debug)]
pub struct TtpRole {
    pub keyring: Keyring,
    verify_option: TtpVerifyOption,
    /// Shared private keys retained at issuance, by certificate serial.
    shared_keys: BTreeMap<u64, RsaKeyPair>,
    next_serial: u64,
    ledger: TtpLedger,
    rng: ChaCha20Rng,
    /// Negative control for the fairness harness: accept disputes without
    /// checking `Sig_b`. Never set outside self-tests.
    pub skip_sig_b_verification: bool,
}

impl TtpRole {
    pub fn new(keyring: Keyring, verify_option: TtpVerifyOption, shared_key_seed: u64) -> Self {
        TtpRole {
            keyring,
            verify_option,
            shared_keys: BTreeMap::new(),
            next_serial: 1,
            ledger: TtpLedger::default(),
            rng: ChaCha20Rng::seed_from_u64(shared_key_seed),
            skip_sig_b_verification: false,
        }
    }

    pub fn verify_option(&self) -> TtpVerifyOption {
        self.verify_option
    }

    pub fn ledger(&self) -> &TtpLedger {
        &self.ledger
    }

    /// Generates a fresh shared key pair, retains the private half, and
    /// issues `C_at` over the public half. The certificate signing books
    /// one exponentiation to the TTP's registration slot; key generation
    /// itself is never booked.
    pub fn establish_shared_key(
        &mut self,
        subject: PartyId,
        counter: &mut ExpCounter,
    ) -> Result<SharedKeyCert, ProtocolError> {
        let subject_pk = self.keyring.pk(subject)?.clone();
        let bits = subject_pk.n.bits() + SHARED_MODULUS_EXTRA_BITS;
        let (shared, _, _) = keypair_from_rng(bits, &mut self.rng)?;
        let serial = self.next_serial;
        self.next_serial += 1;
        let cert = issue_shared_key_cert(
            &self.keyring.own,
            &subject_pk,
            &shared,
            (subject, PartyId::Ttp),
            serial,
            Some(counter.slot(PartyId::Ttp, Phase::Registration)),
        )?;
        self.shared_keys.insert(serial, shared);
        Ok(cert)
    }

    /// Dispute resolution. Verifies, in order: `C_at`, `C-Cert`, the
    /// encrypted signature (per the configured option), and `Sig_b`. All
    /// pass: the resolution is recorded and both DR-M2 and DR-M3 are
    /// emitted. Any failure: a rejection with a distinct reason, nothing
    /// recorded, nothing released.
    pub fn resolve(
        &mut self,
        msg: &MsgDrm1,
        counter: &mut ExpCounter,
    ) -> Result<TtpDecision, ProtocolError> {
        if let Some((sig_a, sig_b)) = self.ledger.get(&msg.c_cert.h_c) {
            return Ok(TtpDecision::Resolved {
                drm2: MsgDrm2 {
                    sig_b: sig_b.clone(),
                },
                drm3: MsgDrm3 {
                    sig_a: sig_a.clone(),
                },
            });
        }

        let pk_a = self.keyring.pk(PartyId::A)?.clone();
        let pk_b = self.keyring.pk(PartyId::B)?.clone();
        let pk_ca = self.keyring.pk(PartyId::Ca)?.clone();

        let own_pk = self.keyring.own.public.clone();
        let c_at_ok = verify_shared_key_cert(
            &msg.c_at,
            &own_pk,
            Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
        )?;
        if !c_at_ok {
            return Ok(TtpDecision::Rejected(DisputeRejectReason::CertInvalid));
        }
        let c_cert_ok = verify_contract_cert(
            &msg.c_cert,
            &pk_ca,
            Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
        )?;
        if !c_cert_ok {
            return Ok(TtpDecision::Rejected(DisputeRejectReason::CertInvalid));
        }

        let shared = self
            .shared_keys
            .get(&msg.c_at.serial)
            .ok_or(ProtocolError::MissingMaterial("shared private key"))?
            .clone();

        // Encrypted-signature check. Option (ii) recovers as it verifies;
        // option (i) defers the recovery decryption until after Sig_b.
        let mut recovered: Option<Signature> = None;
        match self.verify_option {
            TtpVerifyOption::DecryptAndVerify => {
                let value = match rsa_decrypt(
                    &msg.enc_sig_a.value,
                    &shared.private,
                    Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
                ) {
                    Ok(v) => v,
                    Err(CryptoError::CiphertextOutOfRange) => {
                        return Ok(TtpDecision::Rejected(
                            DisputeRejectReason::EncryptedSignatureInvalid,
                        ))
                    }
                    Err(e) => return Err(e.into()),
                };
                let sig_a = Signature {
                    value,
                    signer_modulus_bits: pk_a.n.bits(),
                };
                let ok = match verify_sig_digest(
                    &msg.c_cert.h_c,
                    &sig_a,
                    &pk_a,
                    Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
                ) {
                    Ok(ok) => ok,
                    Err(CryptoError::MalformedSignature) => false,
                    Err(e) => return Err(e.into()),
                };
                if !ok {
                    return Ok(TtpDecision::Rejected(
                        DisputeRejectReason::EncryptedSignatureInvalid,
                    ));
                }
                recovered = Some(sig_a);
            }
            TtpVerifyOption::HashCompare => {
                if encrypted_signature_digest(&msg.enc_sig_a) != msg.c_cert.he_sig {
                    return Ok(TtpDecision::Rejected(
                        DisputeRejectReason::EncryptedSignatureInvalid,
                    ));
                }
            }
        }

        let sig_b_ok = match verify_sig_digest(
            &msg.c_cert.h_c,
            &msg.sig_b,
            &pk_b,
            Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
        ) {
            Ok(ok) => ok,
            Err(CryptoError::MalformedSignature) => false,
            Err(e) => return Err(e.into()),
        };
        if !sig_b_ok && !self.skip_sig_b_verification {
            return Ok(TtpDecision::Rejected(DisputeRejectReason::SigBInvalid));
        }

        let sig_a = match recovered {
            Some(sig) => sig,
            None => {
                // Option (i): the hash binding vouched for the ciphertext;
                // decrypt now purely to recover the payload for DR-M3.
                let value = match rsa_decrypt(
                    &msg.enc_sig_a.value,
                    &shared.private,
                    Some(counter.slot(PartyId::Ttp, Phase::Dispute)),
                ) {
                    Ok(v) => v,
                    Err(CryptoError::CiphertextOutOfRange) => {
                        return Ok(TtpDecision::Rejected(
                            DisputeRejectReason::EncryptedSignatureInvalid,
                        ))
                    }
                    Err(e) => return Err(e.into()),
                };
                Signature {
                    value,
                    signer_modulus_bits: pk_a.n.bits(),
                }
            }
        };

        self.ledger
            .insert(msg.c_cert.h_c, sig_a.clone(), msg.sig_b.clone());
        Ok(TtpDecision::Resolved {
            drm2: MsgDrm2 {
                sig_b: msg.sig_b.clone(),
            },
            drm3: MsgDrm3 { sig_a },
        })
    }
}

/// The certificate authority. Issues one contract certificate per
/// exchange, with a serial never reused within a run context.
#[derive(Debug)]
pub struct CaRole {
    pub keyring: Keyring,
    next_serial: u64,
}

impl CaRole {
    pub fn new(keyring: Keyring) -> Self {
        CaRole {
            keyring,
            next_serial: 1,
        }
    }

    pub fn issue_contract_cert(
        &mut self,
        request: &CertRequest,
        counter: &mut ExpCounter,
    ) -> Result<(ContractCert, EncryptedSignature), ProtocolError> {
        let subject_pk = self.keyring.pk(PartyId::A)?.clone();
        let ttp_pk = self.keyring.pk(PartyId::Ttp)?.clone();
        let serial = self.next_serial;
        self.next_serial += 1;
        let issued = ca_issue_contract_cert(
            &self.keyring.own,
            request,
            &subject_pk,
            &ttp_pk,
            serial,
            Some(counter),
        )?;
        Ok(issued)
    }
}
