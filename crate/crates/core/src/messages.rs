//! Protocol messages and their wire form.
//!
//! A serialized message is a 1-octet type tag followed by the message's
//! fields in declared order, each length-prefixed per [`crate::encoding`].
//! Tags 1 through 6 are the exchange and dispute messages. Tags 7 and up
//! are plumbing this artifact adds: an explicit dispute rejection so runs
//! terminate deterministically, and the registration round trips needed
//! when the roles run as separate processes.

use crate::certs::{Contract, ContractCert, SharedKeyCert};
use crate::crypto::{EncryptedSignature, Signature};
use crate::encoding::{put_bytes, put_uint, DecodeError, Reader};
use crate::PartyId;

/// `[E-M1]  A -> B:  C + C_at + C-Cert + enc.pk_at(Sig_a(C))`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgEm1 {
    pub contract: Contract,
    pub c_at: SharedKeyCert,
    pub c_cert: ContractCert,
    pub enc_sig_a: EncryptedSignature,
}

/// `[E-M2]  B -> A:  Sig_b(C)`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgEm2 {
    pub sig_b: Signature,
}

/// `[E-M3]  A -> B:  Sig_a(C)`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgEm3 {
    pub sig_a: Signature,
}

/// `[DR-M1]  B -> TTP:  C + C_at + C-Cert + enc.pk_at(Sig_a(C)) + Sig_b(C)`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgDrm1 {
    pub contract: Contract,
    pub c_at: SharedKeyCert,
    pub c_cert: ContractCert,
    pub enc_sig_a: EncryptedSignature,
    pub sig_b: Signature,
}

/// `[DR-M2]  TTP -> A:  Sig_b(C)` — the fairness countermeasure against a
/// responder who disputes before sending E-M2.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgDrm2 {
    pub sig_b: Signature,
}

/// `[DR-M3]  TTP -> B:  Sig_a(C)`
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgDrm3 {
    pub sig_a: Signature,
}

/// Why the TTP refused a dispute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisputeRejectReason {
    CertInvalid,
    EncryptedSignatureInvalid,
    SigBInvalid,
}

impl DisputeRejectReason {
    pub fn octet(self) -> u8 {
        match self {
            DisputeRejectReason::CertInvalid => 1,
            DisputeRejectReason::EncryptedSignatureInvalid => 2,
            DisputeRejectReason::SigBInvalid => 3,
        }
    }

    pub fn from_octet(octet: u8) -> Option<Self> {
        match octet {
            1 => Some(DisputeRejectReason::CertInvalid),
            2 => Some(DisputeRejectReason::EncryptedSignatureInvalid),
            3 => Some(DisputeRejectReason::SigBInvalid),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DisputeRejectReason::CertInvalid => "cert-invalid",
            DisputeRejectReason::EncryptedSignatureInvalid => "encrypted-signature-invalid",
            DisputeRejectReason::SigBInvalid => "sig-b-invalid",
        }
    }
}

/// TTP -> B: dispute refused. Invented so a rejected dispute terminates
/// the run instead of leaving the disputant waiting.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgDisputeRejected {
    pub reason: DisputeRejectReason,
}

/// A -> TTP: request a shared public key (serve-mode registration).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgRegKeyRequest {
    pub subject: PartyId,
}

/// TTP -> A: the issued `C_at`; the shared public key travels inside it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgRegKeyResponse {
    pub c_at: SharedKeyCert,
}

/// A -> CA: `Sig_a(C) + C + C_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgRegCertRequest {
    pub sig_a: Signature,
    pub contract: Contract,
    pub c_at: SharedKeyCert,
}

/// CA -> A: the issued `C-Cert`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MsgRegCertResponse {
    pub c_cert: ContractCert,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProtocolMessage {
    Em1(MsgEm1),
    Em2(MsgEm2),
    Em3(MsgEm3),
    Drm1(MsgDrm1),
    Drm2(MsgDrm2),
    Drm3(MsgDrm3),
    DisputeRejected(MsgDisputeRejected),
    RegKeyRequest(MsgRegKeyRequest),
    RegKeyResponse(MsgRegKeyResponse),
    RegCertRequest(MsgRegCertRequest),
    RegCertResponse(MsgRegCertResponse),
}

impl ProtocolMessage {
    pub fn tag(&self) -> u8 {
        match self {
            ProtocolMessage::Em1(_) => 1,
            ProtocolMessage::Em2(_) => 2,
            ProtocolMessage::Em3(_) => 3,
            ProtocolMessage::Drm1(_) => 4,
            ProtocolMessage::Drm2(_) => 5,
            ProtocolMessage::Drm3(_) => 6,
            ProtocolMessage::DisputeRejected(_) => 7,
            ProtocolMessage::RegKeyRequest(_) => 8,
            ProtocolMessage::RegKeyResponse(_) => 9,
            ProtocolMessage::RegCertRequest(_) => 10,
            ProtocolMessage::RegCertResponse(_) => 11,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolMessage::Em1(_) => "EM1",
            ProtocolMessage::Em2(_) => "EM2",
            ProtocolMessage::Em3(_) => "EM3",
            ProtocolMessage::Drm1(_) => "DRM1",
            ProtocolMessage::Drm2(_) => "DRM2",
            ProtocolMessage::Drm3(_) => "DRM3",
            ProtocolMessage::DisputeRejected(_) => "DISPUTE_REJECTED",
            ProtocolMessage::RegKeyRequest(_) => "REG_KEY_REQUEST",
            ProtocolMessage::RegKeyResponse(_) => "REG_KEY_RESPONSE",
            ProtocolMessage::RegCertRequest(_) => "REG_CERT_REQUEST",
            ProtocolMessage::RegCertResponse(_) => "REG_CERT_RESPONSE",
        }
    }

    /// E-M1 through E-M3.
    pub fn is_exchange(&self) -> bool {
        matches!(
            self,
            ProtocolMessage::Em1(_) | ProtocolMessage::Em2(_) | ProtocolMessage::Em3(_)
        )
    }

    /// DR-M1 through DR-M3 plus the rejection reply.
    pub fn is_dispute(&self) -> bool {
        matches!(
            self,
            ProtocolMessage::Drm1(_)
                | ProtocolMessage::Drm2(_)
                | ProtocolMessage::Drm3(_)
                | ProtocolMessage::DisputeRejected(_)
        )
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = vec![self.tag()];
        match self {
            ProtocolMessage::Em1(m) => {
                put_bytes(&mut out, m.contract.body());
                put_bytes(&mut out, &m.c_at.to_bytes());
                put_bytes(&mut out, &m.c_cert.to_bytes());
                put_uint(&mut out, &m.enc_sig_a.value);
            }
            ProtocolMessage::Em2(m) => put_bytes(&mut out, &m.sig_b.to_bytes()),
            ProtocolMessage::Em3(m) => put_bytes(&mut out, &m.sig_a.to_bytes()),
            ProtocolMessage::Drm1(m) => {
                put_bytes(&mut out, m.contract.body());
                put_bytes(&mut out, &m.c_at.to_bytes());
                put_bytes(&mut out, &m.c_cert.to_bytes());
                put_uint(&mut out, &m.enc_sig_a.value);
                put_bytes(&mut out, &m.sig_b.to_bytes());
            }
            ProtocolMessage::Drm2(m) => put_bytes(&mut out, &m.sig_b.to_bytes()),
            ProtocolMessage::Drm3(m) => put_bytes(&mut out, &m.sig_a.to_bytes()),
            ProtocolMessage::DisputeRejected(m) => put_bytes(&mut out, &[m.reason.octet()]),
            ProtocolMessage::RegKeyRequest(m) => put_bytes(&mut out, &[m.subject.octet()]),
            ProtocolMessage::RegKeyResponse(m) => put_bytes(&mut out, &m.c_at.to_bytes()),
            ProtocolMessage::RegCertRequest(m) => {
                put_bytes(&mut out, &m.sig_a.to_bytes());
                put_bytes(&mut out, m.contract.body());
                put_bytes(&mut out, &m.c_at.to_bytes());
            }
            ProtocolMessage::RegCertResponse(m) => put_bytes(&mut out, &m.c_cert.to_bytes()),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let tag = r.take_u8()?;
        let msg = match tag {
            1 => ProtocolMessage::Em1(MsgEm1 {
                contract: take_contract(&mut r)?,
                c_at: take_shared_cert(&mut r)?,
                c_cert: take_contract_cert(&mut r)?,
                enc_sig_a: EncryptedSignature {
                    value: r.take_uint()?,
                },
            }),
            2 => ProtocolMessage::Em2(MsgEm2 {
                sig_b: take_sig(&mut r)?,
            }),
            3 => ProtocolMessage::Em3(MsgEm3 {
                sig_a: take_sig(&mut r)?,
            }),
            4 => ProtocolMessage::Drm1(MsgDrm1 {
                contract: take_contract(&mut r)?,
                c_at: take_shared_cert(&mut r)?,
                c_cert: take_contract_cert(&mut r)?,
                enc_sig_a: EncryptedSignature {
                    value: r.take_uint()?,
                },
                sig_b: take_sig(&mut r)?,
            }),
            5 => ProtocolMessage::Drm2(MsgDrm2 {
                sig_b: take_sig(&mut r)?,
            }),
            6 => ProtocolMessage::Drm3(MsgDrm3 {
                sig_a: take_sig(&mut r)?,
            }),
            7 => {
                let field = r.take_bytes()?;
                let octet = *field.first().ok_or(DecodeError::Truncated)?;
                let reason = DisputeRejectReason::from_octet(octet)
                    .ok_or(DecodeError::UnknownReason(octet))?;
                ProtocolMessage::DisputeRejected(MsgDisputeRejected { reason })
            }
            8 => {
                let field = r.take_bytes()?;
                let octet = *field.first().ok_or(DecodeError::Truncated)?;
                let subject = PartyId::from_octet(octet).ok_or(DecodeError::UnknownParty(octet))?;
                ProtocolMessage::RegKeyRequest(MsgRegKeyRequest { subject })
            }
            9 => ProtocolMessage::RegKeyResponse(MsgRegKeyResponse {
                c_at: take_shared_cert(&mut r)?,
            }),
            10 => ProtocolMessage::RegCertRequest(MsgRegCertRequest {
                sig_a: take_sig(&mut r)?,
                contract: take_contract(&mut r)?,
                c_at: take_shared_cert(&mut r)?,
            }),
            11 => ProtocolMessage::RegCertResponse(MsgRegCertResponse {
                c_cert: take_contract_cert(&mut r)?,
            }),
            other => return Err(DecodeError::UnknownTag(other)),
        };
        r.finish()?;
        Ok(msg)
    }
}

fn take_contract(r: &mut Reader<'_>) -> Result<Contract, DecodeError> {
    Contract::new(r.take_bytes()?).map_err(|_| DecodeError::EmptyContract)
}

fn take_sig(r: &mut Reader<'_>) -> Result<Signature, DecodeError> {
    Signature::from_bytes(r.take_bytes()?)
}

fn take_shared_cert(r: &mut Reader<'_>) -> Result<SharedKeyCert, DecodeError> {
    SharedKeyCert::from_bytes(r.take_bytes()?).map_err(cert_decode_err)
}

fn take_contract_cert(r: &mut Reader<'_>) -> Result<ContractCert, DecodeError> {
    ContractCert::from_bytes(r.take_bytes()?).map_err(cert_decode_err)
}

fn cert_decode_err(err: crate::certs::CertError) -> DecodeError {
    match err {
        crate::certs::CertError::Malformed(e) => e,
        _ => DecodeError::Truncated,
    }
}
