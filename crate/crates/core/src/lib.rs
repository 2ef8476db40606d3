//! Fair contract signing over RSA with an offline trusted third party.
//!
//! Two parties sign a pre-agreed contract and exchange the signatures in
//! three messages. At registration a certificate authority issues a
//! contract certificate binding the hash of the contract and the hash of
//! the initiator's signature encrypted under a public key shared with the
//! TTP. The responder can therefore verify the encrypted signature
//! offline, and the TTP can recover it by decryption if the initiator
//! evades. Either both parties end up holding each other's signature or
//! neither does.
//!
//! Module map:
//! - [`arith`]: modular exponentiation, generic over the integer type
//! - [`crypto`]: textbook RSA, SHA-256 hashing, and the exponentiation counter
//! - [`encoding`]: canonical length-prefixed binary encoding
//! - [`certs`]: the shared-key certificate and the contract certificate
//! - [`messages`]: the protocol messages and their wire form
//! - [`roles`]: state machines for the two parties, the TTP, and the CA
//! - [`sim`]: deterministic transport, adversary strategies, fairness checks
//! - [`config`]: plain-text scenario configuration
//! - [`keyfile`]: key serialization for the CLI

pub mod arith;
pub mod certs;
pub mod config;
pub mod crypto;
pub mod encoding;
pub mod keyfile;
pub mod messages;
pub mod roles;
pub mod sim;

/// Natural number used for all protocol arithmetic.
///
/// The arithmetic core in [`arith`] is generic over the scalar; everything
/// above it runs on this concrete type.
pub type Nat = num_bigint::BigUint;

/// Protocol participants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PartyId {
    /// Initiator; signs first, under cover of the encrypted signature.
    A,
    /// Responder; verifies E-M1 before releasing anything.
    B,
    /// Offline trusted third party; passive unless a dispute is raised.
    Ttp,
    /// Certificate authority issuing contract certificates.
    Ca,
}

impl PartyId {
    pub const ALL: [PartyId; 4] = [PartyId::A, PartyId::B, PartyId::Ttp, PartyId::Ca];

    /// Single-octet wire identifier.
    pub fn octet(self) -> u8 {
        match self {
            PartyId::A => 1,
            PartyId::B => 2,
            PartyId::Ttp => 3,
            PartyId::Ca => 4,
        }
    }

    pub fn from_octet(octet: u8) -> Option<Self> {
        match octet {
            1 => Some(PartyId::A),
            2 => Some(PartyId::B),
            3 => Some(PartyId::Ttp),
            4 => Some(PartyId::Ca),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartyId::A => "A",
            PartyId::B => "B",
            PartyId::Ttp => "TTP",
            PartyId::Ca => "CA",
        }
    }
}

impl std::fmt::Display for PartyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Cost-accounting phase a modular exponentiation is booked to.
///
/// The counter exists to reproduce the protocol's cost table, which covers
/// the exchange and dispute protocols; setup costs (key generation,
/// primality tests) are never booked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Phase {
    Registration,
    Exchange,
    Dispute,
}

impl Phase {
    pub const ALL: [Phase; 3] = [Phase::Registration, Phase::Exchange, Phase::Dispute];

    pub fn name(self) -> &'static str {
        match self {
            Phase::Registration => "registration",
            Phase::Exchange => "exchange",
            Phase::Dispute => "dispute",
        }
    }
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub use certs::{CertError, Contract, ContractCert, SharedKeyCert};
pub use crypto::{
    CounterSlot, CryptoError, Digest, EncryptedSignature, ExpCounter, RsaKeyPair, RsaPrivateKey,
    RsaPublicKey, Signature,
};
pub use messages::ProtocolMessage;
pub use roles::{PartyPhase, PartyState, ProtocolError, TtpVerifyOption};
pub use sim::{run_all_cases, run_scenario, ScenarioConfig, ScenarioOutcome, Strategy};
