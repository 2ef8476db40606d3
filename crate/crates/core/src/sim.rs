//! Deterministic protocol simulation with pluggable adversary strategies.
//!
//! The transport is resilient: every sent message is delivered exactly
//! once, one tick after sending, to per-recipient FIFO queues drained in
//! fixed party order. An adversarial "not sending" is a strategy choosing
//! not to emit; the transport never drops. Scheduling is round-robin per
//! tick, so identical inputs give byte-identical transcripts.
//!
//! Strategies deviate only in their own sends and in when they contact
//! the TTP; verification logic and key material stay honest. They wrap
//! the honest state machines from the outside rather than being flags
//! inside them.

use std::collections::{BTreeMap, VecDeque};

use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use thiserror::Error;

use crate::certs::Contract;
use crate::crypto::{
    self, hash, keypair_from_rng, rsa_encrypt, CryptoError, EncryptedSignature, ExpCounter,
    RsaKeyPair, RsaPublicKey, Signature,
};
use crate::messages::{DisputeRejectReason, MsgDisputeRejected, MsgEm1, ProtocolMessage};
use crate::roles::{
    CaRole, Em1RejectReason, Em1Verdict, Em2Verdict, Em3Verdict, Keyring, PartyPhase, PartyState,
    ProtocolError, TtpDecision, TtpRole, TtpVerifyOption,
};
use crate::{Nat, PartyId, Phase};

pub const DEFAULT_KEY_BITS: u64 = 512;
pub const DEFAULT_TIMEOUT_TICKS: u64 = 10;
pub const DEFAULT_MAX_TICKS: u64 = 1000;

/// The contract both parties are assumed to have agreed on beforehand.
pub const DEFAULT_CONTRACT_TEXT: &str =
    "contract: party A delivers one shipment of widgets; party B pays 1000 units on receipt";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("strategy {strategy} does not apply to party {party}")]
    StrategyMismatch { strategy: Strategy, party: PartyId },
    #[error("simulation did not quiesce within {0} ticks")]
    Livelock(u64),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

/// Adversary catalog. The `A_*` deviations cover the initiator's ways to
/// cheat (bad opening message, bad or withheld final message); the `B_*`
/// deviations cover the responder's (wrong signature, early dispute).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Strategy {
    Honest,
    ABadEm1Cert,
    ABadEm1Contract,
    ABadEm1Ciphertext,
    ANoEm3,
    ABadEm3,
    BBadEm2,
    BEarlyDispute,
}

impl Strategy {
    pub const ALL: [Strategy; 8] = [
        Strategy::Honest,
        Strategy::ABadEm1Cert,
        Strategy::ABadEm1Contract,
        Strategy::ABadEm1Ciphertext,
        Strategy::ANoEm3,
        Strategy::ABadEm3,
        Strategy::BBadEm2,
        Strategy::BEarlyDispute,
    ];

    /// Strategies playable by the initiator.
    pub const FOR_A: [Strategy; 6] = [
        Strategy::Honest,
        Strategy::ABadEm1Cert,
        Strategy::ABadEm1Contract,
        Strategy::ABadEm1Ciphertext,
        Strategy::ANoEm3,
        Strategy::ABadEm3,
    ];

    /// Strategies playable by the responder.
    pub const FOR_B: [Strategy; 3] = [Strategy::Honest, Strategy::BBadEm2, Strategy::BEarlyDispute];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Honest => "HONEST",
            Strategy::ABadEm1Cert => "A_BAD_EM1_CERT",
            Strategy::ABadEm1Contract => "A_BAD_EM1_CONTRACT",
            Strategy::ABadEm1Ciphertext => "A_BAD_EM1_CIPHERTEXT",
            Strategy::ANoEm3 => "A_NO_EM3",
            Strategy::ABadEm3 => "A_BAD_EM3",
            Strategy::BBadEm2 => "B_BAD_EM2",
            Strategy::BEarlyDispute => "B_EARLY_DISPUTE",
        }
    }

    pub fn applies_to(self, party: PartyId) -> bool {
        match party {
            PartyId::A => Strategy::FOR_A.contains(&self),
            PartyId::B => Strategy::FOR_B.contains(&self),
            _ => false,
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown strategy {s:?}"))
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub strategy_a: Strategy,
    pub strategy_b: Strategy,
    pub seed: u64,
    pub key_bits: u64,
    pub timeout_ticks: u64,
    pub ttp_option: TtpVerifyOption,
    pub max_ticks: u64,
    /// Negative control: wire in a TTP that skips the `Sig_b` check, so
    /// the fairness harness can demonstrate it detects violations.
    pub broken_ttp: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            strategy_a: Strategy::Honest,
            strategy_b: Strategy::Honest,
            seed: 1,
            key_bits: DEFAULT_KEY_BITS,
            timeout_ticks: DEFAULT_TIMEOUT_TICKS,
            ttp_option: TtpVerifyOption::DecryptAndVerify,
            max_ticks: DEFAULT_MAX_TICKS,
            broken_ttp: false,
        }
    }
}

/// Key material for one scenario, all derived from the scenario seed.
#[derive(Debug, Clone)]
pub struct ScenarioKeys {
    pub a: RsaKeyPair,
    pub b: RsaKeyPair,
    pub ttp: RsaKeyPair,
    pub ca: RsaKeyPair,
    pub shared_key_seed: u64,
}

impl ScenarioKeys {
    pub fn generate(seed: u64, key_bits: u64) -> Result<Self, CryptoError> {
        use rand::SeedableRng;
        let mut master = ChaCha20Rng::seed_from_u64(seed);
        let (a, _, _) = keypair_from_rng(key_bits, &mut master)?;
        let (b, _, _) = keypair_from_rng(key_bits, &mut master)?;
        let (ttp, _, _) = keypair_from_rng(key_bits, &mut master)?;
        let (ca, _, _) = keypair_from_rng(key_bits, &mut master)?;
        let shared_key_seed = master.next_u64();
        Ok(ScenarioKeys {
            a,
            b,
            ttp,
            ca,
            shared_key_seed,
        })
    }

    pub fn public_directory(&self) -> BTreeMap<PartyId, RsaPublicKey> {
        BTreeMap::from([
            (PartyId::A, self.a.public.clone()),
            (PartyId::B, self.b.public.clone()),
            (PartyId::Ttp, self.ttp.public.clone()),
            (PartyId::Ca, self.ca.public.clone()),
        ])
    }

    pub fn keyring_for(&self, party: PartyId) -> Keyring {
        let own = match party {
            PartyId::A => self.a.clone(),
            PartyId::B => self.b.clone(),
            PartyId::Ttp => self.ttp.clone(),
            PartyId::Ca => self.ca.clone(),
        };
        Keyring::new(own, self.public_directory())
    }
}

/// One delivered message.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptEntry {
    pub from: PartyId,
    pub to: PartyId,
    pub msg: ProtocolMessage,
}

impl TranscriptEntry {
    pub fn label(&self) -> String {
        format!("{} {}->{}", self.msg.kind(), self.from, self.to)
    }
}

/// Resilient in-process transport: per-recipient FIFO queues, one-tick
/// delivery delay, no loss.
#[derive(Debug, Default)]
struct Transport {
    queues: BTreeMap<PartyId, VecDeque<(u64, Envelope)>>,
}

#[derive(Debug, Clone)]
struct Envelope {
    from: PartyId,
    to: PartyId,
    msg: ProtocolMessage,
}

impl Transport {
    fn send(&mut self, now: u64, env: Envelope) {
        self.queues
            .entry(env.to)
            .or_default()
            .push_back((now + 1, env));
    }

    fn take_ready(&mut self, party: PartyId, now: u64) -> Vec<Envelope> {
        let mut out = Vec::new();
        if let Some(queue) = self.queues.get_mut(&party) {
            while queue.front().is_some_and(|(ready, _)| *ready <= now) {
                out.push(queue.pop_front().unwrap().1);
            }
        }
        out
    }

    fn is_empty(&self) -> bool {
        self.queues.values().all(VecDeque::is_empty)
    }
}

/// Terminal result of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    /// Does A hold a signature by B that verifies over the agreed
    /// contract? Judged by verification, never by party self-reports.
    pub a_has_valid_sig_b: bool,
    pub b_has_valid_sig_a: bool,
    pub transcript: Vec<TranscriptEntry>,
    pub exp_counts: ExpCounter,
    pub terminal_phase_a: PartyPhase,
    pub terminal_phase_b: PartyPhase,
    /// Set when B refused E-M1.
    pub em1_reject: Option<Em1RejectReason>,
    /// Set when the TTP refused a dispute.
    pub dispute_rejected: Option<DisputeRejectReason>,
    /// Deterministic event notes, for rendering and debugging.
    pub notes: Vec<String>,
    /// Does B's own released signature (if any) verify over the agreed
    /// contract? Distinguishes a withheld signature from a garbage one.
    pub b_released_valid_sig: bool,
    /// Raw terminal possession, for assertions beyond the two booleans.
    pub a_obtained_sig: Option<Signature>,
    pub b_obtained_sig: Option<Signature>,
    pub b_own_sig: Option<Signature>,
}

impl ScenarioOutcome {
    pub fn exchange_message_count(&self) -> usize {
        self.transcript
            .iter()
            .filter(|e| e.msg.is_exchange())
            .count()
    }

    pub fn dispute_message_count(&self) -> usize {
        self.transcript
            .iter()
            .filter(|e| e.msg.is_dispute())
            .count()
    }

    /// Messages to or from the TTP; zero in the all-honest run.
    pub fn ttp_message_count(&self) -> usize {
        self.transcript
            .iter()
            .filter(|e| e.from == PartyId::Ttp || e.to == PartyId::Ttp)
            .count()
    }

    pub fn transcript_labels(&self) -> Vec<String> {
        self.transcript.iter().map(TranscriptEntry::label).collect()
    }
}

/// Fairness: either both parties got the counterpart signature or neither
/// did.
pub fn fairness_holds(outcome: &ScenarioOutcome) -> bool {
    outcome.a_has_valid_sig_b == outcome.b_has_valid_sig_a
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioOutcome, SimError> {
    let keys = ScenarioKeys::generate(config.seed, config.key_bits)?;
    let contract = Contract::new(DEFAULT_CONTRACT_TEXT.as_bytes()).expect("non-empty");
    run_scenario_with_keys(config, &keys, &contract)
}

/// Scenario run against caller-provided keys, so external processes and
/// oracle runs can share key material.
pub fn run_scenario_with_keys(
    config: &ScenarioConfig,
    keys: &ScenarioKeys,
    contract: &Contract,
) -> Result<ScenarioOutcome, SimError> {
    if !config.strategy_a.applies_to(PartyId::A) {
        return Err(SimError::StrategyMismatch {
            strategy: config.strategy_a,
            party: PartyId::A,
        });
    }
    if !config.strategy_b.applies_to(PartyId::B) {
        return Err(SimError::StrategyMismatch {
            strategy: config.strategy_b,
            party: PartyId::B,
        });
    }

    let mut ttp = TtpRole::new(
        keys.keyring_for(PartyId::Ttp),
        config.ttp_option,
        keys.shared_key_seed,
    );
    ttp.skip_sig_b_verification = config.broken_ttp;

    let runner = Runner {
        config: config.clone(),
        contract: contract.clone(),
        transport: Transport::default(),
        a: PartyState::new(PartyId::A, keys.keyring_for(PartyId::A), contract.clone()),
        b: PartyState::new(PartyId::B, keys.keyring_for(PartyId::B), contract.clone()),
        ttp,
        ca: CaRole::new(keys.keyring_for(PartyId::Ca)),
        counter: ExpCounter::new(),
        b_deadline: None,
        tick: 0,
        transcript: Vec::new(),
        notes: Vec::new(),
        em1_reject: None,
        dispute_rejected: None,
    };
    runner.run(keys)
}

struct Runner {
    config: ScenarioConfig,
    contract: Contract,
    transport: Transport,
    a: PartyState,
    b: PartyState,
    ttp: TtpRole,
    ca: CaRole,
    counter: ExpCounter,
    b_deadline: Option<u64>,
    tick: u64,
    transcript: Vec<TranscriptEntry>,
    notes: Vec<String>,
    em1_reject: Option<Em1RejectReason>,
    dispute_rejected: Option<DisputeRejectReason>,
}

impl Runner {
    fn run(mut self, keys: &ScenarioKeys) -> Result<ScenarioOutcome, SimError> {
        // Registration is honest for every strategy in the catalog: the
        // deviations tamper with messages, not with setup.
        self.a
            .pa_register(&mut self.ttp, &mut self.ca, &mut self.counter)?;
        self.send_em1()?;

        loop {
            self.tick += 1;
            if self.tick > self.config.max_ticks {
                return Err(SimError::Livelock(self.config.max_ticks));
            }
            for party in PartyId::ALL {
                for env in self.transport.take_ready(party, self.tick) {
                    self.transcript.push(TranscriptEntry {
                        from: env.from,
                        to: env.to,
                        msg: env.msg.clone(),
                    });
                    self.deliver(env)?;
                }
            }
            self.fire_b_timeout()?;
            if self.transport.is_empty() && self.b_deadline.is_none() {
                break;
            }
        }

        let judge = |sig: &Option<Signature>, pk: &RsaPublicKey| match sig {
            Some(sig) => crypto::verify_sig(self.contract.body(), sig, pk, None).unwrap_or(false),
            None => false,
        };
        let a_has_valid_sig_b = judge(&self.a.obtained_counterpart_sig, &keys.b.public);
        let b_has_valid_sig_a = judge(&self.b.obtained_counterpart_sig, &keys.a.public);
        let b_released_valid_sig = judge(&self.b.own_sig, &keys.b.public);

        Ok(ScenarioOutcome {
            a_has_valid_sig_b,
            b_has_valid_sig_a,
            transcript: self.transcript,
            exp_counts: self.counter,
            terminal_phase_a: self.a.phase,
            terminal_phase_b: self.b.phase,
            em1_reject: self.em1_reject,
            dispute_rejected: self.dispute_rejected,
            notes: self.notes,
            b_released_valid_sig,
            a_obtained_sig: self.a.obtained_counterpart_sig.clone(),
            b_obtained_sig: self.b.obtained_counterpart_sig.clone(),
            b_own_sig: self.b.own_sig.clone(),
        })
    }

    fn send(&mut self, from: PartyId, to: PartyId, msg: ProtocolMessage) {
        self.transport.send(self.tick, Envelope { from, to, msg });
    }

    fn note(&mut self, text: String) {
        self.notes.push(text);
    }

    fn send_em1(&mut self) -> Result<(), SimError> {
        let mut em1 = self.a.pa_build_em1(&mut self.counter)?;
        match self.config.strategy_a {
            Strategy::ABadEm1Cert => {
                em1.c_at.issuer_sig.value ^= Nat::from(1u32);
                self.note("A tampered with C_at before sending E-M1".into());
            }
            Strategy::ABadEm1Contract => {
                let mut body = em1.contract.body().to_vec();
                body.extend_from_slice(b" -- with unagreed amendments");
                em1.contract = Contract::new(body).expect("non-empty");
                self.note("A substituted the contract body in E-M1".into());
            }
            Strategy::ABadEm1Ciphertext => {
                let garbage = hash(b"not the signature").as_uint();
                let ciphertext = rsa_encrypt(
                    &garbage,
                    &em1.c_at.shared_pk,
                    Some(self.counter.slot(PartyId::A, Phase::Exchange)),
                )?;
                em1.enc_sig_a = EncryptedSignature { value: ciphertext };
                self.note("A replaced the encrypted signature in E-M1".into());
            }
            _ => {}
        }
        self.send(PartyId::A, PartyId::B, ProtocolMessage::Em1(em1));
        Ok(())
    }

    fn deliver(&mut self, env: Envelope) -> Result<(), SimError> {
        match (env.to, env.msg) {
            (PartyId::B, ProtocolMessage::Em1(msg)) => self.b_on_em1(&msg),
            (PartyId::A, ProtocolMessage::Em2(msg)) => {
                match self
                    .a
                    .pa_verify_em2_and_build_em3(&msg, &mut self.counter)?
                {
                    Em2Verdict::Abort => {
                        self.note("A found E-M2 invalid and aborted silently".into());
                        Ok(())
                    }
                    Em2Verdict::Release(em3) => {
                        match self.config.strategy_a {
                            Strategy::ANoEm3 => {
                                self.note("A withheld E-M3".into());
                            }
                            Strategy::ABadEm3 => {
                                let mut bad = em3;
                                bad.sig_a.value ^= Nat::from(1u32);
                                self.note("A sent a tampered E-M3".into());
                                self.send(PartyId::A, PartyId::B, ProtocolMessage::Em3(bad));
                            }
                            _ => self.send(PartyId::A, PartyId::B, ProtocolMessage::Em3(em3)),
                        }
                        Ok(())
                    }
                }
            }
            (PartyId::B, ProtocolMessage::Em3(msg)) => {
                match self.b.pb_verify_em3(&msg, &mut self.counter)? {
                    Em3Verdict::Accepted => {
                        self.b_deadline = None;
                        Ok(())
                    }
                    Em3Verdict::Rejected => {
                        self.b_deadline = None;
                        self.note("B rejected E-M3 and raised a dispute".into());
                        self.b_dispute()
                    }
                }
            }
            (PartyId::Ttp, ProtocolMessage::Drm1(msg)) => {
                match self.ttp.resolve(&msg, &mut self.counter)? {
                    TtpDecision::Resolved { drm2, drm3 } => {
                        self.send(PartyId::Ttp, PartyId::A, ProtocolMessage::Drm2(drm2));
                        self.send(PartyId::Ttp, PartyId::B, ProtocolMessage::Drm3(drm3));
                        Ok(())
                    }
                    TtpDecision::Rejected(reason) => {
                        self.dispute_rejected = Some(reason);
                        self.note(format!("TTP rejected the dispute: {}", reason.name()));
                        self.send(
                            PartyId::Ttp,
                            PartyId::B,
                            ProtocolMessage::DisputeRejected(MsgDisputeRejected { reason }),
                        );
                        Ok(())
                    }
                }
            }
            (PartyId::A, ProtocolMessage::Drm2(msg)) => {
                match self.a.pa_apply_drm2(&msg, &mut self.counter) {
                    Ok(()) => Ok(()),
                    Err(ProtocolError::TrustedPartyViolation(what)) => {
                        self.note(format!("A discarded DR-M2 with invalid material: {what}"));
                        Ok(())
                    }
                    Err(e) => Err(e.into()),
                }
            }
            (PartyId::B, ProtocolMessage::Drm3(msg)) => {
                match self.b.pb_apply_drm3(&msg, &mut self.counter) {
                    Ok(()) => Ok(()),
                    Err(ProtocolError::TrustedPartyViolation(what)) => {
                        self.note(format!("B discarded DR-M3 with invalid material: {what}"));
                        Ok(())
                    }
                    Err(e) => Err(e.into()),
                }
            }
            (PartyId::B, ProtocolMessage::DisputeRejected(_)) => {
                self.b.pb_apply_dispute_rejected()?;
                Ok(())
            }
            (to, msg) => {
                self.note(format!("unexpected {} delivered to {to}", msg.kind()));
                Ok(())
            }
        }
    }

    fn b_on_em1(&mut self, msg: &MsgEm1) -> Result<(), SimError> {
        match self.b.pb_verify_em1(msg, &mut self.counter)? {
            Em1Verdict::Reject(reason) => {
                self.em1_reject = Some(reason);
                self.note(format!("B rejected E-M1: {}", reason.name()));
                Ok(())
            }
            Em1Verdict::Accept => match self.config.strategy_b {
                Strategy::BEarlyDispute => {
                    // Cheat: contact the TTP before sending E-M2. The
                    // signature is computed now, so its cost lands in the
                    // dispute phase.
                    let sig_b = crypto::sign(
                        self.contract.body(),
                        &self.b.keyring.own.private,
                        Some(self.counter.slot(PartyId::B, Phase::Dispute)),
                    )?;
                    self.b.own_sig = Some(sig_b);
                    self.b.phase = PartyPhase::DisputePending;
                    let drm1 = self.b.pb_build_drm1()?;
                    self.note("B contacted the TTP before sending E-M2".into());
                    self.send(PartyId::B, PartyId::Ttp, ProtocolMessage::Drm1(drm1));
                    Ok(())
                }
                Strategy::BBadEm2 => {
                    // A genuine signature by B, but over the wrong bytes.
                    let mut wrong = self.contract.body().to_vec();
                    wrong.extend_from_slice(b" -- but on my terms");
                    let sig_b = crypto::sign(
                        &wrong,
                        &self.b.keyring.own.private,
                        Some(self.counter.slot(PartyId::B, Phase::Exchange)),
                    )?;
                    self.b.own_sig = Some(sig_b.clone());
                    self.b.phase = PartyPhase::Em2Sent;
                    self.b_deadline = Some(self.tick + self.config.timeout_ticks);
                    self.note("B sent a signature over the wrong contract in E-M2".into());
                    self.send(
                        PartyId::B,
                        PartyId::A,
                        ProtocolMessage::Em2(crate::messages::MsgEm2 { sig_b }),
                    );
                    Ok(())
                }
                _ => {
                    let em2 = self.b.pb_build_em2(&mut self.counter)?;
                    self.b_deadline = Some(self.tick + self.config.timeout_ticks);
                    self.send(PartyId::B, PartyId::A, ProtocolMessage::Em2(em2));
                    Ok(())
                }
            },
        }
    }

    fn b_dispute(&mut self) -> Result<(), SimError> {
        let drm1 = self.b.pb_build_drm1()?;
        self.send(PartyId::B, PartyId::Ttp, ProtocolMessage::Drm1(drm1));
        Ok(())
    }

    fn fire_b_timeout(&mut self) -> Result<(), SimError> {
        let Some(deadline) = self.b_deadline else {
            return Ok(());
        };
        if self.tick < deadline {
            return Ok(());
        }
        self.b_deadline = None;
        if self.b.phase == PartyPhase::Em2Sent {
            self.b.pb_mark_em3_timeout()?;
            self.note(format!(
                "B timed out waiting for E-M3 at tick {}",
                self.tick
            ));
            self.b_dispute()?;
        }
        Ok(())
    }
}

/// One cell of the strategy matrix.
#[derive(Debug)]
pub struct ScenarioRecord {
    pub strategy_a: Strategy,
    pub strategy_b: Strategy,
    pub outcome: ScenarioOutcome,
}

#[derive(Debug)]
pub struct MatrixReport {
    pub records: Vec<ScenarioRecord>,
    pub violations: Vec<String>,
}

impl MatrixReport {
    pub fn find(&self, a: Strategy, b: Strategy) -> Option<&ScenarioRecord> {
        self.records
            .iter()
            .find(|r| r.strategy_a == a && r.strategy_b == b)
    }
}

/// Runs the full cross-product of initiator and responder strategies,
/// including the combined both-dishonest pairs, and checks fairness on
/// every outcome. Key material is generated once and shared across
/// scenarios; each scenario still gets a fresh run context (fresh
/// certificates, serials, ledger, counters).
pub fn run_all_cases(base: &ScenarioConfig) -> Result<MatrixReport, SimError> {
    run_matrix(base, &Strategy::FOR_A, &Strategy::FOR_B)
}

pub fn run_matrix(
    base: &ScenarioConfig,
    a_strategies: &[Strategy],
    b_strategies: &[Strategy],
) -> Result<MatrixReport, SimError> {
    let keys = ScenarioKeys::generate(base.seed, base.key_bits)?;
    let contract = Contract::new(DEFAULT_CONTRACT_TEXT.as_bytes()).expect("non-empty");
    let mut records = Vec::new();
    let mut violations = Vec::new();
    for &strategy_a in a_strategies {
        for &strategy_b in b_strategies {
            let config = ScenarioConfig {
                strategy_a,
                strategy_b,
                ..base.clone()
            };
            let outcome = run_scenario_with_keys(&config, &keys, &contract)?;
            if !fairness_holds(&outcome) {
                violations.push(format!(
                    "A={} B={}: a_has_valid_sig_b={} b_has_valid_sig_a={}",
                    strategy_a, strategy_b, outcome.a_has_valid_sig_b, outcome.b_has_valid_sig_a
                ));
            }
            records.push(ScenarioRecord {
                strategy_a,
                strategy_b,
                outcome,
            });
        }
    }
    Ok(MatrixReport {
        records,
        violations,
    })
}

#[derive(Serialize)]
struct ExpCountJson {
    party: String,
    phase: String,
    count: u64,
}

#[derive(Serialize)]
struct ScenarioRecordJson {
    strategy_a: String,
    strategy_b: String,
    seed: u64,
    key_bits: u64,
    fair: bool,
    a_has_valid_sig_b: bool,
    b_has_valid_sig_a: bool,
    terminal_phase_a: String,
    terminal_phase_b: String,
    ttp_messages: usize,
    transcript: Vec<String>,
    exp_counts: Vec<ExpCountJson>,
    notes: Vec<String>,
}

/// Line-delimited structured record for one scenario. Deterministic:
/// identical configs and outcomes serialize to identical bytes.
pub fn scenario_record_line(config: &ScenarioConfig, outcome: &ScenarioOutcome) -> String {
    let record = ScenarioRecordJson {
        strategy_a: config.strategy_a.name().to_string(),
        strategy_b: config.strategy_b.name().to_string(),
        seed: config.seed,
        key_bits: config.key_bits,
        fair: fairness_holds(outcome),
        a_has_valid_sig_b: outcome.a_has_valid_sig_b,
        b_has_valid_sig_a: outcome.b_has_valid_sig_a,
        terminal_phase_a: outcome.terminal_phase_a.name().to_string(),
        terminal_phase_b: outcome.terminal_phase_b.name().to_string(),
        ttp_messages: outcome.ttp_message_count(),
        transcript: outcome.transcript_labels(),
        exp_counts: outcome
            .exp_counts
            .iter()
            .map(|((party, phase), count)| ExpCountJson {
                party: party.name().to_string(),
                phase: phase.name().to_string(),
                count,
            })
            .collect(),
        notes: outcome.notes.clone(),
    };
    serde_json::to_string(&record).expect("record serializes")
}

/// All record lines for a matrix run, in matrix order.
pub fn matrix_record_lines(base: &ScenarioConfig, report: &MatrixReport) -> Vec<String> {
    report
        .records
        .iter()
        .map(|r| {
            let config = ScenarioConfig {
                strategy_a: r.strategy_a,
                strategy_b: r.strategy_b,
                ..base.clone()
            };
            scenario_record_line(&config, &r.outcome)
        })
        .collect()
}

/// Published cost row this artifact reproduces: messages and modular
/// exponentiations for the exchange and dispute protocols.
pub const PUBLISHED_MESSAGES_EXCHANGE: u64 = 3;
pub const PUBLISHED_MESSAGES_DISPUTE: u64 = 3;
pub const PUBLISHED_EXP_EXCHANGE: u64 = 6;
pub const PUBLISHED_EXP_DISPUTE: u64 = 7;

#[derive(Debug, Clone, Serialize)]
pub struct MetricsCell {
    pub metric: &'static str,
    pub published: u64,
    pub measured: Option<u64>,
}

impl MetricsCell {
    pub fn matches(&self) -> Option<bool> {
        self.measured.map(|m| m == self.published)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub cells: Vec<MetricsCell>,
    pub itemization: Vec<String>,
    pub measured_breakdown: Vec<String>,
    pub deviation_note: Option<String>,
}

impl MetricsReport {
    /// True when every measured cell equals its published value.
    pub fn all_measured_match(&self) -> bool {
        self.cells.iter().all(|c| c.matches() != Some(false))
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<42} {:>9} {:>10}  {}\n",
            "metric", "measured", "published", "match"
        ));
        for cell in &self.cells {
            let measured = cell
                .measured
                .map(|m| m.to_string())
                .unwrap_or_else(|| "not-measured".to_string());
            let verdict = match cell.matches() {
                Some(true) => "yes",
                Some(false) => "MISMATCH",
                None => "-",
            };
            out.push_str(&format!(
                "{:<42} {:>9} {:>10}  {}\n",
                cell.metric, measured, cell.published, verdict
            ));
        }
        out.push_str("\ncounting model:\n");
        for line in &self.itemization {
            out.push_str(&format!("  {line}\n"));
        }
        if !self.measured_breakdown.is_empty() {
            out.push_str("\nmeasured per (party, phase):\n");
            for line in &self.measured_breakdown {
                out.push_str(&format!("  {line}\n"));
            }
        }
        if let Some(note) = &self.deviation_note {
            out.push_str(&format!("\nnote: {note}\n"));
        }
        out
    }
}

/// Builds the cost table from an honest run and a dispute run (the
/// initiator withholding E-M3). Either run may be absent; its cells are
/// then rendered as not-measured.
pub fn metrics_report(
    honest: Option<&ScenarioOutcome>,
    dispute: Option<&ScenarioOutcome>,
    ttp_option: TtpVerifyOption,
) -> MetricsReport {
    let cells = vec![
        MetricsCell {
            metric: "messages (exchange protocol)",
            published: PUBLISHED_MESSAGES_EXCHANGE,
            measured: honest.map(|o| o.exchange_message_count() as u64),
        },
        MetricsCell {
            metric: "messages (dispute resolution protocol)",
            published: PUBLISHED_MESSAGES_DISPUTE,
            measured: dispute.map(|o| o.dispute_message_count() as u64),
        },
        MetricsCell {
            metric: "mod. exponentiations (exchange protocol)",
            published: PUBLISHED_EXP_EXCHANGE,
            measured: honest.map(|o| o.exp_counts.phase_total(Phase::Exchange)),
        },
        MetricsCell {
            metric: "mod. exponentiations (dispute resolution)",
            published: PUBLISHED_EXP_DISPUTE,
            measured: dispute.map(|o| o.exp_counts.phase_total(Phase::Dispute)),
        },
    ];

    let mut itemization = vec![
        "exchange: A encrypts Sig_a(C) under pk_at (1)".to_string(),
        "exchange: B verifies C_at (1) and C-Cert (1)".to_string(),
        "exchange: B compares h(C) and h(enc.pk_at(Sig_a(C))) with the certificate (0)".to_string(),
        "exchange: B signs C (1)".to_string(),
        "exchange: A verifies Sig_b(C) (1)".to_string(),
        "exchange: B verifies Sig_a(C) (1)".to_string(),
    ];
    match ttp_option {
        TtpVerifyOption::DecryptAndVerify => itemization.extend([
            "dispute: TTP verifies C_at (1) and C-Cert (1)".to_string(),
            "dispute: TTP decrypts enc.pk_at(Sig_a(C)) with sk_at (1)".to_string(),
            "dispute: TTP verifies the recovered Sig_a(C) (1)".to_string(),
            "dispute: TTP verifies Sig_b(C) (1)".to_string(),
            "dispute: A verifies Sig_b(C) from DR-M2 (1)".to_string(),
            "dispute: B verifies Sig_a(C) from DR-M3 (1)".to_string(),
        ]),
        TtpVerifyOption::HashCompare => itemization.extend([
            "dispute: TTP verifies C_at (1) and C-Cert (1)".to_string(),
            "dispute: TTP compares h(enc.pk_at(Sig_a(C))) with heSig (0)".to_string(),
            "dispute: TTP verifies Sig_b(C) (1)".to_string(),
            "dispute: TTP decrypts for recovery only (1)".to_string(),
            "dispute: A verifies Sig_b(C) from DR-M2 (1)".to_string(),
            "dispute: B verifies Sig_a(C) from DR-M3 (1)".to_string(),
        ]),
    }

    let mut measured_breakdown = Vec::new();
    if let Some(honest) = honest {
        for ((party, phase), count) in honest.exp_counts.iter() {
            measured_breakdown.push(format!("honest run: {party} {phase}: {count}"));
        }
    }
    if let Some(dispute) = dispute {
        for ((party, phase), count) in dispute.exp_counts.iter() {
            measured_breakdown.push(format!("dispute run: {party} {phase}: {count}"));
        }
    }

    let deviation_note = match ttp_option {
        TtpVerifyOption::HashCompare => Some(
            "TTP verification option (i) deviates from the default counting model: \
             the hash comparison replaces one verification, so the dispute total is 6, not 7"
                .to_string(),
        ),
        TtpVerifyOption::DecryptAndVerify => None,
    };

    MetricsReport {
        cells,
        itemization,
        measured_breakdown,
        deviation_note,
    }
}

/// Record lines for the metrics report.
pub fn metrics_record_lines(report: &MetricsReport) -> Vec<String> {
    report
        .cells
        .iter()
        .map(|cell| serde_json::to_string(cell).expect("cell serializes"))
        .collect()
}
