//! TCP serve mode: one role per process.
//!
//! Wire format: each message is a 4-octet big-endian frame length followed
//! by the tagged message encoding from the core crate. Every send is one
//! short-lived connection to the recipient's listen address; replies come
//! back the same way. Malformed frames are logged and the connection
//! dropped, never applied.
//!
//! Strategies are restricted to honest behavior plus `a-no-em3`, which
//! makes the initiator exit right after sending E-M1 — the process-kill
//! stand-in for withholding the final message. Byte-level adversarial
//! messages are the in-process simulator's job, where they are injected
//! with full precision.
//!
//! Delivery here is only as resilient as the operator makes it: sends are
//! retried briefly, then logged and dropped. A dead peer (the killed
//! initiator) therefore stalls nobody.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::mpsc;
use std::thread;
use std::time::{Duration, Instant};

use clap::Args;

use fairsign_core::certs::{CertRequest, Contract};
use fairsign_core::crypto::{self, ExpCounter};
use fairsign_core::keyfile;
use fairsign_core::messages::{
    MsgDisputeRejected, MsgRegCertRequest, MsgRegCertResponse, MsgRegKeyRequest, MsgRegKeyResponse,
    ProtocolMessage,
};
use fairsign_core::roles::{
    CaRole, Em1Verdict, Em2Verdict, Em3Verdict, Keyring, PartyState, TtpDecision, TtpRole,
    TtpVerifyOption,
};
use fairsign_core::sim::DEFAULT_CONTRACT_TEXT;
use fairsign_core::{PartyId, Phase};

const MAX_FRAME_BYTES: u32 = 1 << 20;
const CONNECT_RETRIES: u32 = 20;
const CONNECT_RETRY_DELAY: Duration = Duration::from_millis(100);
/// Wait for setup traffic (registration, E-M1, dispute replies).
const LONG_WAIT: Duration = Duration::from_secs(30);

fn parse_role(s: &str) -> Result<PartyId, String> {
    match s.to_ascii_lowercase().as_str() {
        "a" => Ok(PartyId::A),
        "b" => Ok(PartyId::B),
        "ttp" => Ok(PartyId::Ttp),
        "ca" => Ok(PartyId::Ca),
        other => Err(format!("unknown role {other:?} (want a, b, ttp, ca)")),
    }
}

#[derive(Args)]
pub struct ServeArgs {
    /// Role to run: a, b, ttp, ca
    #[arg(long, value_parser = parse_role)]
    role: PartyId,
    /// Address to listen on, e.g. 127.0.0.1:4001
    #[arg(long)]
    listen: SocketAddr,
    #[arg(long)]
    peer_a: Option<SocketAddr>,
    #[arg(long)]
    peer_b: Option<SocketAddr>,
    #[arg(long)]
    peer_ttp: Option<SocketAddr>,
    #[arg(long)]
    peer_ca: Option<SocketAddr>,
    /// Directory with a.key, b.key, ttp.key, ca.key and their .pub
    /// siblings; the process loads its own pair plus all public keys
    #[arg(long, value_name = "DIR")]
    keys: PathBuf,
    /// The pre-agreed contract text (roles a and b)
    #[arg(long, default_value = DEFAULT_CONTRACT_TEXT)]
    contract: String,
    /// honest, or a-no-em3 (role a only): exit right after E-M1
    #[arg(long, default_value = "honest")]
    strategy: String,
    /// Wall-clock wait for E-M3 before the responder disputes
    #[arg(long, default_value_t = 3000)]
    timeout_ms: u64,
    /// TTP verification option for disputes: ii (default) or i
    #[arg(long, value_parser = crate::parse_ttp_option, default_value = "ii")]
    ttp_option: TtpVerifyOption,
    /// Seed for the TTP's shared-key generation (role ttp)
    #[arg(long, default_value_t = 1)]
    shared_key_seed: u64,
    /// Emit a structured record line per protocol message and a final
    /// possession line
    #[arg(long)]
    records: bool,
}

pub fn cmd_serve(args: ServeArgs) -> ExitCode {
    let honest = match args.strategy.as_str() {
        "honest" => true,
        "a-no-em3" => false,
        other => {
            eprintln!("error: unknown serve strategy {other:?} (want honest or a-no-em3)");
            return ExitCode::from(2);
        }
    };
    if !honest && args.role != PartyId::A {
        eprintln!("error: strategy a-no-em3 only applies to role a");
        return ExitCode::from(2);
    }

    let keyring = match load_keyring(&args.keys, args.role) {
        Ok(keyring) => keyring,
        Err(why) => {
            eprintln!("error: {why}");
            return ExitCode::from(2);
        }
    };

    let contract = match Contract::new(args.contract.clone().into_bytes()) {
        Ok(contract) => contract,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let listener = match TcpListener::bind(args.listen) {
        Ok(listener) => listener,
        Err(e) => {
            eprintln!("error: cannot bind {}: {e}", args.listen);
            return ExitCode::from(1);
        }
    };

    let mut peers = BTreeMap::new();
    for (party, addr) in [
        (PartyId::A, args.peer_a),
        (PartyId::B, args.peer_b),
        (PartyId::Ttp, args.peer_ttp),
        (PartyId::Ca, args.peer_ca),
    ] {
        if let Some(addr) = addr {
            peers.insert(party, addr);
        }
    }

    let (tx, rx) = mpsc::channel();
    spawn_inbox(args.role, listener, tx);

    let node = Node {
        role: args.role,
        peers,
        inbox: rx,
        records: args.records,
    };

    match args.role {
        PartyId::A => run_a(&node, keyring, contract, honest),
        PartyId::B => run_b(
            &node,
            keyring,
            contract,
            Duration::from_millis(args.timeout_ms),
        ),
        PartyId::Ttp => run_ttp(&node, keyring, args.ttp_option, args.shared_key_seed),
        PartyId::Ca => run_ca(&node, keyring),
    }
}

fn load_keyring(dir: &std::path::Path, role: PartyId) -> Result<Keyring, String> {
    let file_stem = |party: PartyId| party.name().to_ascii_lowercase();
    let own = keyfile::read_keypair(&dir.join(format!("{}.key", file_stem(role))))
        .map_err(|e| e.to_string())?;
    let mut peers = BTreeMap::new();
    for party in PartyId::ALL {
        let pk = keyfile::read_public_key(&dir.join(format!("{}.pub", file_stem(party))))
            .map_err(|e| e.to_string())?;
        peers.insert(party, pk);
    }
    Ok(Keyring::new(own, peers))
}

struct Node {
    role: PartyId,
    peers: BTreeMap<PartyId, SocketAddr>,
    inbox: mpsc::Receiver<ProtocolMessage>,
    records: bool,
}

impl Node {
    /// Records the protocol action, then delivers on a fresh connection
    /// with brief retries. Failed delivery is logged and dropped; the
    /// protocol action happened regardless.
    fn send(&self, to: PartyId, msg: &ProtocolMessage) {
        let bytes = msg.encode();
        self.record("send", msg, Some(to), &bytes);
        let Some(addr) = self.peers.get(&to) else {
            eprintln!(
                "[{}] no peer address for {to}; dropping {}",
                self.role,
                msg.kind()
            );
            return;
        };
        for attempt in 1..=CONNECT_RETRIES {
            match TcpStream::connect(addr) {
                Ok(mut stream) => {
                    if let Err(e) = write_frame(&mut stream, &bytes) {
                        eprintln!("[{}] writing {} to {to} failed: {e}", self.role, msg.kind());
                    }
                    return;
                }
                Err(e) if attempt == CONNECT_RETRIES => {
                    eprintln!(
                        "[{}] delivery of {} to {to} failed after {attempt} attempts: {e}",
                        self.role,
                        msg.kind()
                    );
                }
                Err(_) => thread::sleep(CONNECT_RETRY_DELAY),
            }
        }
    }

    fn recv(&self, timeout: Duration) -> Option<ProtocolMessage> {
        match self.inbox.recv_timeout(timeout) {
            Ok(msg) => {
                self.record("recv", &msg, None, &msg.encode());
                Some(msg)
            }
            Err(_) => None,
        }
    }

    fn recv_blocking(&self) -> Option<ProtocolMessage> {
        match self.inbox.recv() {
            Ok(msg) => {
                self.record("recv", &msg, None, &msg.encode());
                Some(msg)
            }
            Err(_) => None,
        }
    }

    /// Registration frames (tags 8..) are setup traffic and stay out of
    /// the records; the recorded stream is comparable with an in-process
    /// transcript.
    fn record(&self, event: &str, msg: &ProtocolMessage, to: Option<PartyId>, bytes: &[u8]) {
        if !self.records || msg.tag() >= 8 {
            return;
        }
        let line = match to {
            Some(to) => serde_json::json!({
                "event": event,
                "msg": msg.kind(),
                "to": to.name(),
                "bytes": hex::encode(bytes),
            }),
            None => serde_json::json!({
                "event": event,
                "msg": msg.kind(),
                "bytes": hex::encode(bytes),
            }),
        };
        println!("{line}");
    }

    fn record_possession(&self, valid: bool) {
        if !self.records {
            return;
        }
        println!(
            "{}",
            serde_json::json!({
                "event": "possession",
                "role": self.role.name(),
                "counterpart_sig_valid": valid,
            })
        );
    }
}

fn spawn_inbox(role: PartyId, listener: TcpListener, tx: mpsc::Sender<ProtocolMessage>) {
    thread::spawn(move || {
        for stream in listener.incoming() {
            match stream {
                Ok(stream) => {
                    let tx = tx.clone();
                    thread::spawn(move || read_connection(role, stream, tx));
                }
                Err(e) => eprintln!("[{role}] accept failed: {e}"),
            }
        }
    });
}

fn read_connection(role: PartyId, mut stream: TcpStream, tx: mpsc::Sender<ProtocolMessage>) {
    loop {
        match read_frame(&mut stream) {
            Ok(None) => return,
            Ok(Some(payload)) => match ProtocolMessage::decode(&payload) {
                Ok(msg) => {
                    if tx.send(msg).is_err() {
                        return;
                    }
                }
                Err(e) => {
                    eprintln!("[{role}] malformed frame ({e}); dropping connection");
                    return;
                }
            },
            Err(e) => {
                eprintln!("[{role}] read error ({e}); dropping connection");
                return;
            }
        }
    }
}

fn read_frame(stream: &mut TcpStream) -> io::Result<Option<Vec<u8>>> {
    let mut len_bytes = [0u8; 4];
    match stream.read_exact(&mut len_bytes) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let len = u32::from_be_bytes(len_bytes);
    if len > MAX_FRAME_BYTES {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("frame of {len} bytes exceeds the {MAX_FRAME_BYTES}-byte cap"),
        ));
    }
    let mut payload = vec![0u8; len as usize];
    stream.read_exact(&mut payload)?;
    Ok(Some(payload))
}

fn write_frame(stream: &mut TcpStream, payload: &[u8]) -> io::Result<()> {
    stream.write_all(&(payload.len() as u32).to_be_bytes())?;
    stream.write_all(payload)
}

fn fail(role: PartyId, why: &str) -> ExitCode {
    eprintln!("[{role}] {why}");
    ExitCode::from(1)
}

fn run_a(node: &Node, keyring: Keyring, contract: Contract, send_em3: bool) -> ExitCode {
    let role = PartyId::A;
    let mut counter = ExpCounter::new();
    let mut state = PartyState::new(role, keyring, contract.clone());

    // Registration round trips with the TTP and the CA.
    node.send(
        PartyId::Ttp,
        &ProtocolMessage::RegKeyRequest(MsgRegKeyRequest { subject: role }),
    );
    let c_at = loop {
        match node.recv(LONG_WAIT) {
            Some(ProtocolMessage::RegKeyResponse(MsgRegKeyResponse { c_at })) => break c_at,
            Some(other) => eprintln!("[{role}] ignoring {} during registration", other.kind()),
            None => return fail(role, "timed out waiting for the shared-key certificate"),
        }
    };
    let sig_a = match crypto::sign(
        contract.body(),
        &state.keyring.own.private,
        Some(counter.slot(role, Phase::Registration)),
    ) {
        Ok(sig) => sig,
        Err(e) => return fail(role, &format!("signing failed: {e}")),
    };
    node.send(
        PartyId::Ca,
        &ProtocolMessage::RegCertRequest(MsgRegCertRequest {
            sig_a: sig_a.clone(),
            contract: contract.clone(),
            c_at: c_at.clone(),
        }),
    );
    let c_cert = loop {
        match node.recv(LONG_WAIT) {
            Some(ProtocolMessage::RegCertResponse(MsgRegCertResponse { c_cert })) => break c_cert,
            Some(other) => eprintln!("[{role}] ignoring {} during registration", other.kind()),
            None => return fail(role, "timed out waiting for the contract certificate"),
        }
    };
    if let Err(e) = state.pa_complete_registration(c_at, c_cert, sig_a, &mut counter) {
        return fail(role, &format!("registration failed: {e}"));
    }

    let em1 = match state.pa_build_em1(&mut counter) {
        Ok(em1) => em1,
        Err(e) => return fail(role, &format!("cannot build E-M1: {e}")),
    };
    node.send(PartyId::B, &ProtocolMessage::Em1(em1));

    if !send_em3 {
        eprintln!("[{role}] a-no-em3: exiting after E-M1");
        return ExitCode::SUCCESS;
    }

    loop {
        match node.recv(LONG_WAIT) {
            Some(ProtocolMessage::Em2(msg)) => {
                return match state.pa_verify_em2_and_build_em3(&msg, &mut counter) {
                    Ok(Em2Verdict::Release(em3)) => {
                        node.send(PartyId::B, &ProtocolMessage::Em3(em3));
                        node.record_possession(true);
                        eprintln!("[{role}] done; holding the counterparty signature");
                        ExitCode::SUCCESS
                    }
                    Ok(Em2Verdict::Abort) => {
                        node.record_possession(false);
                        fail(role, "E-M2 invalid; aborted without sending E-M3")
                    }
                    Err(e) => fail(role, &format!("E-M2 handling failed: {e}")),
                };
            }
            Some(ProtocolMessage::Drm2(msg)) => {
                return match state.pa_apply_drm2(&msg, &mut counter) {
                    Ok(()) => {
                        node.record_possession(true);
                        eprintln!(
                            "[{role}] resolved via the TTP; holding the counterparty signature"
                        );
                        ExitCode::SUCCESS
                    }
                    Err(e) => fail(role, &format!("DR-M2 handling failed: {e}")),
                };
            }
            Some(other) => eprintln!("[{role}] ignoring {}", other.kind()),
            None => return fail(role, "timed out waiting for E-M2"),
        }
    }
}

fn run_b(node: &Node, keyring: Keyring, contract: Contract, em3_timeout: Duration) -> ExitCode {
    let role = PartyId::B;
    let mut counter = ExpCounter::new();
    let mut state = PartyState::new(role, keyring, contract);

    let em1 = loop {
        match node.recv(LONG_WAIT) {
            Some(ProtocolMessage::Em1(msg)) => break msg,
            Some(other) => eprintln!("[{role}] ignoring {} before E-M1", other.kind()),
            None => return fail(role, "timed out waiting for E-M1"),
        }
    };
    match state.pb_verify_em1(&em1, &mut counter) {
        Ok(Em1Verdict::Accept) => {}
        Ok(Em1Verdict::Reject(reason)) => {
            node.record_possession(false);
            return fail(
                role,
                &format!("rejected E-M1 ({}); nothing released", reason.name()),
            );
        }
        Err(e) => return fail(role, &format!("E-M1 handling failed: {e}")),
    }
    let em2 = match state.pb_build_em2(&mut counter) {
        Ok(em2) => em2,
        Err(e) => return fail(role, &format!("cannot build E-M2: {e}")),
    };
    node.send(PartyId::A, &ProtocolMessage::Em2(em2));

    let deadline = Instant::now() + em3_timeout;
    let dispute_now = loop {
        let remaining = deadline.saturating_duration_since(Instant::now());
        if remaining.is_zero() {
            if let Err(e) = state.pb_mark_em3_timeout() {
                return fail(role, &format!("timeout handling failed: {e}"));
            }
            eprintln!("[{role}] E-M3 never arrived; raising a dispute");
            break true;
        }
        match node.recv(remaining) {
            Some(ProtocolMessage::Em3(msg)) => match state.pb_verify_em3(&msg, &mut counter) {
                Ok(Em3Verdict::Accepted) => {
                    node.record_possession(true);
                    eprintln!("[{role}] done; holding the counterparty signature");
                    return ExitCode::SUCCESS;
                }
                Ok(Em3Verdict::Rejected) => {
                    eprintln!("[{role}] E-M3 invalid; raising a dispute");
                    break true;
                }
                Err(e) => return fail(role, &format!("E-M3 handling failed: {e}")),
            },
            Some(other) => eprintln!("[{role}] ignoring {}", other.kind()),
            None => {} // recv timed out; the deadline check above decides
        }
    };

    if dispute_now {
        let drm1 = match state.pb_build_drm1() {
            Ok(drm1) => drm1,
            Err(e) => return fail(role, &format!("cannot build DR-M1: {e}")),
        };
        node.send(PartyId::Ttp, &ProtocolMessage::Drm1(drm1));
        loop {
            match node.recv(LONG_WAIT) {
                Some(ProtocolMessage::Drm3(msg)) => {
                    return match state.pb_apply_drm3(&msg, &mut counter) {
                        Ok(()) => {
                            node.record_possession(true);
                            eprintln!("[{role}] recovered the counterparty signature via the TTP");
                            ExitCode::SUCCESS
                        }
                        Err(e) => fail(role, &format!("DR-M3 handling failed: {e}")),
                    };
                }
                Some(ProtocolMessage::DisputeRejected(MsgDisputeRejected { reason })) => {
                    let _ = state.pb_apply_dispute_rejected();
                    node.record_possession(false);
                    return fail(role, &format!("dispute rejected ({})", reason.name()));
                }
                Some(other) => eprintln!("[{role}] ignoring {}", other.kind()),
                None => return fail(role, "timed out waiting for the dispute resolution"),
            }
        }
    }
    unreachable!("the E-M3 loop either returns or disputes");
}

fn run_ttp(
    node: &Node,
    keyring: Keyring,
    option: TtpVerifyOption,
    shared_key_seed: u64,
) -> ExitCode {
    let role = PartyId::Ttp;
    let mut ttp = TtpRole::new(keyring, option, shared_key_seed);
    let mut counter = ExpCounter::new();
    // Serves until killed; the TTP has no notion of "done".
    loop {
        let Some(msg) = node.recv_blocking() else {
            return ExitCode::SUCCESS;
        };
        match msg {
            ProtocolMessage::RegKeyRequest(MsgRegKeyRequest { subject }) => {
                match ttp.establish_shared_key(subject, &mut counter) {
                    Ok(c_at) => node.send(
                        subject,
                        &ProtocolMessage::RegKeyResponse(MsgRegKeyResponse { c_at }),
                    ),
                    Err(e) => eprintln!("[{role}] shared-key issuance failed: {e}"),
                }
            }
            ProtocolMessage::Drm1(msg) => match ttp.resolve(&msg, &mut counter) {
                Ok(TtpDecision::Resolved { drm2, drm3 }) => {
                    node.send(PartyId::A, &ProtocolMessage::Drm2(drm2));
                    node.send(PartyId::B, &ProtocolMessage::Drm3(drm3));
                }
                Ok(TtpDecision::Rejected(reason)) => {
                    node.send(
                        PartyId::B,
                        &ProtocolMessage::DisputeRejected(MsgDisputeRejected { reason }),
                    );
                }
                Err(e) => eprintln!("[{role}] dispute handling failed: {e}"),
            },
            other => eprintln!("[{role}] ignoring {}", other.kind()),
        }
    }
}

fn run_ca(node: &Node, keyring: Keyring) -> ExitCode {
    let role = PartyId::Ca;
    let mut ca = CaRole::new(keyring);
    let mut counter = ExpCounter::new();
    loop {
        let Some(msg) = node.recv_blocking() else {
            return ExitCode::SUCCESS;
        };
        match msg {
            ProtocolMessage::RegCertRequest(MsgRegCertRequest {
                sig_a,
                contract,
                c_at,
            }) => {
                let request = CertRequest {
                    sig_a,
                    contract,
                    c_at,
                };
                match ca.issue_contract_cert(&request, &mut counter) {
                    Ok((c_cert, _)) => node.send(
                        PartyId::A,
                        &ProtocolMessage::RegCertResponse(MsgRegCertResponse { c_cert }),
                    ),
                    Err(e) => eprintln!("[{role}] certification rejected: {e}"),
                }
            }
            other => eprintln!("[{role}] ignoring {}", other.kind()),
        }
    }
}
