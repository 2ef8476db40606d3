//! Multi-process smoke test: the four roles as separate processes over
//! TCP, checked against in-process oracle runs of the same scenarios with
//! the same key material. Prints one acceptance line for the criterion it
//! implements.

use std::io::Read;
use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use fairsign_core::certs::Contract;
use fairsign_core::keyfile;
use fairsign_core::roles::TtpVerifyOption;
use fairsign_core::sim::{
    run_scenario_with_keys, ScenarioConfig, ScenarioKeys, ScenarioOutcome, Strategy,
};
use fairsign_core::PartyId;

const SHARED_KEY_SEED: u64 = 99;
const CONTRACT: &str = "serve-mode smoke contract: a ships, b pays";

fn fairsign() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fairsign"))
}

fn free_addr() -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    format!("127.0.0.1:{}", addr.port())
}

fn keygen(dir: &Path, name: &str, seed: u64) {
    let out = dir.join(format!("{name}.key"));
    let output = fairsign()
        .args([
            "keygen",
            "--bits",
            "512",
            "--seed",
            &seed.to_string(),
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .expect("keygen runs");
    assert!(output.status.success(), "keygen for {name} failed");
}

struct Proc {
    name: &'static str,
    child: Option<Child>,
}

impl Proc {
    fn spawn(name: &'static str, mut command: Command) -> Self {
        let child = command
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap_or_else(|e| panic!("spawning {name} failed: {e}"));
        Proc {
            name,
            child: Some(child),
        }
    }

    /// Polls until exit or the deadline, then returns (code, stdout).
    fn wait_and_read(mut self, timeout: Duration) -> (i32, String) {
        let child = self.child.as_mut().expect("child running");
        let deadline = Instant::now() + timeout;
        loop {
            match child.try_wait().expect("try_wait") {
                Some(status) => {
                    let mut child = self.child.take().unwrap();
                    let mut stdout = String::new();
                    child
                        .stdout
                        .take()
                        .unwrap()
                        .read_to_string(&mut stdout)
                        .expect("read stdout");
                    let _ = child.wait();
                    return (status.code().unwrap_or(-1), stdout);
                }
                None if Instant::now() > deadline => {
                    panic!("{} did not exit within {timeout:?}", self.name);
                }
                None => std::thread::sleep(Duration::from_millis(50)),
            }
        }
    }

    /// Kills a long-running role and returns what it printed.
    fn stop_and_read(mut self) -> String {
        let mut child = self.child.take().expect("child running");
        let _ = child.kill();
        let _ = child.wait();
        let mut stdout = String::new();
        child
            .stdout
            .take()
            .unwrap()
            .read_to_string(&mut stdout)
            .expect("read stdout");
        stdout
    }
}

impl Drop for Proc {
    fn drop(&mut self) {
        if let Some(child) = &mut self.child {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

/// (event, message kind, hex bytes) triples.
type View = Vec<(String, String, String)>;

fn parse_records(stdout: &str) -> (View, Option<bool>) {
    let mut view = Vec::new();
    let mut possession = None;
    for line in stdout.lines() {
        let value: serde_json::Value =
            serde_json::from_str(line).unwrap_or_else(|e| panic!("bad record {line:?}: {e}"));
        match value["event"].as_str() {
            Some(event @ ("send" | "recv")) => view.push((
                event.to_string(),
                value["msg"].as_str().unwrap().to_string(),
                value["bytes"].as_str().unwrap().to_string(),
            )),
            Some("possession") => possession = value["counterpart_sig_valid"].as_bool(),
            other => panic!("unexpected record event {other:?} in {line:?}"),
        }
    }
    (view, possession)
}

/// Projects the oracle transcript onto one party's local view.
fn oracle_view(outcome: &ScenarioOutcome, party: PartyId) -> View {
    outcome
        .transcript
        .iter()
        .filter_map(|entry| {
            let event = if entry.to == party {
                "recv"
            } else if entry.from == party {
                "send"
            } else {
                return None;
            };
            Some((
                event.to_string(),
                entry.msg.kind().to_string(),
                hex::encode(entry.msg.encode()),
            ))
        })
        .collect()
}

struct Cluster {
    addr_a: String,
    addr_b: String,
    addr_ttp: String,
    addr_ca: String,
    keys_dir: String,
}

impl Cluster {
    fn serve(&self, role: &str, listen: &str, extra: &[&str]) -> Command {
        let mut command = fairsign();
        command.args([
            "serve",
            "--role",
            role,
            "--listen",
            listen,
            "--keys",
            &self.keys_dir,
            "--contract",
            CONTRACT,
            "--records",
        ]);
        command.args(extra);
        command
    }

    /// Starts TTP, CA, and B; returns them with B's spawn command applied.
    fn start_support(&self, b_timeout_ms: u64) -> (Proc, Proc, Proc) {
        let ttp = Proc::spawn(
            "ttp",
            self.serve(
                "ttp",
                &self.addr_ttp,
                &[
                    "--peer-a",
                    &self.addr_a,
                    "--peer-b",
                    &self.addr_b,
                    "--shared-key-seed",
                    &SHARED_KEY_SEED.to_string(),
                ],
            ),
        );
        let ca = Proc::spawn(
            "ca",
            self.serve("ca", &self.addr_ca, &["--peer-a", &self.addr_a]),
        );
        let b = Proc::spawn(
            "b",
            self.serve(
                "b",
                &self.addr_b,
                &[
                    "--peer-a",
                    &self.addr_a,
                    "--peer-ttp",
                    &self.addr_ttp,
                    "--timeout-ms",
                    &b_timeout_ms.to_string(),
                ],
            ),
        );
        std::thread::sleep(Duration::from_millis(300));
        (ttp, ca, b)
    }

    fn a_command(&self, strategy: &str) -> Command {
        self.serve(
            "a",
            &self.addr_a,
            &[
                "--peer-b",
                &self.addr_b,
                "--peer-ttp",
                &self.addr_ttp,
                "--peer-ca",
                &self.addr_ca,
                "--strategy",
                strategy,
            ],
        )
    }
}

fn oracle(keys: &ScenarioKeys, strategy_a: Strategy) -> ScenarioOutcome {
    let config = ScenarioConfig {
        strategy_a,
        strategy_b: Strategy::Honest,
        ttp_option: TtpVerifyOption::DecryptAndVerify,
        ..ScenarioConfig::default()
    };
    let contract = Contract::new(CONTRACT.as_bytes().to_vec()).unwrap();
    run_scenario_with_keys(&config, keys, &contract).expect("oracle run")
}

#[test]
fn criterion_7_multi_process_smoke() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", 11), ("b", 12), ("ttp", 13), ("ca", 14)] {
        keygen(dir.path(), name, seed);
    }
    let keys = ScenarioKeys {
        a: keyfile::read_keypair(&dir.path().join("a.key")).unwrap(),
        b: keyfile::read_keypair(&dir.path().join("b.key")).unwrap(),
        ttp: keyfile::read_keypair(&dir.path().join("ttp.key")).unwrap(),
        ca: keyfile::read_keypair(&dir.path().join("ca.key")).unwrap(),
        shared_key_seed: SHARED_KEY_SEED,
    };

    // Honest exchange across four processes.
    {
        let cluster = Cluster {
            addr_a: free_addr(),
            addr_b: free_addr(),
            addr_ttp: free_addr(),
            addr_ca: free_addr(),
            keys_dir: dir.path().to_str().unwrap().to_string(),
        };
        let (ttp, ca, b) = cluster.start_support(5000);

        // A malformed frame is logged and its connection dropped; the
        // protocol must proceed untouched.
        {
            use std::io::Write;
            let mut stream = std::net::TcpStream::connect(&cluster.addr_b).unwrap();
            stream
                .write_all(&[0, 0, 0, 5, 0xde, 0xad, 0xbe, 0xef, 0x00])
                .unwrap();
        }

        let a = Proc::spawn("a", cluster.a_command("honest"));

        let (a_code, a_stdout) = a.wait_and_read(Duration::from_secs(60));
        let (b_code, b_stdout) = b.wait_and_read(Duration::from_secs(60));
        drop(ttp);
        drop(ca);
        assert_eq!(a_code, 0, "honest A failed");
        assert_eq!(b_code, 0, "honest B failed");

        let expected = oracle(&keys, Strategy::Honest);
        assert!(expected.a_has_valid_sig_b && expected.b_has_valid_sig_a);

        let (a_view, a_possession) = parse_records(&a_stdout);
        let (b_view, b_possession) = parse_records(&b_stdout);
        assert_eq!(a_possession, Some(true), "A must log possession");
        assert_eq!(b_possession, Some(true), "B must log possession");
        assert_eq!(a_view, oracle_view(&expected, PartyId::A), "A transcript");
        assert_eq!(b_view, oracle_view(&expected, PartyId::B), "B transcript");
    }

    // Initiator killed after E-M1; the responder recovers via the TTP.
    {
        let cluster = Cluster {
            addr_a: free_addr(),
            addr_b: free_addr(),
            addr_ttp: free_addr(),
            addr_ca: free_addr(),
            keys_dir: dir.path().to_str().unwrap().to_string(),
        };
        let (ttp, ca, b) = cluster.start_support(2000);
        let a = Proc::spawn("a", cluster.a_command("a-no-em3"));

        let (a_code, _) = a.wait_and_read(Duration::from_secs(60));
        assert_eq!(a_code, 0, "a-no-em3 A exits cleanly after E-M1");
        let (b_code, b_stdout) = b.wait_and_read(Duration::from_secs(60));
        assert_eq!(b_code, 0, "B must recover via the TTP");
        let ttp_stdout = ttp.stop_and_read();
        drop(ca);

        let expected = oracle(&keys, Strategy::ANoEm3);
        assert!(expected.b_has_valid_sig_a);

        let (b_view, b_possession) = parse_records(&b_stdout);
        assert_eq!(b_possession, Some(true), "B must hold Sig_a after recovery");
        assert_eq!(b_view, oracle_view(&expected, PartyId::B), "B transcript");

        let (ttp_view, _) = parse_records(&ttp_stdout);
        assert_eq!(
            ttp_view,
            oracle_view(&expected, PartyId::Ttp),
            "TTP transcript"
        );
    }

    println!("acceptance 7 (multi-process serve-mode smoke test): PASS");
}
