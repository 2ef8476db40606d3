//! `fairsign`: drive the fair contract-signing protocol from the command
//! line.
//!
//! Exit codes are a stable contract: 0 means fair/success, 1 means a
//! fairness violation or protocol failure, 2 means a usage error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use fairsign_core::config::{parse_matrix_config, parse_scenario_config};
use fairsign_core::crypto::{generate_keypair, MIN_MODULUS_BITS};
use fairsign_core::keyfile;
use fairsign_core::roles::TtpVerifyOption;
use fairsign_core::sim::{
    fairness_holds, matrix_record_lines, metrics_record_lines, metrics_report, run_matrix,
    run_scenario, scenario_record_line, MetricsReport, ScenarioConfig, ScenarioOutcome, Strategy,
};
use fairsign_core::PartyId;

mod serve;

#[derive(Parser)]
#[command(
    name = "fairsign",
    version,
    about = "Fair contract signing with an offline TTP: run scenarios, check fairness, reproduce the cost table"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and print the transcript and verdicts
    Run(RunArgs),
    /// Run the strategy matrix and check fairness on every outcome
    Matrix(MatrixArgs),
    /// Measure message and exponentiation counts against the published row
    Metrics(MetricsArgs),
    /// Generate an RSA key pair file (plus a .pub sibling)
    Keygen(KeygenArgs),
    /// Run one role as a process speaking the framed wire format over TCP
    Serve(serve::ServeArgs),
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    s.parse()
}

pub(crate) fn parse_ttp_option(s: &str) -> Result<TtpVerifyOption, String> {
    match s {
        "i" => Ok(TtpVerifyOption::HashCompare),
        "ii" => Ok(TtpVerifyOption::DecryptAndVerify),
        other => Err(format!("{other:?} is not 'i' or 'ii'")),
    }
}

#[derive(Args)]
struct CommonScenarioArgs {
    /// Scenario seed; FAIRSIGN_SEED overrides the default
    #[arg(long, env = "FAIRSIGN_SEED", default_value_t = 1)]
    seed: u64,
    /// Modulus size for the party keys
    #[arg(long, default_value_t = 512)]
    key_bits: u64,
    /// Ticks the responder waits for E-M3 before disputing
    #[arg(long, default_value_t = 10)]
    timeout_ticks: u64,
    /// How the TTP checks the encrypted signature: 'ii' decrypt-and-verify
    /// (default), 'i' hash comparison
    #[arg(long, value_parser = parse_ttp_option, default_value = "ii")]
    ttp_option: TtpVerifyOption,
}

impl CommonScenarioArgs {
    fn to_config(&self) -> ScenarioConfig {
        ScenarioConfig {
            seed: self.seed,
            key_bits: self.key_bits,
            timeout_ticks: self.timeout_ticks,
            ttp_option: self.ttp_option,
            ..ScenarioConfig::default()
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Initiator strategy: HONEST, A_BAD_EM1_CERT, A_BAD_EM1_CONTRACT,
    /// A_BAD_EM1_CIPHERTEXT, A_NO_EM3, A_BAD_EM3
    #[arg(long = "a", value_name = "STRATEGY", value_parser = parse_strategy,
          required_unless_present = "config", conflicts_with = "config")]
    strategy_a: Option<Strategy>,
    /// Responder strategy: HONEST, B_BAD_EM2, B_EARLY_DISPUTE
    #[arg(long = "b", value_name = "STRATEGY", value_parser = parse_strategy,
          required_unless_present = "config", conflicts_with = "config")]
    strategy_b: Option<Strategy>,
    #[command(flatten)]
    common: CommonScenarioArgs,
    /// key=value scenario file; values in the file override the flags
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Emit line-delimited structured records instead of tables
    #[arg(long)]
    records: bool,
    /// Also dump the certificates carried in E-M1, field by field
    #[arg(long)]
    show_certs: bool,
}

#[derive(Args)]
struct MatrixArgs {
    #[command(flatten)]
    common: CommonScenarioArgs,
    /// key=value matrix file restricting a_strategies / b_strategies
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    records: bool,
    /// Self-test hook: wire in a TTP that skips the Sig_b check, which
    /// must make the matrix fail
    #[arg(long, hide = true)]
    broken_ttp: bool,
}

#[derive(Args)]
struct MetricsArgs {
    #[command(flatten)]
    common: CommonScenarioArgs,
    /// Which runs to measure: both (default), honest, dispute
    #[arg(long, default_value = "both")]
    runs: String,
    #[arg(long)]
    records: bool,
}

#[derive(Args)]
struct KeygenArgs {
    /// Modulus size in bits (at least 264)
    #[arg(long)]
    bits: u64,
    /// RNG seed for reproducible keys; omit for an entropy-seeded key
    #[arg(long)]
    seed: Option<u64>,
    /// Output path; the public half goes to the same path with a .pub
    /// extension
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

fn main() -> ExitCode {
    // Die quietly when the reader of our stdout goes away (`fairsign run | head`).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Matrix(args) => cmd_matrix(args),
        Command::Metrics(args) => cmd_metrics(args),
        Command::Keygen(args) => cmd_keygen(args),
        Command::Serve(args) => serve::cmd_serve(args),
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(2)
}

fn failure(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(1)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let config = if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => return usage_error(&format!("cannot read {}: {e}", path.display())),
        };
        match parse_scenario_config(&text, &args.common.to_config()) {
            Ok(config) => config,
            Err(e) => return usage_error(&format!("{}: {e}", path.display())),
        }
    } else {
        ScenarioConfig {
            strategy_a: args.strategy_a.expect("clap enforces presence"),
            strategy_b: args.strategy_b.expect("clap enforces presence"),
            ..args.common.to_config()
        }
    };

    if !config.strategy_a.applies_to(PartyId::A) {
        return usage_error(&format!(
            "strategy {} does not apply to party A",
            config.strategy_a
        ));
    }
    if !config.strategy_b.applies_to(PartyId::B) {
        return usage_error(&format!(
            "strategy {} does not apply to party B",
            config.strategy_b
        ));
    }

    let outcome = match run_scenario(&config) {
        Ok(outcome) => outcome,
        Err(e) => return failure(&format!("scenario failed: {e}")),
    };

    if args.records {
        println!("{}", scenario_record_line(&config, &outcome));
    } else {
        print_outcome(&config, &outcome);
        if args.show_certs {
            print_certs(&outcome);
        }
    }

    if fairness_holds(&outcome) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn print_certs(outcome: &ScenarioOutcome) {
    for entry in &outcome.transcript {
        if let fairsign_core::ProtocolMessage::Em1(em1) = &entry.msg {
            println!("C_at (as sent in E-M1):");
            for line in em1.c_at.render_debug().lines() {
                println!("  {line}");
            }
            println!("C-Cert (as sent in E-M1):");
            for line in em1.c_cert.render_debug().lines() {
                println!("  {line}");
            }
            return;
        }
    }
    println!("no E-M1 in the transcript; nothing to show");
}

fn print_outcome(config: &ScenarioConfig, outcome: &ScenarioOutcome) {
    println!(
        "scenario: A={} B={} seed={} key_bits={} ttp_option={}",
        config.strategy_a,
        config.strategy_b,
        config.seed,
        config.key_bits,
        config.ttp_option.name()
    );
    println!("transcript:");
    for (idx, label) in outcome.transcript_labels().iter().enumerate() {
        println!("  {}. {label}", idx + 1);
    }
    println!(
        "terminal phases: A={} B={}",
        outcome.terminal_phase_a.name(),
        outcome.terminal_phase_b.name()
    );
    println!(
        "possession: a_has_valid_sig_b={} b_has_valid_sig_a={}",
        outcome.a_has_valid_sig_b, outcome.b_has_valid_sig_a
    );
    println!(
        "fairness: {}",
        if fairness_holds(outcome) {
            "HOLDS"
        } else {
            "VIOLATED"
        }
    );
    println!("exponentiations:");
    for ((party, phase), count) in outcome.exp_counts.iter() {
        println!("  {party} {phase}: {count}");
    }
    if !outcome.notes.is_empty() {
        println!("notes:");
        for note in &outcome.notes {
            println!("  - {note}");
        }
    }
}

fn cmd_matrix(args: MatrixArgs) -> ExitCode {
    let mut base = args.common.to_config();
    base.broken_ttp = args.broken_ttp;

    let (a_strategies, b_strategies, base) = if let Some(path) = &args.config {
        let text = match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => return usage_error(&format!("cannot read {}: {e}", path.display())),
        };
        match parse_matrix_config(&text, &base) {
            Ok(spec) => (spec.a_strategies, spec.b_strategies, spec.base),
            Err(e) => return usage_error(&format!("{}: {e}", path.display())),
        }
    } else {
        (Strategy::FOR_A.to_vec(), Strategy::FOR_B.to_vec(), base)
    };

    let report = match run_matrix(&base, &a_strategies, &b_strategies) {
        Ok(report) => report,
        Err(e) => return failure(&format!("matrix failed: {e}")),
    };

    if args.records {
        for line in matrix_record_lines(&base, &report) {
            println!("{line}");
        }
    } else {
        println!(
            "{:<22} {:<16} {:>6} {:>6} {:>6}  terminal phases",
            "strategy_a", "strategy_b", "a_has", "b_has", "fair"
        );
        for record in &report.records {
            let o = &record.outcome;
            println!(
                "{:<22} {:<16} {:>6} {:>6} {:>6}  A={} B={}",
                record.strategy_a.name(),
                record.strategy_b.name(),
                o.a_has_valid_sig_b,
                o.b_has_valid_sig_a,
                fairness_holds(o),
                o.terminal_phase_a.name(),
                o.terminal_phase_b.name()
            );
        }
        println!(
            "scenarios: {}  violations: {}",
            report.records.len(),
            report.violations.len()
        );
    }

    if report.violations.is_empty() {
        ExitCode::SUCCESS
    } else {
        for violation in &report.violations {
            eprintln!("fairness violation: {violation}");
        }
        ExitCode::from(1)
    }
}

fn cmd_metrics(args: MetricsArgs) -> ExitCode {
    let base = args.common.to_config();
    let want_honest = matches!(args.runs.as_str(), "both" | "honest");
    let want_dispute = matches!(args.runs.as_str(), "both" | "dispute");
    if !want_honest && !want_dispute {
        return usage_error(&format!(
            "--runs must be 'both', 'honest', or 'dispute', got {:?}",
            args.runs
        ));
    }

    let run = |strategy_a: Strategy| {
        run_scenario(&ScenarioConfig {
            strategy_a,
            strategy_b: Strategy::Honest,
            ..base.clone()
        })
    };
    let honest = if want_honest {
        match run(Strategy::Honest) {
            Ok(outcome) => Some(outcome),
            Err(e) => return failure(&format!("honest run failed: {e}")),
        }
    } else {
        None
    };
    let dispute = if want_dispute {
        match run(Strategy::ANoEm3) {
            Ok(outcome) => Some(outcome),
            Err(e) => return failure(&format!("dispute run failed: {e}")),
        }
    } else {
        None
    };

    let report: MetricsReport = metrics_report(honest.as_ref(), dispute.as_ref(), base.ttp_option);

    if args.records {
        for line in metrics_record_lines(&report) {
            println!("{line}");
        }
    } else {
        print!("{}", report.render());
    }

    if report.all_measured_match() {
        ExitCode::SUCCESS
    } else {
        eprintln!("error: measured counts deviate from the published row");
        ExitCode::from(1)
    }
}

fn cmd_keygen(args: KeygenArgs) -> ExitCode {
    if args.bits < MIN_MODULUS_BITS {
        return usage_error(&format!(
            "--bits must be at least {MIN_MODULUS_BITS}, got {}",
            args.bits
        ));
    }
    let pair = match generate_keypair(args.bits, args.seed) {
        Ok(pair) => pair,
        Err(e) => return failure(&format!("key generation failed: {e}")),
    };
    if let Err(e) = keyfile::write_keypair(&args.out, &pair) {
        return failure(&format!("cannot write key files: {e}"));
    }
    println!(
        "wrote {} and {} ({} bits)",
        args.out.display(),
        args.out.with_extension("pub").display(),
        args.bits
    );
    ExitCode::SUCCESS
}
