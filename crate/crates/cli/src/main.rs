use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ofdialect::crypto::{read_psk_file, write_psk_file, PreSharedKey};
use ofdialect::dialect::{Role, DEFAULT_GRACE};
use ofdialect::pep::{run_proxy, ProxyConfig};
use ofdialect::tls::Policy;
use ofdialect_sim::{render_table, run_overhead_suite, run_scenario, to_csv, Scenario, ScenarioError, SCENARIO_NAMES};

const USAGE: u8 = 1;
const FAILURE: u8 = 2;

#[derive(Parser)]
#[command(name = "ofdialect", version, about = "OpenFlow control-channel dialecting proxy and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    Switch,
    Controller,
}

#[derive(Subcommand)]
enum Command {
    /// Run one proxy of a dialecting pair.
    RunProxy {
        #[arg(long, value_enum)]
        role: RoleArg,
        /// Address to accept on (the switch, or the peer proxy).
        #[arg(long)]
        listen: String,
        /// Address of the peer proxy.
        #[arg(long)]
        peer: String,
        /// Address of the local controller (controller side) or switch.
        #[arg(long)]
        device: String,
        /// 32-byte pre-shared key file.
        #[arg(long)]
        psk: PathBuf,
        /// TLS policy file; defaults allow TLS 1.2/1.3 with AEAD suites.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Seconds of clock skew tolerated on the Hello tag.
        #[arg(long, default_value_t = DEFAULT_GRACE)]
        grace: u64,
    },
    /// Run a built-in scenario on the simulated network.
    Simulate {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(SCENARIO_NAMES))]
        scenario: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        reps: Option<u32>,
        /// Key file to use instead of one derived from the seed.
        #[arg(long)]
        psk: Option<PathBuf>,
        /// Run the same attacker against plain forwarding proxies.
        #[arg(long)]
        no_dialect: bool,
        /// Write one CSV record per run here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare setup latency and bytes with and without TLS and the dialect.
    Bench {
        #[arg(long, default_value_t = 30)]
        reps: u32,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Write a fresh random pre-shared key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
    },
}

fn fail(msg: impl std::fmt::Display, code: u8) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(USAGE) } else { ExitCode::SUCCESS };
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();

    match cli.command {
        Command::RunProxy { role, listen, peer, device, psk, policy, grace } => {
            let policy = match policy {
                Some(path) => match fs::read_to_string(&path) {
                    Ok(text) => match text.parse::<Policy>() {
                        Ok(p) => p,
                        Err(e) => return fail(format!("{}: {e}", path.display()), USAGE),
                    },
                    Err(e) => return fail(format!("{}: {e}", path.display()), USAGE),
                },
                None => Policy::default(),
            };
            let role = match role {
                RoleArg::Switch => Role::SwitchSide,
                RoleArg::Controller => Role::ControllerSide,
            };
            let mut config = ProxyConfig::new(role, &listen, &peer, &device, psk, policy);
            config.d1_window_grace = grace;
            if let Err(e) = config.validate() {
                return fail(e, USAGE);
            }
            let rt = match tokio::runtime::Runtime::new() {
                Ok(rt) => rt,
                Err(e) => return fail(e, FAILURE),
            };
            match rt.block_on(run_proxy(config)) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => fail(e, FAILURE),
            }
        }
        Command::Simulate { scenario, seed, reps, psk, no_dialect, out } => {
            simulate(&scenario, seed, reps, psk, no_dialect, out)
        }
        Command::Bench { reps, seed } => {
            if reps == 0 {
                return fail("--reps must be at least 1", USAGE);
            }
            print!("{}", run_overhead_suite(reps, seed));
            ExitCode::SUCCESS
        }
        Command::Keygen { out } => match write_psk_file(&out, &PreSharedKey::generate()) {
            Ok(()) => {
                println!("wrote {}", out.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(e, FAILURE),
        },
    }
}

fn simulate(
    name: &str,
    seed: u64,
    reps: Option<u32>,
    psk: Option<PathBuf>,
    no_dialect: bool,
    out: Option<PathBuf>,
) -> ExitCode {
    let mut scenario = match Scenario::builtin(name) {
        Ok(s) => s,
        Err(e) => return fail(e, USAGE),
    };
    scenario = match psk {
        Some(path) => match read_psk_file(&path) {
            Ok(k) => scenario.with_psk(k),
            Err(e) => return fail(e, USAGE),
        },
        None => scenario.with_seeded_psk(seed),
    };
    if let Some(n) = reps {
        scenario = scenario.with_repetitions(n);
    }
    if no_dialect {
        scenario = scenario.without_dialect();
    }
    let runs = match run_scenario(&scenario, seed) {
        Ok(r) => r,
        Err(e @ (ScenarioError::Unknown(_) | ScenarioError::NoRepetitions)) => return fail(e, USAGE),
        Err(e) => return fail(e, FAILURE),
    };
    print!("{}", render_table(&runs));
    if let Some(path) = out {
        if let Err(e) = fs::write(&path, to_csv(&runs)) {
            return fail(format!("{}: {e}", path.display()), FAILURE);
        }
    }
    let expected = scenario.expected_outcome();
    let mismatched = runs.iter().filter(|r| expected.is_some_and(|o| o != r.outcome)).count();
    match expected {
        Some(o) => println!("expected {o}: {}/{} runs matched", runs.len() - mismatched, runs.len()),
        None => println!("no expected outcome for this configuration"),
    }
    if mismatched == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(FAILURE)
    }
}
