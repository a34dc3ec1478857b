//! `teechan` command-line driver.
//!
//! Exit status: 0 when every check passed, 1 on an invariant violation or
//! protocol failure, 2 on a usage error.

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use teechan::bench::{self, Transport};
use teechan::demo::{self, DemoConfig};
use teechan::enclave::Role;
use teechan::fixtures::ChannelConfig;
use teechan::host::net::{serve_ledger, FrameLink, RemoteLedger};
use teechan::host::SharedLedger;
use teechan::ledger::{format_btc, parse_btc, Satoshi};
use teechan::netsim::{self, Detail, Outcome, Party, RunError, RunOptions, Scenario};

#[derive(Parser)]
#[command(
    name = "teechan",
    version,
    about = "Duplex payment channels over emulated enclaves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Open a channel, run seeded lock-step payments and settle.
    Demo(DemoArgs),
    /// Run a built-in or file-based attack scenario and print its trace.
    Scenario(ScenarioArgs),
    /// Run many seeded adversarial scenarios and report violations.
    Soak(SoakArgs),
    /// Lock-step throughput and latency benchmark.
    Bench(BenchArgs),
    /// One party (or the ledger service) of a run across processes.
    Node(NodeArgs),
}

#[derive(Args, Clone)]
struct ChannelArgs {
    /// Hash side's (Alice's) deposit in BTC.
    #[arg(long, default_value = "50", value_parser = btc)]
    deposit_a: Satoshi,
    /// Broadcast side's (Bob's) deposit in BTC.
    #[arg(long, default_value = "50", value_parser = btc)]
    deposit_b: Satoshi,
    /// Fee in BTC paid by each on-chain transaction.
    #[arg(long, default_value = "0.002", value_parser = btc)]
    fee: Satoshi,
    /// Height at which the refund becomes valid.
    #[arg(long, default_value_t = 144, value_parser = clap::value_parser!(u64).range(1..))]
    lock_height: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

impl ChannelArgs {
    fn config(&self) -> ChannelConfig {
        ChannelConfig {
            seed: self.seed,
            deposit_hash: self.deposit_a,
            deposit_broadcast: self.deposit_b,
            fee_setup: self.fee,
            fee_close: self.fee,
            refund_lock_height: self.lock_height,
        }
    }
}

#[derive(Args, Clone)]
struct PlanArgs {
    #[command(flatten)]
    channel: ChannelArgs,
    /// Number of payments, including the one that sets Bob's closing balance.
    #[arg(long, default_value_t = 20)]
    payments: usize,
    /// Bob's closing balance in BTC, or `none` for a purely random run.
    #[arg(long, default_value = "9", value_parser = close_target)]
    close_b: CloseTarget,
}

impl PlanArgs {
    fn config(&self) -> DemoConfig {
        DemoConfig {
            channel: self.channel.config(),
            payments: self.payments,
            close_b: self.close_b.0,
        }
    }
}

#[derive(Args)]
struct DemoArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// `events` or `wire`.
    #[arg(long, default_value = "events", value_parser = detail)]
    detail: Detail,
    /// Write the final ledger snapshot here.
    #[arg(long)]
    dump_ledger: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Built-in scenario name or path to a scenario file.
    #[arg(required_unless_present = "list")]
    target: Option<String>,
    /// List the built-in scenarios.
    #[arg(long)]
    list: bool,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "events", value_parser = detail)]
    detail: Detail,
}

#[derive(Args)]
struct SoakArgs {
    #[arg(long, default_value_t = 500)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    start: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct BenchArgs {
    /// Payments each way.
    #[arg(long, default_value_t = bench::DEFAULT_PAYMENTS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    payments: u64,
    /// `in-process` or `loopback`.
    #[arg(long, default_value = "in-process")]
    mode: Transport,
}

#[derive(Args)]
struct NodeArgs {
    #[command(subcommand)]
    mode: NodeMode,
}

#[derive(Subcommand)]
enum NodeMode {
    /// Host the shared ledger, funded for the given channel terms.
    Ledger {
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        #[command(flatten)]
        channel: ChannelArgs,
    },
    /// Wait for the peer to connect, then run this party's side of the demo.
    Listen {
        #[arg(long, default_value = "127.0.0.1:0")]
        listen: String,
        #[command(flatten)]
        party: PartyArgs,
        /// Also host the ledger service on this address.
        #[arg(long, conflicts_with = "ledger")]
        serve_ledger: Option<String>,
    },
    /// Connect to a listening peer and run this party's side of the demo.
    Connect {
        #[arg(long)]
        peer: String,
        #[command(flatten)]
        party: PartyArgs,
    },
}

#[derive(Args)]
struct PartyArgs {
    /// `a` (hash side) or `b` (broadcast side).
    #[arg(long, value_parser = role)]
    role: Role,
    /// Address of the ledger service.
    #[arg(long)]
    ledger: Option<String>,
    #[command(flatten)]
    plan: PlanArgs,
    /// Seconds to wait for the peer or the ledger at each stage.
    #[arg(long, default_value_t = 30)]
    timeout: u64,
    #[arg(long)]
    dump_ledger: Option<PathBuf>,
}

fn btc(s: &str) -> Result<Satoshi, String> {
    parse_btc(s).ok_or_else(|| format!("{s:?} is not a BTC amount with at most 8 decimals"))
}

#[derive(Clone, Copy)]
struct CloseTarget(Option<Satoshi>);

fn close_target(s: &str) -> Result<CloseTarget, String> {
    if s == "none" {
        Ok(CloseTarget(None))
    } else {
        btc(s).map(|v| CloseTarget(Some(v)))
    }
}

fn detail(s: &str) -> Result<Detail, String> {
    match s {
        "events" => Ok(Detail::Events),
        "wire" => Ok(Detail::Wire),
        _ => Err("expected events or wire".into()),
    }
}

fn role(s: &str) -> Result<Role, String> {
    match s {
        "a" | "hash" | "hash-side" => Ok(Role::HashSide),
        "b" | "broadcast" | "broadcast-side" => Ok(Role::BroadcastSide),
        _ => Err("expected a or b".into()),
    }
}

/// A command failure and the exit status it maps to.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn usage(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: 2,
            err: err.into(),
        }
    }
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(err: E) -> Self {
        Self {
            code: 1,
            err: err.into(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Demo(a) => cmd_demo(a),
        Command::Scenario(a) => cmd_scenario(a),
        Command::Soak(a) => cmd_soak(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Node(a) => cmd_node(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("teechan: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn cmd_demo(args: DemoArgs) -> CmdResult {
    let cfg = args.plan.config();
    if cfg.initial_balances().is_none() {
        return Err(Failure::usage(anyhow!(
            "deposits do not cover the closing fee"
        )));
    }
    let result = netsim::run_with(
        &demo::scenario(&cfg),
        RunOptions {
            detail: args.detail,
        },
    );
    let out = report_run(result)?;
    if let Some(path) = args.dump_ledger {
        fs::write(&path, out.ledger.dump())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    if let Some(spend) = out.channel_spend() {
        let payout = |p: Party| {
            let key = cfg.channel.change_key(p.role()).public;
            spend
                .outputs
                .iter()
                .filter(|o| o.condition == teechan::ledger::LockCondition::SingleSig(key))
                .map(|o| o.value)
                .sum::<Satoshi>()
        };
        println!(
            "payout a={} b={} (btc)",
            format_btc(payout(Party::A)),
            format_btc(payout(Party::B))
        );
    }
    println!("result pass");
    Ok(())
}

/// Prints the trace of a finished run, or the failure with its reproducer.
fn report_run(result: Result<Outcome, RunError>) -> Result<Outcome, Failure> {
    match result {
        Ok(out) => {
            print!("{}", out.trace);
            Ok(out)
        }
        Err(RunError::Violation(v)) => {
            print!("{}", v.trace);
            println!("result violation invariant={}", v.invariant);
            eprintln!("# reproducer\n{}", v.reproducer);
            Err(anyhow!("{v}").into())
        }
        Err(e @ RunError::Expectation { .. }) => {
            println!("result fail");
            Err(e.into())
        }
        Err(e @ RunError::Invalid { .. }) => Err(Failure::usage(e)),
    }
}

fn load_scenario(target: &str) -> Result<Scenario, Failure> {
    if let Some(s) = netsim::builtin(target) {
        return Ok(s);
    }
    let path = PathBuf::from(target);
    if !path.is_file() {
        let names: Vec<_> = netsim::builtin_names().collect();
        return Err(Failure::usage(anyhow!(
            "no scenario named {target:?} and no such file (built-ins: {})",
            names.join(", ")
        )));
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    netsim::parse(&text).map_err(|e| Failure::usage(anyhow!("{}: {e}", path.display())))
}

fn cmd_scenario(args: ScenarioArgs) -> CmdResult {
    if args.list {
        for name in netsim::builtin_names() {
            println!("{name}");
        }
        return Ok(());
    }
    let mut scenario = load_scenario(args.target.as_deref().unwrap_or_default())?;
    if let Some(seed) = args.seed {
        scenario.config.seed = seed;
    }
    report_run(netsim::run_with(
        &scenario,
        RunOptions {
            detail: args.detail,
        },
    ))?;
    println!("result pass");
    Ok(())
}

fn cmd_soak(args: SoakArgs) -> CmdResult {
    if let Some(jobs) = args.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(Failure::usage)?;
    }
    let started = Instant::now();
    let seeds: Vec<u64> = (args.start..args.start + args.seeds).collect();
    let failures: Vec<(u64, RunError)> = seeds
        .par_iter()
        .filter_map(|&seed| {
            netsim::run(&netsim::soak_scenario(seed))
                .err()
                .map(|e| (seed, e))
        })
        .collect();
    for (seed, err) in &failures {
        println!(
            "seed={seed} scenario={} error=\"{err}\"",
            netsim::soak_scenario(*seed).name
        );
        if let RunError::Violation(v) = err {
            eprintln!("# reproducer for seed {seed}\n{}", v.reproducer);
        }
    }
    println!(
        "soak runs={} failures={} elapsed_s={:.2}",
        seeds.len(),
        failures.len(),
        started.elapsed().as_secs_f64()
    );
    if failures.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("{} of {} scenarios failed", failures.len(), seeds.len()).into())
    }
}

fn cmd_bench(args: BenchArgs) -> CmdResult {
    let n = args.payments as usize;
    let report = bench::run_lockstep(n, args.mode)?;
    println!("{report}");
    if report.payment_messages != 2 * n as u64 {
        return Err(anyhow!(
            "{} payment messages crossed the transport, expected {}",
            report.payment_messages,
            2 * n
        )
        .into());
    }
    if report.payout != report.initial {
        return Err(anyhow!("symmetric run did not settle at the opening balances").into());
    }
    Ok(())
}

fn cmd_node(args: NodeArgs) -> CmdResult {
    match args.mode {
        NodeMode::Ledger { listen, channel } => {
            let listener =
                TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            announce(&format!("ledger={}", listener.local_addr()?));
            let ledger = SharedLedger::new(demo::genesis_ledger(&channel.config()));
            serve_ledger(listener, ledger)
                .join()
                .map_err(|_| anyhow!("ledger service stopped"))?;
            Ok(())
        }
        NodeMode::Listen {
            listen,
            party,
            serve_ledger: host,
        } => {
            let listener =
                TcpListener::bind(&listen).with_context(|| format!("binding {listen}"))?;
            let ledger_addr = match (&host, &party.ledger) {
                (Some(addr), _) => {
                    let l = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
                    let bound = l.local_addr()?.to_string();
                    let genesis = demo::genesis_ledger(&party.plan.channel.config());
                    serve_ledger(l, SharedLedger::new(genesis));
                    bound
                }
                (None, Some(addr)) => addr.clone(),
                (None, None) => {
                    return Err(Failure::usage(anyhow!("need --ledger or --serve-ledger")));
                }
            };
            announce(&format!(
                "peer={} ledger={ledger_addr}",
                listener.local_addr()?
            ));
            let link = FrameLink::accept(&listener)?;
            run_party(party, link, &ledger_addr)
        }
        NodeMode::Connect { peer, party } => {
            let Some(ledger_addr) = party.ledger.clone() else {
                return Err(Failure::usage(anyhow!("need --ledger")));
            };
            let budget = Duration::from_secs(party.timeout);
            let link = FrameLink::connect(peer.as_str(), budget)
                .with_context(|| format!("connecting to peer {peer}"))?;
            run_party(party, link, &ledger_addr)
        }
    }
}

fn announce(line: &str) {
    println!("listening {line}");
    let _ = io::stdout().flush();
}

fn run_party(args: PartyArgs, link: FrameLink, ledger_addr: &str) -> CmdResult {
    let budget = Duration::from_secs(args.timeout);
    let ledger = RemoteLedger::connect(ledger_addr, budget)
        .with_context(|| format!("connecting to ledger {ledger_addr}"))?;
    let cfg = args.plan.config();
    let report = demo::run_party(&cfg, args.role, link, ledger, budget)?;
    let digest = teechan::crypto::hash(report.ledger.as_bytes());
    println!(
        "final role={} balance={} sent={} received={}",
        report.role, report.status.balance_mine, report.payments_sent, report.payments_received
    );
    if let Some(s) = &report.settlement {
        match s.verdict {
            Ok(id) => println!("settlement accepted txid={id}"),
            Err(r) => println!("settlement rejected reason={}", r.name()),
        }
    }
    println!("ledger digest={digest}");
    if let Some(path) = args.dump_ledger {
        fs::write(&path, &report.ledger).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
