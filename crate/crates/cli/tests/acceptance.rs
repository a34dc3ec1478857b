//! End-to-end acceptance checks. Runs as a plain binary so that each
//! criterion prints exactly one PASS/FAIL line; exits non-zero if any fails.

use std::io::{BufRead, BufReader};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use teechan::bench::{self, Transport};
use teechan::demo::{self, DemoConfig};
use teechan::fixtures::ChannelConfig;
use teechan::ledger::{LockCondition, RejectReason, Satoshi, Transaction, SATOSHI_PER_BTC};
use teechan::netsim::{self, Action, Outcome, Party, Scenario, Step};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

type Criterion = (&'static str, fn() -> Check);

const GOLDEN_DEMO: &str = include_str!("../../core/tests/golden/demo.trace");

fn main() {
    let criteria: [Criterion; 8] = [
        ("honest run of 1000 payments settles exactly", honest_run),
        ("reference demo matches golden trace", reference_demo),
        (
            "no violations over 500 adversarial scenarios",
            security_suite,
        ),
        ("replayed payments are rejected everywhere", replay_attack),
        (
            "mauled setup is recovered by immediate refund",
            maul_recovery,
        ),
        ("refund timeout and settlement races", timeout_semantics),
        ("lock-step benchmark methodology", performance),
        (
            "two-process run matches in-process ledger",
            cross_process_parity,
        ),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {} PASS {name} ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} FAIL {name}: {why} ({secs:.2}s)", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

fn payout(spend: &Transaction, cfg: &ChannelConfig, p: Party) -> Satoshi {
    let key = cfg.change_key(p.role()).public;
    spend
        .outputs
        .iter()
        .filter(|o| o.condition == LockCondition::SingleSig(key))
        .map(|o| o.value)
        .sum()
}

fn honest_run() -> Check {
    let cfg = DemoConfig {
        payments: 1000,
        close_b: None,
        ..DemoConfig::default()
    };
    let started = Instant::now();
    let out = demo::run(&cfg).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();

    // Oracle: replay the scripted payments by hand.
    let fee_share = cfg.channel.fee_close / 2;
    let mut expected = [
        (cfg.channel.deposit_hash - fee_share) as i128,
        (cfg.channel.deposit_broadcast - fee_share) as i128,
    ];
    let mut n = 0;
    for step in &demo::scenario(&cfg).script {
        if let Step::Act(Action::Pay(p, amount)) = step {
            expected[p.index()] -= *amount as i128;
            expected[p.peer().index()] += *amount as i128;
            n += 1;
        }
    }
    ensure!(n == 1000, "plan has {n} payments");
    ensure!(
        out.sent[0].len() + out.sent[1].len() == 1000,
        "only {} payments sent",
        out.sent[0].len() + out.sent[1].len()
    );
    let spend = out.channel_spend().ok_or("no settlement confirmed")?;
    let got = [Party::A, Party::B].map(|p| payout(spend, &cfg.channel, p) as i128);
    ensure!(got == expected, "payouts {got:?}, expected {expected:?}");
    ensure!(
        out.ledger.confirmed().len() == 2,
        "{} transactions confirmed",
        out.ledger.confirmed().len()
    );
    ensure!(elapsed < Duration::from_secs(10), "took {elapsed:?}");
    Ok(format!("payouts a={} b={} sat", got[0], got[1]))
}

fn reference_demo() -> Check {
    let cfg = DemoConfig::default();
    let out = demo::run(&cfg).map_err(|e| e.to_string())?;
    ensure!(
        out.trace.to_string() == GOLDEN_DEMO,
        "trace differs from golden file"
    );
    let spend = out.channel_spend().ok_or("no settlement")?;
    let (a, b) = (
        payout(spend, &cfg.channel, Party::A),
        payout(spend, &cfg.channel, Party::B),
    );
    ensure!(b == 9 * SATOSHI_PER_BTC, "Bob closes with {b}");
    // 100 BTC channel less one 0.002 BTC fee.
    ensure!(a == 9_099_800_000, "Alice closes with {a}");
    let setup = &out.ledger.confirmed()[0];
    let minted: Satoshi = out
        .ledger
        .minted()
        .iter()
        .map(Transaction::output_total)
        .sum();
    let setup_fee = minted - setup.output_total();
    let close_fee = setup.outputs[0].value - spend.output_total();
    ensure!(
        setup_fee == 200_000 && close_fee == 200_000,
        "fees {setup_fee}/{close_fee}"
    );
    ensure!(
        setup.outputs[0].value == 100 * SATOSHI_PER_BTC,
        "channel holds {}",
        setup.outputs[0].value
    );
    Ok("Bob 9 BTC, Alice 90.998 BTC, 0.002 BTC fee per transaction".into())
}

fn security_suite() -> Check {
    let started = Instant::now();
    let report = netsim::soak(1..=500);
    if let Some((seed, e)) = report.failures.first() {
        return Err(format!(
            "{} failures, first seed {seed}: {e}",
            report.failures.len()
        ));
    }
    for name in netsim::builtin_names() {
        netsim::run(&netsim::builtin(name).unwrap()).map_err(|e| format!("{name}: {e}"))?;
    }
    let elapsed = started.elapsed();
    ensure!(report.runs == 500, "ran {}", report.runs);
    ensure!(elapsed < Duration::from_secs(120), "took {elapsed:?}");
    Ok(format!(
        "{} seeded runs and {} built-ins clean",
        report.runs,
        netsim::builtin_names().count()
    ))
}

/// Lock-step exchange of alternating payments, then Alice settles. The
/// `extra` action, if any, goes in at script index `at`, followed by a flush.
fn replay_script(extra: Option<(usize, Action)>) -> Scenario {
    let amounts = [
        (Party::A, 3_000_000),
        (Party::B, 5_000_000),
        (Party::A, 7_000_000),
        (Party::B, 11_000_000),
        (Party::A, 13_000_000),
    ];
    let mut script = vec![Step::Act(Action::Flush)];
    for (p, amount) in amounts {
        script.push(Step::Act(Action::Pay(p, amount)));
        script.push(Step::Act(Action::Flush));
    }
    script.push(Step::Act(Action::Terminate(Party::A)));
    if let Some((at, action)) = extra {
        script.insert(at, Step::Act(action));
        script.insert(at + 1, Step::Act(Action::Flush));
    }
    Scenario::new("replay-check", ChannelConfig::default(), script)
}

fn replay_attack() -> Check {
    let base = netsim::run(&replay_script(None)).map_err(|e| e.to_string())?;
    let base_settlement = base
        .channel_spend()
        .ok_or("no baseline settlement")?
        .to_bytes();
    let mut checked = 0;
    let len = replay_script(None).script.len();
    for (party, count) in [(Party::A, 3), (Party::B, 2)] {
        for k in 1..=count {
            // Every position after the k-th payment of `party` was emitted,
            // through to after settlement.
            let emitted_at = 1 + 2 * (2 * (k - 1) + usize::from(party == Party::B)) + 1;
            for at in emitted_at..=len {
                let action = Action::Replay(netsim::MsgRef::Payment(party, k));
                let out: Outcome = netsim::run(&replay_script(Some((at, action))))
                    .map_err(|e| format!("replay of {party}.pay.{k} at {at}: {e}"))?;
                let rejected = out
                    .trace
                    .lines()
                    .iter()
                    .any(|l| l.contains("recv-rejected"));
                // Right after emission the copy races the original and one
                // of the two is accepted; from then on it must be refused.
                let delivered = at > emitted_at;
                let closed = at == len;
                ensure!(
                    rejected || closed || !delivered,
                    "replay of {party}.pay.{k} at {at} was not rejected"
                );
                ensure!(
                    out.received == base.received,
                    "replay of {party}.pay.{k} at {at} changed accepted payments"
                );
                let s = out.channel_spend().ok_or("no settlement")?.to_bytes();
                ensure!(
                    s == base_settlement,
                    "replay of {party}.pay.{k} at {at} changed the settlement"
                );
                checked += 1;
            }
        }
    }
    Ok(format!(
        "{checked} replay positions, settlement bit-identical"
    ))
}

fn maul_recovery() -> Check {
    let cfg = ChannelConfig::default();
    let out = netsim::run(&netsim::builtin("maul").unwrap()).map_err(|e| e.to_string())?;
    let immediate = out
        .submissions
        .iter()
        .find(|(p, what, _)| *p == Party::A && *what == "immediate-refund")
        .ok_or("no immediate refund submitted")?;
    ensure!(
        immediate.2.is_ok(),
        "immediate refund rejected: {:?}",
        immediate.2
    );
    let spend = out.channel_spend().ok_or("channel output unspent")?;
    ensure!(spend.lock_time == 0, "recovery is time-locked");
    let initial = cfg.deposit_hash - cfg.fee_close / 2;
    let got = [Party::A, Party::B].map(|p| payout(spend, &cfg, p));
    ensure!(
        got == [initial, cfg.deposit_broadcast - cfg.fee_close / 2],
        "refund pays {got:?}"
    );
    let original = out
        .submissions
        .iter()
        .find(|(p, what, _)| *p == Party::B && *what == "refund")
        .ok_or("original refund not attempted")?;
    ensure!(
        original.2 == Err(RejectReason::MissingInput),
        "original refund verdict {:?}",
        original.2
    );
    Ok(format!(
        "refund pays {} / {} sat; original refund MissingInput",
        got[0], got[1]
    ))
}

fn verdicts(out: &Outcome) -> Vec<(Party, &'static str, Result<(), RejectReason>)> {
    out.submissions
        .iter()
        .map(|(p, w, v)| (*p, *w, v.map(|_| ())))
        .collect()
}

fn timeout_semantics() -> Check {
    for lock in [1u64, 10, 144] {
        let cfg = ChannelConfig {
            refund_lock_height: lock,
            ..ChannelConfig::default()
        };
        let pay = [
            Step::Act(Action::Flush),
            Step::Act(Action::Pay(Party::A, 1_000_000)),
            Step::Act(Action::Flush),
        ];
        // Refund one block early, then exactly at the lock height.
        let mut script = pay.to_vec();
        script.extend([
            Step::Act(Action::AdvanceHeight(lock - 1)),
            Step::Act(Action::Refund(Party::B)),
            Step::Act(Action::AdvanceHeight(1)),
            Step::Act(Action::Refund(Party::B)),
            Step::Act(Action::Terminate(Party::A)),
        ]);
        let out = netsim::run(&Scenario::new("timeout", cfg, script)).map_err(|e| e.to_string())?;
        let v = verdicts(&out);
        let want = vec![
            (Party::B, "refund", Err(RejectReason::Premature)),
            (Party::B, "refund", Ok(())),
            (Party::A, "settlement", Err(RejectReason::DoubleSpend)),
        ];
        ensure!(v == want, "lock {lock}: verdicts {v:?}");

        // Every ordering of both settlements and both refunds past the lock.
        let actions = [
            Action::Terminate(Party::A),
            Action::Terminate(Party::B),
            Action::Refund(Party::A),
            Action::Refund(Party::B),
        ];
        for order in permutations(4) {
            let mut script = pay.to_vec();
            script.push(Step::Act(Action::AdvanceHeight(lock)));
            script.extend(order.iter().map(|&i| Step::Act(actions[i])));
            let out =
                netsim::run(&Scenario::new("race", cfg, script)).map_err(|e| e.to_string())?;
            let accepted = out.submissions.iter().filter(|s| s.2.is_ok()).count();
            ensure!(
                accepted == 1,
                "lock {lock} order {order:?}: {accepted} accepted"
            );
            ensure!(
                out.ledger.confirmed().len() == 2,
                "lock {lock} order {order:?}"
            );
            let first = actions[order[0]];
            for (i, (_, _, verdict)) in out.submissions.iter().enumerate() {
                if i > 0 {
                    ensure!(
                        *verdict == Err(RejectReason::DoubleSpend),
                        "lock {lock} order {order:?}: submission {i} after {first} got {verdict:?}"
                    );
                }
            }
        }
    }
    Ok("Premature at lock-1, accepted at lock, 24 orderings x 3 locks single winner".into())
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn performance() -> Check {
    let n = bench::DEFAULT_PAYMENTS;
    let started = Instant::now();
    let r = bench::run_lockstep(n, Transport::InProcess).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let product = r.throughput * r.latency_mean.as_secs_f64();
    ensure!(
        r.payment_messages == 2 * n as u64,
        "{} payment messages",
        r.payment_messages
    );
    ensure!(
        (0.75..=1.25).contains(&product),
        "throughput x latency = {product:.3}"
    );
    ensure!(
        r.payout == r.initial,
        "settled at {:?}, opened at {:?}",
        r.payout,
        r.initial
    );
    ensure!(
        r.throughput.is_finite() && r.throughput > 0.0,
        "throughput {}",
        r.throughput
    );
    ensure!(elapsed < Duration::from_secs(60), "took {elapsed:?}");
    let small = bench::run_lockstep(1, Transport::InProcess).map_err(|e| e.to_string())?;
    ensure!(
        small.payment_messages == 2,
        "n=1 sent {}",
        small.payment_messages
    );
    Ok(format!(
        "{:.0} payments/s, mean {:.3} ms, product {product:.3}; SGX baseline {} payments/s at {} ms not reproduced",
        r.throughput,
        r.latency_mean.as_secs_f64() * 1e3,
        bench::BASELINE_THROUGHPUT,
        bench::BASELINE_LATENCY_MS
    ))
}

fn cross_process_parity() -> Check {
    let cfg = DemoConfig {
        payments: 100,
        ..DemoConfig::default()
    };
    let expected = demo::run(&cfg).map_err(|e| e.to_string())?;
    let want = netsim::ledger_digest(&expected.ledger).to_string();

    let bin = env!("CARGO_BIN_EXE_teechan");
    let common = ["--payments", "100", "--seed", "1", "--timeout", "20"];
    let mut listener = Command::new(bin)
        .args([
            "node",
            "listen",
            "--role",
            "b",
            "--serve-ledger",
            "127.0.0.1:0",
        ])
        .args(common)
        .stdout(Stdio::piped())
        .spawn()
        .map_err(|e| e.to_string())?;
    let mut lines = BufReader::new(listener.stdout.take().unwrap()).lines();
    let banner = lines
        .next()
        .ok_or("listener printed nothing")?
        .map_err(|e| e.to_string())?;
    let field = |key: &str| {
        banner
            .split_whitespace()
            .find_map(|f| f.strip_prefix(key))
            .map(str::to_string)
            .ok_or(format!("no {key} in {banner:?}"))
    };
    let (peer, ledger) = (field("peer=")?, field("ledger=")?);
    let connector = Command::new(bin)
        .args([
            "node", "connect", "--role", "a", "--peer", &peer, "--ledger", &ledger,
        ])
        .args(common)
        .output()
        .map_err(|e| e.to_string())?;
    let listener_out: Vec<String> = lines.map_while(Result::ok).collect();
    let listener_status = listener.wait().map_err(|e| e.to_string())?;
    ensure!(
        connector.status.success(),
        "connector failed: {}",
        String::from_utf8_lossy(&connector.stderr)
    );
    ensure!(
        listener_status.success(),
        "listener exited with {listener_status}"
    );

    let digest_of = |text: &str| {
        text.lines()
            .find_map(|l| l.strip_prefix("ledger digest="))
            .map(str::to_string)
    };
    let a = digest_of(&String::from_utf8_lossy(&connector.stdout))
        .ok_or("connector printed no digest")?;
    let b = digest_of(&listener_out.join("\n")).ok_or("listener printed no digest")?;
    ensure!(
        a == want && b == want,
        "digests a={a} b={b}, in-process {want}"
    );
    Ok(format!("ledger digest {}", &want[..16]))
}
