//! Lock-step payment benchmark: each party sends and receives payments in
//! turn, `n` each way, over an established channel. Only the payment phase
//! is timed.

use std::fmt;
use std::net::TcpListener;
use std::thread;
use std::time::{Duration, Instant};

use crate::enclave::Role;
use crate::fixtures::ChannelConfig;
use crate::host::net::{Driver, EstablishFailure, FrameLink, NetError};
use crate::host::{
    EstablishError, Frame, FrameKind, HostError, LocalLink, NodeConfig, PartyNode, SharedLedger,
};
use crate::ledger::{Ledger, Satoshi};

/// Published figures for the SGX prototype, printed for context only.
pub const BASELINE_THROUGHPUT: f64 = 2480.0;
pub const BASELINE_LATENCY_MS: f64 = 0.40;

pub const DEFAULT_PAYMENTS: usize = 100_000;
const AMOUNT: Satoshi = 1_000;
const NET_BUDGET: Duration = Duration::from_secs(30);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transport {
    /// Both parties in one thread, alternating.
    InProcess,
    /// Two threads talking over a loopback TCP connection.
    Loopback,
}

impl Transport {
    pub fn name(self) -> &'static str {
        match self {
            Transport::InProcess => "in-process",
            Transport::Loopback => "loopback",
        }
    }
}

impl std::str::FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "in-process" | "inprocess" => Ok(Transport::InProcess),
            "loopback" | "tcp" => Ok(Transport::Loopback),
            _ => Err(format!(
                "unknown mode {s:?} (expected in-process or loopback)"
            )),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BenchReport {
    pub transport: Transport,
    /// Payments in both directions together (`2n`).
    pub n_payments: u64,
    pub wall_time: Duration,
    /// Payments per second.
    pub throughput: f64,
    /// Send-to-accept time of a single payment.
    pub latency_mean: Duration,
    pub latency_p50: Duration,
    pub latency_p99: Duration,
    /// Payment frames put on the transport, retransmissions included.
    pub payment_messages: u64,
    pub ack_messages: u64,
    pub initial: [Satoshi; 2],
    pub payout: [Satoshi; 2],
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ms = |d: Duration| d.as_secs_f64() * 1e3;
        writeln!(
            f,
            "# baseline (SGX prototype): throughput={BASELINE_THROUGHPUT} latency_ms={BASELINE_LATENCY_MS}"
        )?;
        writeln!(f, "transport={}", self.transport.name())?;
        writeln!(f, "n_payments={}", self.n_payments)?;
        writeln!(f, "wall_time_s={:.3}", self.wall_time.as_secs_f64())?;
        writeln!(f, "throughput={:.1}", self.throughput)?;
        writeln!(f, "latency_mean_ms={:.4}", ms(self.latency_mean))?;
        writeln!(f, "latency_p50_ms={:.4}", ms(self.latency_p50))?;
        writeln!(f, "latency_p99_ms={:.4}", ms(self.latency_p99))?;
        writeln!(
            f,
            "throughput_x_latency={:.3}",
            self.throughput * self.latency_mean.as_secs_f64()
        )?;
        writeln!(f, "payment_messages={}", self.payment_messages)?;
        writeln!(f, "ack_messages={}", self.ack_messages)?;
        write!(
            f,
            "payout_a={} payout_b={} initial_a={} initial_b={}",
            self.payout[0], self.payout[1], self.initial[0], self.initial[1]
        )
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("need at least one payment each way")]
    NoPayments,
    #[error("establish: {0}")]
    Establish(EstablishError),
    #[error("establish: {0}")]
    EstablishNet(#[from] EstablishFailure),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Host(#[from] HostError),
    #[error("settlement rejected: {0}")]
    Rejected(crate::ledger::RejectReason),
    #[error("{0}")]
    Protocol(String),
}

pub fn run_lockstep(n: usize, transport: Transport) -> Result<BenchReport, BenchError> {
    if n == 0 {
        return Err(BenchError::NoPayments);
    }
    let cfg = ChannelConfig::default();
    let ledger = SharedLedger::new(Ledger::new());
    let node = |role| {
        let enclave = cfg.provisioned_enclave(&mut ledger.lock(), role);
        PartyNode::new(enclave, ledger.clone(), NodeConfig::new(role))
    };
    let (a, b) = (node(Role::HashSide), node(Role::BroadcastSide));
    let mut run = match transport {
        Transport::InProcess => in_process(a, b, n)?,
        Transport::Loopback => loopback(a, b, n)?,
    };
    let settlement = run.a.terminate()?;
    settlement.verdict.map_err(BenchError::Rejected)?;
    let payout = [Role::HashSide, Role::BroadcastSide].map(|r| {
        let key = cfg.change_key(r).public;
        settlement
            .tx
            .outputs
            .iter()
            .filter(|o| o.condition == crate::ledger::LockCondition::SingleSig(key))
            .map(|o| o.value)
            .sum()
    });
    Ok(report(transport, n, run, payout))
}

struct Run {
    a: PartyNode<SharedLedger>,
    initial: [Satoshi; 2],
    wall: Duration,
    latencies: Vec<Duration>,
    payment_messages: u64,
    ack_messages: u64,
}

fn initial(a: &PartyNode<SharedLedger>) -> [Satoshi; 2] {
    let s = a.status();
    [s.balance_mine, s.balance_theirs]
}

fn in_process(
    mut a: PartyNode<SharedLedger>,
    mut b: PartyNode<SharedLedger>,
    n: usize,
) -> Result<Run, BenchError> {
    let mut link = LocalLink::new();
    link.establish(&mut a, &mut b)
        .map_err(BenchError::Establish)?;
    let initial = initial(&a);
    let (mut payments, mut acks) = (0u64, 0u64);
    let mut carry = |from: &mut PartyNode<SharedLedger>, to: &mut PartyNode<SharedLedger>, now| {
        for f in from.poll(now) {
            match f.kind {
                FrameKind::Payment => payments += 1,
                FrameKind::Ack => acks += 1,
                FrameKind::Handshake => {}
            }
            to.handle_frame(Frame::from_bytes(&f.to_bytes()).expect("own encoding"));
        }
    };
    let mut latencies = Vec::with_capacity(2 * n);
    let now = link.now;
    let start = Instant::now();
    for _ in 0..n {
        for flip in [false, true] {
            let (from, to) = if flip {
                (&mut b, &mut a)
            } else {
                (&mut a, &mut b)
            };
            let t = Instant::now();
            from.pay(AMOUNT)?;
            carry(from, to, now);
            latencies.push(t.elapsed());
            carry(to, from, now);
        }
    }
    let wall = start.elapsed();
    Ok(Run {
        a,
        initial,
        wall,
        latencies,
        payment_messages: payments,
        ack_messages: acks,
    })
}

fn loopback(
    a: PartyNode<SharedLedger>,
    b: PartyNode<SharedLedger>,
    n: usize,
) -> Result<Run, BenchError> {
    let listener = TcpListener::bind("127.0.0.1:0").map_err(NetError::from)?;
    let addr = listener.local_addr().map_err(NetError::from)?;
    // Bob answers each payment with one of his own.
    let bob = thread::spawn(move || -> Result<Driver<SharedLedger>, BenchError> {
        let mut d = Driver::new(b, FrameLink::accept(&listener).map_err(NetError::from)?);
        d.establish(NET_BUDGET)?;
        for i in 1..=n as u64 {
            d.run_until(NET_BUDGET, |node| node.stats().payments_received >= i)?;
            d.node.pay(AMOUNT)?;
        }
        d.run_until(NET_BUDGET, |node| node.sender().is_idle())?;
        Ok(d)
    });
    let mut d = Driver::new(a, FrameLink::connect(addr, NET_BUDGET)?);
    d.establish(NET_BUDGET)?;
    let initial = initial(&d.node);
    let mut latencies = Vec::with_capacity(2 * n);
    let start = Instant::now();
    for i in 1..=n as u64 {
        let t = Instant::now();
        d.node.pay(AMOUNT)?;
        d.run_until(NET_BUDGET, |node| node.stats().payments_received >= i)?;
        // One round is two payments back to back.
        let half = t.elapsed() / 2;
        latencies.extend([half, half]);
    }
    d.run_until(NET_BUDGET, |node| node.sender().is_idle())?;
    let wall = start.elapsed();
    let bob = bob
        .join()
        .map_err(|_| BenchError::Protocol("peer thread panicked".into()))??;
    let sent = |kind| d.link.sent(kind) + bob.link.sent(kind);
    let (payment_messages, ack_messages) = (sent(FrameKind::Payment), sent(FrameKind::Ack));
    Ok(Run {
        a: d.node,
        initial,
        wall,
        latencies,
        payment_messages,
        ack_messages,
    })
}

fn report(transport: Transport, n: usize, run: Run, payout: [Satoshi; 2]) -> BenchReport {
    let mut lat = run.latencies;
    lat.sort_unstable();
    let pick = |q: f64| lat[((lat.len() - 1) as f64 * q).round() as usize];
    let total: Duration = lat.iter().sum();
    let n_payments = 2 * n as u64;
    BenchReport {
        transport,
        n_payments,
        wall_time: run.wall,
        throughput: n_payments as f64 / run.wall.as_secs_f64(),
        latency_mean: total / lat.len() as u32,
        latency_p50: pick(0.5),
        latency_p99: pick(0.99),
        payment_messages: run.payment_messages,
        ack_messages: run.ack_messages,
        initial: run.initial,
        payout,
    }
}
