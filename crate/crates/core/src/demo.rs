//! The reference demo: two 50 BTC deposits, a seeded run of lock-step
//! payments, and a close that leaves the broadcast side (Bob) with 9 BTC.
//!
//! The same payment plan drives the in-process run (a netsim scenario, so
//! it gets the full trace and invariant suite) and the two-process run over
//! sockets ([`run_party`]). Equal configurations give equal ledgers.

use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::enclave::{split_close_fee, Enclave, Role, Status};
use crate::fixtures::{derive_seed, ChannelConfig};
use crate::host::net::{Driver, EstablishFailure, FrameLink, NetError, RemoteLedger};
use crate::host::{HostError, LedgerClient, NodeConfig, PartyNode, Submission};
use crate::ledger::{Ledger, Satoshi, SATOSHI_PER_BTC};
use crate::netsim::{self, Action, Expectation, Outcome, Party, RunError, Scenario, Step};

/// Largest random payment in a plan.
pub const MAX_RANDOM_PAYMENT: Satoshi = SATOSHI_PER_BTC;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DemoConfig {
    pub channel: ChannelConfig,
    pub payments: usize,
    /// Bob's closing balance. When set, the last payment of the plan is
    /// chosen to reach it. Clamped to the channel's capacity.
    pub close_b: Option<Satoshi>,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            channel: ChannelConfig::default(),
            payments: 20,
            close_b: Some(9 * SATOSHI_PER_BTC),
        }
    }
}

impl DemoConfig {
    /// Opening balances `[a, b]` after each side's share of the closing fee.
    pub fn initial_balances(&self) -> Option<[Satoshi; 2]> {
        let c = &self.channel;
        let fee = split_close_fee(c.fee_close, c.deposit_hash, c.deposit_broadcast)?;
        Some([
            c.deposit_hash - fee.hash_side,
            c.deposit_broadcast - fee.broadcast_side,
        ])
    }
}

/// The ordered payments of a demo run. Random payments go in a random
/// direction from whichever side can afford them; with `close_b` set the
/// final payment moves Bob to that balance. A zero correction is left out.
pub fn plan(cfg: &DemoConfig) -> Vec<(Party, Satoshi)> {
    let Some(mut balance) = cfg.initial_balances() else {
        return Vec::new();
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.channel.seed, "demo-plan"));
    let random_count = match cfg.close_b {
        Some(_) => cfg.payments.saturating_sub(1),
        None => cfg.payments,
    };
    let mut out = Vec::with_capacity(cfg.payments);
    for _ in 0..random_count {
        let mut from = if rng.gen_bool(0.5) {
            Party::A
        } else {
            Party::B
        };
        if balance[from.index()] == 0 {
            from = from.peer();
        }
        let available = balance[from.index()];
        if available == 0 {
            break;
        }
        let amount = rng.gen_range(1..=available.min(MAX_RANDOM_PAYMENT));
        balance[from.index()] -= amount;
        balance[from.peer().index()] += amount;
        out.push((from, amount));
    }
    if let (Some(target), true) = (cfg.close_b, cfg.payments > 0) {
        let target = target.min(balance[0] + balance[1]);
        let b = balance[Party::B.index()];
        if b > target {
            out.push((Party::B, b - target));
        } else if b < target {
            out.push((Party::A, target - b));
        }
    }
    out
}

/// The demo as a lock-step scenario: every payment is delivered and
/// acknowledged before the next, then Bob settles.
pub fn scenario(cfg: &DemoConfig) -> Scenario {
    let mut script = vec![Step::Act(Action::Flush)];
    for (p, amount) in plan(cfg) {
        script.push(Step::Act(Action::Pay(p, amount)));
        script.push(Step::Act(Action::Flush));
    }
    script.push(Step::Act(Action::Terminate(Party::B)));
    script.push(Step::Act(Action::Expect(Expectation::Confirmed(2))));
    Scenario::new("demo", cfg.channel, script)
}

pub fn run(cfg: &DemoConfig) -> Result<Outcome, RunError> {
    netsim::run(&scenario(cfg))
}

/// The ledger a two-process run starts from: both parties' faucet outputs.
pub fn genesis_ledger(channel: &ChannelConfig) -> Ledger {
    let mut ledger = Ledger::new();
    for role in [Role::HashSide, Role::BroadcastSide] {
        channel.fund(&mut ledger, role).expect("fresh ledger");
    }
    ledger
}

#[derive(Debug, thiserror::Error)]
pub enum PartyError {
    #[error(transparent)]
    Establish(#[from] EstablishFailure),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("payment {index} failed: {err}")]
    Pay { index: usize, err: HostError },
    #[error("settlement failed: {0}")]
    Settle(HostError),
    #[error("provisioning failed: {0}")]
    Provision(crate::enclave::EnclaveError),
}

#[derive(Debug)]
pub struct PartyReport {
    pub role: Role,
    pub status: Status,
    pub settlement: Option<Submission>,
    pub payments_sent: u64,
    pub payments_received: u64,
    /// The shared ledger as this party last saw it.
    pub ledger: String,
}

/// Runs one side of the demo over a socket against a ledger service that
/// was started from [`genesis_ledger`]. Bob settles once the plan is done;
/// Alice waits until the settlement is on chain.
pub fn run_party(
    cfg: &DemoConfig,
    role: Role,
    link: FrameLink,
    ledger: RemoteLedger,
    budget: Duration,
) -> Result<PartyReport, PartyError> {
    // The faucet output is a pure function of the configuration, so a
    // scratch ledger yields the same funding transaction the service holds.
    // Enclave identities are fresh per process, as on real hardware; none of
    // their key material reaches the ledger.
    let funding = cfg
        .channel
        .fund(&mut Ledger::new(), role)
        .expect("fresh ledger");
    let mut enclave = Enclave::from_entropy(cfg.channel.authority());
    enclave
        .provision(
            cfg.channel.setup_data(role, funding.as_ref()),
            cfg.channel.params(role),
        )
        .map_err(PartyError::Provision)?;
    let node = PartyNode::new(enclave, ledger, NodeConfig::new(role));
    let mut driver = Driver::new(node, link);
    driver.establish(budget)?;

    let me = if role == Role::HashSide {
        Party::A
    } else {
        Party::B
    };
    let mut received = 0;
    for (index, (from, amount)) in plan(cfg).into_iter().enumerate() {
        if from == me {
            driver
                .node
                .pay(amount)
                .map_err(|err| PartyError::Pay { index, err })?;
            driver.run_until(budget, |n| n.sender().is_idle())?;
        } else {
            received += 1;
            driver.run_until(budget, |n| n.stats().payments_received >= received)?;
        }
    }

    let settlement = if me == Party::B {
        let s = driver.node.terminate().map_err(PartyError::Settle)?;
        // Keep acking until Alice has seen the settlement and hangs up.
        match driver.run_until(budget, |_| false) {
            Err(NetError::Closed) => {}
            Err(e) => return Err(e.into()),
            Ok(()) => unreachable!(),
        }
        Some(s)
    } else {
        driver.run_until(budget, |n| !n.ledger().confirmed_since(1).is_empty())?;
        None
    };
    // Alice reads the ledger before hanging up: Bob's process may host it.
    let ledger = driver.node.ledger().dump()?;
    driver.link.shutdown();
    let stats = driver.node.stats();
    Ok(PartyReport {
        role,
        status: driver.node.status(),
        settlement,
        payments_sent: stats.payments_sent,
        payments_received: stats.payments_received,
        ledger,
    })
}
