use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::crypto::Digest;
use crate::enclave::{Phase, Status};
use crate::fixtures::derive_seed;
use crate::host::{
    Frame, FrameKind, HostError, NodeConfig, NodeEvent, NodeState, PartyNode, SharedLedger,
};
use crate::ledger::{Ledger, LockCondition, RejectReason, Satoshi, Transaction};

use super::scenario::{Action, Expectation, MsgRef, Party, RandomSpec, Scenario, Step, Verdict};
use super::trace::{Detail, Snapshot, Trace};

/// Ticks a single `flush` may run before giving up on quiescence.
pub const FLUSH_TICKS: u64 = 512;

#[derive(Clone, Debug)]
pub struct Message {
    pub from: Party,
    pub frame: Frame,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("step {step}: invalid scenario: {msg}")]
    Invalid { step: usize, msg: String },
    #[error(transparent)]
    Violation(Box<InvariantViolation>),
    #[error("step {step}: expected {expected}, but {actual}")]
    Expectation {
        step: usize,
        expected: Expectation,
        actual: String,
    },
}

/// An invariant failed. `reproducer` replays exactly the actions that led
/// here, with random stretches already expanded.
#[derive(Debug)]
pub struct InvariantViolation {
    pub invariant: &'static str,
    pub detail: String,
    pub step: usize,
    pub reproducer: Scenario,
    pub trace: Trace,
}

impl fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "step {}: invariant `{}` violated: {}",
            self.step, self.invariant, self.detail
        )
    }
}

impl std::error::Error for InvariantViolation {}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub name: String,
    pub trace: Trace,
    pub ledger: Ledger,
    pub status: [Status; 2],
    pub sent: [Vec<Satoshi>; 2],
    pub received: [Vec<Satoshi>; 2],
    pub executed: Vec<Action>,
    pub submissions: Vec<(Party, &'static str, Result<Digest, RejectReason>)>,
}

impl Outcome {
    /// The confirmed transaction spending the channel output, if any.
    pub fn channel_spend(&self) -> Option<&Transaction> {
        let funding = self.ledger.confirmed().first()?.txid();
        self.ledger.confirmed().iter().find(|tx| {
            tx.inputs
                .iter()
                .any(|i| i.outpoint.txid == funding && i.outpoint.index == 0)
        })
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub detail: Detail,
}

pub fn run(scenario: &Scenario) -> Result<Outcome, RunError> {
    run_with(scenario, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, opts: RunOptions) -> Result<Outcome, RunError> {
    let mut sim = Sim::new(scenario, opts);
    sim.start();
    for step in &scenario.script {
        match *step {
            Step::Act(a) => sim.act(a)?,
            Step::Random(spec) => sim.random(spec)?,
        }
    }
    sim.finish()
}

struct Sim<'s> {
    scenario: &'s Scenario,
    ledger: SharedLedger,
    nodes: [PartyNode<SharedLedger>; 2],
    crashed: [bool; 2],
    now: u64,
    messages: Vec<Message>,
    pending: Vec<usize>,
    payment_frames: [Vec<usize>; 2],
    next_payment_seq: [u64; 2],
    sent: [Vec<Satoshi>; 2],
    received: [Vec<Satoshi>; 2],
    initial: [Option<Satoshi>; 2],
    payout_to: [LockCondition; 2],
    channel: LockCondition,
    last_verdict: [Option<Result<Digest, RejectReason>>; 2],
    submissions: Vec<(Party, &'static str, Result<Digest, RejectReason>)>,
    confirmed_seen: usize,
    executed: Vec<Action>,
    rng: ChaCha8Rng,
    trace: Trace,
    detail: Detail,
}

impl<'s> Sim<'s> {
    fn new(scenario: &'s Scenario, opts: RunOptions) -> Self {
        let cfg = scenario.config;
        let mut ledger = Ledger::new();
        let nodes = Party::BOTH.map(|p| {
            let enclave = cfg.provisioned_enclave(&mut ledger, p.role());
            (enclave, NodeConfig::new(p.role()))
        });
        let ledger = SharedLedger::new(ledger);
        let nodes = nodes.map(|(e, c)| PartyNode::new(e, ledger.clone(), c));
        let payout_to =
            Party::BOTH.map(|p| LockCondition::SingleSig(cfg.change_key(p.role()).public));
        let channel = LockCondition::MultiSig2of2(
            cfg.btc_key(Party::A.role()).public,
            cfg.btc_key(Party::B.role()).public,
        );
        let mut trace = Trace::default();
        trace.header(&scenario.name, &cfg);
        Self {
            scenario,
            ledger,
            nodes,
            crashed: [false; 2],
            now: 0,
            messages: Vec::new(),
            pending: Vec::new(),
            payment_frames: [Vec::new(), Vec::new()],
            next_payment_seq: [0; 2],
            sent: [Vec::new(), Vec::new()],
            received: [Vec::new(), Vec::new()],
            initial: [None; 2],
            payout_to,
            channel,
            last_verdict: [None; 2],
            submissions: Vec::new(),
            confirmed_seen: 0,
            executed: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "schedule")),
            trace,
            detail: opts.detail,
        }
    }

    fn node(&mut self, p: Party) -> &mut PartyNode<SharedLedger> {
        &mut self.nodes[p.index()]
    }

    fn start(&mut self) {
        for p in Party::BOTH {
            self.node(p).start();
        }
        self.poll_all();
    }

    fn step_no(&self) -> usize {
        self.executed.len()
    }

    fn invalid(&self, msg: impl Into<String>) -> RunError {
        RunError::Invalid {
            step: self.step_no(),
            msg: msg.into(),
        }
    }

    fn poll_all(&mut self) {
        for p in Party::BOTH {
            if self.crashed[p.index()] {
                continue;
            }
            let now = self.now;
            for frame in self.node(p).poll(now) {
                let id = self.messages.len();
                if frame.kind == FrameKind::Payment && frame.seq >= self.next_payment_seq[p.index()]
                {
                    self.next_payment_seq[p.index()] = frame.seq + 1;
                    self.payment_frames[p.index()].push(id);
                }
                if self.detail == Detail::Wire {
                    self.trace.line(format!(
                        "  net emit id={id} from={p} kind={} seq={} len={}",
                        frame.kind.name(),
                        frame.seq,
                        frame.payload.len()
                    ));
                }
                self.messages.push(Message { from: p, frame });
                self.pending.push(id);
            }
        }
    }

    fn resolve(&self, m: MsgRef) -> Result<usize, RunError> {
        let id = match m {
            MsgRef::Id(i) => Some(i),
            MsgRef::Payment(p, n) => self.payment_frames[p.index()].get(n - 1).copied(),
            MsgRef::Last => self.messages.len().checked_sub(1),
        };
        id.filter(|&i| i < self.messages.len())
            .ok_or_else(|| self.invalid(format!("message {m} has not been emitted")))
    }

    fn take_pending(&mut self, m: MsgRef) -> Result<usize, RunError> {
        let id = self.resolve(m)?;
        let pos = self
            .pending
            .iter()
            .position(|&i| i == id)
            .ok_or_else(|| self.invalid(format!("message {m} is not in flight")))?;
        self.pending.remove(pos);
        Ok(id)
    }

    fn deliver(&mut self, to: Party, frame: Frame) {
        if self.crashed[to.index()] {
            return;
        }
        // Frames cross the simulated wire as bytes.
        let frame = Frame::from_bytes(&frame.to_bytes()).expect("well-formed frame");
        self.node(to).handle_frame(frame);
    }

    fn record(&mut self, action: Action) {
        self.executed.push(action);
        self.trace
            .line(format!("step {} {action}", self.executed.len()));
    }

    fn act(&mut self, action: Action) -> Result<(), RunError> {
        self.record(action);
        match action {
            Action::Deliver(m) => {
                let id = self.take_pending(m)?;
                let Message { from, frame } = self.messages[id].clone();
                self.deliver(from.peer(), frame);
            }
            Action::Drop(m) => {
                self.take_pending(m)?;
            }
            Action::Replay(m) => {
                let id = self.resolve(m)?;
                let Message { from, mut frame } = self.messages[id].clone();
                let to = from.peer();
                if frame.kind != FrameKind::Ack {
                    frame.seq = self.nodes[to.index()].next_expected_seq();
                }
                self.deliver(to, frame);
            }
            Action::Corrupt(m, offset) => {
                let id = self.take_pending(m)?;
                let Message { from, mut frame } = self.messages[id].clone();
                if frame.kind != FrameKind::Payment {
                    return Err(self.invalid(format!("message {m} carries no payment ciphertext")));
                }
                let to = from.peer();
                let i = offset % frame.payload.len();
                frame.payload[i] ^= 0x01;
                let before = self.nodes[to.index()].status().recv_counter;
                self.deliver(to, frame);
                if self.nodes[to.index()].status().recv_counter != before {
                    return Err(self.violation(
                        "authenticity",
                        format!("corrupted message {id} was accepted by {to}"),
                    ));
                }
            }
            Action::AdvanceHeight(n) => {
                self.ledger.lock().advance_height(n);
            }
            Action::Crash(p) => {
                if self.crashed[p.index()] {
                    return Err(self.invalid(format!("party {p} already crashed")));
                }
                self.crashed[p.index()] = true;
            }
            Action::Terminate(p) => {
                self.require_live(p)?;
                match self.node(p).terminate() {
                    Ok(sub) => self.note_submission(p, "settlement", sub.verdict),
                    Err(e) => self
                        .trace
                        .line(format!("  {p} terminate-refused error=\"{e}\"")),
                }
            }
            Action::Refund(p) => {
                self.require_live(p)?;
                match self.node(p).refund_after_timeout() {
                    Ok(sub) => self.note_submission(p, "refund", sub.verdict),
                    Err(e) => self
                        .trace
                        .line(format!("  {p} refund-refused error=\"{e}\"")),
                }
            }
            Action::Maul => {
                if self.nodes[Party::B.index()].setup_txid().is_some() {
                    return Err(self.invalid("maul after the setup transaction was built"));
                }
                self.node(Party::B).set_maul_setup(true);
            }
            Action::Pay(p, amount) => {
                self.require_live(p)?;
                match self.node(p).pay(amount) {
                    Ok(_) => self.sent[p.index()].push(amount),
                    Err(e) => self.trace_pay_refused(p, e),
                }
            }
            Action::Tick(n) => {
                for _ in 0..n {
                    self.now += 1;
                    self.poll_all();
                    self.after_event()?;
                }
            }
            Action::Flush => self.flush()?,
            Action::Expect(e) => self.expect(e)?,
        }
        self.poll_all();
        self.after_event()?;
        self.snapshot();
        Ok(())
    }

    fn require_live(&self, p: Party) -> Result<(), RunError> {
        if self.crashed[p.index()] {
            Err(self.invalid(format!("party {p} has crashed")))
        } else {
            Ok(())
        }
    }

    fn trace_pay_refused(&mut self, p: Party, e: HostError) {
        self.trace.line(format!("  {p} pay-refused error=\"{e}\""));
    }

    fn note_submission(
        &mut self,
        p: Party,
        what: &'static str,
        verdict: Result<Digest, RejectReason>,
    ) {
        self.last_verdict[p.index()] = Some(verdict);
        self.submissions.push((p, what, verdict));
    }

    fn quiet(&self) -> bool {
        Party::BOTH.iter().all(|&p| {
            self.crashed[p.index()]
                || self.crashed[p.peer().index()]
                || self.nodes[p.index()].is_quiet()
        })
    }

    fn flush(&mut self) -> Result<(), RunError> {
        let deadline = self.now + FLUSH_TICKS;
        loop {
            self.poll_all();
            if self.pending.is_empty() {
                if self.quiet() || self.now >= deadline {
                    return Ok(());
                }
                self.now += 1;
                continue;
            }
            for id in std::mem::take(&mut self.pending) {
                let Message { from, frame } = self.messages[id].clone();
                self.deliver(from.peer(), frame);
            }
            self.after_event()?;
        }
    }

    fn expect(&mut self, e: Expectation) -> Result<(), RunError> {
        let actual = match e {
            Expectation::Confirmed(n) => {
                let got = self.ledger.lock().confirmed().len();
                (got != n).then(|| format!("{got} transactions are confirmed"))
            }
            Expectation::LastSubmission(p, want) => {
                let got = self.last_verdict[p.index()];
                let ok = match (want, got) {
                    (Verdict::Accepted, Some(Ok(_))) => true,
                    (Verdict::Rejected(r), Some(Err(g))) => r == g,
                    _ => false,
                };
                (!ok).then(|| format!("{p}'s last submission was {got:?}"))
            }
            Expectation::Failed(p) => {
                let state = self.nodes[p.index()].state();
                (!matches!(state, NodeState::Failed(_))).then(|| format!("{p} is {state:?}"))
            }
            Expectation::Delivered(p) => {
                let (s, r) = (&self.sent[p.index()], &self.received[p.peer().index()]);
                (s != r).then(|| format!("{p} sent {} payments, {} accepted", s.len(), r.len()))
            }
        };
        match actual {
            None => Ok(()),
            Some(actual) => Err(RunError::Expectation {
                step: self.step_no(),
                expected: e,
                actual,
            }),
        }
    }

    /// Expands a random stretch. Every choice is drawn from the scenario's
    /// schedule RNG and recorded as a concrete action.
    fn random(&mut self, spec: RandomSpec) -> Result<(), RunError> {
        let probs = [spec.p_drop, spec.p_replay, spec.p_reorder, spec.p_corrupt];
        if !probs.iter().all(|p| (0.0..=1.0).contains(p)) {
            return Err(self.invalid("random probabilities must lie in [0, 1]"));
        }
        for _ in 0..spec.payments {
            let first = if self.rng.gen_bool(0.5) {
                Party::A
            } else {
                Party::B
            };
            let payer = [first, first.peer()].into_iter().find(|&p| {
                !self.crashed[p.index()]
                    && self.nodes[p.index()].is_open()
                    && self.nodes[p.index()].status().balance_mine > 0
            });
            if let Some(p) = payer {
                let balance = self.nodes[p.index()].status().balance_mine;
                let amount = self.rng.gen_range(1..=balance.div_ceil(8));
                self.act(Action::Pay(p, amount))?;
            }
            let mut order = self.pending.clone();
            if self.rng.gen_bool(spec.p_reorder) {
                order.shuffle(&mut self.rng);
            }
            for id in order {
                if self.rng.gen_bool(spec.p_reorder / 2.0) {
                    continue;
                }
                let r: f64 = self.rng.gen();
                let action = if r < spec.p_drop {
                    Action::Drop(MsgRef::Id(id))
                } else if r < spec.p_drop + spec.p_corrupt
                    && self.messages[id].frame.kind == FrameKind::Payment
                {
                    let len = self.messages[id].frame.payload.len();
                    Action::Corrupt(MsgRef::Id(id), self.rng.gen_range(0..len))
                } else {
                    Action::Deliver(MsgRef::Id(id))
                };
                self.act(action)?;
            }
            let replayable: Vec<usize> = Party::BOTH
                .iter()
                .flat_map(|p| self.payment_frames[p.index()].iter().copied())
                .collect();
            if !replayable.is_empty() && self.rng.gen_bool(spec.p_replay) {
                let id = *replayable.choose(&mut self.rng).unwrap();
                self.act(Action::Replay(MsgRef::Id(id)))?;
            }
            self.act(Action::Tick(1))?;
        }
        Ok(())
    }

    fn drain_events(&mut self) {
        for p in Party::BOTH {
            for event in self.nodes[p.index()].drain_events() {
                if let NodeEvent::PaymentAccepted { amount, .. } = event {
                    self.received[p.index()].push(amount);
                }
                if let NodeEvent::Submitted {
                    what: "immediate-refund",
                    verdict,
                } = event
                {
                    self.note_submission(p, "immediate-refund", verdict);
                }
                self.trace.line(format!("  {p} {event}"));
            }
            if self.initial[p.index()].is_none() {
                self.initial[p.index()] = self.nodes[p.index()]
                    .enclave()
                    .initial_balances()
                    .map(|(mine, _)| mine);
            }
        }
        let ledger = self.ledger.lock();
        let fresh: Vec<Transaction> = ledger.confirmed()[self.confirmed_seen..].to_vec();
        drop(ledger);
        for tx in fresh {
            let class = self.classify(&tx);
            self.trace
                .line(format!("  ledger confirm {class} txid={}", tx.txid()));
            self.confirmed_seen += 1;
        }
    }

    fn classify(&self, tx: &Transaction) -> &'static str {
        if tx
            .outputs
            .first()
            .is_some_and(|o| o.condition == self.channel)
        {
            "setup"
        } else if tx.lock_time > 0 {
            "refund"
        } else {
            "settlement"
        }
    }

    fn snapshot(&mut self) {
        let s = Snapshot {
            step: self.executed.len(),
            now: self.now,
            height: self.ledger.lock().height(),
            balance: Party::BOTH.map(|p| self.nodes[p.index()].status().balance_mine),
        };
        self.trace.snapshot(s);
    }

    fn violation(&self, invariant: &'static str, detail: String) -> RunError {
        let mut reproducer = self.scenario.clone();
        reproducer.script = self.executed.iter().map(|&a| Step::Act(a)).collect();
        RunError::Violation(Box::new(InvariantViolation {
            invariant,
            detail,
            step: self.step_no(),
            reproducer,
            trace: self.trace.clone(),
        }))
    }

    fn after_event(&mut self) -> Result<(), RunError> {
        self.drain_events();
        match self.check() {
            Ok(()) => Ok(()),
            Err((name, detail)) => Err(self.violation(name, detail)),
        }
    }

    /// The global invariant suite.
    fn check(&self) -> Result<(), (&'static str, String)> {
        let ledger = self.ledger.lock();
        if !ledger.is_value_conserved() {
            return Err((
                "conservation",
                "on-chain value differs from minted value".into(),
            ));
        }
        if !ledger.has_no_double_spend() {
            return Err(("no-double-spend", "an outpoint is spent twice".into()));
        }
        if ledger.confirmed().len() > 2 {
            return Err((
                "at-most-two-transactions",
                format!(
                    "{} channel transactions confirmed",
                    ledger.confirmed().len()
                ),
            ));
        }

        for p in Party::BOTH {
            let (i, q) = (p.index(), p.peer().index());
            let (sent, recv) = (&self.sent[i], &self.received[q]);
            if recv.len() > sent.len() || recv[..] != sent[..recv.len()] {
                return Err((
                    "counter-prefix",
                    format!(
                        "{} accepted {recv:?}, not a prefix of what {p} sent",
                        p.peer()
                    ),
                ));
            }
            let status = self.nodes[i].status();
            if matches!(status.phase, Phase::Active | Phase::Closed)
                && (status.send_counter != self.sent[i].len() as u64
                    || status.recv_counter != self.received[i].len() as u64)
            {
                return Err((
                    "counter-prefix",
                    format!("{p}'s enclave counters disagree with its traffic"),
                ));
            }
            if let (Some(init_mine), Some(init_theirs)) = (self.initial[i], self.initial[q]) {
                if matches!(status.phase, Phase::Active | Phase::Closed) {
                    let view = self.view(p, init_mine);
                    if Some(status.balance_mine) != view
                        || status.balance_mine + status.balance_theirs != init_mine + init_theirs
                    {
                        return Err((
                            "credit-bound",
                            format!(
                                "{p}'s enclave holds {}/{}, traffic implies {view:?}",
                                status.balance_mine, status.balance_theirs
                            ),
                        ));
                    }
                }
            }
        }

        let Some(funding) = ledger.confirmed().iter().find(|tx| {
            tx.outputs
                .first()
                .is_some_and(|o| o.condition == self.channel)
        }) else {
            return Ok(());
        };
        let funding_id = funding.txid();
        let Some(spend) = ledger
            .confirmed()
            .iter()
            .find(|tx| tx.inputs.iter().any(|inp| inp.outpoint.txid == funding_id))
        else {
            return Ok(());
        };
        let (Some(init_a), Some(init_b)) = (self.initial[0], self.initial[1]) else {
            return Err((
                "no-harm",
                "channel spent before both balances were known".into(),
            ));
        };
        let init = [init_a, init_b];
        let payout = self.payout_to.each_ref().map(|c| {
            spend
                .outputs
                .iter()
                .filter(|o| o.condition == *c)
                .map(|o| o.value)
                .sum::<Satoshi>()
        });
        if payout[0] + payout[1] != init_a + init_b {
            return Err((
                "conservation",
                format!(
                    "channel spend pays {payout:?}, channel holds {}",
                    init_a + init_b
                ),
            ));
        }
        if spend.lock_time > 0 {
            // The time-locked refund restores the initial split by design.
            if payout != init {
                return Err((
                    "refund-amounts",
                    format!("refund pays {payout:?}, not {init:?}"),
                ));
            }
            return Ok(());
        }
        for p in Party::BOTH {
            let (i, q) = (p.index(), p.peer().index());
            let own_view = self.view(p, init[i]).unwrap_or(0);
            if payout[i] < own_view {
                return Err((
                    "no-harm",
                    format!("{p} is paid {} but held {own_view}", payout[i]),
                ));
            }
            let ceiling =
                (init[i] + sent_total(&self.sent[q])).saturating_sub(sent_total(&self.received[q]));
            if payout[i] > ceiling {
                return Err((
                    "no-revert",
                    format!("{p} is paid {} but can claim at most {ceiling}", payout[i]),
                ));
            }
        }
        Ok(())
    }

    /// `initial - sent + received` for `p`, from traffic alone.
    fn view(&self, p: Party, initial: Satoshi) -> Option<Satoshi> {
        let i = p.index();
        (initial + sent_total(&self.received[i])).checked_sub(sent_total(&self.sent[i]))
    }

    fn finish(mut self) -> Result<Outcome, RunError> {
        self.drain_events();
        let ledger = self.ledger.snapshot();
        let status = Party::BOTH.map(|p| self.nodes[p.index()].status());
        self.trace.footer(&ledger, &status);
        Ok(Outcome {
            name: self.scenario.name.clone(),
            trace: self.trace,
            ledger,
            status,
            sent: self.sent,
            received: self.received,
            executed: self.executed,
            submissions: self.submissions,
        })
    }
}

fn sent_total(amounts: &[Satoshi]) -> Satoshi {
    amounts.iter().sum()
}
