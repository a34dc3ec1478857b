//! Scenario description and its line-oriented file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! name replay
//! seed 7
//! deposits 50btc 50btc      # hash side, broadcast side
//! fees 0.002btc 0.002btc    # setup, close
//! lock 144
//! flush
//! pay a 1000
//! replay a.pay.1
//! random 20 drop=0.1 replay=0.05 reorder=0.1 corrupt=0.02
//! terminate b
//! expect confirmed 2
//! ```
//!
//! Amounts are satoshi unless suffixed with `btc`. Party `a` is the hash
//! side, `b` the broadcast side. Messages are referenced by emission index
//! (`7`), as the n-th payment frame a party emitted (`a.pay.3`), or as
//! `last`. Header lines must precede the first action.

use std::fmt;
use std::str::FromStr;

use crate::enclave::Role;
use crate::fixtures::ChannelConfig;
use crate::ledger::{parse_btc, RejectReason, Satoshi};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub const BOTH: [Party; 2] = [Party::A, Party::B];

    pub fn role(self) -> Role {
        match self {
            Party::A => Role::HashSide,
            Party::B => Role::BroadcastSide,
        }
    }

    pub fn peer(self) -> Party {
        match self {
            Party::A => Party::B,
            Party::B => Party::A,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::A => "a",
            Party::B => "b",
        })
    }
}

impl FromStr for Party {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "a" => Ok(Party::A),
            "b" => Ok(Party::B),
            _ => Err(format!("unknown party `{s}` (expected a or b)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MsgRef {
    Id(usize),
    /// The `n`-th (from 1) payment frame first emitted by a party.
    Payment(Party, usize),
    Last,
}

impl fmt::Display for MsgRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MsgRef::Id(i) => write!(f, "{i}"),
            MsgRef::Payment(p, n) => write!(f, "{p}.pay.{n}"),
            MsgRef::Last => f.write_str("last"),
        }
    }
}

impl FromStr for MsgRef {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "last" {
            return Ok(MsgRef::Last);
        }
        if let Ok(i) = s.parse() {
            return Ok(MsgRef::Id(i));
        }
        let parts: Vec<&str> = s.split('.').collect();
        match parts.as_slice() {
            [p, "pay", n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| format!("bad payment index in `{s}`"))?;
                if n == 0 {
                    return Err("payment indices start at 1".into());
                }
                Ok(MsgRef::Payment(p.parse()?, n))
            }
            _ => Err(format!("bad message reference `{s}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Accepted,
    Rejected(RejectReason),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Expectation {
    /// Number of confirmed (non-faucet) transactions.
    Confirmed(usize),
    /// Verdict of the party's most recent ledger submission.
    LastSubmission(Party, Verdict),
    /// The party's channel failed to establish.
    Failed(Party),
    /// The party's payments all arrived: its peer accepted exactly the
    /// sequence it sent.
    Delivered(Party),
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expectation::Confirmed(n) => write!(f, "confirmed {n}"),
            Expectation::LastSubmission(p, Verdict::Accepted) => write!(f, "last {p} accepted"),
            Expectation::LastSubmission(p, Verdict::Rejected(r)) => {
                write!(f, "last {p} rejected {}", r.name())
            }
            Expectation::Failed(p) => write!(f, "failed {p}"),
            Expectation::Delivered(p) => write!(f, "delivered {p}"),
        }
    }
}

/// One adversary or party action.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Action {
    Deliver(MsgRef),
    Drop(MsgRef),
    /// Re-sends a copy of an emitted frame, renumbered so the receiving host
    /// hands it to its enclave.
    Replay(MsgRef),
    /// Delivers a payment frame with the byte at `offset` (mod length)
    /// flipped.
    Corrupt(MsgRef, usize),
    AdvanceHeight(u64),
    Crash(Party),
    Terminate(Party),
    /// The broadcast side publishes a mauled setup transaction. Only valid
    /// before the setup is published.
    Maul,
    Pay(Party, Satoshi),
    Tick(u64),
    /// Honest network: deliver everything in order until both sides go
    /// quiet.
    Flush,
    Refund(Party),
    Expect(Expectation),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Deliver(m) => write!(f, "deliver {m}"),
            Action::Drop(m) => write!(f, "drop {m}"),
            Action::Replay(m) => write!(f, "replay {m}"),
            Action::Corrupt(m, off) => write!(f, "corrupt {m} {off}"),
            Action::AdvanceHeight(n) => write!(f, "height {n}"),
            Action::Crash(p) => write!(f, "crash {p}"),
            Action::Terminate(p) => write!(f, "terminate {p}"),
            Action::Maul => f.write_str("maul"),
            Action::Pay(p, amount) => write!(f, "pay {p} {amount}"),
            Action::Tick(n) => write!(f, "tick {n}"),
            Action::Flush => f.write_str("flush"),
            Action::Refund(p) => write!(f, "refund {p}"),
            Action::Expect(e) => write!(f, "expect {e}"),
        }
    }
}

/// A random stretch of payments under a lossy, replaying, reordering and
/// corrupting network. Expanded into concrete actions while running.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSpec {
    pub payments: usize,
    pub p_drop: f64,
    pub p_replay: f64,
    pub p_reorder: f64,
    pub p_corrupt: f64,
}

impl fmt::Display for RandomSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "random {} drop={} replay={} reorder={} corrupt={}",
            self.payments, self.p_drop, self.p_replay, self.p_reorder, self.p_corrupt
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Step {
    Act(Action),
    Random(RandomSpec),
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Act(a) => a.fmt(f),
            Step::Random(r) => r.fmt(f),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    /// Seeds keys, enclaves and random schedules; same as `config.seed`.
    pub config: ChannelConfig,
    pub script: Vec<Step>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, config: ChannelConfig, script: Vec<Step>) -> Self {
        Self {
            name: name.into(),
            config,
            script,
        }
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parse(text)
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.config;
        writeln!(f, "name {}", self.name)?;
        writeln!(f, "seed {}", c.seed)?;
        writeln!(f, "deposits {} {}", c.deposit_hash, c.deposit_broadcast)?;
        writeln!(f, "fees {} {}", c.fee_setup, c.fee_close)?;
        writeln!(f, "lock {}", c.refund_lock_height)?;
        for step in &self.script {
            writeln!(f, "{step}")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ParseError {
    pub line: usize,
    pub msg: String,
}

fn amount(s: &str) -> Result<Satoshi, String> {
    let parsed = match s.strip_suffix("btc") {
        Some(btc) => parse_btc(btc),
        None => s.parse().ok(),
    };
    parsed.ok_or_else(|| format!("bad amount `{s}`"))
}

fn number<T: FromStr>(s: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("bad number `{s}`"))
}

fn probability(s: &str) -> Result<f64, String> {
    let p: f64 = number(s)?;
    if (0.0..=1.0).contains(&p) {
        Ok(p)
    } else {
        Err(format!("probability {p} outside [0, 1]"))
    }
}

fn expectation(args: &[&str]) -> Result<Expectation, String> {
    Ok(match args {
        ["confirmed", n] => Expectation::Confirmed(number(n)?),
        ["last", p, "accepted"] => Expectation::LastSubmission(p.parse()?, Verdict::Accepted),
        ["last", p, "rejected", reason] => Expectation::LastSubmission(
            p.parse()?,
            Verdict::Rejected(
                RejectReason::from_name(reason)
                    .ok_or_else(|| format!("unknown reject reason `{reason}`"))?,
            ),
        ),
        ["failed", p] => Expectation::Failed(p.parse()?),
        ["delivered", p] => Expectation::Delivered(p.parse()?),
        _ => return Err(format!("bad expectation `{}`", args.join(" "))),
    })
}

fn random_spec(args: &[&str]) -> Result<RandomSpec, String> {
    let (n, rest) = args.split_first().ok_or("random needs a payment count")?;
    let mut spec = RandomSpec {
        payments: number(n)?,
        p_drop: 0.0,
        p_replay: 0.0,
        p_reorder: 0.0,
        p_corrupt: 0.0,
    };
    for kv in rest {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, got `{kv}`"))?;
        let p = probability(v)?;
        match k {
            "drop" => spec.p_drop = p,
            "replay" => spec.p_replay = p,
            "reorder" => spec.p_reorder = p,
            "corrupt" => spec.p_corrupt = p,
            _ => return Err(format!("unknown random parameter `{k}`")),
        }
    }
    Ok(spec)
}

fn step(words: &[&str]) -> Result<Step, String> {
    let (cmd, args) = words.split_first().expect("non-empty line");
    let act = match (*cmd, args) {
        ("deliver", [m]) => Action::Deliver(m.parse()?),
        ("drop", [m]) => Action::Drop(m.parse()?),
        ("replay", [m]) => Action::Replay(m.parse()?),
        ("corrupt", [m, off]) => Action::Corrupt(m.parse()?, number(off)?),
        ("height", [n]) => Action::AdvanceHeight(number(n)?),
        ("crash", [p]) => Action::Crash(p.parse()?),
        ("terminate", [p]) => Action::Terminate(p.parse()?),
        ("maul", []) => Action::Maul,
        ("pay", [p, amt]) => Action::Pay(p.parse()?, amount(amt)?),
        ("tick", [n]) => Action::Tick(number(n)?),
        ("flush", []) => Action::Flush,
        ("refund", [p]) => Action::Refund(p.parse()?),
        ("expect", rest) => Action::Expect(expectation(rest)?),
        ("random", rest) => return random_spec(rest).map(Step::Random),
        (
            "deliver" | "drop" | "replay" | "corrupt" | "height" | "crash" | "terminate" | "maul"
            | "pay" | "tick" | "flush" | "refund",
            _,
        ) => return Err(format!("wrong number of arguments for `{cmd}`")),
        _ => return Err(format!("unknown action `{cmd}`")),
    };
    Ok(Step::Act(act))
}

pub fn parse(text: &str) -> Result<Scenario, ParseError> {
    let mut name = None;
    let mut config = ChannelConfig::default();
    let mut script = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| ParseError { line: i + 1, msg };
        let words: Vec<&str> = line.split_whitespace().collect();
        let header = matches!(words[0], "name" | "seed" | "deposits" | "fees" | "lock");
        if header && !script.is_empty() {
            return Err(err(format!(
                "`{}` must come before the first action",
                words[0]
            )));
        }
        match words.as_slice() {
            ["name", n] => name = Some(n.to_string()),
            ["seed", s] => config.seed = number(s).map_err(err)?,
            ["deposits", h, b] => {
                config.deposit_hash = amount(h).map_err(err)?;
                config.deposit_broadcast = amount(b).map_err(err)?;
            }
            ["fees", s, c] => {
                config.fee_setup = amount(s).map_err(err)?;
                config.fee_close = amount(c).map_err(err)?;
            }
            ["lock", h] => config.refund_lock_height = number(h).map_err(err)?,
            _ if header => {
                return Err(err(format!("wrong number of arguments for `{}`", words[0])))
            }
            _ => script.push(step(&words).map_err(err)?),
        }
    }
    Ok(Scenario {
        name: name.unwrap_or_else(|| "unnamed".into()),
        config,
        script,
    })
}
