//! Deterministic adversarial network simulation.
//!
//! A [`Scenario`] scripts what the adversary does with each frame the two
//! hosts emit, plus party actions (pay, terminate, refund, crash) and ledger
//! height changes. [`run`] executes it on a logical clock and checks the
//! invariant suite after every event:
//!
//! - conservation of value on chain and inside the channel
//! - at most two confirmed channel transactions
//! - enclave balances match the traffic each party sent and accepted
//!   (credit bound) and received payments are a prefix of those sent
//! - a settlement pays each party at least its own view (no harm) and at
//!   most what the counterparty's view allows (no revert)
//! - the ledger never confirms a double spend
//!
//! Equal scenarios give equal traces.

mod random;
mod runner;
mod scenario;
mod trace;

pub use random::{random_schedule, soak_scenario};
pub use runner::{
    run, run_with, InvariantViolation, Message, Outcome, RunError, RunOptions, FLUSH_TICKS,
};
pub use scenario::{
    parse, Action, Expectation, MsgRef, ParseError, Party, RandomSpec, Scenario, Step, Verdict,
};
pub use trace::{ledger_digest, Detail, Snapshot, Trace};

const BUILTINS: &[(&str, &str)] = &[
    ("honest", include_str!("../../scenarios/honest.scn")),
    ("replay", include_str!("../../scenarios/replay.scn")),
    ("reorder", include_str!("../../scenarios/reorder.scn")),
    ("drop", include_str!("../../scenarios/drop.scn")),
    ("corrupt", include_str!("../../scenarios/corrupt.scn")),
    ("crash", include_str!("../../scenarios/crash.scn")),
    ("race", include_str!("../../scenarios/race.scn")),
    ("timeout", include_str!("../../scenarios/timeout.scn")),
    ("maul", include_str!("../../scenarios/maul.scn")),
    ("lossy", include_str!("../../scenarios/lossy.scn")),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin(name: &str) -> Option<Scenario> {
    BUILTINS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| parse(text).expect("built-in scenarios parse"))
}

/// Soak results for a range of seeds.
#[derive(Debug, Default)]
pub struct SoakReport {
    pub runs: usize,
    pub failures: Vec<(u64, RunError)>,
}

pub fn soak(seeds: impl IntoIterator<Item = u64>) -> SoakReport {
    let mut report = SoakReport::default();
    for seed in seeds {
        report.runs += 1;
        if let Err(e) = run(&soak_scenario(seed)) {
            report.failures.push((seed, e));
        }
    }
    report
}

#[cfg(test)]
mod tests;
