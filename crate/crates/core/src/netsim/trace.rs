//! Line-delimited trace records. Every line is `key=value` fields after a
//! record tag, so traces diff cleanly against golden files.

use std::fmt;

use crate::crypto;
use crate::enclave::Status;
use crate::fixtures::ChannelConfig;
use crate::ledger::{Ledger, Satoshi};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Detail {
    /// Actions, party events, confirmations and balances.
    #[default]
    Events,
    /// Also every frame put on the simulated wire.
    Wire,
}

/// Both parties' enclave balances after a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Snapshot {
    pub step: usize,
    pub now: u64,
    pub height: u64,
    /// Indexed by party: hash side, then broadcast side.
    pub balance: [Satoshi; 2],
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace {
    lines: Vec<String>,
    snapshots: Vec<Snapshot>,
}

impl Trace {
    pub fn line(&mut self, line: String) {
        self.lines.push(line);
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub(crate) fn header(&mut self, name: &str, cfg: &ChannelConfig) {
        self.line("# teechan trace v1".into());
        self.line(format!("scenario name={name} seed={}", cfg.seed));
        self.line(format!(
            "config deposit_a={} deposit_b={} fee_setup={} fee_close={} lock={}",
            cfg.deposit_hash,
            cfg.deposit_broadcast,
            cfg.fee_setup,
            cfg.fee_close,
            cfg.refund_lock_height
        ));
    }

    pub(crate) fn snapshot(&mut self, s: Snapshot) {
        self.line(format!(
            "  balances a={} b={} height={} t={}",
            s.balance[0], s.balance[1], s.height, s.now
        ));
        self.snapshots.push(s);
    }

    pub(crate) fn footer(&mut self, ledger: &Ledger, status: &[Status; 2]) {
        for (party, s) in ["a", "b"].iter().zip(status) {
            self.line(format!(
                "final {party} phase={:?} balance={} sent={} received={}",
                s.phase, s.balance_mine, s.send_counter, s.recv_counter
            ));
        }
        for tx in ledger.confirmed() {
            let outputs: Vec<String> = tx.outputs.iter().map(|o| o.value.to_string()).collect();
            self.line(format!(
                "final tx txid={} lock_time={} outputs={}",
                tx.txid(),
                tx.lock_time,
                outputs.join(",")
            ));
        }
        self.line(format!(
            "final ledger height={} confirmed={} digest={}",
            ledger.height(),
            ledger.confirmed().len(),
            ledger_digest(ledger)
        ));
    }
}

/// Hash of a ledger's canonical dump; equal ledgers have equal digests.
pub fn ledger_digest(ledger: &Ledger) -> crypto::Digest {
    crypto::hash(ledger.dump().as_bytes())
}

impl fmt::Display for Trace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.lines {
            writeln!(f, "{l}")?;
        }
        Ok(())
    }
}
