//! A single-chain UTXO ledger with logical block heights.
//!
//! Submission is atomic confirmation: there is no mempool and no forks, so
//! the only question a submitter can ask is whether a transaction confirms
//! now and why not.

mod amount;
mod dump;
mod tx;

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::crypto::{self, Digest};

pub use amount::{format_btc, parse_btc};
pub use dump::LoadError;
pub use tx::{
    maul, sighash, txid, Input, LockCondition, OutPoint, Output, Satoshi, Transaction, Witness,
    SATOSHI_PER_BTC,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum RejectReason {
    #[error("input refers to an unknown output")]
    MissingInput,
    #[error("witness does not satisfy the spent output's condition")]
    BadSignature,
    #[error("outputs exceed inputs")]
    Overspend,
    #[error("lock time not yet reached")]
    Premature,
    #[error("output already spent")]
    DoubleSpend,
    #[error("transaction is structurally invalid")]
    Malformed,
}

impl RejectReason {
    pub fn name(&self) -> &'static str {
        match self {
            RejectReason::MissingInput => "MissingInput",
            RejectReason::BadSignature => "BadSignature",
            RejectReason::Overspend => "Overspend",
            RejectReason::Premature => "Premature",
            RejectReason::DoubleSpend => "DoubleSpend",
            RejectReason::Malformed => "Malformed",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Some(match name {
            "MissingInput" => RejectReason::MissingInput,
            "BadSignature" => RejectReason::BadSignature,
            "Overspend" => RejectReason::Overspend,
            "Premature" => RejectReason::Premature,
            "DoubleSpend" => RejectReason::DoubleSpend,
            "Malformed" => RejectReason::Malformed,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MintError {
    #[error("faucet tag already used")]
    DuplicateTag,
    #[error("minted outputs must be non-empty and non-zero")]
    Malformed,
}

#[derive(Debug, Clone, Default)]
pub struct Ledger {
    height: u64,
    utxos: BTreeMap<OutPoint, Output>,
    confirmed: Vec<Transaction>,
    confirmed_at: Vec<u64>,
    minted: Vec<Transaction>,
    by_id: HashMap<Digest, TxLocation>,
    spent_by: HashMap<OutPoint, Digest>,
    minted_total: Satoshi,
    fees_total: Satoshi,
}

#[derive(Debug, Clone, Copy)]
enum TxLocation {
    Minted(usize),
    Confirmed(usize),
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn advance_height(&mut self, blocks: u64) -> u64 {
        self.height += blocks;
        self.height
    }

    /// Test faucet: creates outputs from nothing. The synthetic input is
    /// derived from `tag`, so mints are independent of call order and each
    /// tag can be used once.
    pub fn mint(&mut self, tag: &[u8], outputs: Vec<Output>) -> Result<Transaction, MintError> {
        if outputs.is_empty() || outputs.iter().any(|o| o.value == 0) {
            return Err(MintError::Malformed);
        }
        let mut marker = b"teechan-faucet:".to_vec();
        marker.extend_from_slice(tag);
        let tx = Transaction {
            inputs: vec![Input::unsigned(OutPoint::new(
                crypto::hash(&marker),
                u32::MAX,
            ))],
            outputs,
            lock_time: 0,
        };
        let id = tx.txid();
        if self.by_id.contains_key(&id) {
            return Err(MintError::DuplicateTag);
        }
        self.minted_total += tx.output_total();
        self.add_outputs(id, &tx);
        self.by_id.insert(id, TxLocation::Minted(self.minted.len()));
        self.minted.push(tx.clone());
        Ok(tx)
    }

    /// Validates `tx` against the current state. Does not mutate.
    pub fn check(&self, tx: &Transaction) -> Result<(), RejectReason> {
        if tx.inputs.is_empty() || tx.outputs.is_empty() || tx.outputs.iter().any(|o| o.value == 0)
        {
            return Err(RejectReason::Malformed);
        }
        if tx.lock_time > self.height {
            return Err(RejectReason::Premature);
        }
        let mut seen = HashSet::with_capacity(tx.inputs.len());
        let mut spent_outputs = Vec::with_capacity(tx.inputs.len());
        for input in &tx.inputs {
            if !seen.insert(input.outpoint) || self.spent_by.contains_key(&input.outpoint) {
                return Err(RejectReason::DoubleSpend);
            }
            match self.utxos.get(&input.outpoint) {
                Some(out) => spent_outputs.push(out),
                None => return Err(RejectReason::MissingInput),
            }
        }
        let sighash = tx.sighash();
        for (input, out) in tx.inputs.iter().zip(&spent_outputs) {
            if !out.condition.is_satisfied_by(&input.witness, &sighash) {
                return Err(RejectReason::BadSignature);
            }
        }
        let input_total = spent_outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.value));
        let output_total = tx
            .outputs
            .iter()
            .try_fold(0u64, |acc, o| acc.checked_add(o.value));
        match (input_total, output_total) {
            (Some(i), Some(o)) if o <= i => Ok(()),
            _ => Err(RejectReason::Overspend),
        }
    }

    /// Confirms `tx` at the current height if it is valid.
    pub fn submit(&mut self, tx: &Transaction) -> Result<Digest, RejectReason> {
        self.check(tx)?;
        let id = tx.txid();
        let mut input_total = 0;
        for input in &tx.inputs {
            let out = self.utxos.remove(&input.outpoint).expect("validated input");
            input_total += out.value;
            self.spent_by.insert(input.outpoint, id);
        }
        self.fees_total += input_total - tx.output_total();
        self.add_outputs(id, tx);
        self.by_id
            .insert(id, TxLocation::Confirmed(self.confirmed.len()));
        self.confirmed.push(tx.clone());
        self.confirmed_at.push(self.height);
        Ok(id)
    }

    fn add_outputs(&mut self, id: Digest, tx: &Transaction) {
        for (i, out) in tx.outputs.iter().enumerate() {
            self.utxos.insert(OutPoint::new(id, i as u32), out.clone());
        }
    }

    pub fn find_by_hash(&self, h: &Digest) -> Option<&Transaction> {
        match self.by_id.get(h)? {
            TxLocation::Minted(i) => self.minted.get(*i),
            TxLocation::Confirmed(i) => self.confirmed.get(*i),
        }
    }

    pub fn utxo(&self, outpoint: &OutPoint) -> Option<&Output> {
        self.utxos.get(outpoint)
    }

    pub fn utxos(&self) -> impl Iterator<Item = (&OutPoint, &Output)> {
        self.utxos.iter()
    }

    pub fn spender_of(&self, outpoint: &OutPoint) -> Option<Digest> {
        self.spent_by.get(outpoint).copied()
    }

    /// Confirmed (non-faucet) transactions in confirmation order.
    pub fn confirmed(&self) -> &[Transaction] {
        &self.confirmed
    }

    pub fn minted(&self) -> &[Transaction] {
        &self.minted
    }

    pub fn minted_total(&self) -> Satoshi {
        self.minted_total
    }

    pub fn fees_total(&self) -> Satoshi {
        self.fees_total
    }

    pub fn unspent_total(&self) -> Satoshi {
        self.utxos.values().map(|o| o.value).sum()
    }

    /// Sum of unspent outputs locked to exactly `condition`.
    pub fn balance_of(&self, condition: &LockCondition) -> Satoshi {
        self.utxos
            .values()
            .filter(|o| o.condition == *condition)
            .map(|o| o.value)
            .sum()
    }

    /// Faucet value is the only source of coins: unspent plus fees must equal
    /// everything ever minted.
    pub fn is_value_conserved(&self) -> bool {
        self.unspent_total() + self.fees_total == self.minted_total
    }

    /// True when no outpoint is consumed by two confirmed transactions.
    pub fn has_no_double_spend(&self) -> bool {
        let mut seen = HashSet::new();
        self.confirmed
            .iter()
            .flat_map(|tx| tx.inputs.iter())
            .all(|i| seen.insert(i.outpoint))
    }
}
