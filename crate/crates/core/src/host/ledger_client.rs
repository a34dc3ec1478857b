use std::sync::{Arc, Mutex, MutexGuard};

use crate::crypto::Digest;
use crate::ledger::{Ledger, RejectReason, Transaction};

/// What a party host needs from the blockchain.
pub trait LedgerClient {
    fn submit(&mut self, tx: &Transaction) -> Result<Digest, RejectReason>;

    fn find_by_hash(&mut self, txid: &Digest) -> Option<Transaction>;

    fn height(&mut self) -> u64;

    /// Confirmed (non-faucet) transactions from position `cursor` onwards, in
    /// confirmation order.
    fn confirmed_since(&mut self, cursor: usize) -> Vec<Transaction>;
}

/// A ledger shared between in-process actors.
#[derive(Clone, Debug, Default)]
pub struct SharedLedger(Arc<Mutex<Ledger>>);

impl SharedLedger {
    pub fn new(ledger: Ledger) -> Self {
        Self(Arc::new(Mutex::new(ledger)))
    }

    pub fn lock(&self) -> MutexGuard<'_, Ledger> {
        self.0.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn snapshot(&self) -> Ledger {
        self.lock().clone()
    }
}

impl LedgerClient for SharedLedger {
    fn submit(&mut self, tx: &Transaction) -> Result<Digest, RejectReason> {
        self.lock().submit(tx)
    }

    fn find_by_hash(&mut self, txid: &Digest) -> Option<Transaction> {
        self.lock().find_by_hash(txid).cloned()
    }

    fn height(&mut self) -> u64 {
        self.lock().height()
    }

    fn confirmed_since(&mut self, cursor: usize) -> Vec<Transaction> {
        self.lock()
            .confirmed()
            .get(cursor..)
            .unwrap_or_default()
            .to_vec()
    }
}
