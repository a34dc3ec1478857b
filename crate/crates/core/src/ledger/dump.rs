//! Line-oriented ledger snapshots.
//!
//! ```text
//! # teechan ledger v1
//! height 144
//! mint <hex of canonical transaction>
//! tx <confirmation height> <hex of canonical transaction>
//! ```
//!
//! Faucet lines are written sorted by transaction id so that snapshots do
//! not depend on the order in which parties funded themselves. Loading
//! replays every transaction through normal validation.

use std::fmt::Write as _;

use thiserror::Error;

use super::{Ledger, MintError, RejectReason, Transaction};

pub const HEADER: &str = "# teechan ledger v1";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: transaction rejected: {reason}")]
    Rejected { line: usize, reason: RejectReason },
    #[error("line {line}: faucet entry rejected: {err}")]
    Mint { line: usize, err: MintError },
}

impl Ledger {
    pub fn dump(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{HEADER}").unwrap();
        writeln!(out, "height {}", self.height).unwrap();
        let mut mints: Vec<_> = self.minted.iter().map(|tx| (tx.txid(), tx)).collect();
        mints.sort_by_key(|(id, _)| *id);
        for (_, tx) in mints {
            writeln!(out, "mint {}", hex::encode(tx.to_bytes())).unwrap();
        }
        for (tx, h) in self.confirmed.iter().zip(&self.confirmed_at) {
            writeln!(out, "tx {h} {}", hex::encode(tx.to_bytes())).unwrap();
        }
        out
    }

    pub fn load(text: &str) -> Result<Ledger, LoadError> {
        let mut ledger = Ledger::new();
        let mut final_height = None;
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let syntax = |msg: &str| LoadError::Syntax {
                line,
                msg: msg.to_string(),
            };
            let raw = raw.trim();
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let mut parts = raw.split_whitespace();
            match parts.next() {
                Some("height") => {
                    let h = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| syntax("expected height value"))?;
                    final_height = Some(h);
                }
                Some("mint") => {
                    let tx = parse_tx(parts.next()).map_err(|m| syntax(&m))?;
                    // The synthetic faucet input encodes the tag hash; re-mint
                    // by reinstating the exact transaction.
                    ledger
                        .restore_mint(tx)
                        .map_err(|err| LoadError::Mint { line, err })?;
                }
                Some("tx") => {
                    let h: u64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| syntax("expected confirmation height"))?;
                    if h < ledger.height {
                        return Err(syntax("confirmation heights must not decrease"));
                    }
                    ledger.height = h;
                    let tx = parse_tx(parts.next()).map_err(|m| syntax(&m))?;
                    ledger
                        .submit(&tx)
                        .map_err(|reason| LoadError::Rejected { line, reason })?;
                }
                Some(other) => return Err(syntax(&format!("unknown record '{other}'"))),
                None => unreachable!(),
            }
            if parts.next().is_some() {
                return Err(syntax("trailing fields"));
            }
        }
        let h = final_height.ok_or(LoadError::Syntax {
            line: 0,
            msg: "missing height record".into(),
        })?;
        if h < ledger.height {
            return Err(LoadError::Syntax {
                line: 0,
                msg: "height is below the last confirmation".into(),
            });
        }
        ledger.height = h;
        Ok(ledger)
    }

    fn restore_mint(&mut self, tx: Transaction) -> Result<(), MintError> {
        if tx.outputs.is_empty() || tx.outputs.iter().any(|o| o.value == 0) || tx.inputs.len() != 1
        {
            return Err(MintError::Malformed);
        }
        let id = tx.txid();
        if self.by_id.contains_key(&id) {
            return Err(MintError::DuplicateTag);
        }
        self.minted_total += tx.output_total();
        self.add_outputs(id, &tx);
        self.by_id
            .insert(id, super::TxLocation::Minted(self.minted.len()));
        self.minted.push(tx);
        Ok(())
    }
}

fn parse_tx(field: Option<&str>) -> Result<Transaction, String> {
    let field = field.ok_or("expected transaction hex")?;
    let bytes = hex::decode(field).map_err(|e| format!("bad hex: {e}"))?;
    Transaction::from_bytes(&bytes).map_err(|e| format!("bad transaction: {e}"))
}
