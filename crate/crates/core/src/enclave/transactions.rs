//! Construction of the channel's on-chain transactions. Both enclaves run
//! the same code over the same inputs, so they derive byte-identical setup,
//! refund and settlement transactions.

use crate::ledger::{Input, LockCondition, OutPoint, Output, Satoshi, Transaction};

use super::messages::SetupData;

/// Per-party amounts, always ordered hash side first.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub hash_side: Satoshi,
    pub broadcast_side: Satoshi,
}

/// Setup fee is borne in proportion to deposits; the hash side's share is
/// rounded down.
pub fn split_setup_fee(fee: Satoshi, hash_deposit: Satoshi, broadcast_deposit: Satoshi) -> Split {
    let total = hash_deposit as u128 + broadcast_deposit as u128;
    let hash_side = (fee as u128 * hash_deposit as u128)
        .checked_div(total)
        .unwrap_or(0) as Satoshi;
    Split {
        hash_side,
        broadcast_side: fee - hash_side,
    }
}

/// Closing fee is split evenly with the odd satoshi on the hash side. A
/// share larger than that party's deposit is capped and the excess moves to
/// the other party. `None` if the deposits cannot cover the fee with value
/// left over.
pub fn split_close_fee(
    fee: Satoshi,
    hash_deposit: Satoshi,
    broadcast_deposit: Satoshi,
) -> Option<Split> {
    if hash_deposit.checked_add(broadcast_deposit)? <= fee {
        return None;
    }
    let mut hash_side = fee - fee / 2;
    let mut broadcast_side = fee / 2;
    if hash_side > hash_deposit {
        broadcast_side += hash_side - hash_deposit;
        hash_side = hash_deposit;
    }
    if broadcast_side > broadcast_deposit {
        hash_side += broadcast_side - broadcast_deposit;
        broadcast_side = broadcast_deposit;
    }
    Some(Split {
        hash_side,
        broadcast_side,
    })
}

pub fn channel_condition(hash: &SetupData, broadcast: &SetupData) -> LockCondition {
    LockCondition::MultiSig2of2(hash.btc_public, broadcast.btc_public)
}

fn push_payout(outputs: &mut Vec<Output>, value: Satoshi, to: &SetupData) {
    if value > 0 {
        outputs.push(Output {
            value,
            condition: LockCondition::SingleSig(to.change_address),
        });
    }
}

/// Spends both parties' UTXO sets into one 2-of-2 output holding both
/// deposits, returning change to each party. Output 0 is the channel.
pub fn build_setup(hash: &SetupData, broadcast: &SetupData, fee: Split) -> Transaction {
    let inputs = hash
        .utxos
        .iter()
        .chain(&broadcast.utxos)
        .map(|(op, _)| Input::unsigned(*op))
        .collect();
    let mut outputs = vec![Output {
        value: hash.deposit + broadcast.deposit,
        condition: channel_condition(hash, broadcast),
    }];
    push_payout(
        &mut outputs,
        hash.utxo_total() - hash.deposit - fee.hash_side,
        hash,
    );
    push_payout(
        &mut outputs,
        broadcast.utxo_total() - broadcast.deposit - fee.broadcast_side,
        broadcast,
    );
    let mut tx = Transaction {
        inputs,
        outputs,
        lock_time: 0,
    };
    let n_hash = hash.utxos.len();
    for i in 0..tx.inputs.len() {
        let key = if i < n_hash {
            &hash.btc_secret
        } else {
            &broadcast.btc_secret
        };
        tx.sign_input(i, &[key]);
    }
    tx
}

/// A transaction spending the channel output at `channel` and paying each
/// party, signed with both channel keys. Zero payouts are omitted.
pub fn build_payout(
    channel: OutPoint,
    hash: &SetupData,
    broadcast: &SetupData,
    amounts: Split,
    lock_time: u64,
) -> Transaction {
    let mut outputs = Vec::with_capacity(2);
    push_payout(&mut outputs, amounts.hash_side, hash);
    push_payout(&mut outputs, amounts.broadcast_side, broadcast);
    let mut tx = Transaction {
        inputs: vec![Input::unsigned(channel)],
        outputs,
        lock_time,
    };
    tx.sign_all_inputs(&[&hash.btc_secret, &broadcast.btc_secret]);
    tx
}
