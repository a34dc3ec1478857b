//! Simplified Bitcoin transactions.
//!
//! Canonical serialization (all integers little-endian):
//!
//! ```text
//! tx        := u32 n_inputs, input*, u32 n_outputs, output*, u64 lock_time
//! input     := txid[32], u32 index, witness
//! witness   := u32 n_sigs, (u32 len, sig bytes)*, u32 pad_len, padding
//! output    := u64 value, condition
//! condition := 0x01 pk[32]            single signature
//!            | 0x02 pk_a[32] pk_b[32] 2-of-2 multisig
//! ```
//!
//! The transaction id hashes the full serialization. The signature hash
//! hashes the same layout with every witness blanked (`n_sigs = 0`,
//! `pad_len = 0`), so witness padding can be altered without invalidating
//! signatures while still changing the id.

use crate::crypto::{self, Digest, PublicKey, Signature, SigningSecret};
use crate::encoding::{DecodeError, Decoder, Encoder};

pub type Satoshi = u64;

pub const SATOSHI_PER_BTC: Satoshi = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OutPoint {
    pub txid: Digest,
    pub index: u32,
}

impl OutPoint {
    pub fn new(txid: Digest, index: u32) -> Self {
        Self { txid, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockCondition {
    SingleSig(PublicKey),
    MultiSig2of2(PublicKey, PublicKey),
}

impl LockCondition {
    pub fn involves(&self, key: &PublicKey) -> bool {
        match self {
            LockCondition::SingleSig(pk) => pk == key,
            LockCondition::MultiSig2of2(a, b) => a == key || b == key,
        }
    }

    /// Checks a witness against this condition. Multisig signatures must
    /// appear in key order.
    pub fn is_satisfied_by(&self, witness: &Witness, sighash: &Digest) -> bool {
        let msg = sighash.as_bytes();
        match (self, witness.signatures.as_slice()) {
            (LockCondition::SingleSig(pk), [sig]) => crypto::verify(pk, msg, sig),
            (LockCondition::MultiSig2of2(a, b), [sig_a, sig_b]) => {
                crypto::verify(a, msg, sig_a) && crypto::verify(b, msg, sig_b)
            }
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Output {
    pub value: Satoshi,
    pub condition: LockCondition,
}

impl Output {
    pub(crate) fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.value);
        match self.condition {
            LockCondition::SingleSig(pk) => {
                enc.u8(0x01).fixed(&pk.0);
            }
            LockCondition::MultiSig2of2(a, b) => {
                enc.u8(0x02).fixed(&a.0).fixed(&b.0);
            }
        }
    }

    pub(crate) fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let value = dec.u64()?;
        let condition = match dec.u8()? {
            0x01 => LockCondition::SingleSig(PublicKey(dec.array()?)),
            0x02 => LockCondition::MultiSig2of2(PublicKey(dec.array()?), PublicKey(dec.array()?)),
            tag => {
                return Err(DecodeError::BadTag {
                    what: "lock condition",
                    tag,
                })
            }
        };
        Ok(Output { value, condition })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Witness {
    pub signatures: Vec<Signature>,
    /// Signature-irrelevant bytes; altering them models malleability.
    pub padding: Vec<u8>,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Input {
    pub outpoint: OutPoint,
    pub witness: Witness,
}

impl Input {
    pub fn unsigned(outpoint: OutPoint) -> Self {
        Self {
            outpoint,
            witness: Witness::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Transaction {
    pub inputs: Vec<Input>,
    pub outputs: Vec<Output>,
    /// Earliest block height at which the transaction may confirm.
    pub lock_time: u64,
}

impl Transaction {
    pub fn txid(&self) -> Digest {
        crypto::hash(&self.to_bytes())
    }

    pub fn sighash(&self) -> Digest {
        crypto::hash(&self.encode(false))
    }

    pub fn output_total(&self) -> Satoshi {
        self.outputs.iter().map(|o| o.value).sum()
    }

    pub fn outpoint(&self, index: u32) -> OutPoint {
        OutPoint::new(self.txid(), index)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.encode(true)
    }

    fn encode(&self, with_witness: bool) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.len_prefix(self.inputs.len());
        for input in &self.inputs {
            enc.fixed(input.outpoint.txid.as_bytes())
                .u32(input.outpoint.index);
            if with_witness {
                enc.len_prefix(input.witness.signatures.len());
                for sig in &input.witness.signatures {
                    enc.bytes(&sig.0);
                }
                enc.bytes(&input.witness.padding);
            } else {
                enc.u32(0).u32(0);
            }
        }
        enc.len_prefix(self.outputs.len());
        for output in &self.outputs {
            output.encode(&mut enc);
        }
        enc.u64(self.lock_time);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let n_in = dec.list_len(44)?;
        let mut inputs = Vec::with_capacity(n_in);
        for _ in 0..n_in {
            let txid = Digest(dec.array()?);
            let index = dec.u32()?;
            let n_sigs = dec.list_len(4)?;
            let signatures = (0..n_sigs)
                .map(|_| dec.bytes().map(|b| Signature(b.to_vec())))
                .collect::<Result<_, _>>()?;
            let padding = dec.bytes()?.to_vec();
            inputs.push(Input {
                outpoint: OutPoint::new(txid, index),
                witness: Witness {
                    signatures,
                    padding,
                },
            });
        }
        let n_out = dec.list_len(41)?;
        let mut outputs = Vec::with_capacity(n_out);
        for _ in 0..n_out {
            outputs.push(Output::decode(&mut dec)?);
        }
        let lock_time = dec.u64()?;
        dec.finish()?;
        Ok(Self {
            inputs,
            outputs,
            lock_time,
        })
    }

    /// Replaces the signatures on input `index` with signatures by `keys`
    /// over the current signature hash.
    pub fn sign_input(&mut self, index: usize, keys: &[&SigningSecret]) {
        let sighash = self.sighash();
        self.inputs[index].witness.signatures = keys
            .iter()
            .map(|k| crypto::sign(k, sighash.as_bytes()))
            .collect();
    }

    /// Signs every input with `keys`, in order, producing witnesses that
    /// satisfy single-sig (one key) or 2-of-2 (two keys in condition order).
    pub fn sign_all_inputs(&mut self, keys: &[&SigningSecret]) {
        let sighash = self.sighash();
        let signatures: Vec<_> = keys
            .iter()
            .map(|k| crypto::sign(k, sighash.as_bytes()))
            .collect();
        for input in &mut self.inputs {
            input.witness.signatures = signatures.clone();
        }
    }
}

pub fn txid(tx: &Transaction) -> Digest {
    tx.txid()
}

pub fn sighash(tx: &Transaction) -> Digest {
    tx.sighash()
}

/// Returns a copy of `tx` with its first input's witness padding extended.
/// Signatures stay valid; the transaction id changes.
pub fn maul(tx: &Transaction) -> Transaction {
    assert!(
        !tx.inputs.is_empty(),
        "cannot maul a transaction without inputs"
    );
    let mut mauled = tx.clone();
    mauled.inputs[0].witness.padding.push(0x4d);
    mauled
}
