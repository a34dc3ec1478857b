//! Plaintexts that only ever leave an enclave encrypted to its peer.

use crate::crypto::{PublicKey, Signature, SigningSecret};
use crate::encoding::{DecodeError, Decoder, Encoder};
use crate::ledger::{OutPoint, Output, Satoshi};

use super::{ChannelParams, Role};

pub type SecretId = [u8; 32];

/// Authorization for one payment: the sender's secret id, its outgoing
/// counter after the payment and the amount.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PaymentMessage {
    pub sender_secret_id: SecretId,
    pub counter: u64,
    pub amount: Satoshi,
}

impl PaymentMessage {
    pub const ENCODED_LEN: usize = 48;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.fixed(&self.sender_secret_id)
            .u64(self.counter)
            .u64(self.amount);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let msg = Self {
            sender_secret_id: dec.array()?,
            counter: dec.u64()?,
            amount: dec.u64()?,
        };
        dec.finish()?;
        Ok(msg)
    }
}

/// What a party hands its enclave at provisioning time.
#[derive(Clone, Debug)]
pub struct SetupData {
    pub btc_secret: SigningSecret,
    pub btc_public: PublicKey,
    pub utxos: Vec<(OutPoint, Output)>,
    pub deposit: Satoshi,
    pub change_address: PublicKey,
}

impl SetupData {
    pub fn utxo_total(&self) -> Satoshi {
        self.utxos.iter().map(|(_, o)| o.value).sum()
    }

    fn encode(&self, enc: &mut Encoder) {
        enc.fixed(&self.btc_secret.to_bytes())
            .fixed(&self.btc_public.0)
            .len_prefix(self.utxos.len());
        for (op, out) in &self.utxos {
            enc.fixed(op.txid.as_bytes()).u32(op.index);
            out.encode(enc);
        }
        enc.u64(self.deposit).fixed(&self.change_address.0);
    }

    fn decode(dec: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let btc_secret = SigningSecret::from_bytes(&dec.array()?);
        let btc_public = PublicKey(dec.array()?);
        let n = dec.list_len(77)?;
        let mut utxos = Vec::with_capacity(n);
        for _ in 0..n {
            let op = OutPoint::new(crate::crypto::Digest(dec.array()?), dec.u32()?);
            utxos.push((op, Output::decode(dec)?));
        }
        Ok(Self {
            btc_secret,
            btc_public,
            utxos,
            deposit: dec.u64()?,
            change_address: PublicKey(dec.array()?),
        })
    }
}

fn encode_params(p: &ChannelParams, enc: &mut Encoder) {
    enc.u8(p.role.tag())
        .u64(p.fee_setup)
        .u64(p.fee_close)
        .u64(p.refund_lock_height);
}

fn decode_params(dec: &mut Decoder<'_>) -> Result<ChannelParams, DecodeError> {
    let tag = dec.u8()?;
    let role = Role::from_tag(tag).ok_or(DecodeError::BadTag { what: "role", tag })?;
    Ok(ChannelParams {
        role,
        fee_setup: dec.u64()?,
        fee_close: dec.u64()?,
        refund_lock_height: dec.u64()?,
    })
}

/// A party's secret id and setup data, together with the channel terms it
/// was provisioned with, signed by the owning enclave.
#[derive(Clone, Debug)]
pub struct SecretsBlob {
    pub secret_id: SecretId,
    pub setup_data: SetupData,
    pub params: ChannelParams,
    pub owner_signature: Signature,
}

impl SecretsBlob {
    /// Bytes covered by `owner_signature`.
    pub fn signed_body(secret_id: &SecretId, setup: &SetupData, params: &ChannelParams) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.fixed(b"teechan-secrets-v1").fixed(secret_id);
        setup.encode(&mut enc);
        encode_params(params, &mut enc);
        enc.finish()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.fixed(&self.secret_id);
        self.setup_data.encode(&mut enc);
        encode_params(&self.params, &mut enc);
        enc.bytes(&self.owner_signature.0);
        enc.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(data);
        let secret_id = dec.array()?;
        let setup_data = SetupData::decode(&mut dec)?;
        let params = decode_params(&mut dec)?;
        let owner_signature = Signature(dec.bytes()?.to_vec());
        dec.finish()?;
        Ok(Self {
            secret_id,
            setup_data,
            params,
            owner_signature,
        })
    }
}
