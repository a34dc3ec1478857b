//! The trusted half of a channel party.
//!
//! An [`Enclave`] holds both parties' Bitcoin keys, the peer-authenticated
//! secret ids and the channel balances. Its state is reachable only through
//! the methods below; the untrusted host sees attestation material,
//! ciphertexts and signed transactions, never the secrets.
//!
//! Lifecycle:
//!
//! ```text
//! Created --provision--> Provisioned --get_attestation / accept_peer--> Attested
//!   --export_secrets / import_secrets--> Active --settle / reissue_refund--> Closed
//! ```
//!
//! The handshake is asymmetric. The broadcast side exports its secrets
//! first. The hash side imports them, learns only the setup transaction's
//! hash, and then exports its own secrets. The broadcast side imports those
//! and receives the full setup transaction to publish.

mod messages;
mod transactions;

use std::fmt;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::crypto::{
    self, AttestationAuthority, Ciphertext, Digest, EncryptionKeyPair, EncryptionPublicKey,
    PublicKey, Quote, SigningKeyPair,
};
use crate::ledger::{LockCondition, OutPoint, Satoshi, Transaction};

pub use messages::{PaymentMessage, SecretId, SecretsBlob, SetupData};
pub use transactions::{split_close_fee, split_setup_fee, Split};

/// Build identity that attestation quotes vouch for.
pub const ENCLAVE_BUILD: &str = "teechan-enclave/1";

/// Mixed into the attestation report data so keys from another protocol
/// version cannot be replayed into this one.
pub const PROTOCOL_VERSION: &[u8] = b"teechan-protocol/1";

pub fn expected_measurement() -> Digest {
    crypto::measurement_of(ENCLAVE_BUILD)
}

/// Report data binding an enclave's encryption and signing keys.
pub fn key_binding(enc_pk: &EncryptionPublicKey, sign_pk: &PublicKey) -> Vec<u8> {
    let mut data = Vec::with_capacity(PROTOCOL_VERSION.len() + 64);
    data.extend_from_slice(PROTOCOL_VERSION);
    data.extend_from_slice(&enc_pk.0);
    data.extend_from_slice(&sign_pk.0);
    crypto::hash(&data).0.to_vec()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Role {
    /// Learns only the setup hash and watches the chain for it.
    HashSide,
    /// Receives the full setup transaction and publishes it.
    BroadcastSide,
}

impl Role {
    pub fn peer(self) -> Role {
        match self {
            Role::HashSide => Role::BroadcastSide,
            Role::BroadcastSide => Role::HashSide,
        }
    }

    pub(crate) fn tag(self) -> u8 {
        match self {
            Role::HashSide => 1,
            Role::BroadcastSide => 2,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Option<Role> {
        match tag {
            1 => Some(Role::HashSide),
            2 => Some(Role::BroadcastSide),
            _ => None,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::HashSide => "hash-side",
            Role::BroadcastSide => "broadcast-side",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelParams {
    pub fee_setup: Satoshi,
    pub fee_close: Satoshi,
    pub refund_lock_height: u64,
    pub role: Role,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Phase {
    Created,
    Provisioned,
    Attested,
    Active,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnclaveError {
    #[error("operation not allowed in phase {0:?}")]
    WrongPhase(Phase),
    #[error("UTXOs do not cover the deposit and fee share")]
    InsufficientFunds,
    #[error("invalid setup data: {0}")]
    InvalidSetup(&'static str),
    #[error("peer attestation failed")]
    AttestationFailed,
    #[error("handshake messages out of order")]
    OrderViolation,
    #[error("channel terms differ between the parties")]
    ParamsMismatch,
    #[error("could not decrypt message")]
    DecryptFailed,
    #[error("malformed plaintext")]
    Malformed,
    #[error("owner signature does not verify")]
    BadSignature,
    #[error("amount exceeds balance")]
    InsufficientBalance,
    #[error("payment amount must be positive")]
    ZeroAmount,
    #[error("counter {got} where {expected} was expected")]
    ReplayOrGap { expected: u64, got: u64 },
    #[error("payment not authorized by the channel peer")]
    WrongSecret,
    #[error("payment exceeds the sender's balance")]
    OverCredit,
    #[error("presented setup transaction is the original; settle instead")]
    NotMauled,
    #[error("presented transaction is not a variant of the setup transaction")]
    ForeignTransaction,
}

pub type Result<T> = std::result::Result<T, EnclaveError>;

/// Material the host forwards to the peer during attestation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Attestation {
    pub quote: Quote,
    pub enc_pk: EncryptionPublicKey,
    pub sign_pk: PublicKey,
}

/// What the host learns when its enclave imports the peer's secrets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ImportOutcome {
    HashSide {
        setup_hash: Digest,
        refund_tx: Transaction,
    },
    BroadcastSide {
        setup_tx: Transaction,
        refund_tx: Transaction,
    },
}

impl ImportOutcome {
    pub fn refund_tx(&self) -> &Transaction {
        match self {
            ImportOutcome::HashSide { refund_tx, .. }
            | ImportOutcome::BroadcastSide { refund_tx, .. } => refund_tx,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Status {
    pub phase: Phase,
    pub balance_mine: Satoshi,
    pub balance_theirs: Satoshi,
    pub send_counter: u64,
    pub recv_counter: u64,
}

#[derive(Clone)]
struct Identity {
    enc: EncryptionKeyPair,
    signing: SigningKeyPair,
    secret_id: SecretId,
}

#[derive(Clone)]
struct Peer {
    enc_pk: EncryptionPublicKey,
    sign_pk: PublicKey,
}

#[derive(Clone)]
struct Channel {
    their_setup: SetupData,
    their_secret_id: SecretId,
    setup_tx: Transaction,
    balance_mine: Satoshi,
    balance_theirs: Satoshi,
    initial_mine: Satoshi,
    initial_theirs: Satoshi,
    send_counter: u64,
    recv_counter: u64,
}

/// Software stand-in for a channel enclave. One instance serves one channel;
/// callers serialize access.
pub struct Enclave {
    platform: AttestationAuthority,
    measurement: Digest,
    rng: ChaCha20Rng,
    phase: Phase,
    setup: Option<SetupData>,
    params: Option<ChannelParams>,
    identity: Option<Identity>,
    peer: Option<Peer>,
    channel: Option<Channel>,
    exported: bool,
    frozen: Option<Status>,
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Enclave")
            .field("status", &self.status())
            .finish_non_exhaustive()
    }
}

impl Enclave {
    /// An enclave running the standard build on `platform`, drawing its
    /// secrets from a CSPRNG seeded with `rng_seed`.
    pub fn new(platform: AttestationAuthority, rng_seed: u64) -> Self {
        Self::with_build(
            platform,
            ENCLAVE_BUILD,
            ChaCha20Rng::seed_from_u64(rng_seed),
        )
    }

    pub fn from_entropy(platform: AttestationAuthority) -> Self {
        Self::with_build(platform, ENCLAVE_BUILD, ChaCha20Rng::from_entropy())
    }

    /// An enclave whose quotes report the measurement of `build_id`.
    pub fn with_build(platform: AttestationAuthority, build_id: &str, rng: ChaCha20Rng) -> Self {
        Self {
            platform,
            measurement: crypto::measurement_of(build_id),
            rng,
            phase: Phase::Created,
            setup: None,
            params: None,
            identity: None,
            peer: None,
            channel: None,
            exported: false,
            frozen: None,
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn require(&self, phase: Phase) -> Result<()> {
        if self.phase == phase {
            Ok(())
        } else {
            Err(EnclaveError::WrongPhase(self.phase))
        }
    }

    fn role(&self) -> Role {
        self.params.expect("provisioned").role
    }

    pub fn provision(&mut self, setup: SetupData, params: ChannelParams) -> Result<()> {
        self.require(Phase::Created)?;
        if setup.btc_secret.public() != setup.btc_public {
            return Err(EnclaveError::InvalidSetup(
                "private key does not match public key",
            ));
        }
        validate_utxos(&setup)?;
        if params.refund_lock_height == 0 {
            return Err(EnclaveError::InvalidSetup(
                "refund lock height must be positive",
            ));
        }
        // The exact fee share depends on the peer's deposit; the full check
        // runs again at import.
        if setup.utxo_total() < setup.deposit {
            return Err(EnclaveError::InsufficientFunds);
        }
        self.setup = Some(setup);
        self.params = Some(params);
        self.phase = Phase::Provisioned;
        Ok(())
    }

    /// Generates this enclave's channel identity on first call and returns
    /// a quote binding its public keys. Repeated calls return the same keys.
    pub fn get_attestation(&mut self) -> Result<Attestation> {
        self.require(Phase::Provisioned)?;
        let rng = &mut self.rng;
        let id = self.identity.get_or_insert_with(|| {
            let enc = EncryptionKeyPair::generate(rng);
            let signing = SigningKeyPair::generate(rng);
            let mut secret_id = [0u8; 32];
            rng.fill_bytes(&mut secret_id);
            Identity {
                enc,
                signing,
                secret_id,
            }
        });
        let report = key_binding(&id.enc.public, &id.signing.public);
        Ok(Attestation {
            quote: self.platform.quote(self.measurement, &report),
            enc_pk: id.enc.public,
            sign_pk: id.signing.public,
        })
    }

    pub fn accept_peer(
        &mut self,
        quote: &Quote,
        peer_enc_pk: EncryptionPublicKey,
        peer_sign_pk: PublicKey,
        expected_measurement: &Digest,
    ) -> Result<()> {
        self.require(Phase::Provisioned)?;
        let own = self.identity.as_ref().ok_or(EnclaveError::OrderViolation)?;
        if !crypto::quote_verify(&self.platform.public_key(), quote, expected_measurement)
            || quote.report_data != key_binding(&peer_enc_pk, &peer_sign_pk)
            // Our own attestation reflected back is not a peer.
            || peer_enc_pk == own.enc.public
            || peer_sign_pk == own.signing.public
        {
            return Err(EnclaveError::AttestationFailed);
        }
        self.peer = Some(Peer {
            enc_pk: peer_enc_pk,
            sign_pk: peer_sign_pk,
        });
        self.phase = Phase::Attested;
        Ok(())
    }

    /// Encrypts this party's secret id and setup data to the attested peer.
    pub fn export_secrets(&mut self) -> Result<Ciphertext> {
        match (self.phase, self.role()) {
            (Phase::Attested, Role::BroadcastSide) => {}
            (Phase::Attested, Role::HashSide) => return Err(EnclaveError::OrderViolation),
            (Phase::Active, Role::HashSide) if !self.exported => {}
            (phase, _) => return Err(EnclaveError::WrongPhase(phase)),
        }
        let id = self.identity.as_ref().expect("attested");
        let setup = self.setup.as_ref().expect("provisioned");
        let params = self.params.expect("provisioned");
        let body = SecretsBlob::signed_body(&id.secret_id, setup, &params);
        let blob = SecretsBlob {
            secret_id: id.secret_id,
            setup_data: setup.clone(),
            params,
            owner_signature: crypto::sign(&id.signing.secret, &body),
        };
        let peer = self.peer.as_ref().expect("attested");
        let ct = crypto::encrypt(&peer.enc_pk, &blob.to_bytes(), &mut self.rng);
        self.exported = true;
        Ok(ct)
    }

    pub fn import_secrets(&mut self, blob: &Ciphertext) -> Result<ImportOutcome> {
        self.require(Phase::Attested)?;
        let role = self.role();
        if role == Role::BroadcastSide && !self.exported {
            return Err(EnclaveError::OrderViolation);
        }
        let id = self.identity.as_ref().expect("attested");
        let plain =
            crypto::decrypt(&id.enc.secret, blob).map_err(|_| EnclaveError::DecryptFailed)?;
        let blob = SecretsBlob::from_bytes(&plain).map_err(|_| EnclaveError::Malformed)?;
        let body = SecretsBlob::signed_body(&blob.secret_id, &blob.setup_data, &blob.params);
        let peer = self.peer.as_ref().expect("attested");
        if !crypto::verify(&peer.sign_pk, &body, &blob.owner_signature) {
            return Err(EnclaveError::BadSignature);
        }
        let mine = self.setup.as_ref().expect("provisioned");
        let params = self.params.expect("provisioned");
        let theirs = blob.setup_data;
        if blob.params.role != role.peer() {
            return Err(EnclaveError::OrderViolation);
        }
        if blob.params.fee_setup != params.fee_setup
            || blob.params.fee_close != params.fee_close
            || blob.params.refund_lock_height != params.refund_lock_height
        {
            return Err(EnclaveError::ParamsMismatch);
        }
        if theirs.btc_secret.public() != theirs.btc_public {
            return Err(EnclaveError::InvalidSetup(
                "peer private key does not match public key",
            ));
        }
        validate_utxos(&theirs)?;
        if theirs.btc_public == mine.btc_public
            || theirs
                .utxos
                .iter()
                .any(|(op, _)| mine.utxos.iter().any(|(o, _)| o == op))
        {
            return Err(EnclaveError::InvalidSetup("peer setup overlaps ours"));
        }

        let (hash, broadcast) = match role {
            Role::HashSide => (mine, &theirs),
            Role::BroadcastSide => (&theirs, mine),
        };
        if hash.deposit.checked_add(broadcast.deposit).is_none() {
            return Err(EnclaveError::InvalidSetup("deposits overflow"));
        }
        let setup_fee = split_setup_fee(params.fee_setup, hash.deposit, broadcast.deposit);
        if hash.utxo_total() < hash.deposit + setup_fee.hash_side
            || broadcast.utxo_total() < broadcast.deposit + setup_fee.broadcast_side
        {
            return Err(EnclaveError::InsufficientFunds);
        }
        let close_fee = split_close_fee(params.fee_close, hash.deposit, broadcast.deposit)
            .ok_or(EnclaveError::InsufficientFunds)?;
        let initial = Split {
            hash_side: hash.deposit - close_fee.hash_side,
            broadcast_side: broadcast.deposit - close_fee.broadcast_side,
        };

        let setup_tx = transactions::build_setup(hash, broadcast, setup_fee);
        let refund_tx = transactions::build_payout(
            setup_tx.outpoint(0),
            hash,
            broadcast,
            initial,
            params.refund_lock_height,
        );
        let (initial_mine, initial_theirs) = match role {
            Role::HashSide => (initial.hash_side, initial.broadcast_side),
            Role::BroadcastSide => (initial.broadcast_side, initial.hash_side),
        };

        let outcome = match role {
            Role::HashSide => ImportOutcome::HashSide {
                setup_hash: setup_tx.txid(),
                refund_tx,
            },
            Role::BroadcastSide => ImportOutcome::BroadcastSide {
                setup_tx: setup_tx.clone(),
                refund_tx,
            },
        };
        self.channel = Some(Channel {
            their_setup: theirs,
            their_secret_id: blob.secret_id,
            setup_tx,
            balance_mine: initial_mine,
            balance_theirs: initial_theirs,
            initial_mine,
            initial_theirs,
            send_counter: 0,
            recv_counter: 0,
        });
        self.phase = Phase::Active;
        Ok(outcome)
    }

    /// Payments flow only once both blobs have crossed.
    fn open_channel(&mut self) -> Result<&mut Channel> {
        if self.phase != Phase::Active || !self.exported {
            return Err(EnclaveError::WrongPhase(self.phase));
        }
        Ok(self.channel.as_mut().expect("active"))
    }

    /// Debits `amount` and returns the encrypted authorization for the peer.
    /// The debit is final even if the message is never delivered.
    pub fn pay(&mut self, amount: Satoshi) -> Result<Ciphertext> {
        let ch = self.open_channel()?;
        if amount == 0 {
            return Err(EnclaveError::ZeroAmount);
        }
        if amount > ch.balance_mine {
            return Err(EnclaveError::InsufficientBalance);
        }
        ch.balance_mine -= amount;
        ch.balance_theirs += amount;
        ch.send_counter += 1;
        let counter = ch.send_counter;
        let msg = PaymentMessage {
            sender_secret_id: self.identity.as_ref().expect("active").secret_id,
            counter,
            amount,
        };
        let peer = self.peer.as_ref().expect("active");
        Ok(crypto::encrypt(
            &peer.enc_pk,
            &msg.to_bytes(),
            &mut self.rng,
        ))
    }

    /// Credits a payment if it is the peer's next authorization in sequence.
    /// Returns the new `balance_mine`.
    pub fn receive_payment(&mut self, ct: &Ciphertext) -> Result<Satoshi> {
        self.open_channel()?;
        let id = self.identity.as_ref().expect("active");
        let plain = crypto::decrypt(&id.enc.secret, ct).map_err(|_| EnclaveError::DecryptFailed)?;
        let msg = PaymentMessage::from_bytes(&plain).map_err(|_| EnclaveError::Malformed)?;
        let ch = self.channel.as_mut().expect("active");
        if msg.sender_secret_id != ch.their_secret_id {
            return Err(EnclaveError::WrongSecret);
        }
        let expected = ch.recv_counter + 1;
        if msg.counter != expected {
            return Err(EnclaveError::ReplayOrGap {
                expected,
                got: msg.counter,
            });
        }
        if msg.amount == 0 {
            return Err(EnclaveError::Malformed);
        }
        if msg.amount > ch.balance_theirs {
            return Err(EnclaveError::OverCredit);
        }
        ch.recv_counter = expected;
        ch.balance_theirs -= msg.amount;
        ch.balance_mine += msg.amount;
        Ok(ch.balance_mine)
    }

    fn payout_split(&self, ch: &Channel, mine: Satoshi, theirs: Satoshi) -> Split {
        let split = match self.role() {
            Role::HashSide => Split {
                hash_side: mine,
                broadcast_side: theirs,
            },
            Role::BroadcastSide => Split {
                hash_side: theirs,
                broadcast_side: mine,
            },
        };
        debug_assert_eq!(
            split.hash_side + split.broadcast_side,
            ch.initial_mine + ch.initial_theirs,
            "channel value not conserved"
        );
        split
    }

    fn sides<'a>(&'a self, ch: &'a Channel) -> (&'a SetupData, &'a SetupData) {
        let mine = self.setup.as_ref().expect("active");
        match self.role() {
            Role::HashSide => (mine, &ch.their_setup),
            Role::BroadcastSide => (&ch.their_setup, mine),
        }
    }

    /// Produces the settlement transaction for the current balances and
    /// destroys all channel state.
    pub fn settle(&mut self) -> Result<Transaction> {
        self.require(Phase::Active)?;
        let ch = self.channel.as_ref().expect("active");
        let amounts = self.payout_split(ch, ch.balance_mine, ch.balance_theirs);
        let (hash, broadcast) = self.sides(ch);
        let tx = transactions::build_payout(ch.setup_tx.outpoint(0), hash, broadcast, amounts, 0);
        self.close();
        Ok(tx)
    }

    /// Recovery from a mauled setup transaction: returns an immediately
    /// valid refund spending `observed_setup` and destroys all channel state.
    ///
    /// Pays the current balances. Mauling happens before the hash side
    /// releases its secrets, so in practice these are the initial balances.
    pub fn reissue_refund(&mut self, observed_setup: &Transaction) -> Result<Transaction> {
        self.require(Phase::Active)?;
        let ch = self.channel.as_ref().expect("active");
        if observed_setup.sighash() != ch.setup_tx.sighash() {
            return Err(EnclaveError::ForeignTransaction);
        }
        if observed_setup.txid() == ch.setup_tx.txid() {
            return Err(EnclaveError::NotMauled);
        }
        let amounts = self.payout_split(ch, ch.balance_mine, ch.balance_theirs);
        let (hash, broadcast) = self.sides(ch);
        let tx = transactions::build_payout(
            OutPoint::new(observed_setup.txid(), 0),
            hash,
            broadcast,
            amounts,
            0,
        );
        self.close();
        Ok(tx)
    }

    fn close(&mut self) {
        self.frozen = Some(self.status());
        self.phase = Phase::Closed;
        self.setup = None;
        self.identity = None;
        self.peer = None;
        self.channel = None;
    }

    pub fn status(&self) -> Status {
        if let Some(frozen) = self.frozen {
            return Status {
                phase: Phase::Closed,
                ..frozen
            };
        }
        match &self.channel {
            Some(ch) => Status {
                phase: self.phase,
                balance_mine: ch.balance_mine,
                balance_theirs: ch.balance_theirs,
                send_counter: ch.send_counter,
                recv_counter: ch.recv_counter,
            },
            None => Status {
                phase: self.phase,
                balance_mine: 0,
                balance_theirs: 0,
                send_counter: 0,
                recv_counter: 0,
            },
        }
    }

    /// Initial `(mine, theirs)` balances, once the channel exists.
    pub fn initial_balances(&self) -> Option<(Satoshi, Satoshi)> {
        self.channel
            .as_ref()
            .map(|ch| (ch.initial_mine, ch.initial_theirs))
    }

    /// The channel output's lock condition, once known.
    pub fn channel_condition(&self) -> Option<LockCondition> {
        let ch = self.channel.as_ref()?;
        let (hash, broadcast) = self.sides(ch);
        Some(transactions::channel_condition(hash, broadcast))
    }
}

fn validate_utxos(setup: &SetupData) -> Result<()> {
    let own = LockCondition::SingleSig(setup.btc_public);
    for (i, (op, out)) in setup.utxos.iter().enumerate() {
        if out.condition != own {
            return Err(EnclaveError::InvalidSetup(
                "UTXO not spendable by the provided key",
            ));
        }
        if out.value == 0 {
            return Err(EnclaveError::InvalidSetup("zero-value UTXO"));
        }
        if setup.utxos[..i].iter().any(|(o, _)| o == op) {
            return Err(EnclaveError::InvalidSetup("duplicate UTXO"));
        }
    }
    setup
        .utxos
        .iter()
        .try_fold(0u64, |acc, (_, o)| acc.checked_add(o.value))
        .ok_or(EnclaveError::InvalidSetup("UTXO total overflows"))?;
    Ok(())
}

/// Test-only access that a malicious host would need hardware to obtain.
#[cfg(any(test, feature = "debug-backdoor"))]
impl Enclave {
    /// Decrypts a payment addressed to this enclave without consuming it.
    pub fn debug_open_payment(&self, ct: &Ciphertext) -> Option<PaymentMessage> {
        let id = self.identity.as_ref()?;
        let plain = crypto::decrypt(&id.enc.secret, ct).ok()?;
        PaymentMessage::from_bytes(&plain).ok()
    }

    /// A full copy of the enclave, modelling a rollback of sealed state.
    pub fn debug_snapshot(&self) -> Enclave {
        Enclave {
            platform: self.platform.clone(),
            measurement: self.measurement,
            rng: self.rng.clone(),
            phase: self.phase,
            setup: self.setup.clone(),
            params: self.params,
            identity: self.identity.clone(),
            peer: self.peer.clone(),
            channel: self.channel.clone(),
            exported: self.exported,
            frozen: self.frozen,
        }
    }
}

#[cfg(test)]
mod tests;
