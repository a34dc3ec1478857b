//! Deterministic channel fixtures: keys, faucet funding and provisioning
//! inputs derived from a single seed. Used by the demo, the simulator, the
//! benchmarks and tests so that equal seeds give byte-identical ledgers.

use crate::crypto::{self, AttestationAuthority, SigningKeyPair};
use crate::enclave::{ChannelParams, Enclave, Role, SetupData};
use crate::ledger::{Ledger, LockCondition, MintError, Output, Satoshi, SATOSHI_PER_BTC};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChannelConfig {
    pub seed: u64,
    pub deposit_hash: Satoshi,
    pub deposit_broadcast: Satoshi,
    pub fee_setup: Satoshi,
    pub fee_close: Satoshi,
    pub refund_lock_height: u64,
}

impl Default for ChannelConfig {
    /// 50 BTC each, 0.002 BTC per on-chain transaction, one day of blocks.
    fn default() -> Self {
        Self {
            seed: 1,
            deposit_hash: 50 * SATOSHI_PER_BTC,
            deposit_broadcast: 50 * SATOSHI_PER_BTC,
            fee_setup: 200_000,
            fee_close: 200_000,
            refund_lock_height: 144,
        }
    }
}

impl ChannelConfig {
    pub fn deposit(&self, role: Role) -> Satoshi {
        match role {
            Role::HashSide => self.deposit_hash,
            Role::BroadcastSide => self.deposit_broadcast,
        }
    }

    pub fn params(&self, role: Role) -> ChannelParams {
        ChannelParams {
            fee_setup: self.fee_setup,
            fee_close: self.fee_close,
            refund_lock_height: self.refund_lock_height,
            role,
        }
    }

    pub fn authority(&self) -> AttestationAuthority {
        AttestationAuthority::new(crypto::generate_signing_keypair(Some(derive_seed(
            self.seed,
            "authority",
        ))))
    }

    pub fn btc_key(&self, role: Role) -> SigningKeyPair {
        crypto::generate_signing_keypair(Some(derive_seed(self.seed, &format!("{role}/btc"))))
    }

    pub fn change_key(&self, role: Role) -> SigningKeyPair {
        crypto::generate_signing_keypair(Some(derive_seed(self.seed, &format!("{role}/change"))))
    }

    pub fn enclave(&self, role: Role) -> Enclave {
        Enclave::new(
            self.authority(),
            derive_seed(self.seed, &format!("{role}/enclave")),
        )
    }

    /// Amount the faucet gives a party: its deposit plus the whole setup fee,
    /// which always covers its proportional share.
    pub fn funding(&self, role: Role) -> Satoshi {
        let deposit = self.deposit(role);
        if deposit == 0 {
            0
        } else {
            deposit + self.fee_setup
        }
    }

    pub fn faucet_tag(&self, role: Role) -> Vec<u8> {
        format!("seed-{}/{role}", self.seed).into_bytes()
    }

    /// Provisioning inputs for `role`, assuming the faucet output for this
    /// configuration exists (see [`ChannelConfig::fund`]).
    pub fn setup_data(
        &self,
        role: Role,
        funding_tx: Option<&crate::ledger::Transaction>,
    ) -> SetupData {
        let btc = self.btc_key(role);
        let utxos = funding_tx
            .map(|tx| vec![(tx.outpoint(0), tx.outputs[0].clone())])
            .unwrap_or_default();
        SetupData {
            btc_secret: btc.secret,
            btc_public: btc.public,
            utxos,
            deposit: self.deposit(role),
            change_address: self.change_key(role).public,
        }
    }

    /// Mints this party's funding output, if it deposits anything.
    pub fn fund(
        &self,
        ledger: &mut Ledger,
        role: Role,
    ) -> Result<Option<crate::ledger::Transaction>, MintError> {
        let value = self.funding(role);
        if value == 0 {
            return Ok(None);
        }
        let out = Output {
            value,
            condition: LockCondition::SingleSig(self.btc_key(role).public),
        };
        ledger.mint(&self.faucet_tag(role), vec![out]).map(Some)
    }

    /// Funds `role` on `ledger` and returns a provisioned enclave for it.
    pub fn provisioned_enclave(&self, ledger: &mut Ledger, role: Role) -> Enclave {
        let funding = self.fund(ledger, role).expect("fresh faucet tag");
        let mut enclave = self.enclave(role);
        enclave
            .provision(self.setup_data(role, funding.as_ref()), self.params(role))
            .expect("fixture setup is valid");
        enclave
    }
}

/// Derives an independent sub-seed for `label` from a master seed.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut data = seed.to_le_bytes().to_vec();
    data.extend_from_slice(label.as_bytes());
    let d = crypto::hash(&data);
    u64::from_le_bytes(d.0[..8].try_into().unwrap())
}
