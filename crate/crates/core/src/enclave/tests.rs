use std::collections::VecDeque;

use proptest::prelude::*;

use super::*;
use crate::crypto::{measurement_of, seeded_rng, Signature};
use crate::fixtures::ChannelConfig;
use crate::ledger::{maul, Ledger, RejectReason, SATOSHI_PER_BTC};

const BTC: Satoshi = SATOSHI_PER_BTC;

fn zero_fee() -> ChannelConfig {
    ChannelConfig {
        fee_setup: 0,
        fee_close: 0,
        ..ChannelConfig::default()
    }
}

struct Pair {
    ledger: Ledger,
    hash: Enclave,
    broadcast: Enclave,
    setup_tx: Transaction,
    setup_hash: Digest,
    refund_tx: Transaction,
}

fn attest(a: &mut Enclave, b: &mut Enclave) {
    let att_a = a.get_attestation().unwrap();
    let att_b = b.get_attestation().unwrap();
    let m = expected_measurement();
    a.accept_peer(&att_b.quote, att_b.enc_pk, att_b.sign_pk, &m)
        .unwrap();
    b.accept_peer(&att_a.quote, att_a.enc_pk, att_a.sign_pk, &m)
        .unwrap();
}

fn open(cfg: ChannelConfig) -> Pair {
    let mut ledger = Ledger::new();
    let mut hash = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut broadcast = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut hash, &mut broadcast);

    let blob_b = broadcast.export_secrets().unwrap();
    let ImportOutcome::HashSide {
        setup_hash,
        refund_tx,
    } = hash.import_secrets(&blob_b).unwrap()
    else {
        panic!("hash side outcome expected");
    };
    let blob_a = hash.export_secrets().unwrap();
    let ImportOutcome::BroadcastSide {
        setup_tx,
        refund_tx: refund_b,
    } = broadcast.import_secrets(&blob_a).unwrap()
    else {
        panic!("broadcast side outcome expected");
    };
    assert_eq!(refund_tx, refund_b, "both enclaves derive the same refund");
    Pair {
        ledger,
        hash,
        broadcast,
        setup_tx,
        setup_hash,
        refund_tx,
    }
}

fn transfer(from: &mut Enclave, to: &mut Enclave, amount: Satoshi) {
    let ct = from.pay(amount).unwrap();
    to.receive_payment(&ct).unwrap();
}

fn payouts(tx: &Transaction, cfg: &ChannelConfig) -> (Satoshi, Satoshi) {
    let pay_to = |role: Role| {
        let cond = LockCondition::SingleSig(cfg.change_key(role).public);
        tx.outputs
            .iter()
            .filter(|o| o.condition == cond)
            .map(|o| o.value)
            .sum::<Satoshi>()
    };
    (pay_to(Role::HashSide), pay_to(Role::BroadcastSide))
}

#[test]
fn provision_checks_funds_and_phase() {
    let cfg = ChannelConfig::default();
    let kp = cfg.btc_key(Role::HashSide);
    let mut ledger = Ledger::new();
    let fund = |ledger: &mut Ledger, tag: &[u8], btc: Satoshi| {
        ledger
            .mint(
                tag,
                vec![crate::ledger::Output {
                    value: btc * BTC,
                    condition: LockCondition::SingleSig(kp.public),
                }],
            )
            .unwrap()
    };
    let sixty = fund(&mut ledger, b"60", 60);
    let ten = fund(&mut ledger, b"10", 10);
    let setup_with = |tx: &Transaction| SetupData {
        btc_secret: kp.secret.clone(),
        btc_public: kp.public,
        utxos: vec![(tx.outpoint(0), tx.outputs[0].clone())],
        deposit: 50 * BTC,
        change_address: kp.public,
    };

    let mut e = cfg.enclave(Role::HashSide);
    e.provision(setup_with(&sixty), cfg.params(Role::HashSide))
        .unwrap();
    assert_eq!(e.phase(), Phase::Provisioned);
    assert_eq!(
        e.provision(setup_with(&sixty), cfg.params(Role::HashSide)),
        Err(EnclaveError::WrongPhase(Phase::Provisioned))
    );

    let mut poor = cfg.enclave(Role::HashSide);
    assert_eq!(
        poor.provision(setup_with(&ten), cfg.params(Role::HashSide)),
        Err(EnclaveError::InsufficientFunds)
    );
}

#[test]
fn provision_rejects_foreign_utxos() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let funding = cfg.fund(&mut ledger, Role::HashSide).unwrap();
    let mut setup = cfg.setup_data(Role::HashSide, funding.as_ref());
    let stranger = cfg.btc_key(Role::BroadcastSide);
    setup.btc_secret = stranger.secret;
    setup.btc_public = stranger.public;
    assert!(matches!(
        cfg.enclave(Role::HashSide)
            .provision(setup, cfg.params(Role::HashSide)),
        Err(EnclaveError::InvalidSetup(_))
    ));
}

#[test]
fn attestation_is_idempotent_and_binding() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);

    let first = a.get_attestation().unwrap();
    let second = a.get_attestation().unwrap();
    assert_eq!(first, second);
    assert!(crypto::quote_verify(
        &cfg.authority().public_key(),
        &first.quote,
        &expected_measurement()
    ));

    b.get_attestation().unwrap();
    let foreign = EncryptionKeyPair::generate(&mut seeded_rng(5)).public;
    assert_eq!(
        b.accept_peer(
            &first.quote,
            foreign,
            first.sign_pk,
            &expected_measurement()
        ),
        Err(EnclaveError::AttestationFailed)
    );
    assert_eq!(b.phase(), Phase::Provisioned);
    b.accept_peer(
        &first.quote,
        first.enc_pk,
        first.sign_pk,
        &expected_measurement(),
    )
    .unwrap();
    assert_eq!(b.phase(), Phase::Attested);
}

#[test]
fn attestation_rejects_wrong_build_and_reflection() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut honest = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let funding = cfg.fund(&mut ledger, Role::BroadcastSide).unwrap();
    let mut rogue = Enclave::with_build(cfg.authority(), "rogue-build", seeded_rng(3));
    rogue
        .provision(
            cfg.setup_data(Role::BroadcastSide, funding.as_ref()),
            cfg.params(Role::BroadcastSide),
        )
        .unwrap();

    let own = honest.get_attestation().unwrap();
    let att = rogue.get_attestation().unwrap();
    assert_eq!(att.quote.measurement, measurement_of("rogue-build"));
    assert_eq!(
        honest.accept_peer(&att.quote, att.enc_pk, att.sign_pk, &expected_measurement()),
        Err(EnclaveError::AttestationFailed)
    );
    assert_eq!(
        honest.accept_peer(&own.quote, own.enc_pk, own.sign_pk, &expected_measurement()),
        Err(EnclaveError::AttestationFailed)
    );
}

#[test]
fn accept_peer_requires_own_attestation_first() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    let att = b.get_attestation().unwrap();
    assert_eq!(
        a.accept_peer(&att.quote, att.enc_pk, att.sign_pk, &expected_measurement()),
        Err(EnclaveError::OrderViolation)
    );
    let mut fresh = cfg.enclave(Role::HashSide);
    assert_eq!(
        fresh.get_attestation(),
        Err(EnclaveError::WrongPhase(Phase::Created))
    );
}

#[test]
fn handshake_order_is_enforced() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut a, &mut b);

    assert_eq!(a.export_secrets(), Err(EnclaveError::OrderViolation));
    let blob_a_premature = {
        // The broadcast side may not import before it has exported.
        let blob_b = b.export_secrets().unwrap();
        a.import_secrets(&blob_b).unwrap();
        a.export_secrets().unwrap()
    };
    assert_eq!(
        a.export_secrets(),
        Err(EnclaveError::WrongPhase(Phase::Active))
    );
    b.import_secrets(&blob_a_premature).unwrap();
    assert_eq!(
        b.export_secrets(),
        Err(EnclaveError::WrongPhase(Phase::Active))
    );
}

#[test]
fn broadcast_side_cannot_import_before_export() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut a, &mut b);
    let bogus = crypto::encrypt(
        &b.get_attestation_public_for_tests(),
        b"not yet",
        &mut seeded_rng(1),
    );
    assert_eq!(b.import_secrets(&bogus), Err(EnclaveError::OrderViolation));
}

#[test]
fn two_broadcast_sides_abort() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut b1 = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    let other = ChannelConfig { seed: 2, ..cfg };
    let funding = other.fund(&mut ledger, Role::BroadcastSide).unwrap();
    let mut b2 = Enclave::new(cfg.authority(), 77);
    b2.provision(
        other.setup_data(Role::BroadcastSide, funding.as_ref()),
        other.params(Role::BroadcastSide),
    )
    .unwrap();
    attest(&mut b1, &mut b2);
    let blob1 = b1.export_secrets().unwrap();
    b2.export_secrets().unwrap();
    assert_eq!(b2.import_secrets(&blob1), Err(EnclaveError::OrderViolation));
}

#[test]
fn mismatched_lock_height_is_rejected() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let other = ChannelConfig {
        refund_lock_height: cfg.refund_lock_height + 1,
        ..cfg
    };
    let mut b = other.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut a, &mut b);
    let blob = b.export_secrets().unwrap();
    assert_eq!(a.import_secrets(&blob), Err(EnclaveError::ParamsMismatch));
}

#[test]
fn blob_for_someone_else_does_not_decrypt() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut a, &mut b);

    let third_cfg = ChannelConfig { seed: 9, ..cfg };
    let mut c = third_cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut d = third_cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    attest(&mut c, &mut d);

    let blob_for_a = b.export_secrets().unwrap();
    assert_eq!(
        c.import_secrets(&blob_for_a),
        Err(EnclaveError::DecryptFailed)
    );
}

#[test]
fn forged_owner_signature_is_rejected() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let mut a = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let mut b = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    let att_a = a.get_attestation().unwrap();
    attest(&mut a, &mut b);

    let genuine = cfg.setup_data(Role::BroadcastSide, None);
    let blob = SecretsBlob {
        secret_id: [7; 32],
        setup_data: genuine,
        params: cfg.params(Role::BroadcastSide),
        owner_signature: Signature(vec![0; 64]),
    };
    let ct = crypto::encrypt(&att_a.enc_pk, &blob.to_bytes(), &mut seeded_rng(2));
    assert_eq!(a.import_secrets(&ct), Err(EnclaveError::BadSignature));
}

#[test]
fn setup_and_refund_shape_with_fifty_btc_deposits() {
    let cfg = ChannelConfig::default();
    let p = open(cfg);
    let channel = &p.setup_tx.outputs[0];
    assert_eq!(channel.value, 100 * BTC);
    assert!(matches!(channel.condition, LockCondition::MultiSig2of2(..)));
    assert_eq!(p.setup_tx.txid(), p.setup_hash);
    // Each party funded deposit + full fee and paid half of it.
    let change: Satoshi = p.setup_tx.outputs[1..].iter().map(|o| o.value).sum();
    assert_eq!(change, 200_000);

    assert_eq!(p.refund_tx.lock_time, cfg.refund_lock_height);
    let half_fee = cfg.fee_close / 2;
    assert_eq!(
        payouts(&p.refund_tx, &cfg),
        (50 * BTC - half_fee, 50 * BTC - half_fee)
    );
    assert_eq!(
        p.hash.initial_balances(),
        Some((50 * BTC - half_fee, 50 * BTC - half_fee))
    );
}

#[test]
fn setup_and_refund_confirm_on_the_ledger() {
    let cfg = ChannelConfig::default();
    let mut p = open(cfg);
    p.ledger.submit(&p.setup_tx).unwrap();
    assert_eq!(p.ledger.find_by_hash(&p.setup_hash), Some(&p.setup_tx));
    assert_eq!(p.ledger.check(&p.refund_tx), Err(RejectReason::Premature));
    p.ledger.advance_height(cfg.refund_lock_height);
    p.ledger.submit(&p.refund_tx).unwrap();
    assert_eq!(p.ledger.fees_total(), cfg.fee_setup + cfg.fee_close);
    assert!(p.ledger.is_value_conserved());
}

#[test]
fn pay_debits_and_respects_credit() {
    let cfg = ChannelConfig {
        deposit_hash: 10 * BTC,
        ..zero_fee()
    };
    let mut p = open(cfg);
    let ct = p.hash.pay(4 * BTC).unwrap();
    assert_eq!(p.hash.status().balance_mine, 6 * BTC);
    assert_eq!(p.hash.status().send_counter, 1);

    let before = p.hash.status();
    assert_eq!(p.hash.pay(11 * BTC), Err(EnclaveError::InsufficientBalance));
    assert_eq!(p.hash.pay(0), Err(EnclaveError::ZeroAmount));
    assert_eq!(p.hash.status(), before);

    p.broadcast.receive_payment(&ct).unwrap();
    // Spending the whole balance is allowed.
    transfer(&mut p.hash, &mut p.broadcast, 6 * BTC);
    assert_eq!(p.hash.status().balance_mine, 0);
    assert_eq!(p.hash.pay(1), Err(EnclaveError::InsufficientBalance));
}

#[test]
fn sequential_payments_carry_consecutive_counters() {
    let mut p = open(zero_fee());
    let c1 = p.hash.pay(1).unwrap();
    let c2 = p.hash.pay(2).unwrap();
    let m1 = p.broadcast.debug_open_payment(&c1).unwrap();
    let m2 = p.broadcast.debug_open_payment(&c2).unwrap();
    assert_eq!((m1.counter, m1.amount), (1, 1));
    assert_eq!((m2.counter, m2.amount), (2, 2));
    assert_eq!(m1.sender_secret_id, m2.sender_secret_id);
}

#[test]
fn replay_and_reorder_are_rejected() {
    let mut p = open(zero_fee());
    let c1 = p.hash.pay(BTC).unwrap();
    let c2 = p.hash.pay(BTC).unwrap();

    assert_eq!(
        p.broadcast.receive_payment(&c2),
        Err(EnclaveError::ReplayOrGap {
            expected: 1,
            got: 2
        })
    );
    assert_eq!(p.broadcast.receive_payment(&c1), Ok(51 * BTC));
    assert_eq!(
        p.broadcast.receive_payment(&c1),
        Err(EnclaveError::ReplayOrGap {
            expected: 2,
            got: 1
        })
    );
    assert_eq!(p.broadcast.receive_payment(&c2), Ok(52 * BTC));
    assert_eq!(p.broadcast.status().recv_counter, 2);
}

#[test]
fn foreign_and_corrupted_payments_are_rejected() {
    let mut p = open(zero_fee());
    let att_b = p.broadcast.get_attestation_public_for_tests();
    let forged = PaymentMessage {
        sender_secret_id: [0; 32],
        counter: 1,
        amount: 1,
    };
    let ct = crypto::encrypt(&att_b, &forged.to_bytes(), &mut seeded_rng(8));
    assert_eq!(
        p.broadcast.receive_payment(&ct),
        Err(EnclaveError::WrongSecret)
    );

    let mut bad = p.hash.pay(1).unwrap();
    bad.sealed[3] ^= 0x20;
    assert_eq!(
        p.broadcast.receive_payment(&bad),
        Err(EnclaveError::DecryptFailed)
    );
    assert_eq!(p.broadcast.status().recv_counter, 0);
}

#[test]
fn settlement_pays_current_balances() {
    let cfg = zero_fee();
    let mut p = open(cfg);
    p.ledger.submit(&p.setup_tx).unwrap();
    for _ in 0..41 {
        transfer(&mut p.broadcast, &mut p.hash, BTC);
    }
    let settlement = p.broadcast.settle().unwrap();
    assert_eq!(settlement.lock_time, 0);
    assert_eq!(payouts(&settlement, &cfg), (91 * BTC, 9 * BTC));
    p.ledger.submit(&settlement).unwrap();
    assert_eq!(p.ledger.confirmed().len(), 2);

    let frozen = p.broadcast.status();
    assert_eq!(frozen.phase, Phase::Closed);
    assert_eq!(
        (frozen.balance_theirs, frozen.balance_mine),
        (91 * BTC, 9 * BTC)
    );
}

#[test]
fn both_enclaves_settle_identically_for_equal_views() {
    let cfg = ChannelConfig::default();
    let mut p = open(cfg);
    transfer(&mut p.hash, &mut p.broadcast, 3 * BTC);
    transfer(&mut p.broadcast, &mut p.hash, BTC);
    assert_eq!(p.hash.settle().unwrap(), p.broadcast.settle().unwrap());
}

#[test]
fn immediate_settlement_returns_initial_balances() {
    let cfg = ChannelConfig::default();
    let mut p = open(cfg);
    let (mine, theirs) = p.hash.initial_balances().unwrap();
    let settlement = p.hash.settle().unwrap();
    assert_eq!(payouts(&settlement, &cfg), (mine, theirs));
}

#[test]
fn closed_enclave_refuses_everything() {
    let mut p = open(zero_fee());
    let ct = p.broadcast.pay(1).unwrap();
    p.hash.settle().unwrap();
    assert_eq!(p.hash.pay(1), Err(EnclaveError::WrongPhase(Phase::Closed)));
    assert_eq!(
        p.hash.settle(),
        Err(EnclaveError::WrongPhase(Phase::Closed))
    );
    assert_eq!(
        p.hash.receive_payment(&ct),
        Err(EnclaveError::WrongPhase(Phase::Closed))
    );
    assert_eq!(
        p.hash.reissue_refund(&p.setup_tx),
        Err(EnclaveError::WrongPhase(Phase::Closed))
    );
    assert_eq!(
        p.hash.export_secrets(),
        Err(EnclaveError::WrongPhase(Phase::Closed))
    );
    assert!(p.hash.debug_open_payment(&ct).is_none(), "secrets erased");
}

#[test]
fn maul_recovery_reissues_an_immediate_refund() {
    let cfg = ChannelConfig::default();
    let mut p = open(cfg);
    let mauled = maul(&p.setup_tx);
    p.ledger.submit(&mauled).unwrap();
    p.ledger.advance_height(cfg.refund_lock_height);
    assert_eq!(
        p.ledger.check(&p.refund_tx),
        Err(RejectReason::MissingInput)
    );

    assert_eq!(
        p.hash.reissue_refund(&p.setup_tx),
        Err(EnclaveError::NotMauled)
    );
    let unrelated = p.ledger.minted()[0].clone();
    assert_eq!(
        p.hash.reissue_refund(&unrelated),
        Err(EnclaveError::ForeignTransaction)
    );

    let (mine, theirs) = p.hash.initial_balances().unwrap();
    let refund = p.hash.reissue_refund(&mauled).unwrap();
    assert_eq!(refund.lock_time, 0);
    assert_eq!(payouts(&refund, &cfg), (mine, theirs));
    assert_eq!(p.hash.phase(), Phase::Closed);
    p.ledger.submit(&refund).unwrap();
    assert_eq!(p.ledger.confirmed().len(), 2);
}

#[test]
fn status_tracks_lifecycle() {
    let cfg = ChannelConfig::default();
    let mut ledger = Ledger::new();
    let e = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    assert_eq!(e.status().phase, Phase::Provisioned);
    assert_eq!(e.status().balance_mine, 0);

    let mut p = open(cfg);
    let (mine, theirs) = p.hash.initial_balances().unwrap();
    let s = p.hash.status();
    assert_eq!(
        (s.phase, s.balance_mine, s.balance_theirs),
        (Phase::Active, mine, theirs)
    );
    p.hash.pay(5).unwrap();
    assert_eq!(p.hash.status().balance_mine, mine - 5);
}

#[test]
fn zero_deposit_side_can_only_receive() {
    let cfg = ChannelConfig {
        deposit_hash: 0,
        ..ChannelConfig::default()
    };
    let mut p = open(cfg);
    let s = p.hash.status();
    assert_eq!(s.balance_mine, 0);
    assert_eq!(s.balance_theirs, 50 * BTC - cfg.fee_close);
    assert_eq!(p.hash.pay(1), Err(EnclaveError::InsufficientBalance));
    transfer(&mut p.broadcast, &mut p.hash, BTC);
    transfer(&mut p.hash, &mut p.broadcast, BTC / 2);
    p.ledger.submit(&p.setup_tx).unwrap();
    p.ledger.submit(&p.hash.settle().unwrap()).unwrap();
    assert!(p.ledger.is_value_conserved());
}

impl Enclave {
    fn get_attestation_public_for_tests(&self) -> EncryptionPublicKey {
        self.identity.as_ref().unwrap().enc.public
    }
}

#[derive(Clone, Debug)]
enum Step {
    Pay { from_hash: bool, amount: Satoshi },
    Deliver { to_hash: bool },
    Drop { to_hash: bool },
}

fn step() -> impl Strategy<Value = Step> {
    prop_oneof![
        (any::<bool>(), 1..30 * BTC)
            .prop_map(|(from_hash, amount)| Step::Pay { from_hash, amount }),
        any::<bool>().prop_map(|to_hash| Step::Deliver { to_hash }),
        any::<bool>().prop_map(|to_hash| Step::Drop { to_hash }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn balances_are_conserved_and_never_revert(steps in prop::collection::vec(step(), 1..40)) {
        let cfg = ChannelConfig::default();
        let mut p = open(cfg);
        let total = cfg.deposit_hash + cfg.deposit_broadcast - cfg.fee_close;
        let (init_h, init_b) = p.hash.initial_balances().unwrap();
        let mut to_hash: VecDeque<(u64, Ciphertext)> = VecDeque::new();
        let mut to_broadcast: VecDeque<(u64, Ciphertext)> = VecDeque::new();
        let (mut sent_h, mut sent_b, mut recv_h, mut recv_b) = (0, 0, 0, 0);
        let mut sent_amounts_h = Vec::new();
        let mut accepted_by_b = Vec::new();
        let (mut dead_to_hash, mut dead_to_broadcast) = (false, false);

        for s in steps {
            match s {
                Step::Pay { from_hash: true, amount } => {
                    if let Ok(ct) = p.hash.pay(amount) {
                        sent_h += amount;
                        sent_amounts_h.push(amount);
                        if !dead_to_broadcast {
                            to_broadcast.push_back((amount, ct));
                        }
                    }
                }
                Step::Pay { from_hash: false, amount } => {
                    if let Ok(ct) = p.broadcast.pay(amount) {
                        sent_b += amount;
                        if !dead_to_hash {
                            to_hash.push_back((amount, ct));
                        }
                    }
                }
                Step::Deliver { to_hash: true } => {
                    if let Some((amount, ct)) = to_hash.pop_front() {
                        p.hash.receive_payment(&ct).unwrap();
                        recv_h += amount;
                    }
                }
                Step::Deliver { to_hash: false } => {
                    if let Some((amount, ct)) = to_broadcast.pop_front() {
                        p.broadcast.receive_payment(&ct).unwrap();
                        recv_b += amount;
                        accepted_by_b.push(amount);
                    }
                }
                // Without retransmission a drop leaves a permanent gap, so
                // that direction carries nothing further.
                Step::Drop { to_hash: true } => {
                    dead_to_hash = true;
                    to_hash.clear();
                }
                Step::Drop { to_hash: false } => {
                    dead_to_broadcast = true;
                    to_broadcast.clear();
                }
            }
            let h = p.hash.status();
            let b = p.broadcast.status();
            prop_assert_eq!(h.balance_mine + h.balance_theirs, total);
            prop_assert_eq!(b.balance_mine + b.balance_theirs, total);
            // No-revert: each side's view of its peer includes everything it sent.
            prop_assert_eq!(h.balance_theirs, init_b + sent_h - recv_h);
            prop_assert_eq!(b.balance_theirs, init_h + sent_b - recv_b);
            // No-harm: my view of the peer never undercuts the peer's own view.
            prop_assert!(h.balance_theirs >= b.balance_mine);
            prop_assert!(b.balance_theirs >= h.balance_mine);
            prop_assert_eq!(&accepted_by_b[..], &sent_amounts_h[..accepted_by_b.len()]);
        }
    }
}
