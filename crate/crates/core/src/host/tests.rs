use super::*;
use crate::crypto::{self, Ciphertext};
use crate::enclave::{EnclaveError, Role};
use crate::fixtures::ChannelConfig;
use crate::ledger::{Ledger, RejectReason};

type Node = PartyNode<SharedLedger>;

fn pair_with(cfg: &ChannelConfig, tweak: impl Fn(&mut NodeConfig)) -> (SharedLedger, Node, Node) {
    let mut ledger = Ledger::new();
    let ea = cfg.provisioned_enclave(&mut ledger, Role::HashSide);
    let eb = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    let shared = SharedLedger::new(ledger);
    let mut ca = NodeConfig::new(Role::HashSide);
    let mut cb = NodeConfig::new(Role::BroadcastSide);
    tweak(&mut ca);
    tweak(&mut cb);
    let a = PartyNode::new(ea, shared.clone(), ca);
    let b = PartyNode::new(eb, shared.clone(), cb);
    (shared, a, b)
}

fn open_pair() -> (SharedLedger, Node, Node, LocalLink) {
    let (ledger, mut a, mut b) = pair_with(&ChannelConfig::default(), |_| {});
    let mut link = LocalLink::new();
    link.establish(&mut a, &mut b).expect("honest establish");
    (ledger, a, b, link)
}

#[test]
fn honest_establish_confirms_only_the_setup() {
    let (ledger, a, b, _) = open_pair();
    let l = ledger.lock();
    assert_eq!(l.confirmed().len(), 1);
    assert_eq!(Some(l.confirmed()[0].txid()), a.setup_txid());
    assert_eq!(a.setup_txid(), b.setup_txid());
    assert_eq!(a.refund_tx(), b.refund_tx());
    assert!(a.refund_tx().is_some());
}

#[test]
fn wrong_measurement_fails_before_secrets_leave() {
    let (_, mut a, mut b) = pair_with(&ChannelConfig::default(), |c| {
        c.expected_measurement = crypto::measurement_of("some-other-build");
    });
    let err = LocalLink::new().establish(&mut a, &mut b).unwrap_err();
    assert_eq!(err, EstablishError::AttestationFailed);
    for n in [&mut a, &mut b] {
        assert!(!n.drain_events().contains(&NodeEvent::SecretsSent));
    }
}

#[test]
fn two_broadcast_sides_abort_with_order_violation() {
    let cfg = ChannelConfig::default();
    let other = ChannelConfig { seed: 2, ..cfg };
    let mut ledger = Ledger::new();
    let e1 = cfg.provisioned_enclave(&mut ledger, Role::BroadcastSide);
    let funding = other.fund(&mut ledger, Role::BroadcastSide).unwrap();
    let mut e2 = crate::enclave::Enclave::new(cfg.authority(), 99);
    e2.provision(
        other.setup_data(Role::BroadcastSide, funding.as_ref()),
        cfg.params(Role::BroadcastSide),
    )
    .unwrap();
    let shared = SharedLedger::new(ledger);
    let mut a = PartyNode::new(e1, shared.clone(), NodeConfig::new(Role::BroadcastSide));
    let mut b = PartyNode::new(e2, shared.clone(), NodeConfig::new(Role::BroadcastSide));
    let err = LocalLink::new().establish(&mut a, &mut b).unwrap_err();
    assert_eq!(err, EstablishError::Enclave(EnclaveError::OrderViolation));
    assert!(shared.lock().confirmed().is_empty());
}

#[test]
fn mauled_setup_is_detected_and_refunded_immediately() {
    let (ledger, mut a, mut b) = pair_with(&ChannelConfig::default(), |c| c.maul_setup = true);
    let original_refund;
    let err = {
        let mut link = LocalLink::new();
        let r = link.establish(&mut a, &mut b);
        original_refund = b.refund_tx().cloned().unwrap();
        r.unwrap_err()
    };
    let EstablishError::MaulDetected { observed, recovery } = err else {
        panic!("expected maul detection, got {err:?}");
    };
    assert!(recovery.is_ok());
    let mut l = ledger.lock();
    assert_eq!(l.confirmed().len(), 2);
    assert_eq!(l.confirmed()[0].txid(), observed);
    assert_ne!(Some(observed), a.setup_txid());
    l.advance_height(1_000);
    assert_eq!(l.submit(&original_refund), Err(RejectReason::MissingInput));
}

#[test]
fn pay_over_balance_transmits_nothing() {
    let (_, mut a, _, _) = open_pair();
    let before = a.sender().next_seq();
    let too_much = a.status().balance_mine + 1;
    assert_eq!(
        a.pay(too_much),
        Err(HostError::Enclave(EnclaveError::InsufficientBalance))
    );
    assert_eq!(a.sender().next_seq(), before);
}

#[test]
fn pay_before_open_is_refused() {
    let (_, mut a, _) = pair_with(&ChannelConfig::default(), |_| {});
    assert_eq!(a.pay(1), Err(HostError::ChannelClosed));
}

#[test]
fn lossy_link_delivers_every_payment_in_order() {
    let (_, mut a, mut b, mut link) = open_pair();
    for i in 1..=100 {
        a.pay(i).unwrap();
    }
    let mut carried = 0u64;
    let mut ticks = 0;
    while b.status().recv_counter < 100 {
        ticks += 1;
        assert!(ticks < 10_000, "no progress");
        let now = link.now;
        for f in a.poll(now) {
            carried += 1;
            if !carried.is_multiple_of(3) {
                b.handle_frame(f);
            }
        }
        for f in b.poll(now) {
            carried += 1;
            if !carried.is_multiple_of(3) {
                a.handle_frame(f);
            }
        }
        link.now += 1;
    }
    // Once the link heals the sender learns everything was delivered.
    for _ in 0..8 {
        link.flush(&mut a, &mut b);
    }
    assert!(a.is_quiet());
    let received: Vec<u64> = b
        .drain_events()
        .into_iter()
        .filter_map(|e| match e {
            NodeEvent::PaymentAccepted { amount, .. } => Some(amount),
            _ => None,
        })
        .collect();
    assert_eq!(received, (1..=100).collect::<Vec<_>>());
    assert_eq!(b.status().recv_counter, 100);
}

#[test]
fn duplicate_delivery_is_rejected_but_acked() {
    let (_, mut a, mut b, mut link) = open_pair();
    a.pay(5).unwrap();
    let frame = a
        .poll(link.now)
        .into_iter()
        .find(|f| f.kind == FrameKind::Payment)
        .unwrap();
    b.handle_frame(frame.clone());
    // A replay forged with the next sequence number reaches the enclave.
    let replay = Frame {
        seq: frame.seq + 1,
        ..frame
    };
    b.handle_frame(replay);
    let acks = b.poll(link.now);
    assert_eq!(acks, vec![Frame::ack(frame.seq + 1)]);
    let events = b.drain_events();
    assert!(events.iter().any(|e| matches!(
        e,
        NodeEvent::PaymentRejected {
            error: EnclaveError::ReplayOrGap {
                expected: 2,
                got: 1
            },
            ..
        }
    )));
    assert_eq!(b.status().recv_counter, 1);
    for _ in 0..8 {
        link.flush(&mut a, &mut b);
    }
    assert!(a.is_quiet());
    assert_eq!(b.status().recv_counter, 1);
}

#[test]
fn corrupted_payment_waits_for_retransmission() {
    let (_, mut a, mut b, mut link) = open_pair();
    a.pay(7).unwrap();
    let mut frame = a.poll(link.now).pop().unwrap();
    let last = frame.payload.len() - 1;
    frame.payload[last] ^= 1;
    assert!(Ciphertext::from_bytes(&frame.payload).is_ok());
    b.handle_frame(frame);
    assert_eq!(b.status().recv_counter, 0);
    for _ in 0..8 {
        link.flush(&mut a, &mut b);
    }
    assert_eq!(b.status().recv_counter, 1);
    assert_eq!(b.stats().amount_received, 7);
}

#[test]
fn terminate_after_exchange_confirms_second_transaction() {
    let (ledger, mut a, mut b, mut link) = open_pair();
    a.pay(1_000).unwrap();
    b.pay(300).unwrap();
    link.flush(&mut a, &mut b);
    let sub = a.terminate().unwrap();
    assert!(sub.verdict.is_ok());
    assert_eq!(ledger.lock().confirmed().len(), 2);
    assert_eq!(a.pay(1), Err(HostError::ChannelClosed));
}

#[test]
fn racing_terminations_confirm_exactly_one() {
    let (ledger, mut a, mut b, mut link) = open_pair();
    a.pay(10).unwrap();
    link.flush(&mut a, &mut b);
    let first = b.terminate().unwrap();
    let second = a.terminate().unwrap();
    assert!(first.verdict.is_ok());
    assert_eq!(second.verdict, Err(RejectReason::DoubleSpend));
    assert_eq!(ledger.lock().confirmed().len(), 2);
}

#[test]
fn refund_respects_lock_height_and_settlement() {
    let cfg = ChannelConfig::default();
    let (ledger, mut a, mut b, _) = open_pair();
    let lock = cfg.refund_lock_height;
    ledger.lock().advance_height(lock - 1);
    assert_eq!(
        a.refund_after_timeout().unwrap().verdict,
        Err(RejectReason::Premature)
    );
    ledger.lock().advance_height(1);
    assert!(a.refund_after_timeout().unwrap().verdict.is_ok());
    assert_eq!(
        b.terminate().unwrap().verdict,
        Err(RejectReason::DoubleSpend)
    );
    assert_eq!(ledger.lock().confirmed().len(), 2);
}

#[test]
fn refund_after_settlement_is_a_double_spend() {
    let (ledger, mut a, mut b, _) = open_pair();
    assert!(a.terminate().unwrap().verdict.is_ok());
    ledger.lock().advance_height(10_000);
    assert_eq!(
        b.refund_after_timeout().unwrap().verdict,
        Err(RejectReason::DoubleSpend)
    );
}

#[test]
fn missing_setup_times_out() {
    let cfg = ChannelConfig::default();
    let (_, mut a, mut b) = pair_with(&cfg, |c| c.setup_timeout = 5);
    // The hash side's secrets never reach the broadcast side.
    a.start();
    b.start();
    for now in 0..20 {
        for f in b.poll(now) {
            a.handle_frame(f);
        }
        for f in a.poll(now) {
            if f.kind == FrameKind::Ack || f.seq == 0 {
                b.handle_frame(f);
            }
        }
    }
    assert!(b.drain_events().contains(&NodeEvent::SecretsSent));
    assert_eq!(a.state(), &NodeState::Failed(EstablishError::Timeout));
}
