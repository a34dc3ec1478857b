use super::*;
use crate::fixtures::ChannelConfig;
use crate::ledger::SATOSHI_PER_BTC;

#[test]
fn every_builtin_passes() {
    for name in builtin_names() {
        let scenario = builtin(name).unwrap();
        if let Err(e) = run(&scenario) {
            panic!("{name}: {e}");
        }
    }
}

#[test]
fn builtins_round_trip_through_text() {
    for name in builtin_names() {
        let scenario = builtin(name).unwrap();
        assert_eq!(parse(&scenario.to_string()).unwrap(), scenario, "{name}");
    }
}

#[test]
fn runs_are_deterministic() {
    let scenario = builtin("lossy").unwrap();
    let first = run(&scenario).unwrap();
    let second = run(&scenario).unwrap();
    assert_eq!(first.trace.to_string(), second.trace.to_string());
    assert_eq!(ledger_digest(&first.ledger), ledger_digest(&second.ledger));
}

#[test]
fn seed_changes_the_schedule() {
    let a = run(&random_schedule(1, 30, 0.3, 0.1, 0.3)).unwrap();
    let b = run(&random_schedule(2, 30, 0.3, 0.1, 0.3)).unwrap();
    assert_ne!(a.trace.to_string(), b.trace.to_string());
}

#[test]
fn honest_close_pays_the_final_view() {
    let out = run(&builtin("honest").unwrap()).unwrap();
    let cfg = ChannelConfig::default();
    let spend = out.channel_spend().unwrap();
    let sent_a: u64 = out.sent[0].iter().sum();
    let sent_b: u64 = out.sent[1].iter().sum();
    let share = cfg.fee_close / 2;
    assert_eq!(
        spend.outputs[0].value,
        cfg.deposit_hash - share - sent_a + sent_b
    );
    assert_eq!(
        spend.outputs[1].value,
        cfg.deposit_broadcast - share - sent_b + sent_a
    );
    assert_eq!(out.received[0], out.sent[1]);
    assert_eq!(out.received[1], out.sent[0]);
}

#[test]
fn total_loss_delivers_nothing_and_harms_no_one() {
    let out = run(&random_schedule(9, 20, 1.0, 0.0, 0.0)).unwrap();
    assert!(out.received.iter().all(Vec::is_empty));
    let spend = out.channel_spend().unwrap();
    // Everything sent was lost, so each side gets back at least its deposit
    // minus what it tried to pay.
    let cfg = ChannelConfig::default();
    let share = cfg.fee_close / 2;
    let sent_a: u64 = out.sent[0].iter().sum();
    let sent_b: u64 = out.sent[1].iter().sum();
    assert!(spend.outputs[0].value >= cfg.deposit_hash - share - sent_a);
    assert!(spend.outputs[1].value >= cfg.deposit_broadcast - share - sent_b);
}

#[test]
fn soak_finds_no_violation() {
    let report = soak(0..40);
    assert_eq!(report.runs, 40);
    assert!(report.failures.is_empty(), "{:?}", report.failures.first());
}

#[test]
fn soak_covers_edge_terms() {
    let scenarios: Vec<Scenario> = (0..200).map(soak_scenario).collect();
    assert!(scenarios.iter().any(|s| s.config.deposit_hash == 0));
    assert!(scenarios.iter().any(|s| s.config.deposit_broadcast == 0));
    assert!(scenarios.iter().any(|s| s.name.ends_with("-maul")));
}

#[test]
fn failed_expectation_is_reported() {
    let text = "name wrong\nflush\nexpect confirmed 2\n";
    match run(&parse(text).unwrap()) {
        Err(RunError::Expectation { step, .. }) => assert_eq!(step, 2),
        other => panic!("{other:?}"),
    }
}

#[test]
fn maul_after_setup_is_invalid() {
    let text = "name late\nflush\nmaul\n";
    assert!(matches!(
        run(&parse(text).unwrap()),
        Err(RunError::Invalid { .. })
    ));
}

#[test]
fn parse_errors_carry_line_numbers() {
    let err = parse("name x\nflush\n\npay c 5\n").unwrap_err();
    assert_eq!(err.line, 4);
    let err = parse("flush\nseed 3\n").unwrap_err();
    assert_eq!(err.line, 2);
}

#[test]
fn btc_amounts_parse() {
    let s = parse("pay a 1.5btc\n").unwrap();
    assert_eq!(
        s.script,
        vec![Step::Act(Action::Pay(Party::A, 3 * SATOSHI_PER_BTC / 2))]
    );
}
