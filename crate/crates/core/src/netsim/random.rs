//! Seeded scenario generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fixtures::{derive_seed, ChannelConfig};
use crate::ledger::SATOSHI_PER_BTC;

use super::scenario::{Action, Party, RandomSpec, Scenario, Step};

/// Establish, run `n_payments` random payments under the given loss
/// model, then have the hash side terminate immediately: whatever is still
/// in flight is never delivered.
pub fn random_schedule(
    seed: u64,
    n_payments: usize,
    p_drop: f64,
    p_replay: f64,
    p_reorder: f64,
) -> Scenario {
    Scenario::new(
        format!("random-{seed}"),
        ChannelConfig {
            seed,
            ..ChannelConfig::default()
        },
        vec![
            Step::Act(Action::Flush),
            Step::Random(RandomSpec {
                payments: n_payments,
                p_drop,
                p_replay,
                p_reorder,
                p_corrupt: 0.0,
            }),
            Step::Act(Action::Terminate(Party::A)),
        ],
    )
}

/// One adversarial scenario for the soak suite. The seed picks channel
/// terms, a loss model and one of several endings: cooperative close,
/// close with traffic in flight, settlement races, a crash, refund at or
/// just before the lock height, and an occasional mauled setup.
pub fn soak_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "soak"));
    let btc = |rng: &mut ChaCha8Rng| {
        rng.gen_range(1..=100) * SATOSHI_PER_BTC + rng.gen_range(0..SATOSHI_PER_BTC)
    };
    let (deposit_hash, deposit_broadcast) = match rng.gen_range(0..10) {
        0 => (0, btc(&mut rng)),
        1 => (btc(&mut rng), 0),
        2..=4 => (50 * SATOSHI_PER_BTC, 50 * SATOSHI_PER_BTC),
        _ => (btc(&mut rng), btc(&mut rng)),
    };
    let config = ChannelConfig {
        seed,
        deposit_hash,
        deposit_broadcast,
        fee_setup: rng.gen_range(0..=500_000),
        fee_close: rng.gen_range(0..=500_000),
        refund_lock_height: rng.gen_range(5..=300),
    };
    let random = |rng: &mut ChaCha8Rng| {
        Step::Random(RandomSpec {
            payments: rng.gen_range(0..=40),
            p_drop: rng.gen_range(0.0..0.5),
            p_replay: rng.gen_range(0.0..0.3),
            p_reorder: rng.gen_range(0.0..0.5),
            p_corrupt: rng.gen_range(0.0..0.2),
        })
    };
    let party = |rng: &mut ChaCha8Rng| {
        if rng.gen_bool(0.5) {
            Party::A
        } else {
            Party::B
        }
    };

    let mut script = Vec::new();
    let mauled = rng.gen_bool(0.05);
    if mauled {
        script.push(Step::Act(Action::Maul));
    }
    script.push(Step::Act(Action::Flush));
    script.push(random(&mut rng));
    let (x, lock) = (party(&mut rng), config.refund_lock_height);
    let act = |a: Action| Step::Act(a);
    let ending: Vec<Step> = match rng.gen_range(0..8) {
        0 => vec![act(Action::Flush), act(Action::Terminate(x))],
        1 => vec![act(Action::Terminate(x))],
        2 => vec![
            act(Action::Flush),
            act(Action::Terminate(x)),
            act(Action::Terminate(x.peer())),
        ],
        3 => vec![act(Action::Terminate(x)), act(Action::Terminate(x.peer()))],
        4 => vec![
            act(Action::Crash(x)),
            random(&mut rng),
            act(Action::Flush),
            act(Action::Terminate(x.peer())),
        ],
        5 => vec![
            act(Action::AdvanceHeight(lock)),
            act(Action::Refund(x)),
            act(Action::Terminate(x.peer())),
        ],
        6 => vec![
            act(Action::AdvanceHeight(lock - 1)),
            act(Action::Refund(x)),
            act(Action::Flush),
            act(Action::Terminate(x.peer())),
            act(Action::AdvanceHeight(1)),
            act(Action::Refund(x)),
        ],
        _ => vec![
            random(&mut rng),
            act(Action::Flush),
            act(Action::Terminate(x)),
        ],
    };
    script.extend(ending);
    let name = format!("soak-{seed}{}", if mauled { "-maul" } else { "" });
    Scenario::new(name, config, script)
}
