//! Browser entry points. Each call runs a complete simulation and returns
//! a JSON document with the trace, per-step balances and final payouts.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use teechan::demo::{self, DemoConfig};
use teechan::fixtures::ChannelConfig;
use teechan::ledger::{format_btc, parse_btc, LockCondition, Satoshi};
use teechan::netsim::{self, Outcome, Party, RunError, Scenario};

fn btc(field: &str, s: &str) -> Result<Satoshi, String> {
    parse_btc(s.trim()).ok_or_else(|| format!("{field}: {s:?} is not a BTC amount"))
}

fn payouts(out: &Outcome, cfg: &ChannelConfig) -> Value {
    let Some(spend) = out.channel_spend() else {
        return Value::Null;
    };
    let to = |p: Party| {
        let key = cfg.change_key(p.role()).public;
        spend
            .outputs
            .iter()
            .filter(|o| o.condition == LockCondition::SingleSig(key))
            .map(|o| o.value)
            .sum::<Satoshi>()
    };
    json!({
        "a": format_btc(to(Party::A)),
        "b": format_btc(to(Party::B)),
        "time_locked": spend.lock_time > 0,
    })
}

fn outcome_json(result: Result<Outcome, RunError>, cfg: &ChannelConfig) -> Value {
    match result {
        Ok(out) => {
            let balances: Vec<Value> = out
                .trace
                .snapshots()
                .iter()
                .map(|s| json!([s.step, s.balance[0], s.balance[1]]))
                .collect();
            json!({
                "ok": true,
                "trace": out.trace.to_string(),
                "balances": balances,
                "payout": payouts(&out, cfg),
                "confirmed": out.ledger.confirmed().len(),
            })
        }
        Err(RunError::Violation(v)) => json!({
            "ok": false,
            "error": v.to_string(),
            "trace": v.trace.to_string(),
            "reproducer": v.reproducer.to_string(),
        }),
        Err(e) => json!({ "ok": false, "error": e.to_string() }),
    }
}

fn demo_json(
    deposit_a: &str,
    deposit_b: &str,
    fee: &str,
    payments: u32,
    close_b: &str,
    seed: u64,
) -> Result<Value, String> {
    let fee = btc("fee", fee)?;
    let channel = ChannelConfig {
        seed,
        deposit_hash: btc("deposit a", deposit_a)?,
        deposit_broadcast: btc("deposit b", deposit_b)?,
        fee_setup: fee,
        fee_close: fee,
        ..ChannelConfig::default()
    };
    let close_b = match close_b.trim() {
        "" | "none" => None,
        s => Some(btc("close b", s)?),
    };
    let cfg = DemoConfig {
        channel,
        payments: payments as usize,
        close_b,
    };
    if cfg.initial_balances().is_none() {
        return Err("deposits do not cover the closing fee".into());
    }
    Ok(outcome_json(demo::run(&cfg), &channel))
}

/// Opens a channel, runs `payments` seeded lock-step payments and lets Bob
/// settle. `close_b` is Bob's closing balance in BTC, or empty.
#[wasm_bindgen]
pub fn run_demo(
    deposit_a: &str,
    deposit_b: &str,
    fee: &str,
    payments: u32,
    close_b: &str,
    seed: u64,
) -> Result<String, JsError> {
    demo_json(deposit_a, deposit_b, fee, payments, close_b, seed)
        .map(|v| v.to_string())
        .map_err(|e| JsError::new(&e))
}

/// Runs a scenario given in the text format. Parse errors are thrown.
#[wasm_bindgen]
pub fn run_scenario(text: &str) -> Result<String, JsError> {
    let scenario = Scenario::parse(text).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(outcome_json(netsim::run(&scenario), &scenario.config).to_string())
}

/// A random lossy schedule ending in an immediate close by Alice.
#[wasm_bindgen]
pub fn run_random(seed: u64, payments: u32, p_drop: f64, p_replay: f64, p_reorder: f64) -> String {
    let clamp = |p: f64| {
        if p.is_finite() {
            p.clamp(0.0, 1.0)
        } else {
            0.0
        }
    };
    let scenario = netsim::random_schedule(
        seed,
        payments as usize,
        clamp(p_drop),
        clamp(p_replay),
        clamp(p_reorder),
    );
    outcome_json(netsim::run(&scenario), &scenario.config).to_string()
}

/// Text of a built-in scenario, for editing in the page.
#[wasm_bindgen]
pub fn builtin_scenario(name: &str) -> Option<String> {
    netsim::builtin(name).map(|s| s.to_string())
}

#[wasm_bindgen]
pub fn builtin_names() -> String {
    json!(netsim::builtin_names().collect::<Vec<_>>()).to_string()
}
