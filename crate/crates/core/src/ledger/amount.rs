//! Decimal BTC amounts as used on command lines and in scenario files.

use super::{Satoshi, SATOSHI_PER_BTC};

/// Parses a non-negative decimal BTC amount with at most eight fractional
/// digits, exactly.
pub fn parse_btc(s: &str) -> Option<Satoshi> {
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() && frac.is_empty() {
        return None;
    }
    if frac.len() > 8
        || !whole
            .bytes()
            .chain(frac.bytes())
            .all(|b| b.is_ascii_digit())
    {
        return None;
    }
    let whole: Satoshi = if whole.is_empty() {
        0
    } else {
        whole.parse().ok()?
    };
    let frac_sat: Satoshi = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<8}").parse().ok()?
    };
    whole.checked_mul(SATOSHI_PER_BTC)?.checked_add(frac_sat)
}

/// Formats satoshi as BTC without trailing zeros, e.g. `0.002` or `50`.
pub fn format_btc(sat: Satoshi) -> String {
    let whole = sat / SATOSHI_PER_BTC;
    let frac = sat % SATOSHI_PER_BTC;
    if frac == 0 {
        return whole.to_string();
    }
    let digits = format!("{frac:08}");
    format!("{whole}.{}", digits.trim_end_matches('0'))
}
