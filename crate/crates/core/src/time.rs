//! Simulation time. All clocks and durations are integer milliseconds.

pub type Millis = i64;

pub const MILLIS_PER_SEC: Millis = 1000;

/// Rounds seconds to the nearest millisecond.
#[inline]
pub fn millis_from_secs(secs: f64) -> Millis {
    (secs * MILLIS_PER_SEC as f64).round() as Millis
}

#[inline]
pub fn secs_from_millis(ms: Millis) -> f64 {
    ms as f64 / MILLIS_PER_SEC as f64
}

/// Seconds with no trailing zeros: `60000` -> `"60"`, `1500` -> `"1.5"`.
pub fn format_secs(ms: Millis) -> String {
    let whole = ms / MILLIS_PER_SEC;
    let frac = (ms % MILLIS_PER_SEC).abs();
    if frac == 0 {
        format!("{whole}")
    } else {
        let sign = if ms < 0 && whole == 0 { "-" } else { "" };
        let digits = format!("{frac:03}");
        format!("{sign}{whole}.{}", digits.trim_end_matches('0'))
    }
}
