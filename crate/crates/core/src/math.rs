//! Exact integer roots and small numeric helpers.
//!
//! Every comparison of an integer count against a fractional power of `d` goes through
//! these helpers so that boundary cases (`popcount == sqrt(d)`, `kappa^3 == d`) are decided
//! exactly rather than through a floating-point root.

/// Smallest `m` with `m * m >= d`. A count `c` satisfies `c >= sqrt(d)` iff `c >= ceil_sqrt(d)`.
pub fn ceil_sqrt(d: u64) -> u64 {
    let mut m = (d as f64).sqrt() as u64;
    while m * m < d {
        m += 1;
    }
    while m > 0 && (m - 1) * (m - 1) >= d {
        m -= 1;
    }
    m
}

/// `true` iff `count >= sqrt(d)`, decided by squaring.
pub fn at_least_sqrt(count: u64, d: u64) -> bool {
    count.saturating_mul(count) >= d
}

/// Largest `k` with `k^p <= x`.
pub fn floor_root(x: u64, p: u32) -> u64 {
    let mut k = (x as f64).powf(1.0 / p as f64) as u64;
    while k.checked_pow(p).is_none_or(|v| v > x) {
        k -= 1;
    }
    while (k + 1).checked_pow(p).is_some_and(|v| v <= x) {
        k += 1;
    }
    k
}

/// `floor(d^(2/3) / 2)`, i.e. the largest `e` with `(2e)^3 <= d^2`.
pub fn half_two_thirds_floor(d: u64) -> u64 {
    floor_root(d * d, 3) / 2
}

/// Smallest `r >= 0` with `2^r * under >= over`; this is `ceil(log2(over / under))` for
/// `over >= under > 0`, computed with exact power-of-two scaling.
pub fn ceil_log2_ratio(over: f64, under: f64) -> u32 {
    debug_assert!(under > 0.0);
    let mut r = 0;
    let mut scaled = under;
    while scaled < over {
        scaled *= 2.0;
        r += 1;
    }
    r
}

/// `ceil(log2(d))` for `d >= 1`.
pub fn ceil_log2(d: u64) -> u32 {
    if d <= 1 {
        0
    } else {
        64 - (d - 1).leading_zeros()
    }
}

/// Formats a number with 12 significant digits, trimming trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        format!("{x:.11e}")
    }
}
