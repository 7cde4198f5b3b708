//! Binomial coefficients, exact and in the log domain.

/// `C(n, k)` in `u128`, `None` on overflow. Returns 0 when `k > n`.
pub fn binom(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc · (n-i) / (i+1) stays integral at every step
        acc = acc.checked_mul((n - i) as u128)? / (i as u128 + 1);
    }
    Some(acc)
}

/// `C(n, k)` as `f64` via the log domain; exact for small arguments.
pub fn binom_f64(n: u64, k: u64) -> f64 {
    if k > n {
        return 0.0;
    }
    match binom(n, k) {
        Some(v) if v < (1u128 << 100) => v as f64,
        _ => ln_binom(n, k).exp(),
    }
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_binom(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let k = k.min(n - k);
    (0..k).map(|i| ((n - i) as f64 / (i + 1) as f64).ln()).sum()
}

/// `base^exp` in `u128`, `None` on overflow.
pub fn pow(base: u128, exp: u64) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pascal() {
        for n in 0..60u64 {
            for k in 1..=n {
                assert_eq!(binom(n, k).unwrap(), binom(n - 1, k - 1).unwrap() + binom(n - 1, k).unwrap());
            }
        }
        assert_eq!(binom(3, 5), Some(0));
        assert_eq!(binom(200, 100), None);
    }

    #[test]
    fn log_domain_agrees() {
        for (n, k) in [(10, 3), (50, 25), (100, 7)] {
            let exact = binom(n, k).unwrap() as f64;
            assert!((ln_binom(n, k) - exact.ln()).abs() < 1e-12 * exact.ln().max(1.0));
        }
    }
}
