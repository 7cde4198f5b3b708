//! Closed-form sample and time bounds for choosing `l`.
//!
//! Everything is evaluated in the log domain; each [`Bound`] carries its
//! base-2 logarithm and, when it fits in an `f64`, the value itself.

use serde::{Deserialize, Serialize};

use crate::combin::ln_binom;
use crate::error::{param, Result};
use crate::ring::{check_modulus, NoiseSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub log2: f64,
    /// `None` when the value overflows `f64`.
    pub value: Option<f64>,
}

impl Bound {
    pub fn from_ln(ln: f64) -> Bound {
        let value = (ln < 709.0).then(|| ln.exp());
        Bound { log2: ln / std::f64::consts::LN_2, value }
    }
}

/// Spectral sample bounds `(l ln(qn)/ρ²)(αqn/l)^{k/2}` and `(l ln(qn)/ρ²)(αn/l)^k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralBounds {
    pub small_q: f64,
    pub large_q: f64,
}

fn ln_lead(n: usize, q: f64, l: usize) -> f64 {
    (l as f64).ln() + (q * n as f64).ln().ln()
}

fn ln_small_q(n: usize, k: usize, q: f64, l: usize, alpha: f64) -> f64 {
    ln_lead(n, q, l) + 0.5 * k as f64 * (alpha * q * n as f64 / l as f64).ln()
}

fn ln_large_q(n: usize, k: usize, q: f64, l: usize, alpha: f64) -> f64 {
    ln_lead(n, q, l) + k as f64 * (alpha * n as f64 / l as f64).ln()
}

pub fn spectral_bounds(n: usize, k: usize, q: f64, l: usize, rho: f64, alpha: f64) -> SpectralBounds {
    let r2 = 2.0 * rho.ln();
    SpectralBounds {
        small_q: (ln_small_q(n, k, q, l, alpha) - r2).exp(),
        large_q: (ln_large_q(n, k, q, l, alpha) - r2).exp(),
    }
}

/// Input to [`calc_bounds`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffQuery {
    pub n: usize,
    pub k: usize,
    pub q: u32,
    pub noise: NoiseSpec,
    /// Kikuchi level; when absent it is derived from `time_budget_log2`.
    pub l: Option<usize>,
    /// Largest allowed `log2(C(n,l) q^l)`.
    pub time_budget_log2: Option<f64>,
    pub alpha: f64,
    /// `ε` of the many-covers time bound.
    pub eps: f64,
    /// Exponent `d` in `μ = (q-1)/q - n^{-d}`; derived from `ρ` when absent.
    pub d: Option<f64>,
}

impl TradeoffQuery {
    pub fn new(n: usize, k: usize, q: u32, noise: NoiseSpec) -> Self {
        TradeoffQuery { n, k, q, noise, l: None, time_budget_log2: None, alpha: 1.0, eps: 0.1, d: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundTable {
    pub n: usize,
    pub k: usize,
    pub q: u32,
    pub l: usize,
    pub rho: f64,
    pub alpha: f64,
    /// `k/2 ≤ l ≤ n - k/2`, the range of the small-`q` statements.
    pub small_q_applicable: bool,
    /// `k ≤ l ≤ n`, the range of the large-`q` statements.
    pub large_q_applicable: bool,
    pub spectral_small_q: Bound,
    pub spectral_large_q: Bound,
    pub cover_lwe_small_q: Bound,
    pub cover_lwe_large_q: Bound,
    pub lpn_d: Option<f64>,
    pub cover_lpn_small_q: Option<Bound>,
    pub cover_lpn_large_q: Option<Bound>,
    /// `C(n,l) q^l`.
    pub time_spectral: Bound,
    /// `sqrt(C(n,l) q^l) (n/l)^k`.
    pub time_cover: Bound,
    /// `(C(n,l) q^l)^{1/2+ε} (n/l)^k`.
    pub time_cover_many: Bound,
    /// `δ = log2(C(n,l) q^l) / n`, the time exponent per variable.
    pub time_delta: f64,
    /// `δn / (ln q + ln n)`.
    pub crossover_l_ln: f64,
    /// `δn / (log2 q + log2 n)`.
    pub crossover_l_log2: f64,
    /// `ln n · (ln q + ln n)^k`.
    pub crossover_samples_ln: Bound,
    /// `ln n · (log2 q + log2 n)^k`.
    pub crossover_samples_log2: Bound,
    /// `l² (n/l)^k / (e^k n l^{1/l})`, below which a dense minor is unlikely to exist.
    pub dense_minor: Bound,
}

fn ln_vertex_count(n: usize, l: usize, q: f64) -> f64 {
    ln_binom(n as u64, l as u64) + l as f64 * q.ln()
}

/// Evaluates every closed-form bound for the query.
pub fn calc_bounds(qy: &TradeoffQuery) -> Result<BoundTable> {
    check_modulus(qy.q)?;
    let (n, k) = (qy.n, qy.k);
    if k == 0 || k > n {
        return Err(param(format!("need 1 <= k <= n, got k={k} n={n}")));
    }
    if !(qy.alpha > 0.0) || !(qy.eps >= 0.0) {
        return Err(param("alpha must be positive and eps non-negative"));
    }
    let q = qy.q as f64;
    let rho = qy.noise.rho(qy.q)?;
    if rho <= 0.0 {
        return Err(param("noise bias is zero; no sample bound applies"));
    }
    let l = match (qy.l, qy.time_budget_log2) {
        (Some(l), _) => l,
        (None, Some(budget)) => {
            let lo = k.div_ceil(2);
            (lo..=n)
                .take_while(|&l| ln_vertex_count(n, l, q) / std::f64::consts::LN_2 <= budget)
                .last()
                .ok_or_else(|| param(format!("no level l >= {lo} fits a 2^{budget} time budget")))?
        }
        (None, None) => return Err(param("give either l or a time budget")),
    };
    if 2 * l < k || l > n || l == 0 {
        return Err(param(format!("need k/2 <= l <= n, got l={l} k={k} n={n}")));
    }

    let (nf, kf, lf) = (n as f64, k as f64, l as f64);
    let ln_rho2 = 2.0 * rho.ln();
    let small = ln_small_q(n, k, q, l, qy.alpha);
    let large = ln_large_q(n, k, q, l, qy.alpha);

    let lpn_d = qy.d.or_else(|| match qy.noise {
        NoiseSpec::Lpn { .. } => Some(-(rho * (q - 1.0) / q).ln() / nf.ln()),
        _ => None,
    });
    let n2d = lpn_d.map(|d| 2.0 * d * nf.ln());

    let ln_n_over_l = (nf / lf).ln();
    let ln_vc = ln_vertex_count(n, l, q);
    let time_delta = ln_vc / std::f64::consts::LN_2 / nf;
    let crossover_l_ln = time_delta * nf / (q.ln() + nf.ln());
    let crossover_l_log2 = time_delta * nf / (q.log2() + nf.log2());

    Ok(BoundTable {
        n,
        k,
        q: qy.q,
        l,
        rho,
        alpha: qy.alpha,
        small_q_applicable: 2 * l >= k && 2 * l + k <= 2 * n,
        large_q_applicable: l >= k && l <= n,
        spectral_small_q: Bound::from_ln(small - ln_rho2),
        spectral_large_q: Bound::from_ln(large - ln_rho2),
        cover_lwe_small_q: Bound::from_ln(small),
        cover_lwe_large_q: Bound::from_ln(large),
        lpn_d,
        cover_lpn_small_q: n2d.map(|x| Bound::from_ln(x + small)),
        cover_lpn_large_q: n2d.map(|x| Bound::from_ln(x + large)),
        time_spectral: Bound::from_ln(ln_vc),
        time_cover: Bound::from_ln(0.5 * ln_vc + kf * ln_n_over_l),
        time_cover_many: Bound::from_ln((0.5 + qy.eps) * ln_vc + kf * ln_n_over_l),
        time_delta,
        crossover_l_ln,
        crossover_l_log2,
        crossover_samples_ln: Bound::from_ln(nf.ln().ln() + kf * (q.ln() + nf.ln()).ln()),
        crossover_samples_log2: Bound::from_ln(nf.ln().ln() + kf * (q.log2() + nf.log2()).ln()),
        dense_minor: Bound::from_ln(2.0 * lf.ln() + kf * ln_n_over_l - kf - nf.ln() - lf.ln() / lf),
    })
}
