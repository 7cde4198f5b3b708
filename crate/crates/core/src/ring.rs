//! Arithmetic over `Z_q`, the `q`-th roots of unity, and the noise models.
//!
//! A residue is stored as a plain `u32` in `0..q`; the modulus travels with
//! the surrounding context (an instance, a vertex space, a sampler). A
//! [`Phase`] is the multiplicative view of a residue: exponent `s` stands for
//! `ω_q^s = exp(2πi·s/q)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// A residue in `0..q`.
pub type Residue = u32;

/// Validates `q ≥ 2`.
pub fn check_modulus(q: u32) -> Result<()> {
    if q < 2 {
        return Err(param(format!("modulus must be at least 2, got {q}")));
    }
    Ok(())
}

#[inline]
pub fn add_mod(a: Residue, b: Residue, q: u32) -> Residue {
    ((a as u64 + b as u64) % q as u64) as Residue
}

#[inline]
pub fn sub_mod(a: Residue, b: Residue, q: u32) -> Residue {
    ((a as u64 + q as u64 - (b % q) as u64) % q as u64) as Residue
}

#[inline]
pub fn neg_mod(a: Residue, q: u32) -> Residue {
    if a.is_multiple_of(q) {
        0
    } else {
        q - a % q
    }
}

#[inline]
pub fn mul_mod(a: Residue, b: Residue, q: u32) -> Residue {
    ((a as u64 * b as u64) % q as u64) as Residue
}

/// Reduces any signed integer into `0..q`.
#[inline]
pub fn reduce(x: i64, q: u32) -> Residue {
    x.rem_euclid(q as i64) as Residue
}

/// Centered representative in `[-⌊q/2⌋, ⌊q/2⌋]` (ties at even `q` go to `+q/2`).
#[inline]
pub fn center(a: Residue, q: u32) -> i64 {
    let a = (a % q) as i64;
    let q = q as i64;
    if a > q / 2 {
        a - q
    } else {
        a
    }
}

/// Deterministic trial division; moduli here are at most a few million.
pub fn is_prime(q: u32) -> bool {
    if q < 2 {
        return false;
    }
    if q.is_multiple_of(2) {
        return q == 2;
    }
    let mut d = 3u64;
    while d * d <= q as u64 {
        if (q as u64).is_multiple_of(d) {
            return false;
        }
        d += 2;
    }
    true
}

/// An element `ω_q^exponent` of the group of `q`-th roots of unity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Phase(pub Residue);

impl Phase {
    pub const ONE: Phase = Phase(0);

    pub fn new(exponent: i64, q: u32) -> Self {
        Phase(reduce(exponent, q))
    }

    pub fn exponent(self) -> Residue {
        self.0
    }

    /// Complex conjugate: `ω^e ↦ ω^{-e}`.
    pub fn conj(self, q: u32) -> Self {
        Phase(neg_mod(self.0, q))
    }

    /// Product of two phases: exponents add.
    pub fn mul(self, other: Phase, q: u32) -> Self {
        Phase(add_mod(self.0, other.0, q))
    }

    /// `self^s`: the exponent is multiplied by `s`.
    pub fn pow(self, s: Residue, q: u32) -> Self {
        Phase(mul_mod(self.0, s, q))
    }

    pub fn to_complex(self, q: u32) -> Complex64 {
        phase_to_complex(self, q)
    }
}

/// `exp(2πi·s/q)` for the phase exponent `s`.
pub fn phase_to_complex(p: Phase, q: u32) -> Complex64 {
    let s = p.0 % q;
    // Exact values on the axes keep small-q arithmetic free of 1e-17 residue.
    if s == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if 2 * s == q {
        return Complex64::new(-1.0, 0.0);
    }
    if 4 * s == q {
        return Complex64::new(0.0, 1.0);
    }
    if 4 * s == 3 * q {
        return Complex64::new(0.0, -1.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * s as f64 / q as f64)
}

/// Precomputed table of `ω_q^s` for all `s`, used on hot paths.
#[derive(Debug, Clone)]
pub struct RootTable {
    roots: Vec<Complex64>,
}

impl RootTable {
    pub fn new(q: u32) -> Self {
        RootTable { roots: (0..q).map(|s| phase_to_complex(Phase(s), q)).collect() }
    }

    #[inline]
    pub fn get(&self, p: Phase) -> Complex64 {
        self.roots[p.0 as usize]
    }
}

/// Noise model of a planted instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Discrete Gaussian `D_{Z_q, r}` of width `r`.
    Gaussian {
        r: f64,
    },
    /// `D_μ`: zero with probability `1-μ`, otherwise uniform on the nonzero residues.
    Lpn {
        mu: f64,
    },
    /// Uniform residues (`ρ = 0`).
    Uniform,
    Noiseless,
}

impl NoiseSpec {
    pub fn validate(&self, q: u32) -> Result<()> {
        check_modulus(q)?;
        match *self {
            NoiseSpec::Gaussian { r } if !(r > 0.0 && r.is_finite()) => {
                Err(param(format!("gaussian width must be positive, got {r}")))
            }
            NoiseSpec::Lpn { mu } => {
                let max = (q - 1) as f64 / q as f64;
                if !(0.0..=max + 1e-12).contains(&mu) {
                    Err(param(format!("lpn rate must lie in [0, {max}], got {mu}")))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    /// The noise bias `ρ = E[ω_q^e]`.
    pub fn rho(&self, q: u32) -> Result<f64> {
        self.validate(q)?;
        match *self {
            NoiseSpec::Gaussian { r } => rho_gaussian(q, r),
            NoiseSpec::Lpn { mu } => rho_lpn(q, mu),
            NoiseSpec::Uniform => Ok(0.0),
            NoiseSpec::Noiseless => Ok(1.0),
        }
    }

    pub fn sampler(&self, q: u32) -> Result<NoiseSampler> {
        self.validate(q)?;
        Ok(match *self {
            NoiseSpec::Gaussian { r } => NoiseSampler::Gaussian(GaussianSampler::new(q, r)?),
            NoiseSpec::Lpn { mu } => NoiseSampler::Lpn { q, mu },
            NoiseSpec::Uniform => NoiseSampler::Uniform { q },
            NoiseSpec::Noiseless => NoiseSampler::Zero,
        })
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NoiseSpec::Gaussian { r } => write!(f, "gaussian:{r}"),
            NoiseSpec::Lpn { mu } => write!(f, "lpn:{mu}"),
            NoiseSpec::Uniform => f.write_str("uniform"),
            NoiseSpec::Noiseless => f.write_str("none"),
        }
    }
}

impl FromStr for NoiseSpec {
    type Err = Error;

    /// Accepts `gaussian:<r>`, `lpn:<mu>`, `uniform`, `none`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k, Some(a)),
            None => (s, None),
        };
        let value = |a: Option<&str>| -> Result<f64> {
            a.ok_or_else(|| param(format!("noise spec `{s}` needs a value")))?
                .parse::<f64>()
                .map_err(|e| param(format!("bad noise value in `{s}`: {e}")))
        };
        match kind {
            "gaussian" => Ok(NoiseSpec::Gaussian { r: value(arg)? }),
            "lpn" => Ok(NoiseSpec::Lpn { mu: value(arg)? }),
            "uniform" => Ok(NoiseSpec::Uniform),
            "none" | "noiseless" => Ok(NoiseSpec::Noiseless),
            _ => Err(param(format!("unknown noise spec `{s}`"))),
        }
    }
}

/// A ready-to-draw noise source.
#[derive(Debug, Clone)]
pub enum NoiseSampler {
    Gaussian(GaussianSampler),
    Lpn { q: u32, mu: f64 },
    Uniform { q: u32 },
    Zero,
}

impl NoiseSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Residue {
        match self {
            NoiseSampler::Gaussian(g) => g.sample(rng),
            NoiseSampler::Lpn { q, mu } => lpn_draw(*q, *mu, rng),
            NoiseSampler::Uniform { q } => rng.gen_range(0..*q),
            NoiseSampler::Zero => 0,
        }
    }
}

/// Half-width of the integer window summed for the Gaussian series.
pub fn gaussian_truncation(r: f64) -> i64 {
    50.max((10.0 * r).ceil() as i64)
}

/// Inverse-CDF sampler for `D_{Z_q, r}` over precomputed residue masses.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    q: u32,
    cdf: Vec<f64>,
}

impl GaussianSampler {
    pub fn new(q: u32, r: f64) -> Result<Self> {
        check_modulus(q)?;
        if !(r > 0.0 && r.is_finite()) {
            return Err(param(format!("gaussian width must be positive, got {r}")));
        }
        let masses = gaussian_residue_masses(q, r);
        let total: f64 = masses.iter().sum();
        let mut acc = 0.0;
        let cdf = masses
            .iter()
            .map(|m| {
                acc += m / total;
                acc
            })
            .collect();
        Ok(GaussianSampler { q, cdf })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Residue {
        let u: f64 = rng.gen();
        let idx = self.cdf.partition_point(|&c| c <= u);
        idx.min(self.q as usize - 1) as Residue
    }
}

/// Unnormalized masses `Σ_{x ≡ j} exp(-π x²/r²)` over the truncated window.
fn gaussian_residue_masses(q: u32, r: f64) -> Vec<f64> {
    let bound = gaussian_truncation(r);
    let mut masses = vec![0.0; q as usize];
    for x in -bound..=bound {
        let w = (-PI * (x as f64 / r).powi(2)).exp();
        masses[reduce(x, q) as usize] += w;
    }
    masses
}

/// One draw from `D_{Z_q, r}`.
///
/// Builds the residue table on every call; hold a [`GaussianSampler`] when
/// drawing repeatedly.
pub fn sample_gaussian_zq<R: Rng + ?Sized>(q: u32, r: f64, rng: &mut R) -> Result<Residue> {
    Ok(GaussianSampler::new(q, r)?.sample(rng))
}

/// One draw from `D_μ`.
pub fn sample_lpn_noise<R: Rng + ?Sized>(q: u32, mu: f64, rng: &mut R) -> Result<Residue> {
    check_modulus(q)?;
    if !(0.0..=1.0).contains(&mu) {
        return Err(param(format!("lpn rate must lie in [0, 1], got {mu}")));
    }
    Ok(lpn_draw(q, mu, rng))
}

fn lpn_draw<R: Rng + ?Sized>(q: u32, mu: f64, rng: &mut R) -> Residue {
    if rng.gen::<f64>() < mu {
        rng.gen_range(1..q)
    } else {
        0
    }
}

/// Mean phase of the discrete Gaussian noise of width `r`.
///
/// For `r ≥ 1` the Poisson-summed form
/// `Σ_y ½(e^{-πr²(y-1/q)²} + e^{-πr²(y+1/q)²}) / Σ_y e^{-πr²y²}` converges in a
/// handful of terms; below that the direct cosine series is used.
pub fn rho_gaussian(q: u32, r: f64) -> Result<f64> {
    check_modulus(q)?;
    if !(r > 0.0 && r.is_finite()) {
        return Err(param(format!("gaussian width must be positive, got {r}")));
    }
    let rho = if r >= 1.0 {
        let qf = q as f64;
        let span = ((800.0 / PI).sqrt() / r).ceil() as i64 + 2;
        let (mut num, mut den) = (0.0, 0.0);
        for y in -span..=span {
            let y = y as f64;
            num += 0.5 * ((-PI * r * r * (y - 1.0 / qf).powi(2)).exp() + (-PI * r * r * (y + 1.0 / qf).powi(2)).exp());
            den += (-PI * r * r * y * y).exp();
        }
        num / den
    } else {
        let bound = gaussian_truncation(r);
        let (mut num, mut den) = (0.0, 0.0);
        for x in -bound..=bound {
            let w = (-PI * (x as f64 / r).powi(2)).exp();
            num += (2.0 * PI * x as f64 / q as f64).cos() * w;
            den += w;
        }
        num / den
    };
    Ok(rho.clamp(0.0, 1.0))
}

/// Mean phase of `D_μ`: `1 - qμ/(q-1)`.
pub fn rho_lpn(q: u32, mu: f64) -> Result<f64> {
    check_modulus(q)?;
    let max = (q - 1) as f64 / q as f64;
    if !(0.0..=max + 1e-12).contains(&mu) {
        return Err(param(format!("lpn rate must lie in [0, (q-1)/q] = [0, {max}], got {mu}")));
    }
    Ok((1.0 - q as f64 * mu / (q - 1) as f64).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn chi_square_p(counts: &[u64], probs: &[f64]) -> f64 {
        let total: u64 = counts.iter().sum();
        let stat: f64 = counts
            .iter()
            .zip(probs)
            .map(|(&c, &p)| {
                let e = p * total as f64;
                (c as f64 - e).powi(2) / e
            })
            .sum();
        let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
        1.0 - dist.cdf(stat)
    }

    #[test]
    fn modular_helpers() {
        assert_eq!(neg_mod(0, 5), 0);
        assert_eq!(neg_mod(2, 5), 3);
        assert_eq!(sub_mod(1, 3, 5), 3);
        assert_eq!(reduce(-7, 5), 3);
        assert_eq!(center(4, 5), -1);
        assert_eq!(center(2, 5), 2);
        assert_eq!(center(5003, 10007), 5003);
        assert_eq!(center(5004, 10007), -5003);
        assert!(is_prime(10007));
        assert!(!is_prime(10005));
        assert!(is_prime(2) && is_prime(3) && !is_prime(1) && !is_prime(9));
    }

    #[test]
    fn phase_examples() {
        assert_eq!(phase_to_complex(Phase(0), 7), Complex64::new(1.0, 0.0));
        let i = phase_to_complex(Phase(1), 4);
        assert!((i - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        let prod = phase_to_complex(Phase(1), 3) * phase_to_complex(Phase(2), 3);
        assert!((prod - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn phase_unit_modulus_and_conjugation() {
        for q in 2..40 {
            for s in 0..q {
                let p = Phase(s);
                let z = phase_to_complex(p, q);
                assert!((z.norm() - 1.0).abs() < 1e-12);
                assert!((phase_to_complex(p.conj(q), q) - z.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gaussian_tiny_width_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            assert_eq!(sample_gaussian_zq(5, 1e-3, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn gaussian_q3_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let s = GaussianSampler::new(3, 1.0).unwrap();
        let mut counts = [0u64; 3];
        for _ in 0..200_000 {
            counts[s.sample(&mut rng) as usize] += 1;
        }
        assert!(counts[0] > counts[1] && counts[0] > counts[2]);
        // symmetric residues: binomial 5σ band
        let diff = counts[1] as f64 - counts[2] as f64;
        let sd = ((counts[1] + counts[2]) as f64).sqrt();
        assert!(diff.abs() < 5.0 * sd, "{counts:?}");
    }

    #[test]
    fn gaussian_matches_direct_series_chi_square() {
        // oracle: masses by direct summation over |x| <= 50
        let (q, r) = (7u32, 2.0);
        let mut probs = vec![0.0; 7];
        for x in -50i64..=50 {
            probs[x.rem_euclid(7) as usize] += (-PI * (x as f64 / r).powi(2)).exp();
        }
        let total: f64 = probs.iter().sum();
        probs.iter_mut().for_each(|p| *p /= total);

        let s = GaussianSampler::new(q, r).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut counts = vec![0u64; 7];
        for _ in 0..1_000_000 {
            counts[s.sample(&mut rng) as usize] += 1;
        }
        assert!(chi_square_p(&counts, &probs) > 0.01);
    }

    #[test]
    fn lpn_noise_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            assert_eq!(sample_lpn_noise(3, 0.0, &mut rng).unwrap(), 0);
            assert_eq!(sample_lpn_noise(2, 1.0, &mut rng).unwrap(), 1);
        }
        assert!(sample_lpn_noise(3, 1.5, &mut rng).is_err());

        let draws = 1_000_000;
        let mut counts = [0u64; 5];
        for _ in 0..draws {
            counts[sample_lpn_noise(5, 0.4, &mut rng).unwrap() as usize] += 1;
        }
        let expect = [0.6, 0.1, 0.1, 0.1, 0.1];
        for (c, p) in counts.iter().zip(expect) {
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - draws as f64 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn rho_lpn_examples() {
        assert!(rho_lpn(3, 2.0 / 3.0).unwrap().abs() < 1e-15);
        assert_eq!(rho_lpn(2, 0.25).unwrap(), 0.5);
        assert!((rho_lpn(11, 0.5).unwrap() - 0.45).abs() < 1e-15);
        assert!(rho_lpn(3, 0.7).is_err());
        assert!(rho_lpn(3, -0.1).is_err());
    }

    #[test]
    fn rho_gaussian_limits() {
        assert!((rho_gaussian(13, 1e-3).unwrap() - 1.0).abs() < 1e-15);
        let big = rho_gaussian(2, 8.0).unwrap();
        assert!(big > 0.0 && big < 1e-20);
        assert!(rho_gaussian(2, 4.0).unwrap() > big);
        assert!(rho_gaussian(2, 0.0).is_err());
    }

    #[test]
    fn rho_gaussian_poisson_matches_direct_series() {
        // oracle: direct series with |x| <= 60
        let (q, r) = (16.0f64, 4.0f64);
        let (mut num, mut den) = (0.0, 0.0);
        for x in -60i64..=60 {
            let w = (-PI * (x as f64 / r).powi(2)).exp();
            num += (2.0 * PI * x as f64 / q).cos() * w;
            den += w;
        }
        let direct = num / den;
        let poisson = rho_gaussian(16, 4.0).unwrap();
        assert!((direct - poisson).abs() < 1e-12, "{direct} vs {poisson}");
        assert!(poisson >= (-PI * 16.0 / 256.0).exp());
        assert!(((-PI * 16.0f64 / 256.0).exp() - 0.8217).abs() < 1e-4);
    }

    #[test]
    fn noise_spec_parse_roundtrip() {
        for s in ["gaussian:3", "lpn:0.1", "uniform", "none"] {
            let spec: NoiseSpec = s.parse().unwrap();
            let again: NoiseSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
        assert!("laplace:1".parse::<NoiseSpec>().is_err());
        assert!("gaussian".parse::<NoiseSpec>().is_err());
    }

    #[test]
    fn phase_mean_matches_rho() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let draws = 1_000_000;
        for spec in [NoiseSpec::Gaussian { r: 2.5 }, NoiseSpec::Lpn { mu: 0.3 }] {
            let q = 7;
            let sampler = spec.sampler(q).unwrap();
            let roots = RootTable::new(q);
            let mut sum = Complex64::new(0.0, 0.0);
            let mut sum_re2 = 0.0;
            let mut sum_im2 = 0.0;
            for _ in 0..draws {
                let z = roots.get(Phase(sampler.sample(&mut rng)));
                sum += z;
                sum_re2 += z.re * z.re;
                sum_im2 += z.im * z.im;
            }
            let mean = sum / draws as f64;
            let rho = spec.rho(q).unwrap();
            let var_re = sum_re2 / draws as f64 - mean.re * mean.re;
            let var_im = sum_im2 / draws as f64 - mean.im * mean.im;
            assert!((mean.re - rho).abs() < 5.0 * (var_re / draws as f64).sqrt());
            assert!(mean.im.abs() < 5.0 * (var_im / draws as f64).sqrt());
        }
    }
}
