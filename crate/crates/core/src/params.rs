//! Attack parameters and the tunable constants the asymptotic statements leave open.

use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::ring::{check_modulus, NoiseSpec};

/// Constants that the theorems leave as "absolute constants", plus runtime caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tunables {
    /// `α` in the sample-complexity bounds.
    pub alpha: f64,
    /// Spectral upper-bound fraction `δ`; `None` means `ρ/4`.
    pub delta: Option<f64>,
    /// Spectral lower-bound slack `γ`; `None` means `ρ/4`.
    pub gamma: Option<f64>,
    pub power_iters: usize,
    pub power_tol: f64,
    pub power_restarts: usize,
    /// Largest vertex space a dense vector may span.
    pub vertex_cap: u128,
    /// Largest vertex space the dense oracle will materialize.
    pub dense_cap: u128,
    /// Store the adjacency as CSR when it has at most this many nonzeros.
    pub csr_cap: usize,

    /// Walk length is `ceil(c_t · ln N)` unless `walk_length` is set.
    pub c_t: f64,
    pub walk_length: Option<usize>,
    /// `L = min(walk_cap, ceil(c1·sqrt(N ln N)))`.
    pub c1: f64,
    pub walk_cap: usize,
    /// Good-walk parameters `β` and `ε` (the walk must be `(1/(1-ε), β)`-good).
    pub walk_beta: f64,
    pub walk_eps: f64,
    /// Fresh start vertices tried per closed-walk search.
    pub walk_retries: usize,
    /// `ε` in `R = 100·N^ε` rounds and the `N^ε` cover floors.
    pub cover_eps: f64,
    pub round_cap: usize,
    /// Stop collecting once this many covers are kept.
    pub cover_target: Option<usize>,
    /// Constant `a` of the LWE test `|c^T β| ≤ a·r·‖c‖₁^{3/2}`.
    pub lwe_a: f64,

    /// Use the raw `N^ε·0.1^T` floor and `N^{0.6ε}` threshold in the LPN test.
    pub strict_paper_constants: bool,
    /// Calibrated LPN floor: fraction of the available covers that must be shattered.
    pub lpn_floor_fraction: f64,
    /// Calibrated LPN threshold as a fraction of the expected planted `|Ψ|`.
    pub lpn_threshold_factor: f64,
    /// Measured ratio `|Ψ| / Σ 2^{-|supp c|}` on noiseless planted instances.
    pub lpn_scale: f64,
    pub lpn_round_cap: usize,

    /// Sample scopes independently instead of rejecting repeats.
    pub allow_duplicate_scopes: bool,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables {
            alpha: 1.0,
            delta: None,
            gamma: None,
            power_iters: 2000,
            power_tol: 1e-9,
            power_restarts: 3,
            vertex_cap: 5_000_000,
            dense_cap: 2000,
            csr_cap: 50_000_000,
            c_t: 3.0,
            walk_length: None,
            c1: 1.0,
            walk_cap: 1_000_000,
            walk_beta: 0.5,
            walk_eps: 0.5,
            walk_retries: 5,
            cover_eps: 0.1,
            round_cap: 1_000_000,
            cover_target: None,
            lwe_a: 4.0,
            strict_paper_constants: false,
            lpn_floor_fraction: 0.1,
            lpn_threshold_factor: 0.5,
            lpn_scale: 1.0,
            lpn_round_cap: 1_000_000,
            allow_duplicate_scopes: false,
        }
    }
}

impl Tunables {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(param(format!("{name} must be positive and finite, got {v}")))
            }
        };
        pos(self.alpha, "alpha")?;
        pos(self.power_tol, "power_tol")?;
        pos(self.c_t, "c_t")?;
        pos(self.c1, "c1")?;
        pos(self.lwe_a, "lwe_a")?;
        pos(self.lpn_scale, "lpn_scale")?;
        pos(self.lpn_threshold_factor, "lpn_threshold_factor")?;
        for (v, name) in [(self.delta, "delta"), (self.gamma, "gamma")] {
            if let Some(v) = v {
                if !(0.0..1.0).contains(&v) || v == 0.0 {
                    return Err(param(format!("{name} must lie in (0, 1), got {v}")));
                }
            }
        }
        if !(self.walk_beta > 0.0 && self.walk_beta <= 1.0) {
            return Err(param(format!("walk_beta must lie in (0, 1], got {}", self.walk_beta)));
        }
        if !(0.0..1.0).contains(&self.walk_eps) {
            return Err(param(format!("walk_eps must lie in [0, 1), got {}", self.walk_eps)));
        }
        if !(self.cover_eps >= 0.0 && self.cover_eps.is_finite()) {
            return Err(param(format!("cover_eps must be non-negative, got {}", self.cover_eps)));
        }
        if !(self.lpn_floor_fraction > 0.0 && self.lpn_floor_fraction <= 1.0) {
            return Err(param(format!("lpn_floor_fraction must lie in (0, 1], got {}", self.lpn_floor_fraction)));
        }
        if self.power_iters == 0 || self.power_restarts == 0 {
            return Err(param("power iteration needs at least one iteration and one restart"));
        }
        if self.walk_length == Some(0) {
            return Err(param("walk length must be at least 1"));
        }
        Ok(())
    }
}

/// Everything that determines an instance distribution and an attack run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackParams {
    pub n: usize,
    pub k: usize,
    pub q: u32,
    pub m: usize,
    pub l: usize,
    pub noise: NoiseSpec,
    #[serde(default)]
    pub tunables: Tunables,
    pub seed: u64,
}

impl AttackParams {
    pub fn new(n: usize, k: usize, q: u32, m: usize, l: usize, noise: NoiseSpec) -> Self {
        AttackParams { n, k, q, m, l, noise, tunables: Tunables::default(), seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tunables(mut self, tunables: Tunables) -> Self {
        self.tunables = tunables;
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_modulus(self.q)?;
        if self.k == 0 || self.k > self.n {
            return Err(param(format!("need 1 <= k <= n, got k={} n={}", self.k, self.n)));
        }
        if 2 * self.l < self.k || self.l > self.n {
            return Err(param(format!("need k/2 <= l <= n, got l={} k={} n={}", self.l, self.k, self.n)));
        }
        if self.m == 0 {
            return Err(param("need at least one sample (m >= 1)"));
        }
        self.noise.validate(self.q)?;
        self.tunables.validate()
    }

    /// Noise bias of the declared noise model.
    pub fn rho(&self) -> Result<f64> {
        self.noise.rho(self.q)
    }
}
