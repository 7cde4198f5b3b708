//! Sparse `k`-LIN_q instances: generation, the additive and product views, and file I/O.
//!
//! Indices are 0-based in memory and 1-based in the text format.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::combin;
use crate::error::{param, Error, Result};
use crate::params::AttackParams;
use crate::ring::{add_mod, check_modulus, mul_mod, Phase, Residue};

/// `k` distinct indices, each with a coefficient in `Z_q` (zero allowed).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scope {
    pairs: Vec<(u32, Residue)>,
}

impl Scope {
    /// Builds a scope; the pairs are sorted and must have distinct indices.
    pub fn new(mut pairs: Vec<(u32, Residue)>) -> Result<Self> {
        pairs.sort_unstable_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(param("scope indices must be distinct"));
        }
        Ok(Scope { pairs })
    }

    pub fn pairs(&self) -> &[(u32, Residue)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Coefficient at index `j`, zero when `j` is not in the scope.
    pub fn coeff(&self, j: u32) -> Residue {
        self.pairs.binary_search_by_key(&j, |p| p.0).map(|pos| self.pairs[pos].1).unwrap_or(0)
    }

    pub fn contains_index(&self, j: u32) -> bool {
        self.pairs.binary_search_by_key(&j, |p| p.0).is_ok()
    }
}

/// A uniformly random `k`-subset of `[n]` with independent uniform coefficients.
pub fn sample_coeff_vector<R: Rng + ?Sized>(n: usize, k: usize, q: u32, rng: &mut R) -> Result<Scope> {
    check_modulus(q)?;
    if k == 0 || k > n {
        return Err(param(format!("need 1 <= k <= n, got k={k} n={n}")));
    }
    let mut idx = index::sample(rng, n, k).into_vec();
    idx.sort_unstable();
    let pairs = idx.into_iter().map(|i| (i as u32, rng.gen_range(0..q))).collect();
    Ok(Scope { pairs })
}

/// Exponent of `x^S = ∏ x_j^{a_j}` for the assignment with exponents `z`.
pub fn evaluate_scope(z: &[Residue], s: &Scope, q: u32) -> Phase {
    let e = s.pairs.iter().fold(0, |acc, &(j, a)| add_mod(acc, mul_mod(a, z[j as usize], q), q));
    Phase(e)
}

/// One product equation `x^S = b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constraint {
    pub scope: Scope,
    pub rhs: Phase,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Planted,
    Random,
    /// Externally supplied instance of unknown origin.
    Unknown,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Planted => "planted",
            Mode::Random => "random",
            Mode::Unknown => "unknown",
        }
    }

    fn parse(s: &str) -> Option<Mode> {
        match s {
            "planted" => Some(Mode::Planted),
            "random" => Some(Mode::Random),
            "unknown" => Some(Mode::Unknown),
            _ => None,
        }
    }
}

/// Secret and noise of a planted instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub secret: Vec<Residue>,
    pub noise: Vec<Residue>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinInstance {
    n: usize,
    k: usize,
    q: u32,
    mode: Mode,
    constraints: Vec<Constraint>,
    ground_truth: Option<GroundTruth>,
}

/// Sparse rows of the coefficient matrix `A` and the vector `β`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdditiveView {
    pub n: usize,
    pub rows: Vec<Vec<(u32, Residue)>>,
    pub beta: Vec<Residue>,
}

impl LinInstance {
    /// Assembles an instance from explicit constraints.
    pub fn from_constraints(
        n: usize,
        k: usize,
        q: u32,
        mode: Mode,
        constraints: Vec<Constraint>,
        ground_truth: Option<GroundTruth>,
    ) -> Result<Self> {
        check_modulus(q)?;
        if k == 0 || k > n {
            return Err(param(format!("need 1 <= k <= n, got k={k} n={n}")));
        }
        for (i, c) in constraints.iter().enumerate() {
            if c.scope.len() != k {
                return Err(param(format!("constraint {i} has {} pairs, expected {k}", c.scope.len())));
            }
            if c.scope.pairs.iter().any(|&(j, a)| j as usize >= n || a >= q) {
                return Err(param(format!("constraint {i} has an index or coefficient out of range")));
            }
            if c.rhs.0 >= q {
                return Err(param(format!("constraint {i} has rhs out of range")));
            }
        }
        if let Some(gt) = &ground_truth {
            if gt.secret.len() != n || gt.noise.len() != constraints.len() {
                return Err(param("ground truth has the wrong shape"));
            }
            for (i, c) in constraints.iter().enumerate() {
                let lhs = evaluate_scope(&gt.secret, &c.scope, q);
                if add_mod(lhs.0, gt.noise[i], q) != c.rhs.0 {
                    return Err(param(format!("constraint {i} disagrees with the ground truth")));
                }
            }
        }
        Ok(LinInstance { n, k, q, mode, constraints, ground_truth })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    pub fn m(&self) -> usize {
        self.constraints.len()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn ground_truth(&self) -> Option<&GroundTruth> {
        self.ground_truth.as_ref()
    }

    /// Drops the secret and noise, as an attacker would see the instance.
    pub fn without_ground_truth(mut self) -> Self {
        self.ground_truth = None;
        self
    }

    pub fn additive_view(&self) -> AdditiveView {
        AdditiveView {
            n: self.n,
            rows: self.constraints.iter().map(|c| c.scope.pairs.clone()).collect(),
            beta: self.constraints.iter().map(|c| c.rhs.0).collect(),
        }
    }

    /// Rebuilds the product view from `(A, β)`; zero entries of a row are
    /// kept as zero coefficients, so rows must list exactly `k` entries.
    pub fn from_additive(view: &AdditiveView, k: usize, q: u32, mode: Mode) -> Result<Self> {
        if view.rows.len() != view.beta.len() {
            return Err(param("A and beta disagree on the number of rows"));
        }
        let constraints = view
            .rows
            .iter()
            .zip(&view.beta)
            .map(|(row, &b)| Ok(Constraint { scope: Scope::new(row.clone())?, rhs: Phase(b) }))
            .collect::<Result<Vec<_>>>()?;
        LinInstance::from_constraints(view.n, k, q, mode, constraints, None)
    }

    /// Same scopes with fresh uniform right-hand sides and no ground truth.
    pub fn random_twin<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let constraints = self
            .constraints
            .iter()
            .map(|c| Constraint { scope: c.scope.clone(), rhs: Phase(rng.gen_range(0..self.q)) })
            .collect();
        LinInstance { constraints, ground_truth: None, mode: Mode::Random, ..self.clone() }
    }

    /// Serializes to the line-oriented text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{} {} {} {} {}", self.n, self.k, self.q, self.m(), self.mode.as_str()).unwrap();
        for c in &self.constraints {
            for (j, &(i, a)) in c.scope.pairs.iter().enumerate() {
                if j > 0 {
                    out.push(' ');
                }
                write!(out, "{}:{}", i + 1, a).unwrap();
            }
            writeln!(out, " | {}", c.rhs.0).unwrap();
        }
        if let Some(gt) = &self.ground_truth {
            let join = |v: &[Residue]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
            writeln!(out, "secret: {}", join(&gt.secret)).unwrap();
            writeln!(out, "noise: {}", join(&gt.noise)).unwrap();
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hl, header) = lines.next().ok_or_else(|| perr(1, "empty input".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(perr(hl + 1, "header must read `n k q m mode`".into()));
        }
        let num = |s: &str, line: usize| -> Result<u64> {
            s.parse::<u64>().map_err(|e| perr(line, format!("bad integer `{s}`: {e}")))
        };
        let n = num(fields[0], hl + 1)? as usize;
        let k = num(fields[1], hl + 1)? as usize;
        let q = num(fields[2], hl + 1)? as u32;
        let m = num(fields[3], hl + 1)? as usize;
        let mode = Mode::parse(fields[4]).ok_or_else(|| perr(hl + 1, format!("unknown mode `{}`", fields[4])))?;

        let mut constraints = Vec::with_capacity(m);
        let mut secret = None;
        let mut noise = None;
        for (ln, line) in lines {
            let ln = ln + 1;
            let line = line.trim();
            let residues = |rest: &str| -> Result<Vec<Residue>> {
                rest.split_whitespace().map(|s| num(s, ln).map(|v| v as Residue)).collect()
            };
            if let Some(rest) = line.strip_prefix("secret:") {
                secret = Some(residues(rest)?);
            } else if let Some(rest) = line.strip_prefix("noise:") {
                noise = Some(residues(rest)?);
            } else {
                let (lhs, rhs) =
                    line.split_once('|').ok_or_else(|| perr(ln, "constraint line needs `| beta`".into()))?;
                let mut pairs = Vec::with_capacity(k);
                for tok in lhs.split_whitespace() {
                    let (i, a) =
                        tok.split_once(':').ok_or_else(|| perr(ln, format!("expected idx:coeff, got `{tok}`")))?;
                    let i = num(i, ln)?;
                    if i == 0 {
                        return Err(perr(ln, "indices are 1-based".into()));
                    }
                    pairs.push(((i - 1) as u32, num(a, ln)? as Residue));
                }
                let scope = Scope::new(pairs).map_err(|e| perr(ln, e.to_string()))?;
                constraints.push(Constraint { scope, rhs: Phase(num(rhs.trim(), ln)? as Residue) });
            }
        }
        if constraints.len() != m {
            return Err(perr(hl + 1, format!("header declares m={m} but found {} constraints", constraints.len())));
        }
        let ground_truth = match (secret, noise) {
            (Some(secret), Some(noise)) => Some(GroundTruth { secret, noise }),
            (None, None) => None,
            _ => return Err(perr(hl + 1, "secret and noise lines must appear together".into())),
        };
        LinInstance::from_constraints(n, k, q, mode, constraints, ground_truth)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|source| Error::Io { path: path.into(), source })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.into(), source })?;
        LinInstance::from_text(&text)
    }
}

/// Draws an instance from the planted or the random distribution.
///
/// Repeated scopes are rejected and redrawn unless the tunables allow them.
pub fn generate<R: Rng + ?Sized>(params: &AttackParams, mode: Mode, rng: &mut R) -> Result<LinInstance> {
    params.validate()?;
    let (n, k, q, m) = (params.n, params.k, params.q, params.m);
    let distinct = !params.tunables.allow_duplicate_scopes;
    if distinct {
        let total = combin::binom(n as u64, k as u64)
            .and_then(|c| combin::pow(q as u128, k as u64).and_then(|p| c.checked_mul(p)));
        if let Some(total) = total {
            if (m as u128) > total {
                return Err(param(format!(
                    "m={m} exceeds the {total} distinct scopes; allow duplicate scopes to sample more"
                )));
            }
        }
    }

    let secret: Option<Vec<Residue>> = match mode {
        Mode::Planted => Some((0..n).map(|_| rng.gen_range(0..q)).collect()),
        Mode::Random => None,
        Mode::Unknown => return Err(param("can only generate planted or random instances")),
    };

    let mut seen = HashSet::with_capacity(if distinct { m } else { 0 });
    let mut scopes = Vec::with_capacity(m);
    while scopes.len() < m {
        let s = sample_coeff_vector(n, k, q, rng)?;
        if distinct && !seen.insert(s.clone()) {
            continue;
        }
        scopes.push(s);
    }

    let (constraints, ground_truth) = match secret {
        Some(z) => {
            let sampler = params.noise.sampler(q)?;
            let noise: Vec<Residue> = (0..m).map(|_| sampler.sample(rng)).collect();
            let constraints = scopes
                .into_iter()
                .zip(&noise)
                .map(|(scope, &e)| {
                    let rhs = Phase(add_mod(evaluate_scope(&z, &scope, q).0, e, q));
                    Constraint { scope, rhs }
                })
                .collect();
            (constraints, Some(GroundTruth { secret: z, noise }))
        }
        None => {
            let constraints =
                scopes.into_iter().map(|scope| Constraint { scope, rhs: Phase(rng.gen_range(0..q)) }).collect();
            (constraints, None)
        }
    };
    Ok(LinInstance { n, k, q, mode, constraints, ground_truth })
}
