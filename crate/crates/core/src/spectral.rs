//! The spectral distinguisher: power iteration on the Hermitian adjacency
//! operator of `K_l(I)` against the threshold `ρΔ/2`.

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::instance::LinInstance;
use crate::kikuchi::KikuchiGraph;
use crate::params::{AttackParams, Tunables};
use crate::ring::RootTable;
use crate::Verdict;

/// Adjacency operator of `K_l(I)` on dense vectors indexed by vertex rank.
///
/// Rows are stored in CSR form when the edge count fits `csr_cap`,
/// otherwise every product re-enumerates the edges.
pub struct Adjacency<'a> {
    graph: KikuchiGraph<'a>,
    roots: RootTable,
    dim: usize,
    csr: Option<Csr>,
}

struct Csr {
    offsets: Vec<usize>,
    cols: Vec<u32>,
    labels: Vec<u32>,
}

impl<'a> Adjacency<'a> {
    pub fn new(inst: &'a LinInstance, l: usize, tunables: &Tunables) -> Result<Self> {
        let graph = KikuchiGraph::new(inst, l)?;
        let size = graph.space().size();
        if size > tunables.vertex_cap {
            return Err(Error::Scale { what: "vertex space", size, cap: tunables.vertex_cap });
        }
        let dim = size as usize;
        let nnz = inst.m() as f64 * graph.theta();
        let csr = (nnz <= tunables.csr_cap as f64 && dim <= u32::MAX as usize).then(|| build_csr(&graph, dim));
        Ok(Adjacency { roots: RootTable::new(inst.q()), graph, dim, csr })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn graph(&self) -> &KikuchiGraph<'a> {
        &self.graph
    }

    /// `y = K x`, with `y[T1] = Σ_{T1 → T2} label · x[T2]`.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        match &self.csr {
            Some(csr) => y.par_iter_mut().enumerate().for_each(|(r, out)| {
                let mut acc = Complex64::new(0.0, 0.0);
                for p in csr.offsets[r]..csr.offsets[r + 1] {
                    acc += self.roots.get(crate::Phase(csr.labels[p])) * x[csr.cols[p] as usize];
                }
                *out = acc;
            }),
            None => {
                let space = self.graph.space();
                y.par_iter_mut().enumerate().for_each(|(r, out)| {
                    let t = space.unrank(r as u128);
                    let mut acc = Complex64::new(0.0, 0.0);
                    self.graph.for_each_out(t.pairs(), |_, head, label, _| {
                        acc += self.roots.get(label) * x[space.rank_pairs(&head) as usize];
                    });
                    *out = acc;
                })
            }
        }
    }
}

fn build_csr(graph: &KikuchiGraph<'_>, dim: usize) -> Csr {
    let space = graph.space();
    let rows: Vec<Vec<(u32, u32)>> = (0..dim)
        .into_par_iter()
        .map(|r| {
            let t = space.unrank(r as u128);
            let mut row = Vec::new();
            graph.for_each_out(t.pairs(), |_, head, label, _| {
                row.push((space.rank_pairs(&head) as u32, label.0));
            });
            row
        })
        .collect();
    let mut offsets = Vec::with_capacity(dim + 1);
    offsets.push(0);
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut labels = Vec::with_capacity(nnz);
    for row in rows {
        for (c, b) in row {
            cols.push(c);
            labels.push(b);
        }
        offsets.push(cols.len());
    }
    Csr { offsets, cols, labels }
}

/// `K x` for a single vector; builds the operator on every call.
pub fn apply_adjacency(x: &[Complex64], inst: &LinInstance, l: usize, tunables: &Tunables) -> Result<Vec<Complex64>> {
    let adj = Adjacency::new(inst, l, tunables)?;
    if x.len() != adj.dim() {
        return Err(param(format!("vector has length {}, expected N = {}", x.len(), adj.dim())));
    }
    let mut y = vec![Complex64::new(0.0, 0.0); adj.dim()];
    adj.apply(x, &mut y);
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormEstimate {
    pub estimate: f64,
    /// Relative eigen-residual `‖K²x - ‖Kx‖² x‖ / ‖Kx‖²` at the last iterate.
    pub residual: f64,
    pub iterations: usize,
}

fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Power iteration for `max |λ|` of the adjacency operator.
///
/// Each restart iterates `x ← Kx / ‖Kx‖` from a random complex start and
/// tracks `‖Kx‖ = sqrt(⟨x, K²x⟩)`, which is nondecreasing; the best restart wins.
/// A restart stops once `x` is an eigenvector of `K²` to within `power_tol`,
/// which also covers the `±λ` pairs where `x` itself keeps flipping.
pub fn estimate_norm<R: Rng + ?Sized>(adj: &Adjacency<'_>, tunables: &Tunables, rng: &mut R) -> NormEstimate {
    let dim = adj.dim();
    let zero = Complex64::new(0.0, 0.0);
    if dim == 0 || adj.graph().instance().m() == 0 {
        return NormEstimate { estimate: 0.0, residual: 0.0, iterations: 0 };
    }
    let mut best = NormEstimate { estimate: 0.0, residual: 0.0, iterations: 0 };
    let mut x = vec![zero; dim];
    let mut y = vec![zero; dim];
    let mut prev_x = vec![zero; dim];
    for _ in 0..tunables.power_restarts {
        for v in x.iter_mut() {
            *v = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        let s = norm(&x);
        x.iter_mut().for_each(|v| *v /= s);
        let mut prev_est = 0.0;
        let mut run = NormEstimate { estimate: 0.0, residual: 1.0, iterations: 0 };
        for it in 1..=tunables.power_iters {
            adj.apply(&x, &mut y);
            let est = norm(&y);
            run.iterations = it;
            if est == 0.0 {
                run.estimate = 0.0;
                run.residual = 0.0;
                break;
            }
            if it > 1 {
                // K²x_{t-1} = est_{t-1} · Kx_t, so the residual needs no extra product
                let r: f64 = y.iter().zip(&prev_x).map(|(a, b)| (a / prev_est - b).norm_sqr()).sum::<f64>().sqrt();
                run.residual = r;
            }
            y.iter_mut().for_each(|v| *v /= est);
            std::mem::swap(&mut prev_x, &mut x);
            std::mem::swap(&mut x, &mut y);
            run.estimate = est;
            prev_est = est;
            if it > 1 && run.residual < tunables.power_tol {
                break;
            }
        }
        if run.estimate > best.estimate || best.iterations == 0 {
            best = run;
        }
    }
    best
}

/// Builds the operator for `inst` at level `l` and estimates its norm.
pub fn estimate_spectral_norm<R: Rng + ?Sized>(
    inst: &LinInstance,
    l: usize,
    tunables: &Tunables,
    rng: &mut R,
) -> Result<NormEstimate> {
    let adj = Adjacency::new(inst, l, tunables)?;
    Ok(estimate_norm(&adj, tunables, rng))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// `Δ = m θ / N`.
    pub delta_avg: f64,
    /// Midpoint of `δΔ` and `(ρ - γ)Δ`; `ρΔ/2` with the default `δ = γ = ρ/4`.
    pub threshold: f64,
    /// `(l ln(qn)/ρ²)(αqn/l)^{k/2}`.
    pub m_required_small_q: f64,
    /// `(l ln(qn)/ρ²)(αn/l)^k`.
    pub m_required_large_q: f64,
}

pub fn spectral_thresholds(params: &AttackParams, rho: f64) -> Result<Thresholds> {
    if !(rho > 0.0 && rho <= 1.0) {
        return Err(param(format!("rho must lie in (0, 1], got {rho}; this method cannot separate")));
    }
    let (n, k, q, l) = (params.n, params.k, params.q, params.l);
    let theta = crate::kikuchi::theta_f64(n, l, k, q)?;
    let size = crate::combin::binom_f64(n as u64, l as u64) * (q as f64).powi(l as i32);
    let delta_avg = params.m as f64 * theta / size;
    let delta = params.tunables.delta.unwrap_or(rho / 4.0);
    let gamma = params.tunables.gamma.unwrap_or(rho / 4.0);
    let threshold = 0.5 * (delta * delta_avg + (rho - gamma) * delta_avg);
    let b = crate::bounds::spectral_bounds(n, k, q as f64, l, rho, params.tunables.alpha);
    Ok(Thresholds { delta_avg, threshold, m_required_small_q: b.small_q, m_required_large_q: b.large_q })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub estimate: f64,
    pub delta_avg: f64,
    pub rho: f64,
    pub threshold: f64,
    pub iterations: usize,
    pub residual: f64,
    pub verdict: Verdict,
}

/// Runs the spectral test on `inst` with level `params.l`.
///
/// `rho` comes from the declared noise model; the instance's ground truth,
/// if any, is never consulted.
pub fn spectral_distinguish<R: Rng + ?Sized>(
    inst: &LinInstance,
    params: &AttackParams,
    rho: f64,
    rng: &mut R,
) -> Result<SpectralReport> {
    let mut p = params.clone();
    p.m = inst.m();
    let th = spectral_thresholds(&p, rho)?;
    let est = estimate_spectral_norm(inst, params.l, &params.tunables, rng)?;
    let verdict = if est.estimate >= th.threshold && est.estimate > 0.0 { Verdict::Planted } else { Verdict::Random };
    Ok(SpectralReport {
        estimate: est.estimate,
        delta_avg: th.delta_avg,
        rho,
        threshold: th.threshold,
        iterations: est.iterations,
        residual: est.residual,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{generate, Constraint, Mode, Scope};
    use crate::ring::{NoiseSpec, Phase};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_vec(dim: usize, r: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..dim).map(|_| Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0))).collect()
    }

    fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
        a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
    }

    #[test]
    fn empty_instance() {
        let inst = LinInstance::from_constraints(6, 2, 3, Mode::Unknown, vec![], None).unwrap();
        let t = Tunables::default();
        let x = vec![Complex64::new(1.0, 0.0); 15 * 9];
        assert!(apply_adjacency(&x, &inst, 2, &t).unwrap().iter().all(|z| z.norm() == 0.0));
        assert_eq!(estimate_spectral_norm(&inst, 2, &t, &mut rng(1)).unwrap().estimate, 0.0);
        let params = AttackParams::new(6, 2, 3, 1, 2, NoiseSpec::Noiseless);
        let rep = spectral_distinguish(&inst, &params, 1.0, &mut rng(1)).unwrap();
        assert_eq!(rep.verdict, Verdict::Random);
    }

    #[test]
    fn hermitian_and_k_squared_psd() {
        let params = AttackParams::new(7, 3, 5, 30, 2, NoiseSpec::Uniform);
        let inst = generate(&params, Mode::Random, &mut rng(2)).unwrap();
        let adj = Adjacency::new(&inst, 2, &params.tunables).unwrap();
        let mut r = rng(3);
        let x = random_vec(adj.dim(), &mut r);
        let y = random_vec(adj.dim(), &mut r);
        let mut kx = vec![Complex64::default(); adj.dim()];
        let mut ky = kx.clone();
        adj.apply(&x, &mut kx);
        adj.apply(&y, &mut ky);
        let lhs = dot(&y, &kx);
        let rhs = dot(&x, &ky).conj();
        assert!((lhs - rhs).norm() < 1e-10 * (1.0 + lhs.norm()));
        let mut kkx = kx.clone();
        adj.apply(&kx, &mut kkx);
        let q = dot(&x, &kkx);
        assert!(q.re >= 0.0 && q.im.abs() < 1e-9 * q.re.max(1.0));
    }

    #[test]
    fn matrix_free_matches_csr() {
        let params = AttackParams::new(8, 2, 3, 40, 2, NoiseSpec::Uniform);
        let inst = generate(&params, Mode::Random, &mut rng(4)).unwrap();
        let with = Adjacency::new(&inst, 2, &params.tunables).unwrap();
        let mut t = params.tunables.clone();
        t.csr_cap = 0;
        let without = Adjacency::new(&inst, 2, &t).unwrap();
        assert!(with.csr.is_some() && without.csr.is_none());
        let x = random_vec(with.dim(), &mut rng(5));
        let mut a = vec![Complex64::default(); with.dim()];
        let mut b = a.clone();
        with.apply(&x, &mut a);
        without.apply(&x, &mut b);
        assert_eq!(a, b);
    }

    #[test]
    fn single_constraint_norm_at_most_two() {
        for q in 2..6 {
            let c = Constraint { scope: Scope::new(vec![(0, 1), (2, q - 1)]).unwrap(), rhs: Phase(1) };
            let inst = LinInstance::from_constraints(5, 2, q, Mode::Unknown, vec![c], None).unwrap();
            let est = estimate_spectral_norm(&inst, 2, &Tunables::default(), &mut rng(6)).unwrap();
            assert!(est.estimate <= 2.0 + 1e-9, "q={q}: {}", est.estimate);
        }
    }

    #[test]
    fn scale_cap_refuses() {
        let params = AttackParams::new(20, 2, 101, 5, 3, NoiseSpec::Noiseless);
        let inst = generate(&params, Mode::Random, &mut rng(7)).unwrap();
        assert!(matches!(Adjacency::new(&inst, 3, &params.tunables), Err(Error::Scale { .. })));
    }

    #[test]
    fn threshold_formulas() {
        let params = AttackParams::new(12, 2, 3, 1000, 2, NoiseSpec::Noiseless);
        let th = spectral_thresholds(&params, 1.0).unwrap();
        // θ(12,2,2,3) = 2(2·10·3 + 9) = 138, N = 66·9
        assert!((th.delta_avg - 1000.0 * 138.0 / 594.0).abs() < 1e-9);
        assert!((th.threshold - 0.5 * th.delta_avg).abs() < 1e-12);
        let lead = 2.0 * (36.0f64).ln();
        assert!((th.m_required_small_q - lead * 18.0).abs() < 1e-9);
        assert!((th.m_required_large_q - lead * 36.0).abs() < 1e-9);
        for rho in [0.01, 0.3, 1.0] {
            let th = spectral_thresholds(&params, rho).unwrap();
            assert!(0.25 * rho * th.delta_avg < th.threshold && th.threshold < 0.75 * rho * th.delta_avg);
        }
        assert!(spectral_thresholds(&params, 0.0).is_err());
    }

    #[test]
    fn noiseless_planted_norm_at_least_delta() {
        let params = AttackParams::new(8, 2, 3, 60, 2, NoiseSpec::Noiseless);
        let inst = generate(&params, Mode::Planted, &mut rng(8)).unwrap();
        let adj = Adjacency::new(&inst, 2, &params.tunables).unwrap();
        let est = estimate_norm(&adj, &params.tunables, &mut rng(9));
        assert!(est.estimate >= adj.graph().delta() - 1e-9);
    }

    #[test]
    fn invariant_under_constraint_permutation() {
        let params = AttackParams::new(7, 2, 3, 25, 2, NoiseSpec::Uniform);
        let inst = generate(&params, Mode::Random, &mut rng(10)).unwrap();
        let mut cs = inst.constraints().to_vec();
        cs.reverse();
        let perm = LinInstance::from_constraints(7, 2, 3, Mode::Unknown, cs, None).unwrap();
        let a = estimate_spectral_norm(&inst, 2, &params.tunables, &mut rng(11)).unwrap();
        let b = estimate_spectral_norm(&perm, 2, &params.tunables, &mut rng(11)).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-6 * a.estimate);
    }
}
