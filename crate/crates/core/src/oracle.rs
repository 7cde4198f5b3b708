//! Brute-force references for tests and calibration: the dense adjacency
//! matrix, exhaustive edge counts, and exhaustive cover search.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::cover::QaryCover;
use crate::error::{Error, Result};
use crate::instance::{LinInstance, Scope};
use crate::kikuchi::{KikuchiGraph, Vertex, VertexSpace};
use crate::ring::{add_mod, neg_mod, RootTable};

/// The full `N × N` adjacency matrix.
#[derive(Debug, Clone)]
pub struct DenseHermitian {
    pub entries: DMatrix<Complex64>,
}

impl DenseHermitian {
    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Largest `|A[i][j] - conj(A[j][i])|`.
    pub fn hermitian_defect(&self) -> f64 {
        let a = &self.entries;
        let mut worst = 0.0f64;
        for i in 0..a.nrows() {
            for j in 0..=i {
                worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// `max |λ|` from a dense Hermitian eigensolve.
    pub fn spectral_norm(&self) -> f64 {
        if self.dim() == 0 {
            return 0.0;
        }
        self.entries.clone().symmetric_eigenvalues().iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let v = nalgebra::DVector::from_column_slice(x);
        (&self.entries * v).iter().copied().collect()
    }
}

fn check_cap(size: u128, cap: u128) -> Result<()> {
    if size > cap {
        return Err(Error::Scale { what: "dense vertex space", size, cap });
    }
    Ok(())
}

/// Materializes the adjacency of `K_l(I)` from the per-vertex edge lists.
pub fn dense_adjacency(inst: &LinInstance, l: usize, cap: u128) -> Result<DenseHermitian> {
    let g = KikuchiGraph::new(inst, l)?;
    check_cap(g.space().size(), cap)?;
    let dim = g.space().size() as usize;
    let roots = RootTable::new(inst.q());
    let mut entries = DMatrix::from_element(dim, dim, Complex64::new(0.0, 0.0));
    for (r, v) in g.space().iter().enumerate() {
        for e in g.out_edges(&v) {
            let c = g.space().rank(&e.head) as usize;
            entries[(r, c)] += roots.get(e.label);
        }
    }
    Ok(DenseHermitian { entries })
}

pub fn dense_spectral_norm(inst: &LinInstance, l: usize, cap: u128) -> Result<f64> {
    if inst.m() == 0 {
        let space = VertexSpace::new(inst.n(), l, inst.q())?;
        check_cap(space.size(), cap)?;
        return Ok(0.0);
    }
    Ok(dense_adjacency(inst, l, cap)?.spectral_norm())
}

/// Whether `(T1, T2)` is an eligible pair for scope `s`, checked case by case.
pub fn is_eligible_pair(t1: &Vertex, t2: &Vertex, s: &Scope, q: u32) -> bool {
    for &(i, e) in t1.pairs() {
        if !s.contains_index(i) && t2.exponent(i) != Some(e) {
            return false;
        }
    }
    for &(i, e) in t2.pairs() {
        if !s.contains_index(i) && t1.exponent(i) != Some(e) {
            return false;
        }
    }
    s.pairs().iter().all(|&(i, a)| match (t1.exponent(i), t2.exponent(i)) {
        (Some(e1), None) => e1 == neg_mod(a, q),
        (None, Some(e2)) => e2 == a,
        (Some(e1), Some(e2)) => e2 == add_mod(e1, a, q),
        (None, None) => false,
    })
}

/// Ordered eligible pairs over all `N²` vertex pairs, doubled for the two orientations.
pub fn brute_force_edge_count(s: &Scope, n: usize, l: usize, q: u32, cap: u128) -> Result<u128> {
    let space = VertexSpace::new(n, l, q)?;
    check_cap(space.size(), cap)?;
    let all: Vec<Vertex> = space.iter().collect();
    let mut count = 0u128;
    for t1 in &all {
        for t2 in &all {
            if is_eligible_pair(t1, t2, s, q) {
                count += 1;
            }
        }
    }
    Ok(2 * count)
}

/// Every `c` with at most `max_weight` nonzero entries and `c^T A ≡ 0`.
///
/// `budget` caps the number of candidate vectors examined.
pub fn brute_force_cover_search(inst: &LinInstance, max_weight: usize, budget: u128) -> Result<Vec<QaryCover>> {
    let (m, q) = (inst.m(), inst.q());
    let mut total: u128 = 0;
    for w in 1..=max_weight.min(m) {
        let c = crate::combin::binom(m as u64, w as u64)
            .and_then(|c| c.checked_mul(crate::combin::pow((q - 1) as u128, w as u64)?))
            .ok_or(Error::Overflow("cover candidates"))?;
        total = total.saturating_add(c);
    }
    if total > budget {
        return Err(Error::Scale { what: "cover search", size: total, cap: budget });
    }
    let view = inst.additive_view();
    let mut found = Vec::new();
    for w in 1..=max_weight.min(m) {
        let mut support: Vec<usize> = (0..w).collect();
        loop {
            let mut coeffs = vec![1u32; w];
            loop {
                let mut sums = vec![0u32; inst.n()];
                for (&i, &c) in support.iter().zip(&coeffs) {
                    for &(j, a) in &view.rows[i] {
                        sums[j as usize] = add_mod(sums[j as usize], crate::ring::mul_mod(c, a, q), q);
                    }
                }
                if sums.iter().all(|&s| s == 0) {
                    found.push(QaryCover { entries: support.iter().copied().zip(coeffs.iter().copied()).collect() });
                }
                // next coefficient vector in {1..q-1}^w
                let mut p = 0;
                while p < w && coeffs[p] == q - 1 {
                    coeffs[p] = 1;
                    p += 1;
                }
                if p == w {
                    break;
                }
                coeffs[p] += 1;
            }
            // next w-subset of [m] in lexicographic order
            let mut p = w;
            while p > 0 && support[p - 1] == m - w + p - 1 {
                p -= 1;
            }
            if p == 0 {
                break;
            }
            support[p - 1] += 1;
            for j in p..w {
                support[j] = support[j - 1] + 1;
            }
        }
    }
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{sample_coeff_vector, Constraint, Mode};
    use crate::kikuchi::theta;
    use crate::ring::Phase;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn empty_and_two_vertex_examples() {
        let inst = LinInstance::from_constraints(4, 2, 3, Mode::Unknown, vec![], None).unwrap();
        assert_eq!(dense_spectral_norm(&inst, 1, 2000).unwrap(), 0.0);
        let b = Complex64::from_polar(1.0, 0.7);
        let a = DenseHermitian {
            entries: DMatrix::from_row_slice(2, 2, &[Complex64::new(0.0, 0.0), b, b.conj(), Complex64::new(0.0, 0.0)]),
        };
        assert!((a.spectral_norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.hermitian_defect(), 0.0);
    }

    #[test]
    fn edge_count_matches_theta_and_is_scope_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (n, l, k, q) in [(5, 2, 2, 3), (6, 2, 3, 2), (4, 3, 3, 2), (5, 1, 2, 3)] {
            let th = theta(n, l, k, q).unwrap();
            for _ in 0..3 {
                let s = sample_coeff_vector(n, k, q, &mut rng).unwrap();
                let c = brute_force_edge_count(&s, n, l, q, 2000).unwrap();
                assert_eq!(c, th);
                assert_eq!(c % 2, 0);
            }
        }
    }

    #[test]
    fn negated_duplicate_gives_weight_two_cover() {
        let s1 = Scope::new(vec![(0, 1), (2, 3)]).unwrap();
        let s2 = Scope::new(vec![(0, 4), (2, 2)]).unwrap();
        let cs = vec![Constraint { scope: s1, rhs: Phase(0) }, Constraint { scope: s2, rhs: Phase(1) }];
        let inst = LinInstance::from_constraints(4, 2, 5, Mode::Unknown, cs, None).unwrap();
        let found = brute_force_cover_search(&inst, 2, 1_000_000).unwrap();
        assert!(found.contains(&QaryCover { entries: vec![(0, 1), (1, 1)] }));
        assert!(found.iter().all(|c| c.is_cover_of(&inst)));
    }

    #[test]
    fn generic_pair_has_no_cover() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cs = vec![
            Constraint { scope: Scope::new(vec![(0, 1), (1, 2)]).unwrap(), rhs: Phase(rng.gen_range(0..5)) },
            Constraint { scope: Scope::new(vec![(1, 3), (4, 1)]).unwrap(), rhs: Phase(rng.gen_range(0..5)) },
        ];
        let inst = LinInstance::from_constraints(6, 2, 5, Mode::Unknown, cs, None).unwrap();
        assert!(brute_force_cover_search(&inst, 2, 1_000_000).unwrap().is_empty());
    }

    #[test]
    fn caps_are_enforced() {
        let s = Scope::new(vec![(0, 1)]).unwrap();
        assert!(matches!(brute_force_edge_count(&s, 10, 4, 3, 2000), Err(Error::Scale { .. })));
    }
}
