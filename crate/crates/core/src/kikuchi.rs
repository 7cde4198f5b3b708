//! The Kikuchi graph `K_l(I)` over vertices `([n] choose l) × [q]^l`.
//!
//! A vertex is a set of `l` distinct indices, each carrying an exponent
//! residue. Exponent 0 is a stored value distinct from the index being
//! absent. The graph is never materialized: edges are enumerated per vertex
//! from the constraints that touch its support.
//!
//! For a constraint with scope `S = {(i, a)}`, an ordered pair `(T1, T2)` is
//! an edge iff `T1` and `T2` agree outside the indices of `S` and every
//! `(i, a) ∈ S` falls in exactly one case:
//!
//! * (a) `(i, -a) ∈ T1` and `i ∉ T2`,
//! * (b) `i ∉ T1` and `(i, a) ∈ T2`,
//! * (c) `(i, e) ∈ T1` and `(i, e + a) ∈ T2` for some `e`.
//!
//! Each such pair yields `T1 → T2` with label `b` and the twin `T2 → T1`
//! with label `b*`.

use std::collections::BTreeMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::combin;
use crate::error::{param, Error, Result};
use crate::instance::{Constraint, LinInstance, Scope};
use crate::ring::{add_mod, neg_mod, sub_mod, Phase, Residue};

pub type Pairs = SmallVec<[(u32, Residue); 6]>;

/// `l` distinct indices with exponents, sorted by index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Vertex {
    pairs: Pairs,
}

impl Vertex {
    pub fn new(pairs: impl IntoIterator<Item = (u32, Residue)>) -> Result<Self> {
        let mut pairs: Pairs = pairs.into_iter().collect();
        pairs.sort_unstable_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(param("vertex indices must be distinct"));
        }
        Ok(Vertex { pairs })
    }

    fn from_sorted(pairs: Pairs) -> Self {
        debug_assert!(pairs.windows(2).all(|w| w[0].0 < w[1].0));
        Vertex { pairs }
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

    /// Exponent at index `j`, `None` when `j` is not in the support.
    pub fn exponent(&self, j: u32) -> Option<Residue> {
        self.pairs.binary_search_by_key(&j, |p| p.0).ok().map(|p| self.pairs[p].1)
    }
}

/// One directed edge of `K_l(I)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub tail: Vertex,
    pub head: Vertex,
    pub label: Phase,
    /// Index of the generating constraint.
    pub color: usize,
    /// `true` when the label is `b`, `false` when it is `b*`.
    pub forward: bool,
}

impl Edge {
    /// The reverse twin: same color, swapped endpoints, conjugated label.
    pub fn twin(&self, q: u32) -> Edge {
        Edge {
            tail: self.head.clone(),
            head: self.tail.clone(),
            label: self.label.conj(q),
            color: self.color,
            forward: !self.forward,
        }
    }
}

/// Canonical bijection between `[0, N)` and the vertices.
///
/// The index set is ranked colexicographically (`Σ_j C(i_j, j+1)` over the
/// sorted 0-based indices) and the exponents are read as base-`q` digits,
/// least significant first: `rank = set_rank · q^l + Σ_j e_j q^j`.
#[derive(Debug, Clone)]
pub struct VertexSpace {
    n: usize,
    l: usize,
    q: u32,
    binom: Vec<Vec<u128>>,
    qpow: u128,
    size: u128,
}

impl VertexSpace {
    pub fn new(n: usize, l: usize, q: u32) -> Result<Self> {
        if l > n {
            return Err(param(format!("need l <= n, got l={l} n={n}")));
        }
        crate::ring::check_modulus(q)?;
        let mut binom = vec![vec![0u128; l + 2]; n + 1];
        for (a, row) in binom.iter_mut().enumerate() {
            for (b, v) in row.iter_mut().enumerate() {
                *v = combin::binom(a as u64, b as u64).ok_or(Error::Overflow("vertex count"))?;
            }
        }
        let qpow = combin::pow(q as u128, l as u64).ok_or(Error::Overflow("vertex count"))?;
        let size = binom[n][l].checked_mul(qpow).ok_or(Error::Overflow("vertex count"))?;
        Ok(VertexSpace { n, l, q, binom, qpow, size })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// `N = C(n, l) · q^l`.
    pub fn size(&self) -> u128 {
        self.size
    }

    pub fn contains(&self, v: &Vertex) -> bool {
        v.len() == self.l && v.pairs.iter().all(|&(i, e)| (i as usize) < self.n && e < self.q)
    }

    pub fn rank(&self, v: &Vertex) -> u128 {
        self.rank_pairs(&v.pairs)
    }

    pub(crate) fn rank_pairs(&self, pairs: &[(u32, Residue)]) -> u128 {
        let mut set_rank = 0u128;
        let mut digits = 0u128;
        let mut place = 1u128;
        for (j, &(i, e)) in pairs.iter().enumerate() {
            set_rank += self.binom[i as usize][j + 1];
            digits += e as u128 * place;
            place *= self.q as u128;
        }
        set_rank * self.qpow + digits
    }

    pub fn unrank(&self, rank: u128) -> Vertex {
        assert!(rank < self.size, "rank {rank} out of range");
        let mut set_rank = rank / self.qpow;
        let mut digits = rank % self.qpow;
        let mut idx = vec![0u32; self.l];
        let mut hi = self.n;
        for j in (0..self.l).rev() {
            // largest c < hi with C(c, j+1) <= set_rank
            let mut c = hi - 1;
            while self.binom[c][j + 1] > set_rank {
                c -= 1;
            }
            idx[j] = c as u32;
            set_rank -= self.binom[c][j + 1];
            hi = c;
        }
        let pairs = idx
            .into_iter()
            .map(|i| {
                let e = (digits % self.q as u128) as Residue;
                digits /= self.q as u128;
                (i, e)
            })
            .collect();
        Vertex::from_sorted(pairs)
    }

    /// Every vertex in rank order.
    pub fn iter(&self) -> impl Iterator<Item = Vertex> + '_ {
        (0..self.size).map(move |r| self.unrank(r))
    }
}

fn theta_terms_checked(n: usize, l: usize, k: usize, q: u32) -> Result<Vec<u128>> {
    if k > n || 2 * l < k || l > n {
        return Err(param(format!("theta needs k <= n and k/2 <= l <= n, got n={n} l={l} k={k}")));
    }
    let ovf = || Error::Overflow("theta");
    let q = q as u128;
    let mut terms = Vec::with_capacity(k + 1);
    for r in 0..=k {
        if (k - r) % 2 == 1 || 2 * l < k + r {
            terms.push(0);
            continue;
        }
        let common = (l - (k + r) / 2) as u64;
        let term = combin::binom(k as u64, r as u64)
            .and_then(|c| c.checked_mul(combin::pow(q, r as u64)?))
            .and_then(|c| c.checked_mul(combin::binom((k - r) as u64, ((k - r) / 2) as u64)?))
            .and_then(|c| c.checked_mul(combin::binom((n - k) as u64, common)?))
            .and_then(|c| c.checked_mul(combin::pow(q, common)?))
            .ok_or_else(ovf)?;
        terms.push(term);
    }
    Ok(terms)
}

/// Number of directed edges each constraint contributes:
/// `2 Σ_r C(k,r) q^r C(k-r,(k-r)/2) C(n-k, l-(k+r)/2) q^{l-(k+r)/2}`.
pub fn theta(n: usize, l: usize, k: usize, q: u32) -> Result<u128> {
    let terms = theta_terms_checked(n, l, k, q)?;
    terms
        .iter()
        .try_fold(0u128, |acc, &t| acc.checked_add(t))
        .and_then(|s| s.checked_mul(2))
        .ok_or(Error::Overflow("theta"))
}

/// `θ` as a float, usable when the exact value overflows.
pub fn theta_f64(n: usize, l: usize, k: usize, q: u32) -> Result<f64> {
    Ok(theta_term_weights(n, l, k, q)?.iter().sum::<f64>() * 2.0)
}

/// Per-`r` terms of the `θ` sum as floats (one orientation).
fn theta_term_weights(n: usize, l: usize, k: usize, q: u32) -> Result<Vec<f64>> {
    if k > n || 2 * l < k || l > n {
        return Err(param(format!("theta needs k <= n and k/2 <= l <= n, got n={n} l={l} k={k}")));
    }
    let qf = q as f64;
    Ok((0..=k)
        .map(|r| {
            if (k - r) % 2 == 1 || 2 * l < k + r {
                return 0.0;
            }
            let common = l - (k + r) / 2;
            let ln = combin::ln_binom(k as u64, r as u64)
                + r as f64 * qf.ln()
                + combin::ln_binom((k - r) as u64, ((k - r) / 2) as u64)
                + combin::ln_binom((n - k) as u64, common as u64)
                + common as f64 * qf.ln();
            ln.exp()
        })
        .collect())
}

/// Coefficient map `j ↦ coeff_{T2}(j) - coeff_{T1}(j)` over the union of supports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoeffMap {
    q: u32,
    entries: BTreeMap<u32, Residue>,
}

impl CoeffMap {
    pub fn get(&self, j: u32) -> Residue {
        self.entries.get(&j).copied().unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.entries.values().all(|&v| v == 0)
    }

    pub fn neg(&self) -> CoeffMap {
        CoeffMap { q: self.q, entries: self.entries.iter().map(|(&j, &v)| (j, neg_mod(v, self.q))).collect() }
    }

    /// Agreement with a scope's coefficients at every index (absent means 0).
    pub fn agrees_with(&self, s: &Scope) -> bool {
        self.entries.iter().all(|(&j, &v)| v == s.coeff(j)) && s.pairs().iter().all(|&(j, a)| self.get(j) == a)
    }

    /// Agreement with another map at every index (absent means 0).
    pub fn same_as(&self, other: &CoeffMap) -> bool {
        self.entries.keys().chain(other.entries.keys()).all(|&j| self.get(j) == other.get(j))
    }
}

pub fn scope_between(t1: &Vertex, t2: &Vertex, q: u32) -> CoeffMap {
    let mut entries = BTreeMap::new();
    for &(j, e) in t1.pairs() {
        entries.insert(j, neg_mod(e, q));
    }
    for &(j, e) in t2.pairs() {
        let v = entries.entry(j).or_insert(0);
        *v = add_mod(*v, e, q);
    }
    CoeffMap { q, entries }
}

/// Scope indices split against a vertex's support.
struct Split {
    /// Vertex pairs whose index is outside the scope.
    outside: Pairs,
    /// Scope pairs `(i, a)` with `i` absent from the vertex.
    absent: Pairs,
    /// Scope indices present in the vertex: `(i, e, a)`.
    present: SmallVec<[(u32, Residue, Residue); 6]>,
}

fn split(t: &[(u32, Residue)], s: &[(u32, Residue)]) -> Split {
    let mut out = Split { outside: Pairs::new(), absent: Pairs::new(), present: SmallVec::new() };
    let (mut x, mut y) = (0, 0);
    while x < t.len() || y < s.len() {
        if y == s.len() || (x < t.len() && t[x].0 < s[y].0) {
            out.outside.push(t[x]);
            x += 1;
        } else if x == t.len() || s[y].0 < t[x].0 {
            out.absent.push(s[y]);
            y += 1;
        } else {
            out.present.push((t[x].0, t[x].1, s[y].1));
            x += 1;
            y += 1;
        }
    }
    out
}

/// Bit masks over `width` bits with exactly `ones` bits set, in increasing order.
fn masks(width: usize, ones: usize) -> impl Iterator<Item = u32> {
    (0u32..(1u32 << width)).filter(move |m| m.count_ones() as usize == ones)
}

/// Out-edge counts `(forward, reverse)` of `t` generated by scope `s`.
pub fn count_edges(t: &[(u32, Residue)], s: &[(u32, Residue)], q: u32) -> (u64, u64) {
    let sp = split(t, s);
    let need = sp.absent.len() as u64;
    let fwd = sp.present.iter().filter(|&&(_, e, a)| add_mod(e, a, q) == 0).count() as u64;
    let rev = sp.present.iter().filter(|&&(_, e, a)| e == a).count() as u64;
    let c = |n: u64| combin::binom(n, need).map(|v| v as u64).unwrap_or(u64::MAX);
    (c(fwd), c(rev))
}

/// Calls `f(head, forward)` for every out-edge of `t` generated by scope `s`.
///
/// Forward heads come first, then reverse heads; within each group the
/// order follows the bit masks over the eligible indices.
pub fn for_each_head<F: FnMut(Pairs, bool)>(t: &[(u32, Residue)], s: &[(u32, Residue)], q: u32, mut f: F) {
    let sp = split(t, s);
    let need = sp.absent.len();
    for forward in [true, false] {
        // eligible present indices: forward drops need e = -a, reverse drops need e = a
        let eligible: SmallVec<[usize; 6]> = sp
            .present
            .iter()
            .enumerate()
            .filter(|(_, &(_, e, a))| if forward { add_mod(e, a, q) == 0 } else { e == a })
            .map(|(p, _)| p)
            .collect();
        if eligible.len() < need {
            continue;
        }
        for mask in masks(eligible.len(), need) {
            let mut head = sp.outside.clone();
            for &(i, a) in &sp.absent {
                head.push((i, if forward { a } else { neg_mod(a, q) }));
            }
            let mut b = 0;
            for (p, &(i, e, a)) in sp.present.iter().enumerate() {
                if b < eligible.len() && eligible[b] == p {
                    let dropped = mask >> b & 1 == 1;
                    b += 1;
                    if dropped {
                        continue;
                    }
                }
                head.push((i, if forward { add_mod(e, a, q) } else { sub_mod(e, a, q) }));
            }
            head.sort_unstable_by_key(|p| p.0);
            f(head, forward);
        }
    }
}

/// Every out-edge of `t` generated by constraint `c` (color `color`), both orientations.
pub fn out_edges(t: &Vertex, c: &Constraint, color: usize, q: u32) -> Vec<Edge> {
    let mut edges = Vec::new();
    for_each_head(t.pairs(), c.scope.pairs(), q, |head, forward| {
        edges.push(Edge {
            tail: t.clone(),
            head: Vertex::from_sorted(head),
            label: if forward { c.rhs } else { c.rhs.conj(q) },
            color,
            forward,
        });
    });
    edges
}

/// An instance viewed as its Kikuchi graph at level `l`.
#[derive(Debug, Clone)]
pub struct KikuchiGraph<'a> {
    inst: &'a LinInstance,
    space: VertexSpace,
    /// `(coefficient, id)` of the constraints touching each variable, sorted.
    by_coeff: Vec<Vec<(Residue, u32)>>,
    /// Ids of the constraints whose smallest scope index is each variable.
    by_min: Vec<Vec<u32>>,
    theta: f64,
}

impl<'a> KikuchiGraph<'a> {
    pub fn new(inst: &'a LinInstance, l: usize) -> Result<Self> {
        let (n, k, q) = (inst.n(), inst.k(), inst.q());
        if 2 * l < k || l > n {
            return Err(param(format!("need k/2 <= l <= n, got l={l} k={k} n={n}")));
        }
        let space = VertexSpace::new(n, l, q)?;
        let mut by_coeff = vec![Vec::new(); n];
        let mut by_min = vec![Vec::new(); n];
        for (c, con) in inst.constraints().iter().enumerate() {
            for &(i, a) in con.scope.pairs() {
                by_coeff[i as usize].push((a, c as u32));
            }
            if let Some(&(i, _)) = con.scope.pairs().first() {
                by_min[i as usize].push(c as u32);
            }
        }
        for v in &mut by_coeff {
            v.sort_unstable();
        }
        let theta = theta_f64(n, l, k, q)?;
        Ok(KikuchiGraph { inst, space, by_coeff, by_min, theta })
    }

    pub fn instance(&self) -> &'a LinInstance {
        self.inst
    }

    pub fn space(&self) -> &VertexSpace {
        &self.space
    }

    pub fn q(&self) -> u32 {
        self.inst.q()
    }

    /// `θ` as a float.
    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Average out-degree `Δ = m θ / N`.
    pub fn delta(&self) -> f64 {
        self.inst.m() as f64 * self.theta / self.space.size() as f64
    }

    /// Ids of the constraints that generate at least one edge at `t`, ascending.
    ///
    /// A scope with an index outside `t` needs a drop, which needs some
    /// `(i, e)` in `t` with coefficient `-e` (forward) or `e` (reverse).
    /// A scope inside the support of `t` always generates edges.
    pub fn candidates(&self, t: &[(u32, Residue)]) -> SmallVec<[u32; 32]> {
        let q = self.q();
        let mut ids: SmallVec<[u32; 32]> = SmallVec::new();
        for &(i, e) in t {
            let list = &self.by_coeff[i as usize];
            let neg = neg_mod(e, q);
            let keys = [neg, e];
            for &a in &keys[..if neg == e { 1 } else { 2 }] {
                let lo = list.partition_point(|&(c, _)| c < a);
                ids.extend(list[lo..].iter().take_while(|&&(c, _)| c == a).map(|&(_, id)| id));
            }
        }
        for &(i, _) in t {
            for &c in &self.by_min[i as usize] {
                let s = self.inst.constraints()[c as usize].scope.pairs();
                if s.iter().all(|&(j, _)| t.binary_search_by_key(&j, |p| p.0).is_ok()) {
                    ids.push(c);
                }
            }
        }
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// Calls `f(color, head, label)` for every out-edge of `t`, by ascending color.
    pub fn for_each_out<F: FnMut(usize, Pairs, Phase, bool)>(&self, t: &[(u32, Residue)], mut f: F) {
        let q = self.q();
        for c in self.candidates(t) {
            let con = &self.inst.constraints()[c as usize];
            for_each_head(t, con.scope.pairs(), q, |head, forward| {
                let label = if forward { con.rhs } else { con.rhs.conj(q) };
                f(c as usize, head, label, forward);
            });
        }
    }

    pub fn out_edges(&self, t: &Vertex) -> Vec<Edge> {
        let mut edges = Vec::new();
        self.for_each_out(t.pairs(), |color, head, label, forward| {
            edges.push(Edge { tail: t.clone(), head: Vertex::from_sorted(head), label, color, forward });
        });
        edges
    }

    pub fn out_degree(&self, t: &Vertex) -> u64 {
        let q = self.q();
        self.candidates(t.pairs())
            .iter()
            .map(|&c| {
                let (f, r) = count_edges(t.pairs(), self.inst.constraints()[c as usize].scope.pairs(), q);
                f + r
            })
            .sum()
    }

    /// A uniformly random element of the out-edge multiset of `t`.
    pub fn uniform_out_step<R: Rng + ?Sized>(&self, t: &Vertex, rng: &mut R) -> Result<Edge> {
        self.out_step_with_degree(t, rng).map(|(e, _)| e)
    }

    /// [`uniform_out_step`](Self::uniform_out_step) that also reports the out-degree of `t`.
    pub fn out_step_with_degree<R: Rng + ?Sized>(&self, t: &Vertex, rng: &mut R) -> Result<(Edge, u64)> {
        let q = self.q();
        let cands = self.candidates(t.pairs());
        let counts: SmallVec<[u64; 32]> = cands
            .iter()
            .map(|&c| {
                let (f, r) = count_edges(t.pairs(), self.inst.constraints()[c as usize].scope.pairs(), q);
                f + r
            })
            .collect();
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::DeadEnd);
        }
        let mut pick = rng.gen_range(0..total);
        for (&c, &cnt) in cands.iter().zip(&counts) {
            if pick >= cnt {
                pick -= cnt;
                continue;
            }
            let con = &self.inst.constraints()[c as usize];
            let mut chosen = None;
            let mut seen = 0u64;
            for_each_head(t.pairs(), con.scope.pairs(), q, |head, forward| {
                if seen == pick {
                    chosen = Some((head, forward));
                }
                seen += 1;
            });
            let (head, forward) = chosen.expect("edge count and enumeration disagree");
            let edge = Edge {
                tail: t.clone(),
                head: Vertex::from_sorted(head),
                label: if forward { con.rhs } else { con.rhs.conj(q) },
                color: c as usize,
                forward,
            };
            return Ok((edge, total));
        }
        unreachable!("pick below total")
    }

    /// Draws a vertex with probability proportional to its out-degree.
    ///
    /// Picks a uniform constraint, then a uniform edge among the `θ` it
    /// generates, and returns the tail.
    pub fn sample_vertex_nu<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vertex> {
        let m = self.inst.m();
        if m == 0 || self.theta == 0.0 {
            return Err(Error::EmptyGraph);
        }
        let c = &self.inst.constraints()[rng.gen_range(0..m)];
        let (t1, t2) = sample_edge_pair(&c.scope, self.space.n, self.space.l, self.q(), rng)?;
        Ok(if rng.gen_bool(0.5) { t1 } else { t2 })
    }
}

/// A uniformly random ordered pair `(T1, T2)` eligible for scope `s`.
pub fn sample_edge_pair<R: Rng + ?Sized>(
    s: &Scope,
    n: usize,
    l: usize,
    q: u32,
    rng: &mut R,
) -> Result<(Vertex, Vertex)> {
    let k = s.len();
    let weights = theta_term_weights(n, l, k, q)?;
    let r = WeightedIndex::new(&weights).map_err(|_| Error::EmptyGraph)?.sample(rng);

    // shuffle the scope positions: first r are case (c), next (k-r)/2 case (a), rest case (b)
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(rng);
    let half = (k - r) / 2;
    let mut t1 = Pairs::new();
    let mut t2 = Pairs::new();
    for (pos, &p) in order.iter().enumerate() {
        let (i, a) = s.pairs()[p];
        if pos < r {
            let e = rng.gen_range(0..q);
            t1.push((i, e));
            t2.push((i, add_mod(e, a, q)));
        } else if pos < r + half {
            t1.push((i, neg_mod(a, q)));
        } else {
            t2.push((i, a));
        }
    }
    let common = l - (k + r) / 2;
    let others: Vec<u32> = (0..n as u32).filter(|&i| !s.contains_index(i)).collect();
    for p in rand::seq::index::sample(rng, others.len(), common).into_iter() {
        let e = rng.gen_range(0..q);
        t1.push((others[p], e));
        t2.push((others[p], e));
    }
    t1.sort_unstable_by_key(|p| p.0);
    t2.sort_unstable_by_key(|p| p.0);
    Ok((Vertex::from_sorted(t1), Vertex::from_sorted(t2)))
}
