//! Sparse symmetric assembly, reverse Cuthill-McKee ordering and banded
//! Cholesky factorization.

use crate::error::{Error, Result};
use std::collections::{BTreeMap, VecDeque};

/// Lower-triangle accumulator for a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymAssembly {
    n: usize,
    rows: Vec<BTreeMap<usize, f64>>,
}

impl SymAssembly {
    pub fn new(n: usize) -> Self {
        Self { n, rows: vec![BTreeMap::new(); n] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at `(i, j)` and its mirror.
    pub fn add(&mut self, i: usize, j: usize, value: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        *self.rows[hi].entry(lo).or_insert(0.0) += value;
    }

    /// Adds `weight * a a^T` for a sparse vector `a` (repeated indices allowed).
    pub fn add_outer(&mut self, a: &[(usize, f64)], weight: f64) {
        let merged = merge_terms(a);
        for (p, &(i, ai)) in merged.iter().enumerate() {
            for &(j, aj) in &merged[..=p] {
                self.add(i, j, weight * ai * aj);
            }
        }
    }

    /// Reverse Cuthill-McKee permutation: `perm[new] = old`.
    pub fn rcm(&self) -> Vec<usize> {
        let n = self.n;
        let mut adj = vec![Vec::new(); n];
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row.keys() {
                if j != i {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
        for list in &mut adj {
            list.sort_by_key(|&v| (degree[v], v));
        }
        let mut seen = vec![false; n];
        let mut order = Vec::with_capacity(n);
        let mut starts: Vec<usize> = (0..n).collect();
        starts.sort_by_key(|&v| (degree[v], v));
        for &s in &starts {
            if seen[s] {
                continue;
            }
            let root = peripheral(&adj, s);
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            while let Some(v) = queue.pop_front() {
                order.push(v);
                for &w in &adj[v] {
                    if !seen[w] {
                        seen[w] = true;
                        queue.push_back(w);
                    }
                }
            }
        }
        order.reverse();
        order
    }

    /// Factorizes with the RCM ordering.
    pub fn factor(&self) -> Result<BandCholesky> {
        let perm = self.rcm();
        let mut inv = vec![0; self.n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut bw = 0;
        for (i, row) in self.rows.iter().enumerate() {
            for &j in row.keys() {
                bw = bw.max(inv[i].abs_diff(inv[j]));
            }
        }
        let mut band = vec![0.0; self.n * (bw + 1)];
        for (i, row) in self.rows.iter().enumerate() {
            for (&j, &v) in row {
                let (a, b) = (inv[i].max(inv[j]), inv[i].min(inv[j]));
                band[a * (bw + 1) + (b + bw - a)] += v;
            }
        }
        BandCholesky::factor_in_place(band, self.n, bw, perm, inv)
    }
}

/// Sums coefficients of repeated indices and drops exact zeros.
pub fn merge_terms(a: &[(usize, f64)]) -> Vec<(usize, f64)> {
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(a.len());
    for &(i, v) in a {
        match out.iter_mut().find(|(j, _)| *j == i) {
            Some(slot) => slot.1 += v,
            None => out.push((i, v)),
        }
    }
    out.retain(|&(_, v)| v != 0.0);
    out
}

/// Pseudo-peripheral vertex of the component containing `start`.
fn peripheral(adj: &[Vec<usize>], start: usize) -> usize {
    let mut root = start;
    let mut best_depth = 0;
    for _ in 0..8 {
        let (far, depth) = bfs_far(adj, root);
        if depth <= best_depth {
            break;
        }
        best_depth = depth;
        root = far;
    }
    root
}

fn bfs_far(adj: &[Vec<usize>], root: usize) -> (usize, usize) {
    let mut dist = std::collections::HashMap::new();
    dist.insert(root, 0usize);
    let mut queue = VecDeque::from([root]);
    let mut last = (root, 0);
    while let Some(v) = queue.pop_front() {
        let d = dist[&v];
        if d > last.1 || (d == last.1 && adj[v].len() < adj[last.0].len()) {
            last = (v, d);
        }
        for &w in &adj[v] {
            if !dist.contains_key(&w) {
                dist.insert(w, d + 1);
                queue.push_back(w);
            }
        }
    }
    last
}

/// `P A P^T = L L^T` with `L` stored row-wise inside a band of half-width `bw`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    band: Vec<f64>,
    perm: Vec<usize>,
    inv: Vec<usize>,
}

impl BandCholesky {
    fn factor_in_place(mut band: Vec<f64>, n: usize, bw: usize, perm: Vec<usize>, inv: Vec<usize>) -> Result<Self> {
        let w = bw + 1;
        let scale = (0..n).map(|i| band[i * w + bw].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let mut s = band[i * w + (j + bw - i)];
                if k0 < j {
                    let ri = &band[i * w + (k0 + bw - i)..i * w + (j + bw - i)];
                    let rj = &band[j * w + (k0 + bw - j)..j * w + bw];
                    s -= ri.iter().zip(rj).map(|(a, b)| a * b).sum::<f64>();
                }
                if j == i {
                    if s <= 1e-14 * scale {
                        return Err(Error::SingularSystem(format!("non-positive pivot {s:e} at row {i}")));
                    }
                    band[i * w + bw] = s.sqrt();
                } else {
                    band[i * w + (j + bw - i)] = s / band[j * w + bw];
                }
            }
        }
        Ok(Self { n, bw, band, perm, inv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&o| b[o]).collect();
        self.forward(&mut y, 0);
        self.backward(&mut y);
        for (new, &old) in self.perm.iter().enumerate() {
            b[old] = y[new];
        }
    }

    /// Forward substitution `L y = rhs` in permuted order, skipping the
    /// leading rows known to be zero.
    fn forward(&self, y: &mut [f64], first: usize) {
        let w = self.bw + 1;
        for i in first..self.n {
            let k0 = i.saturating_sub(self.bw).max(first);
            let row = &self.band[i * w + (k0 + self.bw - i)..i * w + self.bw];
            let s: f64 = row.iter().zip(&y[k0..i]).map(|(a, b)| a * b).sum();
            y[i] = (y[i] - s) / self.band[i * w + self.bw];
        }
    }

    fn backward(&self, y: &mut [f64]) {
        let w = self.bw + 1;
        for i in (0..self.n).rev() {
            y[i] /= self.band[i * w + self.bw];
            let yi = y[i];
            let k0 = i.saturating_sub(self.bw);
            for k in k0..i {
                y[k] -= self.band[i * w + (k + self.bw - i)] * yi;
            }
        }
    }

    /// `L^{-1} P a` for a sparse `a`, returned densely in permuted order.
    pub fn half_solve_sparse(&self, a: &[(usize, f64)]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        let mut first = self.n;
        for &(i, v) in a {
            let p = self.inv[i];
            y[p] += v;
            first = first.min(p);
        }
        if first < self.n {
            self.forward(&mut y, first);
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn laplacian_1d(n: usize, shuffle: &[usize]) -> SymAssembly {
        let mut a = SymAssembly::new(n);
        for i in 0..n {
            a.add(shuffle[i], shuffle[i], 2.0);
            if i + 1 < n {
                a.add(shuffle[i], shuffle[i + 1], -1.0);
            }
        }
        a
    }

    #[test]
    fn rcm_recovers_tridiagonal_band() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut shuffle: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            shuffle.swap(i, rng.gen_range(0..=i));
        }
        let f = laplacian_1d(n, &shuffle).factor().unwrap();
        assert_eq!(f.bandwidth(), 1);
    }

    #[test]
    fn solves_match_dense() {
        let n = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut a = SymAssembly::new(n);
        let mut dense = nalgebra::DMatrix::<f64>::zeros(n, n);
        for _ in 0..60 {
            let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
            let v: f64 = rng.gen_range(-1.0..1.0);
            let row = [(i, 1.0), (j, v)];
            a.add_outer(&row, 0.5);
            for &(p, x) in &row {
                for &(q, y) in &row {
                    dense[(p, q)] += 0.5 * x * y;
                }
            }
        }
        for i in 0..n {
            a.add(i, i, 1.0);
            dense[(i, i)] += 1.0;
        }
        let f = a.factor().unwrap();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = b.clone();
        f.solve_in_place(&mut x);
        let r = &dense * nalgebra::DVector::from_vec(x) - nalgebra::DVector::from_vec(b);
        assert!(r.amax() < 1e-12, "{}", r.amax());
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut a = SymAssembly::new(3);
        a.add_outer(&[(0, 1.0), (1, -1.0)], 1.0);
        a.add(2, 2, 1.0);
        assert!(matches!(a.factor(), Err(Error::SingularSystem(_))));
    }
}
