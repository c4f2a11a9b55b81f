//! Sparse symmetric LDL^T with 1x1 pivots.
//!
//! Meant for quasidefinite KKT matrices, where any symmetric ordering admits
//! a factorization. The ordering is plain minimum degree on the elimination
//! graph, which also yields the exact pattern of L. Numeric factorization is
//! left-looking and reuses the symbolic analysis across calls.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Inertia {
    pub positive: usize,
    pub negative: usize,
    pub zero: usize,
}

#[derive(Debug, Clone)]
pub struct Ldl {
    n: usize,
    /// `perm[k]` is the original index eliminated at step `k`.
    perm: Vec<usize>,
    /// For permuted column `k`: `(permuted row >= k, entry)` of the input.
    a_cols: Vec<Vec<(usize, usize)>>,
    l_ptr: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    /// Columns `j < k` with a nonzero in row `k`.
    row_pat: Vec<Vec<usize>>,
    d: Vec<f64>,
    work: Vec<f64>,
    next: Vec<usize>,
}

/// Pivots this small count as zero.
const ZERO_PIVOT: f64 = 1e-300;

fn min_degree(n: usize, entries: &[(usize, usize)]) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(r, c) in entries {
        if r != c {
            adj[r].push(c);
            adj[c].push(r);
        }
    }
    for a in &mut adj {
        a.sort_unstable();
        a.dedup();
    }
    let mut done = vec![false; n];
    let mut mark = vec![usize::MAX; n];
    let mut heap: BinaryHeap<Reverse<(usize, usize)>> = (0..n).map(|i| Reverse((adj[i].len(), i))).collect();
    let mut order = Vec::with_capacity(n);
    let mut cols = Vec::with_capacity(n);
    while let Some(Reverse((deg, v))) = heap.pop() {
        if done[v] || deg != adj[v].len() {
            continue;
        }
        done[v] = true;
        let nbrs = std::mem::take(&mut adj[v]);
        for &u in &nbrs {
            // adj[u] := (adj[u] + nbrs) minus {u, v}
            mark[u] = v;
            let mut merged: Vec<usize> = Vec::with_capacity(adj[u].len() + nbrs.len());
            for &w in &adj[u] {
                if w != v && mark[w] != v {
                    mark[w] = v;
                    merged.push(w);
                }
            }
            for &w in &nbrs {
                if mark[w] != v {
                    mark[w] = v;
                    merged.push(w);
                }
            }
            // reset marks touched by this merge so the next neighbor starts clean
            for &w in &merged {
                mark[w] = usize::MAX;
            }
            mark[u] = usize::MAX;
            adj[u] = merged;
            heap.push(Reverse((adj[u].len(), u)));
        }
        order.push(v);
        cols.push(nbrs);
    }
    (order, cols)
}

impl Ldl {
    /// Symbolic analysis of an `n x n` symmetric matrix given by the
    /// positions of its stored entries (either triangle, no duplicates
    /// expected; duplicates are summed at factor time).
    pub fn analyze(n: usize, entries: &[(usize, usize)]) -> Self {
        let (perm, cols) = min_degree(n, entries);
        let mut pos = vec![0; n];
        for (k, &v) in perm.iter().enumerate() {
            pos[v] = k;
        }
        let mut l_ptr = Vec::with_capacity(n + 1);
        let mut l_idx = Vec::new();
        l_ptr.push(0);
        for c in &cols {
            let mut rows: Vec<usize> = c.iter().map(|&u| pos[u]).collect();
            rows.sort_unstable();
            l_idx.extend(rows);
            l_ptr.push(l_idx.len());
        }
        let mut row_pat = vec![Vec::new(); n];
        for k in 0..n {
            for &r in &l_idx[l_ptr[k]..l_ptr[k + 1]] {
                row_pat[r].push(k);
            }
        }
        let mut a_cols = vec![Vec::new(); n];
        for (e, &(r, c)) in entries.iter().enumerate() {
            let (pr, pc) = (pos[r], pos[c]);
            a_cols[pr.min(pc)].push((pr.max(pc), e));
        }
        let nnz = l_idx.len();
        Ldl {
            n,
            perm,
            a_cols,
            l_ptr,
            l_idx,
            l_val: vec![0.0; nnz],
            row_pat,
            d: vec![0.0; n],
            work: vec![0.0; n],
            next: vec![0; n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill(&self) -> usize {
        self.l_idx.len()
    }

    /// Numeric factorization; `values[e]` belongs to `entries[e]` of the
    /// analysis. Stops at the first zero pivot, reporting it in the inertia.
    pub fn factor(&mut self, values: &[f64]) -> Inertia {
        let mut inertia = Inertia::default();
        self.next.copy_from_slice(&self.l_ptr[..self.n]);
        for k in 0..self.n {
            for &(r, e) in &self.a_cols[k] {
                self.work[r] += values[e];
            }
            for &j in &self.row_pat[k] {
                let p = self.next[j];
                debug_assert_eq!(self.l_idx[p], k);
                let f = self.l_val[p] * self.d[j];
                for q in p..self.l_ptr[j + 1] {
                    self.work[self.l_idx[q]] -= self.l_val[q] * f;
                }
                self.next[j] = p + 1;
            }
            let dk = self.work[k];
            self.work[k] = 0.0;
            if !(dk.abs() > ZERO_PIVOT) {
                inertia.zero += 1;
                self.work.iter_mut().for_each(|w| *w = 0.0);
                return inertia;
            }
            if dk > 0.0 {
                inertia.positive += 1;
            } else {
                inertia.negative += 1;
            }
            self.d[k] = dk;
            for q in self.l_ptr[k]..self.l_ptr[k + 1] {
                let r = self.l_idx[q];
                self.l_val[q] = self.work[r] / dk;
                self.work[r] = 0.0;
            }
        }
        inertia
    }

    /// Solves `A x = b` in place with the last successful factorization.
    pub fn solve(&self, b: &mut [f64]) {
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for k in 0..self.n {
            let yk = y[k];
            if yk != 0.0 {
                for q in self.l_ptr[k]..self.l_ptr[k + 1] {
                    y[self.l_idx[q]] -= self.l_val[q] * yk;
                }
            }
        }
        for k in 0..self.n {
            y[k] /= self.d[k];
        }
        for k in (0..self.n).rev() {
            let mut s = y[k];
            for q in self.l_ptr[k]..self.l_ptr[k + 1] {
                s -= self.l_val[q] * y[self.l_idx[q]];
            }
            y[k] = s;
        }
        for (k, &i) in self.perm.iter().enumerate() {
            b[i] = y[k];
        }
    }
}
