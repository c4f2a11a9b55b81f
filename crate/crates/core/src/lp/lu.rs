//! Sparse LU factorization of a simplex basis with product-form updates.
//!
//! Right-looking elimination picks the active column of smallest count and,
//! inside it, the acceptable pivot (threshold 0.1) whose row is sparsest.
//! L is kept as a sequence of column etas; U is kept both row-wise (for
//! BTRAN) and column-wise (for FTRAN, which then skips zero components).
//! Basis changes append eta columns until the next refactorization.

use std::collections::BTreeSet;

const PIVOT_THRESHOLD: f64 = 0.1;
const ZERO_PIVOT: f64 = 1e-11;

#[derive(Debug, Clone, Default)]
pub(crate) struct Lu {
    m: usize,
    // L etas: row-eliminations in pivot order
    l_row: Vec<usize>,
    l_start: Vec<usize>,
    l_idx: Vec<usize>,
    l_val: Vec<f64>,
    // pivot sequence
    piv_row: Vec<usize>,
    piv_col: Vec<usize>,
    piv_val: Vec<f64>,
    // U by pivot step, row-wise: (basis position, value) for later pivots
    ur_start: Vec<usize>,
    ur_idx: Vec<usize>,
    ur_val: Vec<f64>,
    // U by pivot step, column-wise: (row, value) for earlier pivots
    uc_start: Vec<usize>,
    uc_idx: Vec<usize>,
    uc_val: Vec<f64>,
    // product-form updates
    e_pos: Vec<usize>,
    e_piv: Vec<f64>,
    e_start: Vec<usize>,
    e_idx: Vec<usize>,
    e_val: Vec<f64>,
}

/// Positions whose column could not be pivoted, paired with rows that were
/// left without a pivot.
#[derive(Debug, Clone)]
pub(crate) struct Singular {
    pub pairs: Vec<(usize, usize)>,
}

impl Lu {
    /// Factors the `m x m` matrix whose column `c` holds `(row, value)` pairs.
    pub fn factor(m: usize, mut col: Vec<Vec<(usize, f64)>>) -> Result<Lu, Singular> {
        let mut row_pat: Vec<Vec<usize>> = vec![Vec::new(); m];
        for (c, entries) in col.iter().enumerate() {
            for &(r, _) in entries {
                row_pat[r].push(c);
            }
        }
        let mut row_done = vec![false; m];
        let mut set: BTreeSet<(usize, usize)> = (0..m).map(|c| (col[c].len(), c)).collect();
        let mut mark = vec![usize::MAX; m];
        let mut singular_cols = Vec::new();

        let mut lu = Lu {
            m,
            l_start: vec![0],
            ur_start: vec![0],
            e_start: vec![0],
            ..Default::default()
        };
        let mut urow_cols: Vec<usize> = Vec::new();
        let mut l_entries: Vec<(usize, f64)> = Vec::new();

        while let Some(&(cnt, c)) = set.iter().next() {
            set.remove(&(cnt, c));
            let amax = col[c].iter().fold(0.0f64, |a, e| a.max(e.1.abs()));
            if cnt == 0 || amax < ZERO_PIVOT {
                for &(i, _) in &col[c] {
                    row_pat[i].retain(|&x| x != c);
                }
                col[c].clear();
                singular_cols.push(c);
                continue;
            }
            let mut best = usize::MAX;
            let mut best_key = (usize::MAX, 0.0f64, usize::MAX);
            for (k, &(i, a)) in col[c].iter().enumerate() {
                if a.abs() < PIVOT_THRESHOLD * amax {
                    continue;
                }
                let rc = row_pat[i].len();
                let better = rc < best_key.0
                    || (rc == best_key.0 && a.abs() > best_key.1)
                    || (rc == best_key.0 && a.abs() == best_key.1 && i < best_key.2);
                if better {
                    best = k;
                    best_key = (rc, a.abs(), i);
                }
            }
            let (r, piv) = col[c][best];

            l_entries.clear();
            l_entries.extend(col[c].iter().filter(|e| e.0 != r).map(|&(i, a)| (i, a / piv)));

            urow_cols.clear();
            urow_cols.extend(row_pat[r].iter().copied().filter(|&x| x != c));
            for &c2 in &urow_cols {
                set.remove(&(col[c2].len(), c2));
                let k = col[c2]
                    .iter()
                    .position(|e| e.0 == r)
                    .expect("row pattern out of sync");
                let (_, u) = col[c2].swap_remove(k);
                lu.ur_idx.push(c2);
                lu.ur_val.push(u);
                if u != 0.0 && !l_entries.is_empty() {
                    for (k, e) in col[c2].iter().enumerate() {
                        mark[e.0] = k;
                    }
                    for &(i, l) in &l_entries {
                        let delta = -l * u;
                        if mark[i] != usize::MAX {
                            col[c2][mark[i]].1 += delta;
                        } else {
                            mark[i] = col[c2].len();
                            col[c2].push((i, delta));
                            row_pat[i].push(c2);
                        }
                    }
                    for e in &col[c2] {
                        mark[e.0] = usize::MAX;
                    }
                }
                set.insert((col[c2].len(), c2));
            }
            for &(i, _) in &l_entries {
                row_pat[i].retain(|&x| x != c);
            }
            row_pat[r].clear();
            row_done[r] = true;
            col[c].clear();

            lu.piv_row.push(r);
            lu.piv_col.push(c);
            lu.piv_val.push(piv);
            lu.ur_start.push(lu.ur_idx.len());
            if !l_entries.is_empty() {
                lu.l_row.push(r);
                for &(i, l) in &l_entries {
                    lu.l_idx.push(i);
                    lu.l_val.push(l);
                }
                lu.l_start.push(lu.l_idx.len());
            }
        }

        if !singular_cols.is_empty() {
            let free_rows: Vec<usize> = (0..m).filter(|&r| !row_done[r]).collect();
            return Err(Singular {
                pairs: singular_cols.into_iter().zip(free_rows).collect(),
            });
        }

        // column-wise copy of U indexed by pivot step
        let mut step_of = vec![0usize; m];
        for (k, &c) in lu.piv_col.iter().enumerate() {
            step_of[c] = k;
        }
        let mut counts = vec![0usize; m + 1];
        for &c in &lu.ur_idx {
            counts[step_of[c] + 1] += 1;
        }
        for k in 0..m {
            counts[k + 1] += counts[k];
        }
        lu.uc_start = counts.clone();
        lu.uc_idx = vec![0; lu.ur_idx.len()];
        lu.uc_val = vec![0.0; lu.ur_idx.len()];
        let mut fill = counts;
        for k in 0..m {
            let r = lu.piv_row[k];
            for e in lu.ur_start[k]..lu.ur_start[k + 1] {
                let s = step_of[lu.ur_idx[e]];
                lu.uc_idx[fill[s]] = r;
                lu.uc_val[fill[s]] = lu.ur_val[e];
                fill[s] += 1;
            }
        }
        Ok(lu)
    }

    pub fn updates(&self) -> usize {
        self.e_pos.len()
    }

    pub fn update_nnz(&self) -> usize {
        self.e_idx.len()
    }

    /// Records that basis position `pos` now holds a column whose FTRAN
    /// image (against the current basis) is `alpha`.
    pub fn push_update(&mut self, pos: usize, alpha: &[f64]) {
        self.e_pos.push(pos);
        self.e_piv.push(alpha[pos]);
        for (i, &a) in alpha.iter().enumerate() {
            if i != pos && a != 0.0 {
                self.e_idx.push(i);
                self.e_val.push(a);
            }
        }
        self.e_start.push(self.e_idx.len());
    }

    /// Solves `B y = b`. `work` holds `b` by row and is left zeroed; `out`
    /// receives `y` by basis position.
    pub fn ftran(&self, work: &mut [f64], out: &mut [f64]) {
        for (e, &r) in self.l_row.iter().enumerate() {
            let v = work[r];
            if v != 0.0 {
                for k in self.l_start[e]..self.l_start[e + 1] {
                    work[self.l_idx[k]] -= self.l_val[k] * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let r = self.piv_row[k];
            let w = work[r];
            work[r] = 0.0;
            let y = w / self.piv_val[k];
            out[self.piv_col[k]] = y;
            if y != 0.0 {
                for e in self.uc_start[k]..self.uc_start[k + 1] {
                    work[self.uc_idx[e]] -= self.uc_val[e] * y;
                }
            }
        }
        for (e, &p) in self.e_pos.iter().enumerate() {
            let yp = out[p] / self.e_piv[e];
            out[p] = yp;
            if yp != 0.0 {
                for k in self.e_start[e]..self.e_start[e + 1] {
                    out[self.e_idx[k]] -= self.e_val[k] * yp;
                }
            }
        }
    }

    /// Solves `B^T z = e`. `work` holds `e` by basis position and is left
    /// zeroed; `out` receives `z` by row.
    pub fn btran(&self, work: &mut [f64], out: &mut [f64]) {
        for e in (0..self.e_pos.len()).rev() {
            let p = self.e_pos[e];
            let mut s = work[p];
            for k in self.e_start[e]..self.e_start[e + 1] {
                s -= self.e_val[k] * work[self.e_idx[k]];
            }
            work[p] = s / self.e_piv[e];
        }
        for k in 0..self.m {
            let c = self.piv_col[k];
            let w = work[c];
            work[c] = 0.0;
            let g = w / self.piv_val[k];
            out[self.piv_row[k]] = g;
            if g != 0.0 {
                for e in self.ur_start[k]..self.ur_start[k + 1] {
                    work[self.ur_idx[e]] -= self.ur_val[e] * g;
                }
            }
        }
        for e in (0..self.l_row.len()).rev() {
            let r = self.l_row[e];
            let mut s = out[r];
            for k in self.l_start[e]..self.l_start[e + 1] {
                s -= self.l_val[k] * out[self.l_idx[k]];
            }
            out[r] = s;
        }
    }
}
