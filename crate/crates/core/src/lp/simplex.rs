use super::lu::Lu;
use super::{LinearProgram, LpOptions, LpSolution, LpStatus};

const NONE: usize = usize::MAX;
const PIVOT_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 100;
const BLAND_AFTER: usize = 1000;
/// Stand-in for an infinite bound that would make the starting basis dual
/// infeasible. Removed again before the primal cleanup phase.
const ARTIFICIAL_BOUND: f64 = 1e6;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum VarStatus {
    Basic,
    Lower,
    Upper,
    /// Nonbasic away from both bounds (free variables, or a variable whose
    /// artificial bound was lifted).
    Free,
}

/// Basis statuses sufficient to warm-start a solve after bound changes.
#[derive(Clone, Debug)]
pub struct BasisSnapshot {
    status: Vec<VarStatus>,
    basis: Vec<usize>,
}

enum Step {
    Done,
    Infeasible,
    Unbounded,
    Limit,
}

/// Revised simplex state over structural columns `0..n` and logical
/// columns `n..n+m` (logical `n+i` has column `-e_i`).
pub struct Simplex {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    col_idx: Vec<usize>,
    col_val: Vec<f64>,
    row_start: Vec<usize>,
    row_idx: Vec<usize>,
    row_val: Vec<f64>,
    orig_cost: Vec<f64>,
    cost: Vec<f64>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    user_lo: Vec<f64>,
    user_hi: Vec<f64>,
    artificial: bool,
    x: Vec<f64>,
    status: Vec<VarStatus>,
    basis: Vec<usize>,
    pos: Vec<usize>,
    d: Vec<f64>,
    dse: Vec<f64>,
    /// primal infeasibility of the basic variable at each position, kept
    /// current inside the dual loop
    pinf: Vec<f64>,
    lu: Lu,
    fresh: bool,
    needs_factor: bool,
    primal_stale: bool,
    opts: LpOptions,
    iterations: usize,
    last_status: LpStatus,
    bland: bool,
    degenerate_run: usize,
    // scratch
    w_rows: Vec<f64>,
    w_pos: Vec<f64>,
    alpha_row: Vec<f64>,
    row_nz: Vec<usize>,
    row_mark: Vec<bool>,
}

impl Simplex {
    pub fn new(lp: &LinearProgram, opts: LpOptions) -> Self {
        let n = lp.num_cols();
        let m = lp.num_rows();
        let mut row_start = vec![0];
        let mut row_idx = Vec::new();
        let mut row_val = Vec::new();
        let mut counts = vec![0usize; n + 1];
        for r in &lp.rows {
            for &(j, a) in r {
                row_idx.push(j);
                row_val.push(a);
                counts[j + 1] += 1;
            }
            row_start.push(row_idx.len());
        }
        for j in 0..n {
            counts[j + 1] += counts[j];
        }
        let col_start = counts.clone();
        let mut fill = counts;
        let mut col_idx = vec![0; row_idx.len()];
        let mut col_val = vec![0.0; row_idx.len()];
        for i in 0..m {
            for k in row_start[i]..row_start[i + 1] {
                let j = row_idx[k];
                col_idx[fill[j]] = i;
                col_val[fill[j]] = row_val[k];
                fill[j] += 1;
            }
        }
        let mut cost = lp.cost.clone();
        cost.resize(n + m, 0.0);
        let mut user_lo = lp.lower.clone();
        user_lo.extend_from_slice(&lp.row_lower);
        let mut user_hi = lp.upper.clone();
        user_hi.extend_from_slice(&lp.row_upper);

        let mut s = Simplex {
            n,
            m,
            col_start,
            col_idx,
            col_val,
            row_start,
            row_idx,
            row_val,
            orig_cost: lp.cost.clone(),
            cost,
            lo: user_lo.clone(),
            hi: user_hi.clone(),
            user_lo,
            user_hi,
            artificial: false,
            x: vec![0.0; n + m],
            status: vec![VarStatus::Lower; n + m],
            basis: (n..n + m).collect(),
            pos: vec![NONE; n + m],
            d: vec![0.0; n + m],
            dse: vec![1.0; m],
            pinf: vec![0.0; m],
            lu: Lu::default(),
            fresh: false,
            needs_factor: true,
            primal_stale: true,
            opts,
            iterations: 0,
            last_status: LpStatus::IterationLimit,
            bland: false,
            degenerate_run: 0,
            w_rows: vec![0.0; m],
            w_pos: vec![0.0; m],
            alpha_row: vec![0.0; n + m],
            row_nz: Vec::new(),
            row_mark: vec![false; n + m],
        };
        for p in 0..m {
            s.pos[n + p] = p;
            s.status[n + p] = VarStatus::Basic;
        }
        for j in 0..n {
            s.place_dual_feasible(j);
        }
        s
    }

    pub fn num_cols(&self) -> usize {
        self.n
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn status(&self) -> LpStatus {
        self.last_status
    }

    /// Puts nonbasic `j` at the bound its cost prefers, boxing infinite
    /// bounds artificially when needed.
    fn place_dual_feasible(&mut self, j: usize) {
        let (l, u) = (self.user_lo[j], self.user_hi[j]);
        self.lo[j] = l;
        self.hi[j] = u;
        let c = self.cost[j];
        if c > 0.0 || (c == 0.0 && l.is_finite()) {
            if !l.is_finite() {
                self.lo[j] = u.min(0.0) - ARTIFICIAL_BOUND;
                self.artificial = true;
            }
            self.status[j] = VarStatus::Lower;
            self.x[j] = self.lo[j];
        } else if c < 0.0 || u.is_finite() {
            if !u.is_finite() {
                self.hi[j] = l.max(0.0) + ARTIFICIAL_BOUND;
                self.artificial = true;
            }
            self.status[j] = VarStatus::Upper;
            self.x[j] = self.hi[j];
        } else {
            self.status[j] = VarStatus::Free;
            self.x[j] = 0.0;
        }
    }

    /// Changes the bounds of structural column `j`, keeping the basis.
    pub fn set_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.user_lo[j] = lo;
        self.user_hi[j] = hi;
        self.lo[j] = lo;
        self.hi[j] = hi;
        match self.status[j] {
            VarStatus::Basic => {}
            VarStatus::Lower if lo.is_finite() => self.x[j] = lo,
            VarStatus::Upper if hi.is_finite() => self.x[j] = hi,
            VarStatus::Free => self.x[j] = self.x[j].clamp(lo, hi),
            _ => self.place_dual_feasible(j),
        }
        self.primal_stale = true;
        self.fresh = false;
    }

    pub fn bounds(&self, j: usize) -> (f64, f64) {
        (self.user_lo[j], self.user_hi[j])
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            status: self.status.clone(),
            basis: self.basis.clone(),
        }
    }

    /// Reinstates a saved basis; the next `solve` refactors.
    pub fn restore(&mut self, snap: &BasisSnapshot) {
        self.status.clone_from(&snap.status);
        self.basis.clone_from(&snap.basis);
        self.pos.iter_mut().for_each(|p| *p = NONE);
        for (p, &v) in self.basis.iter().enumerate() {
            self.pos[v] = p;
        }
        for j in 0..self.n + self.m {
            match self.status[j] {
                VarStatus::Basic => {}
                VarStatus::Lower => self.x[j] = self.lo[j],
                VarStatus::Upper => self.x[j] = self.hi[j],
                VarStatus::Free => self.x[j] = 0.0f64.clamp(self.lo[j], self.hi[j]),
            }
            if self.status[j] != VarStatus::Basic && !self.x[j].is_finite() {
                self.place_dual_feasible(j);
            }
        }
        self.dse.iter_mut().for_each(|w| *w = 1.0);
        self.needs_factor = true;
        self.fresh = false;
    }

    fn scatter_column(&self, j: usize, out: &mut [f64], scale: f64) {
        if j < self.n {
            for k in self.col_start[j]..self.col_start[j + 1] {
                out[self.col_idx[k]] += scale * self.col_val[k];
            }
        } else {
            out[j - self.n] -= scale;
        }
    }

    fn column_entries(&self, j: usize) -> Vec<(usize, f64)> {
        if j < self.n {
            (self.col_start[j]..self.col_start[j + 1])
                .map(|k| (self.col_idx[k], self.col_val[k]))
                .collect()
        } else {
            vec![(j - self.n, -1.0)]
        }
    }

    fn nonbasic_at_bound(&mut self, j: usize) {
        let (l, u) = (self.lo[j], self.hi[j]);
        let v = self.x[j];
        if l.is_finite() && (!u.is_finite() || (v - l).abs() <= (u - v).abs()) {
            self.status[j] = VarStatus::Lower;
            self.x[j] = l;
        } else if u.is_finite() {
            self.status[j] = VarStatus::Upper;
            self.x[j] = u;
        } else {
            self.status[j] = VarStatus::Free;
        }
    }

    fn refactor(&mut self) {
        loop {
            let cols: Vec<Vec<(usize, f64)>> = self.basis.iter().map(|&v| self.column_entries(v)).collect();
            match Lu::factor(self.m, cols) {
                Ok(lu) => {
                    self.lu = lu;
                    break;
                }
                Err(sing) => {
                    log::debug!("basis singular, repairing {} columns", sing.pairs.len());
                    for (p, row) in sing.pairs {
                        let old = self.basis[p];
                        self.pos[old] = NONE;
                        self.nonbasic_at_bound(old);
                        let new = self.n + row;
                        self.basis[p] = new;
                        self.pos[new] = p;
                        self.status[new] = VarStatus::Basic;
                        self.dse[p] = 1.0;
                    }
                }
            }
        }
        self.needs_factor = false;
        self.compute_primal();
        self.compute_duals();
        self.fresh = true;
    }

    fn compute_primal(&mut self) {
        let mut rhs = std::mem::take(&mut self.w_rows);
        rhs.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n + self.m {
            if self.status[j] != VarStatus::Basic && self.x[j] != 0.0 {
                self.scatter_column(j, &mut rhs, -self.x[j]);
            }
        }
        let mut xb = std::mem::take(&mut self.w_pos);
        self.lu.ftran(&mut rhs, &mut xb);
        for p in 0..self.m {
            self.x[self.basis[p]] = xb[p];
        }
        self.w_rows = rhs;
        self.w_pos = xb;
        self.primal_stale = false;
        self.refresh_pinf();
    }

    fn refresh_pinf(&mut self) {
        for p in 0..self.m {
            self.pinf[p] = self.primal_infeasibility(self.basis[p]);
        }
    }

    fn btran_costs(&mut self) -> Vec<f64> {
        let mut cb: Vec<f64> = self.basis.iter().map(|&v| self.cost[v]).collect();
        let mut pi = vec![0.0; self.m];
        self.lu.btran(&mut cb, &mut pi);
        pi
    }

    fn compute_duals(&mut self) {
        let pi = self.btran_costs();
        for j in 0..self.n {
            if self.status[j] == VarStatus::Basic {
                self.d[j] = 0.0;
                continue;
            }
            let mut s = self.cost[j];
            for k in self.col_start[j]..self.col_start[j + 1] {
                s -= pi[self.col_idx[k]] * self.col_val[k];
            }
            self.d[j] = s;
        }
        for i in 0..self.m {
            let j = self.n + i;
            self.d[j] = if self.status[j] == VarStatus::Basic { 0.0 } else { pi[i] };
        }
    }

    fn ftran_col(&mut self, j: usize) -> Vec<f64> {
        let mut rhs = std::mem::take(&mut self.w_rows);
        self.scatter_column(j, &mut rhs, 1.0);
        let mut out = vec![0.0; self.m];
        self.lu.ftran(&mut rhs, &mut out);
        self.w_rows = rhs;
        out
    }

    fn btran_unit(&mut self, r: usize) -> Vec<f64> {
        let mut e = std::mem::take(&mut self.w_pos);
        e.iter_mut().for_each(|v| *v = 0.0);
        e[r] = 1.0;
        let mut rho = vec![0.0; self.m];
        self.lu.btran(&mut e, &mut rho);
        self.w_pos = e;
        rho
    }

    /// `alpha_row[j] = rho . a_j` for every column; nonzero indices are
    /// left in `row_nz`.
    fn compute_pivot_row(&mut self, rho: &[f64]) {
        for &j in &self.row_nz {
            self.alpha_row[j] = 0.0;
            self.row_mark[j] = false;
        }
        self.row_nz.clear();
        for (i, &ri) in rho.iter().enumerate() {
            if ri == 0.0 {
                continue;
            }
            for k in self.row_start[i]..self.row_start[i + 1] {
                let j = self.row_idx[k];
                if !self.row_mark[j] {
                    self.row_mark[j] = true;
                    self.row_nz.push(j);
                }
                self.alpha_row[j] += ri * self.row_val[k];
            }
            let lj = self.n + i;
            self.row_mark[lj] = true;
            self.row_nz.push(lj);
            self.alpha_row[lj] = -ri;
        }
    }

    fn primal_infeasibility(&self, v: usize) -> f64 {
        let x = self.x[v];
        if x < self.lo[v] - self.opts.feas_tol {
            self.lo[v] - x
        } else if x > self.hi[v] + self.opts.feas_tol {
            x - self.hi[v]
        } else {
            0.0
        }
    }

    /// Sign-clipped reduced cost magnitude as seen by the dual ratio test.
    fn clipped_d(&self, j: usize) -> f64 {
        match self.status[j] {
            VarStatus::Lower => self.d[j].max(0.0),
            VarStatus::Upper => (-self.d[j]).max(0.0),
            _ => 0.0,
        }
    }

    fn flip_wrong_sign_duals(&mut self) {
        let tol = self.opts.opt_tol;
        let mut flipped = false;
        for j in 0..self.n + self.m {
            match self.status[j] {
                VarStatus::Lower if self.d[j] < -tol && self.hi[j].is_finite() && self.hi[j] > self.lo[j] => {
                    self.status[j] = VarStatus::Upper;
                    self.x[j] = self.hi[j];
                    flipped = true;
                }
                VarStatus::Upper if self.d[j] > tol && self.lo[j].is_finite() && self.hi[j] > self.lo[j] => {
                    self.status[j] = VarStatus::Lower;
                    self.x[j] = self.lo[j];
                    flipped = true;
                }
                _ => {}
            }
        }
        if flipped {
            self.compute_primal();
        }
    }

    fn note_pivot(&mut self, degenerate: bool) {
        self.iterations += 1;
        if degenerate {
            self.degenerate_run += 1;
            if self.degenerate_run > BLAND_AFTER {
                self.bland = true;
            }
        } else {
            self.degenerate_run = 0;
            self.bland = false;
        }
    }

    fn run_dual(&mut self, iter_cap: usize) -> Step {
        self.refresh_pinf();
        loop {
            if self.iterations >= iter_cap {
                return Step::Limit;
            }
            if self.needs_factor || self.lu.updates() >= REFACTOR_EVERY || self.lu.update_nnz() > 20 * self.m + 1000 {
                self.refactor();
            }
            if self.primal_stale {
                self.compute_primal();
            }

            // leaving row
            let mut r = NONE;
            let mut best = 0.0;
            for p in 0..self.m {
                let inf = self.pinf[p];
                if inf <= 0.0 {
                    continue;
                }
                let v = self.basis[p];
                if self.bland {
                    if r == NONE || v < self.basis[r] {
                        r = p;
                    }
                } else {
                    let score = inf * inf / self.dse[p];
                    if score > best {
                        best = score;
                        r = p;
                    }
                }
            }
            if r == NONE {
                if self.fresh {
                    return Step::Done;
                }
                self.refactor();
                continue;
            }
            let leave = self.basis[r];
            let below = self.x[leave] < self.lo[leave];
            let (s, bound) = if below { (1.0, self.lo[leave]) } else { (-1.0, self.hi[leave]) };
            let mut slope = (self.x[leave] - bound).abs();

            let rho = self.btran_unit(r);
            self.compute_pivot_row(&rho);

            // candidates: (ratio, j)
            let mut cands: Vec<(f64, usize)> = Vec::new();
            for &j in &self.row_nz {
                let st = self.status[j];
                if st == VarStatus::Basic || self.lo[j] == self.hi[j] {
                    continue;
                }
                let a = self.alpha_row[j];
                let sa = s * a;
                let ok = match st {
                    VarStatus::Lower => sa < -PIVOT_TOL,
                    VarStatus::Upper => sa > PIVOT_TOL,
                    VarStatus::Free => a.abs() > PIVOT_TOL,
                    VarStatus::Basic => false,
                };
                if ok {
                    cands.push((self.clipped_d(j) / a.abs(), j));
                }
            }
            if cands.is_empty() {
                if self.fresh {
                    return Step::Infeasible;
                }
                self.refactor();
                continue;
            }
            cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

            let tol_d = if self.bland { 0.0 } else { self.opts.opt_tol };
            let mut flips: Vec<usize> = Vec::new();
            let mut start = 0;
            let entering;
            loop {
                if start >= cands.len() {
                    entering = NONE;
                    break;
                }
                let mut tmax = f64::INFINITY;
                let mut end = start;
                while end < cands.len() && cands[end].0 <= tmax {
                    let j = cands[end].1;
                    tmax = tmax.min((self.clipped_d(j) + tol_d) / self.alpha_row[j].abs());
                    end += 1;
                }
                let group: Vec<usize> = cands[start..end]
                    .iter()
                    .filter(|c| c.0 <= tmax)
                    .map(|c| c.1)
                    .collect();
                let mut dec = 0.0;
                for &j in &group {
                    let range = self.hi[j] - self.lo[j];
                    dec += self.alpha_row[j].abs() * range;
                }
                if !self.bland && dec.is_finite() && slope - dec > 0.0 {
                    slope -= dec;
                    flips.extend_from_slice(&group);
                    start = end;
                    continue;
                }
                let pick = if self.bland {
                    *group.iter().min().expect("nonempty group")
                } else {
                    let mut q = group[0];
                    for &j in &group[1..] {
                        let (aj, aq) = (self.alpha_row[j].abs(), self.alpha_row[q].abs());
                        if aj > aq || (aj == aq && j < q) {
                            q = j;
                        }
                    }
                    q
                };
                entering = pick;
                break;
            }
            if entering == NONE {
                if self.fresh {
                    return Step::Infeasible;
                }
                self.refactor();
                continue;
            }
            let q = entering;
            let alpha_col = self.ftran_col(q);
            let arq = alpha_col[r];
            let diff = (arq - self.alpha_row[q]).abs();
            if diff > 1e-7 * (1.0 + arq.abs()) || arq.abs() < PIVOT_TOL {
                if !self.fresh {
                    self.refactor();
                    continue;
                }
                log::debug!("pivot mismatch {diff:e} on a fresh factorization");
            }

            // dual step
            let dq = match self.status[q] {
                VarStatus::Lower => self.d[q].max(0.0),
                VarStatus::Upper => self.d[q].min(0.0),
                _ => 0.0,
            };
            let theta_d = dq / self.alpha_row[q];
            if theta_d != 0.0 {
                for &j in &self.row_nz {
                    if self.status[j] != VarStatus::Basic {
                        self.d[j] -= theta_d * self.alpha_row[j];
                    }
                }
            }
            self.d[leave] = -theta_d;
            self.d[q] = 0.0;

            // bound flips
            if !flips.is_empty() {
                let mut rhs = std::mem::take(&mut self.w_rows);
                for &j in &flips {
                    let (from, to, st) = match self.status[j] {
                        VarStatus::Lower => (self.lo[j], self.hi[j], VarStatus::Upper),
                        _ => (self.hi[j], self.lo[j], VarStatus::Lower),
                    };
                    self.status[j] = st;
                    self.x[j] = to;
                    self.scatter_column(j, &mut rhs, to - from);
                }
                let mut dx = vec![0.0; self.m];
                self.lu.ftran(&mut rhs, &mut dx);
                self.w_rows = rhs;
                for p in 0..self.m {
                    if dx[p] != 0.0 {
                        let v = self.basis[p];
                        self.x[v] -= dx[p];
                        self.pinf[p] = self.primal_infeasibility(v);
                    }
                }
            }

            // primal step
            let step = (self.x[leave] - bound) / arq;
            if step != 0.0 {
                for p in 0..self.m {
                    let a = alpha_col[p];
                    if a != 0.0 {
                        let v = self.basis[p];
                        self.x[v] -= step * a;
                        self.pinf[p] = self.primal_infeasibility(v);
                    }
                }
            }
            self.x[q] += step;
            self.x[leave] = bound;

            // steepest-edge weights
            let mut rho_rows = rho.clone();
            let mut tau = vec![0.0; self.m];
            self.lu.ftran(&mut rho_rows, &mut tau);
            let wr = rho.iter().map(|v| v * v).sum::<f64>();
            for p in 0..self.m {
                if p == r {
                    continue;
                }
                let a = alpha_col[p];
                if a != 0.0 {
                    let ratio = a / arq;
                    let w = self.dse[p] - 2.0 * ratio * tau[p] + ratio * ratio * wr;
                    self.dse[p] = w.max(1e-8);
                }
            }
            self.dse[r] = (wr / (arq * arq)).max(1e-8);

            self.basis[r] = q;
            self.pos[q] = r;
            self.pos[leave] = NONE;
            self.status[q] = VarStatus::Basic;
            self.status[leave] = if below { VarStatus::Lower } else { VarStatus::Upper };
            self.pinf[r] = self.primal_infeasibility(q);
            self.lu.push_update(r, &alpha_col);
            self.fresh = false;
            self.note_pivot(theta_d.abs() < 1e-12);
        }
    }

    fn run_primal(&mut self, iter_cap: usize) -> Step {
        loop {
            if self.iterations >= iter_cap {
                return Step::Limit;
            }
            if self.needs_factor || self.lu.updates() >= REFACTOR_EVERY {
                self.refactor();
            }
            let tol = self.opts.opt_tol;
            let mut q = NONE;
            let mut best = 0.0;
            for j in 0..self.n + self.m {
                let dj = self.d[j];
                let improving = match self.status[j] {
                    VarStatus::Basic => false,
                    VarStatus::Lower => dj < -tol && self.hi[j] > self.lo[j],
                    VarStatus::Upper => dj > tol && self.hi[j] > self.lo[j],
                    VarStatus::Free => dj.abs() > tol,
                };
                if !improving {
                    continue;
                }
                if self.bland {
                    q = j;
                    break;
                }
                if dj.abs() > best {
                    best = dj.abs();
                    q = j;
                }
            }
            if q == NONE {
                if self.fresh {
                    return Step::Done;
                }
                self.refactor();
                continue;
            }
            let dir = if self.d[q] < 0.0 { 1.0 } else { -1.0 };
            let alpha_col = self.ftran_col(q);

            let own = if dir > 0.0 { self.hi[q] - self.x[q] } else { self.x[q] - self.lo[q] };
            let ftol = if self.bland { 0.0 } else { self.opts.feas_tol };
            let mut tmax = own.max(0.0);
            for p in 0..self.m {
                let a = alpha_col[p];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let v = self.basis[p];
                let rate = -dir * a;
                let lim = if rate < 0.0 { self.x[v] - self.lo[v] } else { self.hi[v] - self.x[v] };
                if lim.is_finite() {
                    tmax = tmax.min((lim.max(0.0) + ftol) / rate.abs());
                }
            }
            if !tmax.is_finite() {
                return Step::Unbounded;
            }
            if own <= tmax {
                // entering variable reaches its own opposite bound
                let t = own.max(0.0);
                for p in 0..self.m {
                    let a = alpha_col[p];
                    if a != 0.0 {
                        self.x[self.basis[p]] -= dir * t * a;
                    }
                }
                if dir > 0.0 {
                    self.x[q] = self.hi[q];
                    self.status[q] = VarStatus::Upper;
                } else {
                    self.x[q] = self.lo[q];
                    self.status[q] = VarStatus::Lower;
                }
                self.fresh = false;
                self.note_pivot(t == 0.0);
                continue;
            }
            let mut r = NONE;
            let mut r_ratio = 0.0;
            for p in 0..self.m {
                let a = alpha_col[p];
                if a.abs() <= PIVOT_TOL {
                    continue;
                }
                let v = self.basis[p];
                let rate = -dir * a;
                let lim = if rate < 0.0 { self.x[v] - self.lo[v] } else { self.hi[v] - self.x[v] };
                if !lim.is_finite() {
                    continue;
                }
                let ratio = lim.max(0.0) / rate.abs();
                if ratio > tmax {
                    continue;
                }
                let better = if r == NONE {
                    true
                } else if self.bland {
                    ratio < r_ratio || (ratio == r_ratio && v < self.basis[r])
                } else {
                    a.abs() > alpha_col[r].abs()
                };
                if better {
                    r = p;
                    r_ratio = ratio;
                }
            }
            let leave = self.basis[r];
            let rate = -dir * alpha_col[r];
            let to_lower = rate < 0.0;
            let bound = if to_lower { self.lo[leave] } else { self.hi[leave] };
            let t = r_ratio;
            for p in 0..self.m {
                let a = alpha_col[p];
                if a != 0.0 {
                    self.x[self.basis[p]] -= dir * t * a;
                }
            }
            self.x[q] += dir * t;
            self.x[leave] = bound;

            let rho = self.btran_unit(r);
            self.compute_pivot_row(&rho);
            let arq = alpha_col[r];
            let theta_d = self.d[q] / arq;
            for &j in &self.row_nz {
                if self.status[j] != VarStatus::Basic {
                    self.d[j] -= theta_d * self.alpha_row[j];
                }
            }
            self.d[leave] = -theta_d;
            self.d[q] = 0.0;

            self.basis[r] = q;
            self.pos[q] = r;
            self.pos[leave] = NONE;
            self.status[q] = VarStatus::Basic;
            self.status[leave] = if to_lower { VarStatus::Lower } else { VarStatus::Upper };
            self.dse[r] = 1.0;
            self.lu.push_update(r, &alpha_col);
            self.fresh = false;
            self.note_pivot(t == 0.0);
        }
    }

    /// Lifts artificial bounds; nonbasic columns sitting on one become free.
    fn lift_artificial(&mut self) {
        if !self.artificial {
            return;
        }
        self.artificial = false;
        for j in 0..self.n {
            let was = (self.lo[j], self.hi[j]);
            self.lo[j] = self.user_lo[j];
            self.hi[j] = self.user_hi[j];
            if (was.0 != self.lo[j] || was.1 != self.hi[j]) && self.status[j] != VarStatus::Basic {
                let on_lo = self.status[j] == VarStatus::Lower && !self.lo[j].is_finite();
                let on_hi = self.status[j] == VarStatus::Upper && !self.hi[j].is_finite();
                if on_lo || on_hi {
                    self.status[j] = VarStatus::Free;
                }
            }
        }
    }

    pub fn solve(&mut self) -> LpStatus {
        let cap = self.iterations.saturating_add(self.opts.iter_limit);
        if self.user_lo.iter().zip(&self.user_hi).any(|(l, u)| l > u) {
            self.last_status = LpStatus::Infeasible;
            return self.last_status;
        }
        if self.needs_factor {
            self.refactor();
        }
        let mut status = LpStatus::IterationLimit;
        for _round in 0..8 {
            self.flip_wrong_sign_duals();
            match self.run_dual(cap) {
                Step::Done => {}
                Step::Infeasible => {
                    status = LpStatus::Infeasible;
                    break;
                }
                Step::Limit => {
                    status = LpStatus::IterationLimit;
                    break;
                }
                Step::Unbounded => unreachable!(),
            }
            self.lift_artificial();
            match self.run_primal(cap) {
                Step::Done => {}
                Step::Unbounded => {
                    status = LpStatus::Unbounded;
                    break;
                }
                Step::Limit => {
                    status = LpStatus::IterationLimit;
                    break;
                }
                Step::Infeasible => unreachable!(),
            }
            if !self.fresh {
                self.refactor();
            }
            let primal_ok = self.basis.iter().all(|&v| self.primal_infeasibility(v) == 0.0);
            if primal_ok {
                status = LpStatus::Optimal;
                break;
            }
        }
        self.last_status = status;
        status
    }

    pub fn x(&self) -> &[f64] {
        &self.x[..self.n]
    }

    pub fn objective(&self) -> f64 {
        self.orig_cost.iter().zip(&self.x).map(|(c, v)| c * v).sum()
    }

    pub fn solution(&mut self) -> LpSolution {
        let pi = if self.m > 0 { self.btran_costs() } else { Vec::new() };
        LpSolution {
            status: self.last_status,
            x: self.x[..self.n].to_vec(),
            row_duals: pi.clone(),
            reduced_costs: (0..self.n)
                .map(|j| {
                    let mut s = self.cost[j];
                    for k in self.col_start[j]..self.col_start[j + 1] {
                        s -= pi[self.col_idx[k]] * self.col_val[k];
                    }
                    s
                })
                .collect(),
            objective: self.objective(),
            iterations: self.iterations,
        }
    }
}
