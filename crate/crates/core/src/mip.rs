//! Branch-and-bound over warm-started LP relaxations.
//!
//! The search dives depth-first (rounding direction first) until an
//! incumbent exists, then switches to best-bound order. Every node restarts
//! the dual simplex from its parent's basis, so only bound changes separate
//! consecutive solves. Branching picks the most fractional binary with ties
//! going to the lowest column index, which keeps runs reproducible.

use crate::lp::{BasisSnapshot, LinearProgram, LpOptions, LpStatus, Simplex};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::rc::Rc;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct MipProblem {
    pub lp: LinearProgram,
    /// Columns restricted to {0, 1}; their bounds must lie within [0, 1].
    pub binaries: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct MipOptions {
    pub gap_tol: f64,
    pub time_limit: Option<Duration>,
    pub node_limit: Option<usize>,
    pub int_tol: f64,
    /// Run the fix-and-dive heuristic at the root for an early incumbent.
    pub dive: bool,
    pub lp: LpOptions,
}

impl Default for MipOptions {
    fn default() -> Self {
        MipOptions {
            gap_tol: 1e-4,
            time_limit: None,
            node_limit: None,
            int_tol: 1e-6,
            dive: true,
            lp: LpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MipStatus {
    Optimal,
    /// Stopped at a limit with an incumbent in hand.
    Feasible,
    Infeasible,
    /// Stopped at a limit without any incumbent.
    Limit,
}

#[derive(Debug, Clone)]
pub struct MipSolution {
    pub status: MipStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub bound: f64,
    pub gap: f64,
    pub nodes: usize,
    pub lp_iterations: usize,
    /// `(node, objective)` each time the incumbent improved.
    pub incumbent_history: Vec<(usize, f64)>,
}

impl MipSolution {
    pub fn has_incumbent(&self) -> bool {
        matches!(self.status, MipStatus::Optimal | MipStatus::Feasible)
    }
}

pub fn relative_gap(incumbent: f64, bound: f64) -> f64 {
    ((incumbent - bound) / incumbent.abs().max(1.0)).max(0.0)
}

struct Node {
    bound: f64,
    seq: usize,
    fixes: Vec<(usize, bool)>,
    basis: Rc<BasisSnapshot>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // max-heap: smallest bound first, then oldest
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(other.seq.cmp(&self.seq))
    }
}

struct Search<'a> {
    prob: &'a MipProblem,
    opts: &'a MipOptions,
    lp: Simplex,
    root_bounds: Vec<(f64, f64)>,
    incumbent: Option<(f64, Vec<f64>)>,
    history: Vec<(usize, f64)>,
    nodes: usize,
    incomplete: bool,
}

impl Search<'_> {
    fn apply(&mut self, fixes: &[(usize, bool)]) {
        let mut want = self.root_bounds.clone();
        for &(k, v) in fixes {
            let b = if v { 1.0 } else { 0.0 };
            want[k] = (b, b);
        }
        for (k, &j) in self.prob.binaries.iter().enumerate() {
            if self.lp.bounds(j) != want[k] {
                self.lp.set_bounds(j, want[k].0, want[k].1);
            }
        }
    }

    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((z, _)) => z - self.opts.gap_tol * z.abs().max(1.0),
            None => f64::INFINITY,
        }
    }

    /// Most fractional binary (position in `binaries`), if any.
    fn branch_choice(&self) -> Option<(usize, f64)> {
        let x = self.lp.x();
        let mut best: Option<(usize, f64)> = None;
        let mut best_frac = self.opts.int_tol;
        for (k, &j) in self.prob.binaries.iter().enumerate() {
            let f = (x[j] - x[j].floor()).min(x[j].ceil() - x[j]);
            if f > best_frac {
                best_frac = f;
                best = Some((k, x[j]));
            }
        }
        best
    }

    /// Fix-and-dive from the current node: every binary that is already
    /// integral plus a quarter of the fractional ones (least fractional
    /// first) get fixed at their rounded values, then the LP is re-solved.
    /// A failed batch falls back to fixing a single binary either way. The
    /// tree itself is untouched; this only seeds the incumbent.
    fn dive(&mut self, fixes: &[(usize, bool)], deadline: Option<Instant>) {
        let snap = self.lp.snapshot();
        let mut fixed: Vec<(usize, bool)> = fixes.to_vec();
        let mut is_fixed = vec![false; self.prob.binaries.len()];
        for &(k, _) in fixes {
            is_fixed[k] = true;
        }
        'outer: loop {
            if deadline.is_some_and(|d| Instant::now() >= d) {
                break;
            }
            let x = self.lp.x();
            let mut integral = Vec::new();
            let mut frac: Vec<(f64, usize, bool)> = Vec::new();
            for (k, &j) in self.prob.binaries.iter().enumerate() {
                if is_fixed[k] {
                    continue;
                }
                let r = x[j].round();
                let dist = (x[j] - r).abs();
                if dist <= self.opts.int_tol {
                    integral.push((k, r > 0.5));
                } else {
                    frac.push((dist, k, x[j] >= 0.5));
                }
            }
            if frac.is_empty() {
                self.polish(&fixed);
                break;
            }
            frac.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let batch = (frac.len() / 4).max(1);
            let mut attempts: Vec<Vec<(usize, bool)>> = Vec::new();
            let mut full = integral;
            full.extend(frac[..batch].iter().map(|f| (f.1, f.2)));
            attempts.push(full);
            attempts.push(vec![(frac[0].1, frac[0].2)]);
            attempts.push(vec![(frac[0].1, !frac[0].2)]);
            for add in attempts {
                let mut trial = fixed.clone();
                trial.extend_from_slice(&add);
                self.apply(&trial);
                if self.lp.solve() == LpStatus::Optimal && self.lp.objective() < self.cutoff() {
                    for &(k, _) in &add {
                        is_fixed[k] = true;
                    }
                    fixed = trial;
                    continue 'outer;
                }
            }
            break;
        }
        self.apply(fixes);
        self.lp.restore(&snap);
        if self.lp.solve() != LpStatus::Optimal {
            log::warn!("node relaxation changed status after diving");
        }
    }

    /// Fixes the (integral) binaries at their rounded values and re-solves
    /// the continuous part so the incumbent is exactly LP-feasible.
    fn polish(&mut self, fixes: &[(usize, bool)]) {
        let rounded: Vec<(usize, bool)> = self
            .prob
            .binaries
            .iter()
            .enumerate()
            .map(|(k, &j)| (k, self.lp.x()[j] >= 0.5))
            .collect();
        let snap = self.lp.snapshot();
        self.apply(&rounded);
        let st = self.lp.solve();
        if st == LpStatus::Optimal {
            let z = self.lp.objective();
            let better = self.incumbent.as_ref().map_or(true, |(best, _)| z < *best);
            if better {
                let mut x = self.lp.x().to_vec();
                for &j in &self.prob.binaries {
                    x[j] = x[j].round();
                }
                self.history.push((self.nodes, z));
                self.incumbent = Some((z, x));
            }
        } else {
            log::debug!("polishing an integral node gave {st:?}");
        }
        self.apply(fixes);
        self.lp.restore(&snap);
    }
}

pub fn solve_mip(prob: &MipProblem, opts: &MipOptions) -> MipSolution {
    let start = Instant::now();
    let mut binaries = prob.binaries.clone();
    binaries.sort_unstable();
    binaries.dedup();
    let prob = &MipProblem {
        lp: prob.lp.clone(),
        binaries,
    };
    let root_bounds: Vec<(f64, f64)> = prob.binaries.iter().map(|&j| prob.lp.col_bounds(j)).collect();
    debug_assert!(root_bounds.iter().all(|&(l, u)| l >= 0.0 && u <= 1.0));

    let mut s = Search {
        prob,
        opts,
        lp: Simplex::new(&prob.lp, opts.lp),
        root_bounds,
        incumbent: None,
        history: Vec::new(),
        nodes: 0,
        incomplete: false,
    };
    let mut open: BinaryHeap<Node> = BinaryHeap::new();
    let mut seq = 0usize;
    // node currently loaded in the LP when diving, or popped from the heap
    let mut current: Option<(Vec<(usize, bool)>, f64)> = Some((Vec::new(), f64::NEG_INFINITY));
    let mut hit_limit = false;

    loop {
        let (fixes, parent_bound) = match current.take() {
            Some(c) => c,
            None => {
                let Some(node) = open.pop() else { break };
                if node.bound >= s.cutoff() {
                    continue;
                }
                s.lp.restore(&node.basis);
                (node.fixes, node.bound)
            }
        };
        if opts.node_limit.is_some_and(|n| s.nodes >= n) || opts.time_limit.is_some_and(|t| start.elapsed() >= t) {
            open.push(Node {
                bound: parent_bound,
                seq,
                fixes,
                basis: Rc::new(s.lp.snapshot()),
            });
            hit_limit = true;
            break;
        }
        s.apply(&fixes);
        let st = s.lp.solve();
        s.nodes += 1;
        match st {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => continue,
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                log::warn!("node relaxation ended with {st:?}; dropping node");
                s.incomplete = true;
                continue;
            }
        }
        let z = s.lp.objective();
        if z >= s.cutoff() {
            continue;
        }
        if opts.dive && s.incumbent.is_none() && fixes.is_empty() && s.branch_choice().is_some() {
            s.dive(&fixes, opts.time_limit.map(|t| start + t));
            if z >= s.cutoff() {
                continue;
            }
        }
        match s.branch_choice() {
            None => s.polish(&fixes),
            Some((k, xv)) => {
                let up_first = xv >= 0.5;
                let basis = Rc::new(s.lp.snapshot());
                let mut first = fixes.clone();
                first.push((k, up_first));
                let mut second = fixes;
                second.push((k, !up_first));
                seq += 1;
                open.push(Node {
                    bound: z,
                    seq,
                    fixes: second,
                    basis: basis.clone(),
                });
                if s.incumbent.is_none() {
                    current = Some((first, z));
                } else {
                    seq += 1;
                    open.push(Node {
                        bound: z,
                        seq,
                        fixes: first,
                        basis,
                    });
                }
            }
        }
    }

    let open_bound = open.iter().map(|n| n.bound).fold(f64::INFINITY, f64::min);
    let lp_iterations = s.lp.iterations();
    let nodes = s.nodes;
    let history = s.history;
    match s.incumbent {
        Some((z, x)) => {
            let bound = open_bound.min(z);
            let gap = relative_gap(z, bound);
            let status = if (!hit_limit && !s.incomplete) || gap <= opts.gap_tol {
                MipStatus::Optimal
            } else {
                MipStatus::Feasible
            };
            MipSolution {
                status,
                x,
                objective: z,
                bound,
                gap,
                nodes,
                lp_iterations,
                incumbent_history: history,
            }
        }
        None => MipSolution {
            status: if hit_limit || s.incomplete { MipStatus::Limit } else { MipStatus::Infeasible },
            x: Vec::new(),
            objective: f64::INFINITY,
            bound: if hit_limit { open_bound } else { f64::INFINITY },
            gap: f64::INFINITY,
            nodes,
            lp_iterations,
            incumbent_history: history,
        },
    }
}
