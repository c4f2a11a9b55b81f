//! Sparse linear programming by a bounded-variable revised simplex method.
//!
//! Problems are stated as
//!
//! ```text
//! minimize    c'x
//! subject to  row_lo <= A x <= row_hi,   lo <= x <= hi
//! ```
//!
//! with any bound allowed to be infinite. The solver works on the logical
//! form `A x - s = 0` where every row gets a logical variable `s` bounded by
//! the row range, so both kinds of bounds are handled uniformly. It starts
//! from the all-logical basis and runs the dual simplex method (steepest-edge
//! pricing, bound-flipping Harris ratio test), then cleans up any remaining
//! dual infeasibility with the primal method. Both phases fall back to
//! lowest-index rules after a long run of degenerate pivots.

mod lu;
pub(crate) mod simplex;

use serde::{Deserialize, Serialize};

pub use simplex::{BasisSnapshot, Simplex};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    col_names: Vec<String>,
    rows: Vec<Vec<(usize, f64)>>,
    row_lower: Vec<f64>,
    row_upper: Vec<f64>,
    row_names: Vec<String>,
}

impl LinearProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_col(&mut self, lo: f64, hi: f64, cost: f64) -> usize {
        self.add_named_col(String::new(), lo, hi, cost)
    }

    pub fn add_named_col(&mut self, name: impl Into<String>, lo: f64, hi: f64, cost: f64) -> usize {
        debug_assert!(lo <= hi, "column bounds out of order: [{lo}, {hi}]");
        debug_assert!(cost.is_finite());
        self.lower.push(lo);
        self.upper.push(hi);
        self.cost.push(cost);
        self.col_names.push(name.into());
        self.lower.len() - 1
    }

    /// Adds `lo <= sum coeffs <= hi`. Repeated columns are merged and exact
    /// zeros dropped.
    pub fn add_row(&mut self, lo: f64, hi: f64, coeffs: impl IntoIterator<Item = (usize, f64)>) -> usize {
        self.add_named_row(String::new(), lo, hi, coeffs)
    }

    pub fn add_named_row(
        &mut self,
        name: impl Into<String>,
        lo: f64,
        hi: f64,
        coeffs: impl IntoIterator<Item = (usize, f64)>,
    ) -> usize {
        debug_assert!(lo <= hi, "row bounds out of order: [{lo}, {hi}]");
        let mut row: Vec<(usize, f64)> = coeffs.into_iter().collect();
        row.sort_by_key(|e| e.0);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (j, a) in row {
            debug_assert!(j < self.lower.len(), "row references missing column {j}");
            match merged.last_mut() {
                Some(last) if last.0 == j => last.1 += a,
                _ => merged.push((j, a)),
            }
        }
        merged.retain(|e| e.1 != 0.0);
        self.rows.push(merged);
        self.row_lower.push(lo);
        self.row_upper.push(hi);
        self.row_names.push(name.into());
        self.rows.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.lower.len()
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn col_bounds(&self, j: usize) -> (f64, f64) {
        (self.lower[j], self.upper[j])
    }

    pub fn set_col_bounds(&mut self, j: usize, lo: f64, hi: f64) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn cost(&self, j: usize) -> f64 {
        self.cost[j]
    }

    pub fn set_cost(&mut self, j: usize, c: f64) {
        self.cost[j] = c;
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn row_bounds(&self, i: usize) -> (f64, f64) {
        (self.row_lower[i], self.row_upper[i])
    }

    pub fn col_name(&self, j: usize) -> &str {
        &self.col_names[j]
    }

    pub fn row_name(&self, i: usize) -> &str {
        &self.row_names[i]
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.cost.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    pub fn row_activity(&self, x: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(j, a)| a * x[j]).sum())
            .collect()
    }

    /// Largest bound or row-range violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.num_cols() {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        for (i, act) in self.row_activity(x).into_iter().enumerate() {
            worst = worst.max(self.row_lower[i] - act).max(act - self.row_upper[i]);
        }
        worst
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpOptions {
    /// Primal feasibility tolerance (absolute, in row/column units).
    pub feas_tol: f64,
    /// Dual feasibility tolerance on reduced costs (objective units).
    pub opt_tol: f64,
    pub iter_limit: usize,
}

impl Default for LpOptions {
    fn default() -> Self {
        LpOptions {
            feas_tol: 1e-7,
            opt_tol: 1e-7,
            iter_limit: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub x: Vec<f64>,
    /// Row multipliers `y`, with reduced costs `c - A'y`.
    pub row_duals: Vec<f64>,
    pub reduced_costs: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpSolution {
    /// Lagrangian dual bound built from the reported multipliers. Multipliers
    /// whose sign points at an infinite bound are dropped, so the value is a
    /// valid lower bound only up to the dual tolerance.
    pub fn dual_objective(&self, lp: &LinearProgram) -> f64 {
        let mut z = 0.0;
        let pick = |m: f64, lo: f64, hi: f64| -> f64 {
            if m > 0.0 && lo.is_finite() {
                m * lo
            } else if m < 0.0 && hi.is_finite() {
                m * hi
            } else {
                0.0
            }
        };
        for i in 0..lp.num_rows() {
            z += pick(self.row_duals[i], lp.row_lower[i], lp.row_upper[i]);
        }
        for j in 0..lp.num_cols() {
            z += pick(self.reduced_costs[j], lp.lower[j], lp.upper[j]);
        }
        z
    }
}

pub fn solve_lp(lp: &LinearProgram, options: &LpOptions) -> LpSolution {
    let mut s = Simplex::new(lp, *options);
    s.solve();
    s.solution()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_bounded_variable() {
        let mut lp = LinearProgram::new();
        lp.add_col(2.0, 5.0, 1.0);
        let s = solve_lp(&lp, &LpOptions::default());
        assert_eq!(s.status, LpStatus::Optimal);
        assert_eq!(s.x, vec![2.0]);
        assert_eq!(s.objective, 2.0);
    }

    #[test]
    fn facet_optimum() {
        let mut lp = LinearProgram::new();
        let x = lp.add_col(0.0, 1.0, -1.0);
        let y = lp.add_col(0.0, 1.0, -1.0);
        lp.add_row(f64::NEG_INFINITY, 1.0, [(x, 1.0), (y, 1.0)]);
        let s = solve_lp(&lp, &LpOptions::default());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.objective + 1.0).abs() < 1e-12);
        assert!((s.x[0] + s.x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn contradictory_row_is_infeasible() {
        let mut lp = LinearProgram::new();
        let x = lp.add_col(f64::NEG_INFINITY, f64::INFINITY, 0.0);
        lp.add_row(1.0, f64::INFINITY, [(x, 1.0)]);
        lp.add_row(f64::NEG_INFINITY, 0.0, [(x, 1.0)]);
        assert_eq!(solve_lp(&lp, &LpOptions::default()).status, LpStatus::Infeasible);
    }

    #[test]
    fn unbounded_ray_is_detected() {
        let mut lp = LinearProgram::new();
        let x = lp.add_col(0.0, f64::INFINITY, -1.0);
        let y = lp.add_col(0.0, f64::INFINITY, 0.0);
        lp.add_row(f64::NEG_INFINITY, 1.0, [(x, 1.0), (y, -1.0)]);
        assert_eq!(solve_lp(&lp, &LpOptions::default()).status, LpStatus::Unbounded);
    }

    #[test]
    fn free_variables_and_equalities() {
        // min x + 2y, x + y = 3, x - y = 1 (free) -> x = 2, y = 1
        let mut lp = LinearProgram::new();
        let x = lp.add_col(f64::NEG_INFINITY, f64::INFINITY, 1.0);
        let y = lp.add_col(f64::NEG_INFINITY, f64::INFINITY, 2.0);
        lp.add_row(3.0, 3.0, [(x, 1.0), (y, 1.0)]);
        lp.add_row(1.0, 1.0, [(x, 1.0), (y, -1.0)]);
        let s = solve_lp(&lp, &LpOptions::default());
        assert_eq!(s.status, LpStatus::Optimal);
        assert!((s.x[0] - 2.0).abs() < 1e-9 && (s.x[1] - 1.0).abs() < 1e-9);
        assert!((s.objective - 4.0).abs() < 1e-9);
        assert!((s.dual_objective(&lp) - 4.0).abs() < 1e-9);
    }
}
