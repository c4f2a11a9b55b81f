//! Independent scoring of a solution file against its case.
//!
//! Nothing stored in the solution beyond the decision variables is trusted:
//! flows come from the voltages, mismatches from the bus balances, and
//! shortfalls from the reserve cascades at the stored reserves.

use crate::acopf::{all_flows, balance_residual};
use crate::case_io::check_dimensions;
use crate::error::Result;
use crate::model::{
    cascade_shortfall, ramp_envelope, reserve_headroom, shortfall_cost, Case, CaseIndex, CommitmentSchedule,
    DeviceKind, FullSolution, ReserveState, Violation,
};
use serde::{Deserialize, Serialize};

/// Absolute tolerance of every hard check.
pub const HARD_TOL: f64 = 1e-8;

/// Objective terms in dollars, all nonnegative except as noted. The
/// objective is `energy_value - energy_cost - commitment_cost -
/// reserve_cost - reserve_penalty - p_penalty - q_penalty`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Components {
    pub energy_value: f64,
    pub energy_cost: f64,
    pub commitment_cost: f64,
    pub reserve_cost: f64,
    pub reserve_penalty: f64,
    pub p_penalty: f64,
    pub q_penalty: f64,
    /// Reported only; not part of the objective.
    pub line_overload_penalty: f64,
}

impl Components {
    pub fn objective(&self) -> f64 {
        self.energy_value
            - self.energy_cost
            - self.commitment_cost
            - self.reserve_cost
            - self.reserve_penalty
            - self.p_penalty
            - self.q_penalty
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub objective: f64,
    pub components: Components,
    /// Largest absolute bus mismatch over all periods.
    pub max_p_mismatch: f64,
    pub max_q_mismatch: f64,
    pub violations: Vec<Violation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
    /// Percent below the reference objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap_percent: Option<f64>,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "objective,energy_value,energy_cost,commitment_cost,reserve_cost,\
reserve_penalty,p_penalty,q_penalty,line_overload_penalty,max_p_mismatch,max_q_mismatch,violations,reference,gap_percent";

    pub fn csv_row(&self) -> String {
        let c = &self.components;
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.objective,
            c.energy_value,
            c.energy_cost,
            c.commitment_cost,
            c.reserve_cost,
            c.reserve_penalty,
            c.p_penalty,
            c.q_penalty,
            c.line_overload_penalty,
            self.max_p_mismatch,
            self.max_q_mismatch,
            self.violations.len(),
            opt(self.reference),
            opt(self.gap_percent)
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

/// Percent by which `objective` falls short of `reference`.
pub fn gap_percent(reference: f64, objective: f64) -> f64 {
    (reference - objective) / reference.abs() * 100.0
}

/// Terms that do not depend on the network: energy, commitment and
/// reserves (shortfalls recomputed from the stored reserves).
fn market_terms(
    case: &Case,
    idx: &CaseIndex,
    commitment: &CommitmentSchedule,
    p: &[Vec<f64>],
    reserves: &ReserveState,
) -> Components {
    let dur = &case.time_grid.durations;
    let mut c = Components::default();
    for (j, dev) in case.devices.iter().enumerate() {
        for t in 0..case.periods() {
            let e = dur[t] * dev.cost[t].eval(p[j][t]);
            match dev.kind {
                DeviceKind::Producer => c.energy_cost += e,
                DeviceKind::Consumer => c.energy_value += e,
            }
            let bit = |b: bool| if b { 1.0 } else { 0.0 };
            c.commitment_cost += dur[t] * dev.on_cost * bit(commitment.u_on[j][t])
                + dev.su_cost * bit(commitment.u_su[j][t])
                + dev.sd_cost * bit(commitment.u_sd[j][t]);
            for k in 0..case.products.len() {
                c.reserve_cost += dur[t] * idx.reserve_cost[j][k] * reserves.r[j][k][t];
            }
        }
    }
    let shortfall = cascade_shortfall(case, idx, &reserves.r);
    c.reserve_penalty = shortfall_cost(case, idx, &shortfall);
    c
}

/// Scores a full solution on the AC network.
pub fn evaluate(case: &Case, sol: &FullSolution, reference: Option<f64>) -> Result<EvaluationReport> {
    check_dimensions(sol, case)?;
    let idx = case.index();
    let mut c = market_terms(case, &idx, &sol.commitment, &sol.dispatch.p, &sol.reserves);
    let d = &sol.dispatch;
    let dur = &case.time_grid.durations;
    let pen = case.penalties.balance;
    let (mut max_p, mut max_q) = (0.0f64, 0.0f64);
    for t in 0..case.periods() {
        let v: Vec<f64> = d.v.iter().map(|r| r[t]).collect();
        let th: Vec<f64> = d.theta.iter().map(|r| r[t]).collect();
        let p: Vec<f64> = d.p.iter().map(|r| r[t]).collect();
        let q: Vec<f64> = d.q.iter().map(|r| r[t]).collect();
        let flows = all_flows(case, &idx, &v, &th);
        for (l, f) in flows.iter().enumerate() {
            let s_max = case.lines[l].s_max;
            let over = (f.0.hypot(f.1) - s_max).max(0.0) + (f.2.hypot(f.3) - s_max).max(0.0);
            c.line_overload_penalty += dur[t] * case.penalties.line_overload * over;
        }
        for (dp, dq) in balance_residual(case, &idx, &p, &q, &flows) {
            c.p_penalty += dur[t] * pen * dp.abs();
            c.q_penalty += dur[t] * pen * dq.abs();
            max_p = max_p.max(dp.abs());
            max_q = max_q.max(dq.abs());
        }
    }
    let objective = c.objective();
    Ok(EvaluationReport {
        objective,
        components: c,
        max_p_mismatch: max_p,
        max_q_mismatch: max_q,
        violations: check_hard(case, sol),
        reference,
        gap_percent: reference.map(|r| gap_percent(r, objective)),
    })
}

/// Scores a schedule without a network: balances are system-wide sums.
/// With `reactive` unset, reactive balance is not charged. This is the
/// objective the copper-plate UC optimizes, with the opposite sign.
pub fn evaluate_copperplate(
    case: &Case,
    commitment: &CommitmentSchedule,
    p: &[Vec<f64>],
    q: &[Vec<f64>],
    reserves: &ReserveState,
    reactive: bool,
) -> Components {
    let idx = case.index();
    let mut c = market_terms(case, &idx, commitment, p, reserves);
    let pen = case.penalties.balance;
    for t in 0..case.periods() {
        let d = case.time_grid.durations[t];
        let net_p: f64 = case.devices.iter().enumerate().map(|(j, dev)| dev.sign() * p[j][t]).sum();
        c.p_penalty += d * pen * net_p.abs();
        if reactive {
            let net_q: f64 = case.devices.iter().enumerate().map(|(j, dev)| dev.sign() * q[j][t]).sum();
            c.q_penalty += d * pen * net_q.abs();
        }
    }
    c
}

/// Every hard-constraint violation beyond `HARD_TOL`. Line ratings are soft
/// and not checked here.
pub fn check_hard(case: &Case, sol: &FullSolution) -> Vec<Violation> {
    let mut out = Vec::new();
    if check_dimensions(sol, case).is_err() {
        out.push(Violation::new("dimension", "solution", None, "arrays do not match the case"));
        return out;
    }
    let idx = case.index();
    let nt = case.periods();
    let dur = &case.time_grid.durations;
    let c = &sol.commitment;
    let d = &sol.dispatch;
    let r = &sol.reserves;
    let tol = HARD_TOL;
    for (j, dev) in case.devices.iter().enumerate() {
        let id = dev.id.as_str();
        let mut prev_on = dev.initial_on;
        let mut prev_p = dev.initial_p;
        for t in 0..nt {
            let (on, su, sd) = (c.u_on[j][t], c.u_su[j][t], c.u_sd[j][t]);
            let bit = |b: bool| if b { 1 } else { 0 };
            if bit(on) - bit(prev_on) != bit(su) - bit(sd) || (su && sd) {
                out.push(Violation::new(
                    "transition",
                    id,
                    Some(t),
                    format!("on {prev_on} -> {on} with start-up {su}, shut-down {sd}"),
                ));
            }
            if dev.must_run && !on {
                out.push(Violation::new("must_run", id, Some(t), "must-run device is offline"));
            }
            let u = if on { 1.0 } else { 0.0 };
            let (p, q) = (d.p[j][t], d.q[j][t]);
            if p < dev.p_min[t] * u - tol || p > dev.p_max[t] * u + tol {
                out.push(Violation::new(
                    "semicontinuity",
                    id,
                    Some(t),
                    format!("p = {p} outside [{}, {}]", dev.p_min[t] * u, dev.p_max[t] * u),
                ));
            }
            if q < dev.q_min[t] * u - tol || q > dev.q_max[t] * u + tol {
                out.push(Violation::new(
                    "semicontinuity",
                    id,
                    Some(t),
                    format!("q = {q} outside [{}, {}]", dev.q_min[t] * u, dev.q_max[t] * u),
                ));
            }
            // the envelope formula assumes consistent transitions; skip it
            // where the transition check already failed
            if !(su && (prev_on || !on)) {
                let (lo, hi) = ramp_envelope(dev, prev_p, prev_on, on, su, dur[t]);
                if p > hi + tol || p < lo - tol {
                    out.push(Violation::new(
                        "ramping",
                        id,
                        Some(t),
                        format!("p = {p} outside ramp envelope [{lo}, {hi}]"),
                    ));
                }
            }
            for g in &idx.groups {
                let room = reserve_headroom(dev, g.kind, p, q, on, t, g.direction);
                let used: f64 = g.products.iter().map(|&k| r.r[j][k][t]).sum();
                if used > room.max(0.0) + tol {
                    out.push(Violation::new(
                        "headroom",
                        id,
                        Some(t),
                        format!("{:?} {:?} reserves {used} exceed headroom {room}", g.kind, g.direction),
                    ));
                }
            }
            for (k, prod) in case.products.iter().enumerate() {
                let x = r.r[j][k][t];
                if x < -tol {
                    out.push(Violation::new("negative_reserve", id, Some(t), format!("{} = {x}", prod.id)));
                }
                if x > idx.reserve_cap[j][k] + tol {
                    out.push(Violation::new("reserve_cap", id, Some(t), format!("{} = {x}", prod.id)));
                }
            }
            prev_on = on;
            prev_p = p;
        }
    }
    for (i, b) in case.buses.iter().enumerate() {
        for t in 0..nt {
            let v = d.v[i][t];
            if v < b.v_min - tol || v > b.v_max + tol {
                out.push(Violation::new(
                    "voltage",
                    &b.id,
                    Some(t),
                    format!("v = {v} outside [{}, {}]", b.v_min, b.v_max),
                ));
            }
        }
    }
    for (z, zone) in case.zones.iter().enumerate() {
        for (k, prod) in case.products.iter().enumerate() {
            for t in 0..nt {
                let s = r.shortfall[z][k][t];
                if s < -tol {
                    out.push(Violation::new("negative_shortfall", &zone.id, Some(t), format!("{} = {s}", prod.id)));
                }
            }
        }
    }
    out
}
