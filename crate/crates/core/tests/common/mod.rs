#![allow(dead_code)]

use acuc_core::case_io::{generate_case, GeneratorSpec};
use acuc_core::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use acuc_core::model::*;
use acuc_core::testing::{bus, simple_device};

const INF: f64 = f64::INFINITY;

/// Affine pieces `(slope, intercept)` of a block curve, the last block
/// extended without limit.
fn pieces(curve: &CostCurve) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let (mut start, mut acc) = (0.0, 0.0);
    for b in &curve.blocks {
        out.push((b.rate, acc - b.rate * start));
        acc += b.rate * b.width;
        start += b.width;
    }
    out
}

/// Cheapest copper-plate cost of one fixed commitment, or `None` when the
/// ramp limits make it unreachable. Costs enter through epigraph variables
/// rather than block columns.
pub fn dispatch_cost(case: &Case, on: &[Vec<bool>]) -> Option<f64> {
    let nt = case.periods();
    let dur = &case.time_grid.durations;
    let pen = case.penalties.balance;
    let mut lp = LinearProgram::new();
    let mut constant = 0.0;
    let mut p = vec![vec![0; nt]; case.devices.len()];
    let mut q = vec![vec![0; nt]; case.devices.len()];
    for (j, dev) in case.devices.iter().enumerate() {
        for t in 0..nt {
            let u = on[j][t];
            let prev = if t == 0 { dev.initial_on } else { on[j][t - 1] };
            if dev.must_run && !u {
                return None;
            }
            let su = u && !prev;
            let sd = !u && prev;
            constant += dur[t] * dev.on_cost * u as u8 as f64
                + dev.su_cost * su as u8 as f64
                + dev.sd_cost * sd as u8 as f64;
            let (lo, hi) = if u { (dev.p_min[t], dev.p_max[t]) } else { (0.0, 0.0) };
            p[j][t] = lp.add_col(lo, hi, 0.0);
            let (qlo, qhi) = if u { (dev.q_min[t], dev.q_max[t]) } else { (0.0, 0.0) };
            q[j][t] = lp.add_col(qlo, qhi, 0.0);
            // cost epigraph for producers, value hypograph for consumers
            match dev.kind {
                DeviceKind::Producer => {
                    let z = lp.add_col(-INF, INF, dur[t]);
                    for (a, b) in pieces(&dev.cost[t]) {
                        lp.add_row(b, INF, [(z, 1.0), (p[j][t], -a)]);
                    }
                }
                DeviceKind::Consumer => {
                    let w = lp.add_col(-INF, INF, -dur[t]);
                    for (a, b) in pieces(&dev.cost[t]) {
                        lp.add_row(-INF, b, [(w, 1.0), (p[j][t], -a)]);
                    }
                }
            }
            let p_prev = if t == 0 { None } else { Some(p[j][t - 1]) };
            let (lo, hi) = ramp_envelope(dev, 0.0, prev, u, su, dur[t]);
            let c0 = if t == 0 { dev.initial_p } else { 0.0 };
            let mut row = vec![(p[j][t], 1.0)];
            if let Some(pp) = p_prev {
                row.push((pp, -1.0));
            }
            lp.add_row(lo + c0, hi + c0, row);
        }
    }
    for t in 0..nt {
        for cols in [&p, &q] {
            let s = lp.add_col(0.0, INF, dur[t] * pen);
            let d = lp.add_col(0.0, INF, dur[t] * pen);
            let mut row = vec![(s, -1.0), (d, 1.0)];
            row.extend(case.devices.iter().enumerate().map(|(j, dev)| (cols[j][t], dev.sign())));
            lp.add_row(0.0, 0.0, row);
        }
    }
    let sol = solve_lp(&lp, &LpOptions::default());
    match sol.status {
        LpStatus::Optimal => Some(sol.objective + constant),
        LpStatus::Infeasible => None,
        s => panic!("oracle LP ended {s:?}"),
    }
}

/// Minimum over every commitment of [`dispatch_cost`].
pub fn brute_force_uc(case: &Case) -> f64 {
    let (nj, nt) = (case.devices.len(), case.periods());
    let bits = nj * nt;
    assert!(bits <= 16);
    let mut best = INF;
    for mask in 0u32..(1 << bits) {
        let on: Vec<Vec<bool>> = (0..nj).map(|j| (0..nt).map(|t| mask >> (j * nt + t) & 1 == 1).collect()).collect();
        if let Some(c) = dispatch_cost(case, &on) {
            best = best.min(c);
        }
    }
    best
}

pub fn generated(buses: usize, devices: usize, periods: usize, seed: u64) -> Case {
    generate_case(&GeneratorSpec::new(buses, devices, periods).with_seed(seed)).expect("generator accepts the spec")
}

/// Two buses joined by a thermally limited line. The reserve requirement
/// sits near the total headroom, and the only device that can cover it
/// without moving power across the line is the expensive one behind it.
pub fn congested_reserve_case() -> Case {
    let nt = 1;
    let mut g1 = simple_device("g1", DeviceKind::Producer, nt, 0.0, 20.0);
    g1.q_min = vec![-5.0];
    g1.q_max = vec![5.0];
    let mut g2 = simple_device("g2", DeviceKind::Producer, nt, 0.0, 1.4);
    g2.bus = "b2".into();
    g2.cost = vec![CostCurve::new(&[(1.4, 50.0)])];
    g2.reserve_cost.insert("rgu".into(), 1.0);
    let mut load = simple_device("load", DeviceKind::Consumer, nt, 1.0, 1.0);
    load.bus = "b2".into();
    load.q_min = vec![0.0];
    load.q_max = vec![0.0];
    load.cost = vec![CostCurve::new(&[(1.0, 1000.0)])];
    load.initial_p = 1.0;
    let mut flex = simple_device("flex", DeviceKind::Consumer, nt, 0.0, 15.0);
    flex.q_min = vec![0.0];
    flex.q_max = vec![0.0];
    flex.cost = vec![CostCurve::new(&[(15.0, 30.0)])];
    flex.reserve_cap.insert("rgu".into(), 0.0);
    let mut buses = vec![bus("b1", true), bus("b2", false)];
    for b in &mut buses {
        b.active_zone = Some("za".into());
    }
    Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses,
        lines: vec![AcLine::simple("l12", "b1", "b2", 1.0, -10.0, 0.5)],
        devices: vec![g1, g2, load, flex],
        zones: vec![ReserveZone {
            id: "za".into(),
            power_kind: PowerKind::Active,
            requirement: [("rgu".to_string(), vec![19.0])].into_iter().collect(),
            shortfall_penalty: [("rgu".to_string(), 1000.0)].into_iter().collect(),
        }],
        products: vec![ReserveProduct::new("rgu", Direction::Up, PowerKind::Active, 1)],
        penalties: Penalties::default(),
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
