//! Full-horizon copper-plate unit commitment.
//!
//! One MIP covers every device and period: commitment binaries with
//! transition logic, semicontinuous power with reserve headroom, state
//! dependent ramping, zonal reserve cascades with penalized shortfall and
//! system-wide real (optionally reactive) balance. There is no network; the
//! balance rows carry penalized slacks so the model is feasible whenever the
//! ramping data is.

mod pwl;

pub use pwl::build_pwl_delta;

use crate::error::{Error, Result};
use crate::lp::{LinearProgram, LpOptions};
use crate::mip::{solve_mip, MipOptions, MipProblem, MipStatus};
use crate::model::{
    cascade_shortfall, reserve_headroom, Case, CaseIndex, CommitmentSchedule, DeviceKind, Direction, PowerKind,
    ReserveState,
};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Clone)]
pub struct UcOptions {
    pub include_reserves: bool,
    pub include_reactive: bool,
    pub mip: MipOptions,
}

impl Default for UcOptions {
    fn default() -> Self {
        UcOptions {
            include_reserves: true,
            include_reactive: true,
            mip: MipOptions {
                node_limit: Some(2000),
                lp: LpOptions {
                    feas_tol: 1e-9,
                    ..LpOptions::default()
                },
                ..MipOptions::default()
            },
        }
    }
}

/// Column and row positions of the UC model, `[device][period]` unless noted.
#[derive(Debug, Clone, Default)]
pub struct UcVars {
    pub u_on: Vec<Vec<usize>>,
    pub u_su: Vec<Vec<usize>>,
    pub u_sd: Vec<Vec<usize>>,
    pub p: Vec<Vec<usize>>,
    pub q: Vec<Vec<usize>>,
    /// `[device][product][period]`
    pub r: Vec<Vec<Vec<Option<usize>>>>,
    /// `[zone][product][period]`
    pub shortfall: Vec<Vec<Vec<Option<usize>>>>,
    /// `(surplus, deficit)` slack columns of the balance rows, by period.
    pub p_slack: Vec<(usize, usize)>,
    pub q_slack: Vec<(usize, usize)>,
    pub p_balance: Vec<usize>,
    pub q_balance: Vec<usize>,
    pub cascade_rows: Vec<usize>,
}

pub struct UcModel {
    pub problem: MipProblem,
    pub vars: UcVars,
}

#[derive(Debug, Clone)]
pub struct UcResult {
    pub commitment: CommitmentSchedule,
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub reserves: ReserveState,
    pub objective: f64,
    pub status: MipStatus,
    pub gap: f64,
    pub nodes: usize,
}

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub fn build_uc_mip(case: &Case, opts: &UcOptions) -> Result<UcModel> {
    let idx = case.index();
    let nt = case.periods();
    let nj = case.devices.len();
    let nk = case.products.len();
    let dur = &case.time_grid.durations;
    let mut lp = LinearProgram::new();
    let mut v = UcVars {
        r: vec![vec![vec![None; nt]; nk]; nj],
        shortfall: vec![vec![vec![None; nt]; nk]; case.zones.len()],
        ..UcVars::default()
    };
    let mut binaries = Vec::new();
    let reactive_reserves = opts.include_reserves && opts.include_reactive;

    for (j, dev) in case.devices.iter().enumerate() {
        let (mut on, mut su, mut sd, mut pc, mut qc) = (vec![], vec![], vec![], vec![], vec![]);
        for t in 0..nt {
            let d = dur[t];
            let lo_on = if dev.must_run { 1.0 } else { 0.0 };
            let u = lp.add_named_col(format!("u_on[{}][{t}]", dev.id), lo_on, 1.0, d * dev.on_cost);
            let s_up = lp.add_named_col(format!("u_su[{}][{t}]", dev.id), 0.0, 1.0, dev.su_cost);
            let s_dn = lp.add_named_col(format!("u_sd[{}][{t}]", dev.id), 0.0, 1.0, dev.sd_cost);
            binaries.extend([u, s_up, s_dn]);
            let p = lp.add_named_col(format!("p[{}][{t}]", dev.id), 0.0, dev.p_max[t], 0.0);
            let weight = d * dev.sign();
            build_pwl_delta(&mut lp, &dev.cost[t], dev.kind, p, dev.p_max[t], weight).ok_or_else(|| {
                Error::NonConvex {
                    device: dev.id.clone(),
                    period: t,
                }
            })?;
            let q = if opts.include_reactive {
                Some(lp.add_named_col(
                    format!("q[{}][{t}]", dev.id),
                    dev.q_min[t].min(0.0),
                    dev.q_max[t].max(0.0),
                    0.0,
                ))
            } else {
                None
            };
            // transitions
            let mut row = vec![(u, 1.0), (s_up, -1.0), (s_dn, 1.0)];
            let prev_on = if t == 0 {
                bit(dev.initial_on)
            } else {
                row.push((on[t - 1], -1.0));
                0.0
            };
            lp.add_named_row(format!("transition[{}][{t}]", dev.id), prev_on, prev_on, row);
            lp.add_row(-INF, 1.0, [(s_up, 1.0), (s_dn, 1.0)]);

            // ramping
            let (prev_p, p_const) = if t == 0 { (None, dev.initial_p) } else { (Some(pc[t - 1]), 0.0) };
            let mut up = vec![(p, 1.0), (u, -d * (dev.p_ru - dev.p_ru_su)), (s_up, -d * (dev.p_ru_su - dev.p_ru))];
            let mut dn = vec![(p, 1.0), (u, d * (dev.p_rd - dev.p_rd_sd))];
            if let Some(pp) = prev_p {
                up.push((pp, -1.0));
                dn.push((pp, -1.0));
            }
            lp.add_named_row(format!("ramp_up[{}][{t}]", dev.id), -INF, d * dev.p_ru_su + p_const, up);
            lp.add_named_row(format!("ramp_dn[{}][{t}]", dev.id), -d * dev.p_rd_sd + p_const, INF, dn);

            on.push(u);
            su.push(s_up);
            sd.push(s_dn);
            pc.push(p);
            if let Some(q) = q {
                qc.push(q);
            }
        }
        v.u_on.push(on);
        v.u_su.push(su);
        v.u_sd.push(sd);
        v.p.push(pc);
        v.q.push(qc);

        // reserve columns
        if opts.include_reserves {
            for g in &idx.groups {
                if g.kind == PowerKind::Reactive && !reactive_reserves {
                    continue;
                }
                if idx.zone_of(j, g.kind).is_none() {
                    continue;
                }
                for &k in &g.products {
                    let cap = idx.reserve_cap[j][k];
                    if cap <= 0.0 {
                        continue;
                    }
                    for t in 0..nt {
                        let c = lp.add_named_col(
                            format!("r[{}][{}][{t}]", dev.id, case.products[k].id),
                            0.0,
                            cap,
                            dur[t] * idx.reserve_cost[j][k],
                        );
                        v.r[j][k][t] = Some(c);
                    }
                }
            }
        }

        // semicontinuity with headroom for reserves
        for t in 0..nt {
            let u = v.u_on[j][t];
            for kind in [PowerKind::Active, PowerKind::Reactive] {
                let (x, lo, hi) = match kind {
                    PowerKind::Active => (v.p[j][t], dev.p_min[t], dev.p_max[t]),
                    PowerKind::Reactive if opts.include_reactive => (v.q[j][t], dev.q_min[t], dev.q_max[t]),
                    PowerKind::Reactive => continue,
                };
                // the direction that raises x: up for producers, down for consumers
                let (raise, lower) = match dev.kind {
                    DeviceKind::Producer => (Direction::Up, Direction::Down),
                    DeviceKind::Consumer => (Direction::Down, Direction::Up),
                };
                let mut upper = vec![(x, 1.0), (u, -hi)];
                let mut lower_row = vec![(x, 1.0), (u, -lo)];
                for g in idx.groups.iter().filter(|g| g.kind == kind) {
                    for &k in &g.products {
                        if let Some(c) = v.r[j][k][t] {
                            if g.direction == raise {
                                upper.push((c, 1.0));
                            } else if g.direction == lower {
                                lower_row.push((c, -1.0));
                            }
                        }
                    }
                }
                lp.add_row(-INF, 0.0, upper);
                lp.add_row(0.0, INF, lower_row);
            }
        }
    }

    // zonal cascades
    if opts.include_reserves {
        for (z, zone) in case.zones.iter().enumerate() {
            if zone.power_kind == PowerKind::Reactive && !reactive_reserves {
                continue;
            }
            for g in idx.groups.iter().filter(|g| g.kind == zone.power_kind) {
                for t in 0..nt {
                    let mut row = Vec::new();
                    let mut req = 0.0;
                    for &k in &g.products {
                        let s = lp.add_named_col(
                            format!("shortfall[{}][{}][{t}]", zone.id, case.products[k].id),
                            0.0,
                            INF,
                            dur[t] * idx.zone_penalty[z][k],
                        );
                        v.shortfall[z][k][t] = Some(s);
                        row.push((s, 1.0));
                        for &j in &idx.zone_devices[z] {
                            if let Some(c) = v.r[j][k][t] {
                                row.push((c, 1.0));
                            }
                        }
                        req += idx.zone_req[z][k][t];
                        let r = lp.add_named_row(
                            format!("cascade[{}][{}][{t}]", zone.id, case.products[k].id),
                            req,
                            INF,
                            row.clone(),
                        );
                        v.cascade_rows.push(r);
                    }
                }
            }
        }
    }

    // copper-plate balances
    let pen = case.penalties.balance;
    for t in 0..nt {
        let d = dur[t];
        let sp = lp.add_named_col(format!("p_surplus[{t}]"), 0.0, INF, d * pen);
        let sn = lp.add_named_col(format!("p_deficit[{t}]"), 0.0, INF, d * pen);
        let mut row = vec![(sp, -1.0), (sn, 1.0)];
        row.extend(case.devices.iter().enumerate().map(|(j, dev)| (v.p[j][t], dev.sign())));
        v.p_balance.push(lp.add_named_row(format!("p_balance[{t}]"), 0.0, 0.0, row));
        v.p_slack.push((sp, sn));
        if opts.include_reactive {
            let sp = lp.add_named_col(format!("q_surplus[{t}]"), 0.0, INF, d * pen);
            let sn = lp.add_named_col(format!("q_deficit[{t}]"), 0.0, INF, d * pen);
            let mut row = vec![(sp, -1.0), (sn, 1.0)];
            row.extend(case.devices.iter().enumerate().map(|(j, dev)| (v.q[j][t], dev.sign())));
            v.q_balance.push(lp.add_named_row(format!("q_balance[{t}]"), 0.0, 0.0, row));
            v.q_slack.push((sp, sn));
        }
    }

    Ok(UcModel {
        problem: MipProblem { lp, binaries },
        vars: v,
    })
}

pub fn solve_copperplate_uc(case: &Case, opts: &UcOptions) -> Result<UcResult> {
    let model = build_uc_mip(case, opts)?;
    let sol = solve_mip(&model.problem, &opts.mip);
    if !sol.has_incumbent() {
        return Err(Error::NoSchedule(sol.status));
    }
    log::info!(
        "copper-plate UC: {:?}, objective {:.6}, gap {:.2e}, {} nodes",
        sol.status,
        sol.objective,
        sol.gap,
        sol.nodes
    );
    let idx = case.index();
    let v = &model.vars;
    let x = &sol.x;
    let u_on: Vec<Vec<bool>> = v.u_on.iter().map(|row| row.iter().map(|&c| x[c] > 0.5).collect()).collect();
    let commitment = CommitmentSchedule::from_on(case, u_on);
    let nt = case.periods();
    let mut p = vec![vec![0.0; nt]; case.devices.len()];
    let mut q = vec![vec![0.0; nt]; case.devices.len()];
    let mut reserves = ReserveState::zeros(case);
    for (j, dev) in case.devices.iter().enumerate() {
        for t in 0..nt {
            let on = commitment.on(j, t);
            if !on {
                continue;
            }
            p[j][t] = x[v.p[j][t]].clamp(dev.p_min[t], dev.p_max[t]);
            if opts.include_reactive {
                q[j][t] = x[v.q[j][t]].clamp(dev.q_min[t], dev.q_max[t]);
            }
            for k in 0..case.products.len() {
                if let Some(c) = v.r[j][k][t] {
                    reserves.r[j][k][t] = x[c].max(0.0);
                }
            }
        }
    }
    clip_to_headroom(case, &idx, &commitment, &p, &q, &mut reserves);
    reserves.shortfall = cascade_shortfall(case, &idx, &reserves.r);
    Ok(UcResult {
        commitment,
        p,
        q,
        reserves,
        objective: sol.objective,
        status: sol.status,
        gap: sol.gap,
        nodes: sol.nodes,
    })
}

/// Trims reserves so every group fits its headroom, taking from the
/// lowest-quality product first. Only removes round-off sized excess when
/// the reserves came from a feasible model.
pub fn clip_to_headroom(
    case: &Case,
    idx: &CaseIndex,
    commitment: &CommitmentSchedule,
    p: &[Vec<f64>],
    q: &[Vec<f64>],
    reserves: &mut ReserveState,
) {
    for (j, dev) in case.devices.iter().enumerate() {
        for t in 0..case.periods() {
            let on = commitment.on(j, t);
            for g in &idx.groups {
                let room = reserve_headroom(dev, g.kind, p[j][t], q[j][t], on, t, g.direction).max(0.0);
                let mut total: f64 = g.products.iter().map(|&k| reserves.r[j][k][t]).sum();
                for &k in g.products.iter().rev() {
                    if total <= room {
                        break;
                    }
                    let cut = (total - room).min(reserves.r[j][k][t]);
                    reserves.r[j][k][t] -= cut;
                    total -= cut;
                }
            }
        }
    }
}
