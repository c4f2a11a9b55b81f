//! The four decomposition algorithms end to end.
//!
//! Every algorithm starts from the full-horizon copper-plate UC with
//! reserves. They differ in what happens to the UC reserves, whether the
//! per-period OPFs run in sequence (tightening each period against the
//! settled previous one) or all at once, and how reserves are re-assigned
//! after the AC dispatch:
//!
//! | alg | reserve bounds            | OPF                     | reserves after |
//! |-----|---------------------------|-------------------------|----------------|
//! | 1   | all providers fixed       | sequential, ramp-aware  | greedy reactive|
//! | 2   | none                      | sequential, ramp-aware  | greedy both    |
//! | 3   | top fraction fixed        | sequential, ramp-aware  | LP             |
//! | 4   | top fraction fixed        | parallel, then projected| LP             |

use crate::acopf::{solve_acopf, AcOpfProblem, AcOpfResult, OpfOptions};
use crate::error::{Error, Result};
use crate::mip::MipOptions;
use crate::model::{
    ramp_envelope, static_bounds, Case, CaseIndex, CommitmentSchedule, Device, DispatchState, FullSolution,
    PowerKind, ReserveState, SolutionMeta,
};
use crate::reserves::{
    greedy_allocate, redispatch_reserves, reserve_objective, tighten_bounds, BoundEvent, BoundOverrides, ReserveKinds,
};
use crate::uc::{clip_to_headroom, solve_copperplate_uc, UcOptions, UcResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// 1 to 4.
    pub algorithm: u8,
    /// Fraction of reserve providers whose reserves are fixed (algorithms
    /// 3 and 4).
    pub gamma: f64,
    pub threads: usize,
    pub uc_time_limit: Option<Duration>,
    pub uc_node_limit: Option<usize>,
    pub uc_gap: f64,
    pub opf: OpfOptions,
    /// Recorded with the run; every stage is deterministic.
    pub seed: u64,
    /// Skip tightening devices that fail the local balance guard.
    pub guard: bool,
    pub thermal_limits: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            algorithm: 3,
            gamma: 0.05,
            threads: 1,
            uc_time_limit: None,
            uc_node_limit: Some(500),
            uc_gap: 1e-4,
            opf: OpfOptions::default(),
            seed: 0,
            guard: true,
            thermal_limits: false,
        }
    }
}

impl RunOptions {
    pub fn algorithm(algorithm: u8) -> Self {
        RunOptions {
            algorithm,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub algorithm: u8,
    pub threads: usize,
    pub gamma: f64,
    pub seed: u64,
    pub uc_seconds: f64,
    pub tighten_seconds: f64,
    /// Wall time of the OPF stage (critical path when parallel).
    pub opf_seconds: f64,
    pub opf_period_seconds: Vec<f64>,
    pub reserve_seconds: f64,
    pub projection_seconds: f64,
    /// Reading and writing files; filled in by the caller.
    pub io_seconds: f64,
    pub total_seconds: f64,
    pub uc_status: String,
    pub uc_gap: f64,
    pub uc_nodes: usize,
    pub opf_iterations: Vec<usize>,
    pub opf_unconverged: usize,
    pub tightened_devices: usize,
    pub events: Vec<BoundEvent>,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub solution: FullSolution,
    pub stats: RunStats,
}

/// Intersects `bounds` with the ramp envelope reachable from `p_prev`. An
/// empty intersection resolves to the envelope endpoint nearest `bounds`;
/// the flag reports that conflict.
pub fn ramp_tighten(
    device: &Device,
    p_prev: f64,
    on_prev: bool,
    on: bool,
    su: bool,
    d_t: f64,
    bounds: (f64, f64),
) -> ((f64, f64), bool) {
    let (elo, ehi) = ramp_envelope(device, p_prev, on_prev, on, su, d_t);
    let (lo, hi) = (bounds.0.max(elo), bounds.1.min(ehi));
    if lo <= hi {
        ((lo, hi), false)
    } else if bounds.1 < elo {
        ((elo, elo), true)
    } else {
        ((ehi, ehi), true)
    }
}

/// Forward pass clipping each period into the ramp envelope of the
/// projected previous period, intersected with the commitment-implied
/// bounds whenever that leaves something. Feasible input is returned as is.
pub fn ramp_project(case: &Case, commitment: &CommitmentSchedule, p: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dur = &case.time_grid.durations;
    case.devices
        .iter()
        .enumerate()
        .map(|(j, dev)| {
            let sb = static_bounds(dev, &commitment.u_on[j], &commitment.u_su[j], dur);
            let mut prev = dev.initial_p;
            let mut prev_on = dev.initial_on;
            let mut out = Vec::with_capacity(p[j].len());
            for t in 0..p[j].len() {
                let (on, su) = (commitment.u_on[j][t], commitment.u_su[j][t]);
                let (elo, ehi) = ramp_envelope(dev, prev, prev_on, on, su, dur[t]);
                let (lo, hi) = if sb[t].0.max(elo) <= sb[t].1.min(ehi) {
                    (sb[t].0.max(elo), sb[t].1.min(ehi))
                } else {
                    (elo, ehi)
                };
                let x = p[j][t].clamp(lo, hi);
                out.push(x);
                prev = x;
                prev_on = on;
            }
            out
        })
        .collect()
}

/// Commitment-implied bounds intersected with reserve overrides, then
/// passed backwards so every period stays reachable from the one before.
fn base_bounds(case: &Case, commitment: &CommitmentSchedule, ov: &BoundOverrides, events: &mut Vec<BoundEvent>) -> Vec<Vec<(f64, f64)>> {
    let dur = &case.time_grid.durations;
    let nt = case.periods();
    case.devices
        .iter()
        .enumerate()
        .map(|(j, dev)| {
            let mut b = static_bounds(dev, &commitment.u_on[j], &commitment.u_su[j], dur);
            for t in 0..nt {
                if let Some((olo, ohi)) = ov.p[j][t] {
                    let (lo, hi) = (b[t].0.max(olo), b[t].1.min(ohi));
                    if lo <= hi {
                        b[t] = (lo, hi);
                    } else {
                        let x = if ohi < b[t].0 { b[t].0 } else { b[t].1 };
                        events.push(BoundEvent {
                            device: dev.id.clone(),
                            period: t,
                            reason: "reserve bounds unreachable".into(),
                            lo: olo,
                            hi: ohi,
                        });
                        b[t] = (x, x);
                    }
                }
            }
            for t in (0..nt.saturating_sub(1)).rev() {
                if !(commitment.u_on[j][t] && commitment.u_on[j][t + 1]) {
                    continue;
                }
                let d = dur[t + 1];
                let lo = b[t].0.max(b[t + 1].0 - d * dev.p_ru);
                let hi = b[t].1.min(b[t + 1].1 + d * dev.p_rd);
                if lo <= hi {
                    b[t] = (lo, hi);
                }
            }
            b
        })
        .collect()
}

fn q_bounds(case: &Case, t: usize) -> Vec<(f64, f64)> {
    case.devices.iter().map(|d| (d.q_min[t], d.q_max[t])).collect()
}

fn opf_at(
    case: &Case,
    idx: &CaseIndex,
    commitment: &CommitmentSchedule,
    t: usize,
    p_bounds: &[(f64, f64)],
    opts: &RunOptions,
) -> Result<(AcOpfResult, f64)> {
    let start = Instant::now();
    let online: Vec<bool> = commitment.u_on.iter().map(|r| r[t]).collect();
    let prob = AcOpfProblem::new(case, idx, t, &online, p_bounds, &q_bounds(case, t))?
        .with_thermal_limits(opts.thermal_limits);
    let r = solve_acopf(&prob, &opts.opf);
    Ok((r, start.elapsed().as_secs_f64()))
}

fn store(d: &mut DispatchState, r: &AcOpfResult) {
    let t = r.t;
    let put = |m: &mut Vec<Vec<f64>>, v: &[f64]| {
        for (row, &x) in m.iter_mut().zip(v) {
            row[t] = x;
        }
    };
    put(&mut d.p, &r.p);
    put(&mut d.q, &r.q);
    put(&mut d.v, &r.v);
    put(&mut d.theta, &r.theta);
    put(&mut d.p_fr, &r.p_fr);
    put(&mut d.q_fr, &r.q_fr);
    put(&mut d.p_to, &r.p_to);
    put(&mut d.q_to, &r.q_to);
    put(&mut d.p_mismatch, &r.p_mismatch);
    put(&mut d.q_mismatch, &r.q_mismatch);
}

/// The commitment stage alone, with the fallback to an all-on schedule when
/// the search ends without one. Every algorithm starts from this result.
pub fn solve_uc(case: &Case, opts: &RunOptions) -> Result<UcResult> {
    let uc_opts = UcOptions {
        mip: MipOptions {
            time_limit: opts.uc_time_limit,
            node_limit: opts.uc_node_limit,
            gap_tol: opts.uc_gap,
            ..UcOptions::default().mip
        },
        ..UcOptions::default()
    };
    match solve_copperplate_uc(case, &uc_opts) {
        Err(Error::NoSchedule(status)) => {
            log::warn!("UC found no schedule ({status:?}); keeping every device online");
            let commitment = CommitmentSchedule::all_on(case);
            let nt = case.periods();
            let zeros = vec![vec![0.0; nt]; case.devices.len()];
            Ok(UcResult {
                commitment,
                p: zeros.clone(),
                q: zeros,
                reserves: ReserveState::zeros(case),
                objective: f64::NAN,
                status,
                gap: f64::INFINITY,
                nodes: 0,
            })
        }
        other => other,
    }
}

fn check_options(opts: &RunOptions) -> Result<rayon::ThreadPool> {
    if !(1..=4).contains(&opts.algorithm) {
        return Err(Error::Internal(format!("unknown algorithm {}", opts.algorithm)));
    }
    if !(0.0..=1.0).contains(&opts.gamma) || opts.threads == 0 {
        return Err(Error::Internal("gamma must lie in [0, 1] and threads be positive".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| Error::Internal(e.to_string()))
}

pub fn run(case: &Case, opts: &RunOptions) -> Result<RunOutput> {
    let pool = check_options(opts)?;
    pool.install(|| run_in_pool(case, opts, None))
}

/// Runs everything after the commitment stage on a given UC result, so
/// several algorithms can share one commitment. `uc_seconds` is left at
/// zero.
pub fn run_with_uc(case: &Case, opts: &RunOptions, uc: &UcResult) -> Result<RunOutput> {
    let pool = check_options(opts)?;
    pool.install(|| run_in_pool(case, opts, Some(uc)))
}

fn run_in_pool(case: &Case, opts: &RunOptions, given: Option<&UcResult>) -> Result<RunOutput> {
    let total = Instant::now();
    let idx = case.index();
    let nt = case.periods();
    let alg = opts.algorithm;
    let mut stats = RunStats {
        algorithm: alg,
        threads: opts.threads,
        gamma: opts.gamma,
        seed: opts.seed,
        ..Default::default()
    };

    let clock = Instant::now();
    let solved;
    let uc = match given {
        Some(uc) => uc,
        None => {
            solved = solve_uc(case, opts)?;
            stats.uc_seconds = clock.elapsed().as_secs_f64();
            &solved
        }
    };
    stats.uc_status = format!("{:?}", uc.status);
    stats.uc_gap = uc.gap;
    stats.uc_nodes = uc.nodes;
    let commitment = uc.commitment.clone();

    let clock = Instant::now();
    let overrides = match alg {
        1 => tighten_bounds(case, &commitment, &uc.reserves, 1.0, opts.guard)?,
        2 => BoundOverrides::none(case),
        _ => tighten_bounds(case, &commitment, &uc.reserves, opts.gamma, opts.guard)?,
    };
    stats.tightened_devices = overrides.tightened.len();
    stats.events.extend(overrides.events.iter().cloned());
    let bounds = base_bounds(case, &commitment, &overrides, &mut stats.events);
    stats.tighten_seconds = clock.elapsed().as_secs_f64();

    let mut dispatch = DispatchState::zeros(case);
    let mut results: Vec<AcOpfResult> = Vec::with_capacity(nt);
    let clock = Instant::now();
    if alg == 4 {
        let solved: Vec<Result<(AcOpfResult, f64)>> = (0..nt)
            .into_par_iter()
            .map(|t| {
                let pb: Vec<(f64, f64)> = bounds.iter().map(|b| b[t]).collect();
                opf_at(case, &idx, &commitment, t, &pb, opts)
            })
            .collect();
        for s in solved {
            let (r, secs) = s?;
            stats.opf_period_seconds.push(secs);
            results.push(r);
        }
    } else {
        for t in 0..nt {
            let mut pb = Vec::with_capacity(case.devices.len());
            for (j, dev) in case.devices.iter().enumerate() {
                if !commitment.u_on[j][t] {
                    pb.push((0.0, 0.0));
                    continue;
                }
                let (p_prev, on_prev) = if t == 0 {
                    (dev.initial_p, dev.initial_on)
                } else {
                    (results[t - 1].p[j], commitment.u_on[j][t - 1])
                };
                let (b, conflict) = ramp_tighten(
                    dev,
                    p_prev,
                    on_prev,
                    true,
                    commitment.u_su[j][t],
                    case.time_grid.durations[t],
                    bounds[j][t],
                );
                if conflict {
                    stats.events.push(BoundEvent {
                        device: dev.id.clone(),
                        period: t,
                        reason: "ramp conflict".into(),
                        lo: bounds[j][t].0,
                        hi: bounds[j][t].1,
                    });
                }
                pb.push(b);
            }
            let (r, secs) = opf_at(case, &idx, &commitment, t, &pb, opts)?;
            stats.opf_period_seconds.push(secs);
            results.push(r);
        }
    }
    stats.opf_seconds = clock.elapsed().as_secs_f64();
    for r in &results {
        stats.opf_iterations.push(r.iterations);
        if !r.converged {
            stats.opf_unconverged += 1;
        }
        store(&mut dispatch, r);
    }

    if alg == 4 {
        let clock = Instant::now();
        let projected = ramp_project(case, &commitment, &dispatch.p);
        for (j, dev) in case.devices.iter().enumerate() {
            let bus = idx.device_bus[j];
            for t in 0..nt {
                let delta = projected[j][t] - dispatch.p[j][t];
                if delta != 0.0 {
                    dispatch.p_mismatch[bus][t] += dev.sign() * delta;
                    dispatch.p[j][t] = projected[j][t];
                }
            }
        }
        stats.projection_seconds = clock.elapsed().as_secs_f64();
    }

    let clock = Instant::now();
    let (reserves, reserve_obj) = match alg {
        1 => {
            // keep the UC's active reserves; the guard may have left some
            // devices free, so trim to the headroom the OPF left
            let mut kept = uc.reserves.clone();
            for (k, prod) in case.products.iter().enumerate() {
                if prod.power_kind == PowerKind::Reactive {
                    kept.r.iter_mut().for_each(|per_k| per_k[k].iter_mut().for_each(|x| *x = 0.0));
                }
            }
            clip_to_headroom(case, &idx, &commitment, &dispatch.p, &dispatch.q, &mut kept);
            let reactive = greedy_allocate(case, &commitment, &dispatch, ReserveKinds::Reactive);
            for (k, prod) in case.products.iter().enumerate() {
                if prod.power_kind == PowerKind::Reactive {
                    for j in 0..case.devices.len() {
                        kept.r[j][k] = reactive.r[j][k].clone();
                    }
                }
            }
            kept.shortfall = crate::model::cascade_shortfall(case, &idx, &kept.r);
            let obj = reserve_objective(case, &idx, &kept);
            (kept, obj)
        }
        2 => {
            let g = greedy_allocate(case, &commitment, &dispatch, ReserveKinds::Both);
            let obj = reserve_objective(case, &idx, &g);
            (g, obj)
        }
        _ => redispatch_reserves(case, &commitment, &dispatch)?,
    };
    stats.reserve_seconds = clock.elapsed().as_secs_f64();

    // the pipeline's own accounting of the surplus it achieved
    let dur = &case.time_grid.durations;
    let mut cost = reserve_obj;
    for (j, dev) in case.devices.iter().enumerate() {
        for t in 0..nt {
            let bit = |b: bool| if b { 1.0 } else { 0.0 };
            cost += dur[t] * dev.on_cost * bit(commitment.u_on[j][t])
                + dev.su_cost * bit(commitment.u_su[j][t])
                + dev.sd_cost * bit(commitment.u_sd[j][t]);
            if commitment.u_on[j][t] {
                cost += dur[t] * dev.net_cost(t, dispatch.p[j][t]);
            }
        }
    }
    for i in 0..case.buses.len() {
        for t in 0..nt {
            cost += dur[t]
                * case.penalties.balance
                * (dispatch.p_mismatch[i][t].abs() + dispatch.q_mismatch[i][t].abs());
        }
    }
    stats.objective = -cost;
    stats.total_seconds = total.elapsed().as_secs_f64();

    Ok(RunOutput {
        solution: FullSolution {
            commitment,
            dispatch,
            reserves,
            meta: SolutionMeta {
                algorithm: Some(alg),
                objective: Some(-cost),
                ..Default::default()
            },
        },
        stats,
    })
}
