//! Reserve strategies applied around the per-period OPF: greedy headroom
//! allocation, bound tightening from reserves fixed in the UC (with a local
//! balance guard and top-fraction selection), and LP re-dispatch at fixed
//! power.

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpOptions, LpStatus};
use crate::model::{
    cascade_shortfall, reserve_headroom, shortfall_cost, Case, CaseIndex, CommitmentSchedule, DeviceKind, Direction,
    DispatchState, PowerKind, ReserveState,
};
use crate::uc::{clip_to_headroom, UcResult};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReserveKinds {
    Active,
    Reactive,
    Both,
}

impl ReserveKinds {
    fn covers(self, kind: PowerKind) -> bool {
        matches!(
            (self, kind),
            (ReserveKinds::Both, _)
                | (ReserveKinds::Active, PowerKind::Active)
                | (ReserveKinds::Reactive, PowerKind::Reactive)
        )
    }
}

/// Something the pipeline had to force: an emptied bound interval, a ramp
/// conflict, a device the guard kept untouched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEvent {
    pub device: String,
    pub period: usize,
    pub reason: String,
    pub lo: f64,
    pub hi: f64,
}

/// Reserve procurement cost plus shortfall penalty, duration weighted.
pub fn reserve_objective(case: &Case, idx: &CaseIndex, state: &ReserveState) -> f64 {
    let mut cost = 0.0;
    for (j, per_k) in state.r.iter().enumerate() {
        for (k, per_t) in per_k.iter().enumerate() {
            for (t, &r) in per_t.iter().enumerate() {
                cost += case.time_grid.durations[t] * idx.reserve_cost[j][k] * r;
            }
        }
    }
    cost + shortfall_cost(case, idx, &state.shortfall)
}

fn eligible(idx: &CaseIndex, j: usize, k: usize, kind: PowerKind) -> bool {
    idx.zone_of(j, kind).is_some() && idx.reserve_cap[j][k] > 0.0
}

/// Fills each device's headroom with products in quality order, best first,
/// regardless of zone requirements. Devices outside any zone of a product's
/// kind offer nothing. Shortfalls are recomputed for the returned reserves.
pub fn greedy_allocate(
    case: &Case,
    commitment: &CommitmentSchedule,
    dispatch: &DispatchState,
    kinds: ReserveKinds,
) -> ReserveState {
    let idx = case.index();
    let nt = case.periods();
    let mut state = ReserveState::zeros(case);
    for t in 0..nt {
        for g in idx.groups.iter().filter(|g| kinds.covers(g.kind)) {
            // allocation is per device, so the order only fixes a convention
            let mut order: Vec<(f64, usize)> = (0..case.devices.len())
                .map(|j| {
                    let dev = &case.devices[j];
                    let room = reserve_headroom(
                        dev,
                        g.kind,
                        dispatch.p[j][t],
                        dispatch.q[j][t],
                        commitment.on(j, t),
                        t,
                        g.direction,
                    );
                    (room.max(0.0), j)
                })
                .collect();
            order.sort_by(|a, b| {
                b.0.total_cmp(&a.0)
                    .then_with(|| case.devices[a.1].id.cmp(&case.devices[b.1].id))
            });
            for (room, j) in order {
                if !commitment.on(j, t) {
                    continue;
                }
                let mut left = room;
                for &k in &g.products {
                    if left <= 0.0 {
                        break;
                    }
                    if !eligible(&idx, j, k, g.kind) {
                        continue;
                    }
                    let take = left.min(idx.reserve_cap[j][k]);
                    state.r[j][k][t] = take;
                    left -= take;
                }
            }
        }
    }
    state.shortfall = cascade_shortfall(case, &idx, &state.r);
    state
}

/// Total fixed active reserve of device `j` at `t` in each direction.
fn active_totals(idx: &CaseIndex, r_jt: &[f64]) -> (f64, f64) {
    let sum = |d: Direction| {
        idx.group(PowerKind::Active, d)
            .map_or(0.0, |g| g.products.iter().map(|&k| r_jt[k]).sum())
    };
    (sum(Direction::Up), sum(Direction::Down))
}

/// Power interval of device `j` at `t` once reserves `(up, down)` are held
/// back: producers lose `up` at the top and `down` at the bottom, consumers
/// the other way round.
fn reserved_interval(case: &Case, j: usize, t: usize, up: f64, down: f64) -> (f64, f64) {
    let dev = &case.devices[j];
    match dev.kind {
        DeviceKind::Producer => (dev.p_min[t] + down, dev.p_max[t] - up),
        DeviceKind::Consumer => (dev.p_min[t] + up, dev.p_max[t] - down),
    }
}

/// Whether fixing `fixed` (device `j`'s reserves at `t`, indexed by product)
/// leaves the device a power level its bus can actually absorb or supply,
/// given the ratings of the in-service lines at the bus and the full ranges
/// of the devices next to it.
pub fn local_balance_guard(case: &Case, idx: &CaseIndex, j: usize, fixed: &[f64], t: usize) -> bool {
    let (up, down) = active_totals(idx, fixed);
    if up <= 0.0 && down <= 0.0 {
        return true;
    }
    let bus = idx.device_bus[j];
    let lines: f64 = idx.bus_lines_from[bus]
        .iter()
        .chain(&idx.bus_lines_to[bus])
        .filter(|&&l| case.lines[l].in_service)
        .map(|&l| case.lines[l].s_max)
        .sum();
    // net injection range of the other devices at the bus
    let (mut o_lo, mut o_hi) = (0.0, 0.0);
    for &o in &idx.bus_devices[bus] {
        if o == j {
            continue;
        }
        let d = &case.devices[o];
        match d.kind {
            DeviceKind::Producer => o_hi += d.p_max[t],
            DeviceKind::Consumer => o_lo -= d.p_max[t],
        }
    }
    let dev = &case.devices[j];
    let (lo, hi) = reserved_interval(case, j, t, up, down);
    let (inj_lo, inj_hi) = if dev.kind == DeviceKind::Producer { (lo, hi) } else { (-hi, -lo) };
    // the bus must net out within the line ratings
    let (ok_lo, ok_hi) = (-lines - o_hi, lines - o_lo);
    inj_lo <= inj_hi && inj_hi >= ok_lo && inj_lo <= ok_hi
}

/// Per device and period power-bound overrides.
#[derive(Debug, Clone, Default)]
pub struct BoundOverrides {
    /// `[device][period]`; `None` keeps the device's own bounds.
    pub p: Vec<Vec<Option<(f64, f64)>>>,
    /// Devices tightened, best value first.
    pub tightened: Vec<usize>,
    pub events: Vec<BoundEvent>,
}

impl BoundOverrides {
    pub fn none(case: &Case) -> Self {
        BoundOverrides {
            p: vec![vec![None; case.periods()]; case.devices.len()],
            ..Default::default()
        }
    }
}

/// Penalty-weighted active reserve a device provides over the horizon.
pub fn reserve_value(case: &Case, idx: &CaseIndex, reserves: &ReserveState, j: usize) -> f64 {
    let Some(z) = idx.zone_of(j, PowerKind::Active) else {
        return 0.0;
    };
    let mut v = 0.0;
    for (k, prod) in case.products.iter().enumerate() {
        if prod.power_kind != PowerKind::Active {
            continue;
        }
        for (t, &r) in reserves.r[j][k].iter().enumerate() {
            v += case.time_grid.durations[t] * idx.zone_penalty[z][k] * r;
        }
    }
    v
}

pub fn tighten_bounds_from_reserves(case: &Case, uc: &UcResult, gamma: f64) -> Result<BoundOverrides> {
    tighten_bounds(case, &uc.commitment, &uc.reserves, gamma, true)
}

/// Ranks active reserve providers by value and fixes the reserves of the top
/// `ceil(gamma * providers)` by shrinking their power bounds. With `guard`
/// set, devices failing the local balance guard in any online period are
/// passed over (and reported) without taking a slot.
pub fn tighten_bounds(
    case: &Case,
    commitment: &CommitmentSchedule,
    reserves: &ReserveState,
    gamma: f64,
    guard: bool,
) -> Result<BoundOverrides> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Internal(format!("gamma {gamma} outside [0, 1]")));
    }
    let idx = case.index();
    let nt = case.periods();
    let mut out = BoundOverrides::none(case);
    let r_at = |j: usize, t: usize| -> Vec<f64> { reserves.r[j].iter().map(|per_t| per_t[t]).collect() };
    let mut providers: Vec<(f64, usize)> = (0..case.devices.len())
        .filter(|&j| {
            (0..nt).any(|t| {
                let (u, d) = active_totals(&idx, &r_at(j, t));
                u > 0.0 || d > 0.0
            })
        })
        .map(|j| (reserve_value(case, &idx, reserves, j), j))
        .collect();
    providers.sort_by(|a, b| {
        b.0.total_cmp(&a.0)
            .then_with(|| case.devices[a.1].id.cmp(&case.devices[b.1].id))
    });
    let quota = (gamma * providers.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    for &(_, j) in &providers {
        if out.tightened.len() >= quota {
            break;
        }
        let dev = &case.devices[j];
        if guard {
            let bad = (0..nt).find(|&t| commitment.on(j, t) && !local_balance_guard(case, &idx, j, &r_at(j, t), t));
            if let Some(t) = bad {
                out.events.push(BoundEvent {
                    device: dev.id.clone(),
                    period: t,
                    reason: "local balance guard".into(),
                    lo: dev.p_min[t],
                    hi: dev.p_max[t],
                });
                continue;
            }
        }
        for t in 0..nt {
            if !commitment.on(j, t) {
                continue;
            }
            let (up, down) = active_totals(&idx, &r_at(j, t));
            let (mut lo, mut hi) = reserved_interval(case, j, t, up, down);
            if lo > hi {
                let mid = 0.5 * (lo + hi);
                out.events.push(BoundEvent {
                    device: dev.id.clone(),
                    period: t,
                    reason: "reserves exceed range".into(),
                    lo,
                    hi,
                });
                lo = mid;
                hi = mid;
            }
            out.p[j][t] = Some((lo, hi));
        }
        out.tightened.push(j);
    }
    Ok(out)
}

/// Column map of a per-period reserve LP.
#[derive(Debug, Clone)]
pub struct ReserveLp {
    pub lp: LinearProgram,
    /// `[device][product]`
    pub r: Vec<Vec<Option<usize>>>,
    /// `[zone][product]`
    pub shortfall: Vec<Vec<Option<usize>>>,
}

/// Reserve procurement at fixed commitment and power for period `t`:
/// capped reserve columns, headroom rows per device and direction group,
/// and zonal cascades closed by penalized shortfalls.
pub fn build_reserve_lp(
    case: &Case,
    idx: &CaseIndex,
    commitment: &CommitmentSchedule,
    dispatch: &DispatchState,
    t: usize,
) -> ReserveLp {
    let d = case.time_grid.durations[t];
    let nk = case.products.len();
    let mut lp = LinearProgram::new();
    let mut rc = vec![vec![None; nk]; case.devices.len()];
    for (j, dev) in case.devices.iter().enumerate() {
        if !commitment.on(j, t) {
            continue;
        }
        for g in &idx.groups {
            let room = reserve_headroom(
                dev,
                g.kind,
                dispatch.p[j][t],
                dispatch.q[j][t],
                true,
                t,
                g.direction,
            )
            .max(0.0);
            let mut row = Vec::new();
            for &k in &g.products {
                if !eligible(idx, j, k, g.kind) {
                    continue;
                }
                let c = lp.add_named_col(
                    format!("r[{}][{}]", dev.id, case.products[k].id),
                    0.0,
                    idx.reserve_cap[j][k],
                    d * idx.reserve_cost[j][k],
                );
                rc[j][k] = Some(c);
                row.push((c, 1.0));
            }
            if !row.is_empty() {
                lp.add_row(f64::NEG_INFINITY, room, row);
            }
        }
    }
    let mut sc = vec![vec![None; nk]; case.zones.len()];
    for (z, zone) in case.zones.iter().enumerate() {
        for g in idx.groups.iter().filter(|g| g.kind == zone.power_kind) {
            let mut row = Vec::new();
            let mut req = 0.0;
            for &k in &g.products {
                let s = lp.add_named_col(
                    format!("shortfall[{}][{}]", zone.id, case.products[k].id),
                    0.0,
                    f64::INFINITY,
                    d * idx.zone_penalty[z][k],
                );
                sc[z][k] = Some(s);
                row.push((s, 1.0));
                for &j in &idx.zone_devices[z] {
                    if let Some(c) = rc[j][k] {
                        row.push((c, 1.0));
                    }
                }
                req += idx.zone_req[z][k][t];
                lp.add_row(req, f64::INFINITY, row.clone());
            }
        }
    }
    ReserveLp {
        lp,
        r: rc,
        shortfall: sc,
    }
}

/// Solves every period's reserve LP (in parallel on the current rayon pool)
/// and assembles the result by period index. Returns the reserves and the
/// summed LP objective.
pub fn redispatch_reserves(
    case: &Case,
    commitment: &CommitmentSchedule,
    dispatch: &DispatchState,
) -> Result<(ReserveState, f64)> {
    let idx = case.index();
    let nt = case.periods();
    let opts = LpOptions {
        feas_tol: 1e-9,
        ..LpOptions::default()
    };
    let per_t: Vec<Result<(Vec<Vec<f64>>, f64)>> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let m = build_reserve_lp(case, &idx, commitment, dispatch, t);
            let sol = solve_lp(&m.lp, &opts);
            if sol.status != LpStatus::Optimal {
                return Err(Error::Internal(format!("reserve LP at period {t} ended {:?}", sol.status)));
            }
            let r = m
                .r
                .iter()
                .map(|per_k| per_k.iter().map(|c| c.map_or(0.0, |c| sol.x[c].max(0.0))).collect())
                .collect();
            Ok((r, sol.objective))
        })
        .collect();
    let mut state = ReserveState::zeros(case);
    let mut objective = 0.0;
    for (t, res) in per_t.into_iter().enumerate() {
        let (r, obj) = res?;
        for (j, per_k) in r.into_iter().enumerate() {
            for (k, v) in per_k.into_iter().enumerate() {
                state.r[j][k][t] = v;
            }
        }
        objective += obj;
    }
    clip_to_headroom(case, &idx, commitment, &dispatch.p, &dispatch.q, &mut state);
    state.shortfall = cascade_shortfall(case, &idx, &state.r);
    Ok((state, objective))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ReserveProduct, ReserveZone, TimeGrid};
    use crate::testing::{bus, simple_device};
    use std::collections::BTreeMap;

    /// One bus in one active zone, producers as given, one period.
    fn zone_case(devs: Vec<crate::model::Device>, req: f64, penalty: f64) -> Case {
        let mut b = bus("b1", true);
        b.active_zone = Some("z".into());
        let products = ReserveProduct::default_set();
        let mut shortfall_penalty = BTreeMap::new();
        for p in products.iter().filter(|p| p.power_kind == PowerKind::Active) {
            shortfall_penalty.insert(p.id.clone(), penalty);
        }
        Case {
            time_grid: TimeGrid::uniform(1, 1.0),
            buses: vec![b],
            lines: vec![],
            devices: devs,
            zones: vec![ReserveZone {
                id: "z".into(),
                power_kind: PowerKind::Active,
                requirement: [("rgu".to_string(), vec![req])].into_iter().collect(),
                shortfall_penalty,
            }],
            products,
            penalties: Default::default(),
        }
    }

    fn at(case: &Case, p: &[f64]) -> (CommitmentSchedule, DispatchState) {
        let mut d = DispatchState::zeros(case);
        for (j, &x) in p.iter().enumerate() {
            d.p[j][0] = x;
        }
        (CommitmentSchedule::all_on(case), d)
    }

    #[test]
    fn greedy_puts_headroom_on_best_product() {
        let case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 10.0)], 0.0, 1000.0);
        let (c, d) = at(&case, &[6.0]);
        let s = greedy_allocate(&case, &c, &d, ReserveKinds::Active);
        let idx = case.index();
        assert_eq!(s.r[0][idx.product_pos["rgu"]][0], 4.0);
        assert_eq!(s.r[0][idx.product_pos["scr"]][0], 0.0);
    }

    #[test]
    fn greedy_respects_caps_then_cascades() {
        let mut g = simple_device("g", DeviceKind::Producer, 1, 0.0, 10.0);
        g.reserve_cap.insert("rgu".into(), 1.0);
        let case = zone_case(vec![g], 0.0, 1000.0);
        let (c, d) = at(&case, &[6.0]);
        let s = greedy_allocate(&case, &c, &d, ReserveKinds::Active);
        let idx = case.index();
        assert_eq!(s.r[0][idx.product_pos["rgu"]][0], 1.0);
        assert_eq!(s.r[0][idx.product_pos["scr"]][0], 3.0);
    }

    #[test]
    fn greedy_skips_offline_devices() {
        let case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 10.0)], 0.0, 1000.0);
        let (_, d) = at(&case, &[0.0]);
        let c = CommitmentSchedule::from_on(&case, vec![vec![false]]);
        let s = greedy_allocate(&case, &c, &d, ReserveKinds::Both);
        assert!(s.r.iter().flatten().flatten().all(|&x| x == 0.0));
    }

    fn guard_case(line_cap: f64) -> Case {
        let mut case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 10.0)], 0.0, 1000.0);
        case.buses.push(bus("b2", false));
        case.lines.push(crate::model::AcLine::simple("l", "b1", "b2", 1.0, -10.0, line_cap));
        case
    }

    #[test]
    fn guard_rejects_down_reserve_beyond_line_capacity() {
        let case = guard_case(3.0);
        let idx = case.index();
        let mut fixed = vec![0.0; case.products.len()];
        fixed[idx.product_pos["rgd"]] = 5.0;
        assert!(!local_balance_guard(&case, &idx, 0, &fixed, 0));
        fixed[idx.product_pos["rgd"]] = 1.0;
        assert!(local_balance_guard(&case, &idx, 0, &fixed, 0));
        assert!(local_balance_guard(&case, &idx, 0, &vec![0.0; case.products.len()], 0));
    }

    fn with_reserves(case: &Case, r: &[(usize, &str, f64)]) -> ReserveState {
        let idx = case.index();
        let mut s = ReserveState::zeros(case);
        for &(j, k, v) in r {
            s.r[j][idx.product_pos[k]][0] = v;
        }
        s
    }

    #[test]
    fn tightening_examples() {
        let case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 10.0)], 0.0, 1000.0);
        let c = CommitmentSchedule::all_on(&case);
        let s = with_reserves(&case, &[(0, "rgu", 2.0)]);
        let none = tighten_bounds(&case, &c, &s, 0.0, true).unwrap();
        assert!(none.p.iter().flatten().all(|o| o.is_none()));
        let all = tighten_bounds(&case, &c, &s, 1.0, true).unwrap();
        assert_eq!(all.p[0][0], Some((0.0, 8.0)));
    }

    #[test]
    fn tightening_picks_highest_value() {
        let devs = vec![
            simple_device("a", DeviceKind::Producer, 1, 0.0, 10.0),
            simple_device("b", DeviceKind::Producer, 1, 0.0, 10.0),
        ];
        let case = zone_case(devs, 0.0, 1.0);
        let c = CommitmentSchedule::all_on(&case);
        // values 5 and 1 at penalty 1
        let s = with_reserves(&case, &[(0, "rgu", 1.0), (1, "rgu", 5.0)]);
        let o = tighten_bounds(&case, &c, &s, 0.5, true).unwrap();
        assert_eq!(o.tightened, vec![1]);
        assert!(o.p[0][0].is_none());
    }

    #[test]
    fn reserve_lp_books_the_gap_as_shortfall() {
        let case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 1.0)], 1.0, 1000.0);
        let (c, d) = at(&case, &[0.4]);
        let (s, obj) = redispatch_reserves(&case, &c, &d).unwrap();
        let idx = case.index();
        let rgu = idx.product_pos["rgu"];
        assert!((s.r[0][rgu][0] - 0.6).abs() < 1e-9);
        assert!((s.shortfall[0][rgu][0] - 0.4).abs() < 1e-9);
        assert!((obj - 400.0).abs() < 1e-6);
        assert!((reserve_objective(&case, &idx, &s) - 400.0).abs() < 1e-6);
    }

    #[test]
    fn zero_requirements_give_zero_reserves() {
        let case = zone_case(vec![simple_device("g", DeviceKind::Producer, 1, 0.0, 1.0)], 0.0, 1000.0);
        let (c, d) = at(&case, &[0.4]);
        let (s, obj) = redispatch_reserves(&case, &c, &d).unwrap();
        assert!(s.r.iter().flatten().flatten().all(|&x| x == 0.0));
        assert_eq!(obj, 0.0);
    }
}
