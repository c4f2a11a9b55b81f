mod common;

use acuc_core::acopf::{branch_flows, solve_acopf, AcOpfProblem, OpfOptions};
use acuc_core::evaluator::{evaluate, evaluate_copperplate};
use acuc_core::model::*;
use acuc_core::orchestrator::{run_with_uc, solve_uc, RunOptions};
use acuc_core::reserves::{greedy_allocate, redispatch_reserves, reserve_objective, tighten_bounds, ReserveKinds};
use acuc_core::testing::{bus, simple_device};
use acuc_core::uc::{solve_copperplate_uc, UcOptions};
use common::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn quick(alg: u8) -> RunOptions {
    RunOptions {
        uc_node_limit: Some(10),
        ..RunOptions::algorithm(alg)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn series_losses_are_nonnegative(
        g in 0.0..30.0f64, b in -80.0..0.0f64, gf in 0.0..0.1f64, gt in 0.0..0.1f64, bch in 0.0..0.5f64,
        vi in 0.8..1.2f64, vk in 0.8..1.2f64, ti in -1.5..1.5f64, tk in -1.5..1.5f64,
    ) {
        let mut line = AcLine::simple("l", "a", "b", g, b, 1.0);
        line.g_fr = gf;
        line.g_to = gt;
        line.b_ch = bch;
        let (p_fr, _, p_to, _) = branch_flows(vi, vk, ti, tk, &line, true);
        prop_assert!(p_fr + p_to >= -1e-12, "{p_fr} + {p_to}");
    }

    #[test]
    fn lossless_line_conserves_active_power(
        b in -80.0..-0.1f64, vi in 0.8..1.2f64, vk in 0.8..1.2f64, d in -1.5..1.5f64,
    ) {
        let line = AcLine::simple("l", "a", "b", 0.0, b, 1.0);
        let (p_fr, _, p_to, _) = branch_flows(vi, vk, d, 0.0, &line, true);
        prop_assert!((p_fr + p_to).abs() <= 1e-12);
        // and matches the textbook transfer expression
        prop_assert!((p_fr - (-b) * vi * vk * d.sin()).abs() <= 1e-12);
    }
}

/// Active and reactive power arriving at bus 2 through `line`, from the
/// complex current.
fn delivered(line: &AcLine, v1: f64, v2: f64, delta: f64) -> (f64, f64) {
    let y = Complex64::new(line.g_sr, line.b_sr);
    let y_kk = y + Complex64::new(line.g_to, line.b_to + line.b_ch / 2.0);
    let (e1, e2) = (Complex64::from_polar(v1, delta), Complex64::from_polar(v2, 0.0));
    let s_to = e2 * (y_kk * e2 - y * e1).conj();
    (-s_to.re, -s_to.im)
}

#[test]
fn two_bus_dispatch_matches_bisection_power_flow() {
    let nt = 1;
    let mut g = simple_device("g", DeviceKind::Producer, nt, 0.0, 5.0);
    g.q_min = vec![-5.0];
    let mut load = simple_device("load", DeviceKind::Consumer, nt, 0.8, 0.8);
    load.bus = "b2".into();
    load.q_min = vec![0.2];
    load.q_max = vec![0.2];
    let mut line = AcLine::simple("l", "b1", "b2", 2.0, -12.0, 5.0);
    line.b_ch = 0.04;
    let case = Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses: vec![bus("b1", true), bus("b2", false)],
        lines: vec![line.clone()],
        devices: vec![g, load],
        zones: vec![],
        products: vec![],
        penalties: Penalties::default(),
    };
    let idx = case.index();
    let on = vec![true; 2];
    let pb: Vec<_> = case.devices.iter().map(|d| (d.p_min[0], d.p_max[0])).collect();
    let qb: Vec<_> = case.devices.iter().map(|d| (d.q_min[0], d.q_max[0])).collect();
    let prob = AcOpfProblem::new(&case, &idx, 0, &on, &pb, &qb).unwrap();
    let r = solve_acopf(&prob, &OpfOptions::default());
    assert!(r.converged);
    let (v1, v2) = (r.v[0], r.v[1]);

    // the angle at which the line delivers the load, by bisection
    let (mut lo, mut hi) = (0.0, 1.2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if delivered(&line, v1, v2, mid).0 < 0.8 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let delta = 0.5 * (lo + hi);
    assert!((r.theta[0] - r.theta[1] - delta).abs() < 1e-6, "{} vs {delta}", r.theta[0] - r.theta[1]);
    assert!((delivered(&line, v1, v2, delta).1 - 0.2).abs() < 1e-6);
    let y = Complex64::new(line.g_sr, line.b_sr);
    let y_ii = y + Complex64::new(0.0, line.b_ch / 2.0);
    let (e1, e2) = (Complex64::from_polar(v1, delta), Complex64::from_polar(v2, 0.0));
    let sent = e1 * (y_ii * e1 - y * e2).conj();
    assert!((r.p[0] - sent.re).abs() < 1e-6);
    assert!((r.q[0] - sent.im).abs() < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn balance_penalty_grows_with_injected_imbalance(seed in 0u64..1000, j in 0usize..6, t in 0usize..4) {
        let case = generated(6, 6, 4, seed);
        let out = run_with_uc(&case, &quick(3), &solve_uc(&case, &quick(3)).unwrap()).unwrap();
        let base = evaluate(&case, &out.solution, None).unwrap();
        let d = case.time_grid.durations[t];
        let pen = case.penalties.balance;
        let mut last = base.components.p_penalty;
        for step in [0.01, 0.02, 0.05] {
            let mut sol = out.solution.clone();
            sol.dispatch.p[j][t] += step;
            let c = evaluate(&case, &sol, None).unwrap().components;
            prop_assert!(c.p_penalty > last);
            let want = base.components.p_penalty + pen * d * step;
            // the step may cancel the base residual at its bus, at most once over
            let slack = 2.0 * base.components.p_penalty + 1e-6 * want;
            prop_assert!((c.p_penalty - want).abs() <= slack, "{} vs {want}", c.p_penalty);
            last = c.p_penalty;
        }
    }

    #[test]
    fn greedy_fills_headroom_or_caps(seed in 0u64..1000) {
        let mut case = generated(6, 8, 3, seed);
        // caps make the "or every product capped" branch reachable
        for (i, d) in case.devices.iter_mut().enumerate() {
            if i % 3 == 0 {
                d.reserve_cap.insert("rgu".into(), 0.01);
            }
        }
        let out = run_with_uc(&case, &quick(2), &solve_uc(&case, &quick(2)).unwrap()).unwrap();
        let sol = &out.solution;
        let idx = case.index();
        let state = greedy_allocate(&case, &sol.commitment, &sol.dispatch, ReserveKinds::Both);
        for (j, dev) in case.devices.iter().enumerate() {
            for t in 0..case.periods() {
                for g in &idx.groups {
                    let on = sol.commitment.on(j, t);
                    let room = reserve_headroom(dev, g.kind, sol.dispatch.p[j][t], sol.dispatch.q[j][t], on, t, g.direction).max(0.0);
                    let used: f64 = g.products.iter().map(|&k| state.r[j][k][t]).sum();
                    prop_assert!(used <= room + 1e-12);
                    let eligible: Vec<usize> = g.products.iter().copied()
                        .filter(|&k| on && idx.zone_of(j, g.kind).is_some() && idx.reserve_cap[j][k] > 0.0)
                        .collect();
                    let capped = eligible.iter().all(|&k| state.r[j][k][t] >= idx.reserve_cap[j][k] - 1e-12);
                    prop_assert!(eligible.is_empty() || capped || used >= room - 1e-12,
                        "device {j} period {t}: used {used} of {room}");
                }
            }
        }
    }

    #[test]
    fn reserve_lp_never_loses_to_greedy(seed in 0u64..1000) {
        let case = generated(8, 8, 3, seed);
        let out = run_with_uc(&case, &quick(1), &solve_uc(&case, &quick(1)).unwrap()).unwrap();
        let sol = &out.solution;
        let idx = case.index();
        let greedy = reserve_objective(&case, &idx, &greedy_allocate(&case, &sol.commitment, &sol.dispatch, ReserveKinds::Both));
        let (state, _) = redispatch_reserves(&case, &sol.commitment, &sol.dispatch).unwrap();
        prop_assert!(reserve_objective(&case, &idx, &state) <= greedy + 1e-7 * greedy.abs().max(1.0));
    }

    #[test]
    fn tightened_bounds_keep_the_uc_point(seed in 0u64..1000, gamma in 0.0..=1.0f64, guard: bool) {
        let case = generated(8, 10, 4, seed);
        let uc = solve_uc(&case, &quick(3)).unwrap();
        let ov = tighten_bounds(&case, &uc.commitment, &uc.reserves, gamma, guard).unwrap();
        for (j, per_t) in ov.p.iter().enumerate() {
            for (t, b) in per_t.iter().enumerate() {
                if let Some((lo, hi)) = *b {
                    prop_assert!(lo - 1e-9 <= uc.p[j][t] && uc.p[j][t] <= hi + 1e-9,
                        "device {j} period {t}: {} outside [{lo}, {hi}]", uc.p[j][t]);
                }
            }
        }
    }

    #[test]
    fn copperplate_replay_matches_uc_objective(seed in 0u64..1000, nt in 1usize..6) {
        let case = generated(5, 6, nt, seed);
        let uc = solve_copperplate_uc(&case, &UcOptions::default()).unwrap();
        let c = evaluate_copperplate(&case, &uc.commitment, &uc.p, &uc.q, &uc.reserves, true);
        prop_assert!(rel_close(-c.objective(), uc.objective, 1e-6), "{} vs {}", -c.objective(), uc.objective);
    }
}

#[test]
fn enumeration_agrees_with_uc_on_a_hand_case() {
    // a start-up cost large enough that staying off for one period pays
    let nt = 3;
    let mut g = simple_device("g", DeviceKind::Producer, nt, 0.5, 2.0);
    g.initial_on = false;
    g.initial_p = 0.0;
    g.su_cost = 500.0;
    g.p_ru_su = 1.0;
    let mut c = simple_device("c", DeviceKind::Consumer, nt, 0.0, 1.5);
    c.q_min = vec![0.0; nt];
    c.q_max = vec![0.0; nt];
    c.cost = vec![CostCurve::new(&[(1.5, 300.0)]); nt];
    let case = Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses: vec![bus("b1", true)],
        lines: vec![],
        devices: vec![g, c],
        zones: vec![],
        products: vec![],
        penalties: Penalties::default(),
    };
    let opts = UcOptions {
        include_reserves: false,
        ..UcOptions::default()
    };
    let uc = solve_copperplate_uc(&case, &opts).unwrap();
    let oracle = brute_force_uc(&case);
    assert!(rel_close(uc.objective, oracle, 1e-6), "{} vs {oracle}", uc.objective);
}
