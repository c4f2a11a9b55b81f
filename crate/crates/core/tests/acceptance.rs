//! End-to-end acceptance checks. Each check prints one PASS/FAIL line to
//! stderr (bypassing the test harness capture) before asserting.

mod common;

use acuc_core::acopf::{acopf_derivatives, branch_flows, solve_acopf, AcOpfProblem, OpfOptions};
use acuc_core::case_io::{generate_case, write_solution, GeneratorSpec};
use acuc_core::evaluator::{check_hard, evaluate, gap_percent};
use acuc_core::mip::MipOptions;
use acuc_core::model::*;
use acuc_core::orchestrator::{run, run_with_uc, solve_uc, RunOptions, RunOutput};
use acuc_core::reserves::{greedy_allocate, redispatch_reserves, reserve_objective, ReserveKinds};
use acuc_core::uc::{solve_copperplate_uc, UcOptions, UcResult};
use common::*;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::time::{Duration, Instant};

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!("criterion {n:>2} {name}: {} ({detail})\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

/// Commitment runs in the pipeline tests stop after a few nodes; the
/// checks are about what happens downstream of any schedule.
fn quick(alg: u8) -> RunOptions {
    RunOptions {
        uc_node_limit: Some(10),
        ..RunOptions::algorithm(alg)
    }
}

fn quick_uc(case: &Case) -> UcResult {
    solve_uc(case, &quick(3)).expect("commitment stage")
}

/// Relative disagreement between the pipeline's own objective and the
/// evaluator's.
fn objective_disagreement(case: &Case, out: &RunOutput) -> f64 {
    let r = evaluate(case, &out.solution, None).unwrap();
    (r.objective - out.stats.objective).abs() / r.objective.abs().max(1.0)
}

#[test]
fn uc_matches_brute_force_on_tiny_cases() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    let opts = UcOptions {
        include_reserves: false,
        mip: MipOptions {
            gap_tol: 1e-10,
            node_limit: None,
            ..UcOptions::default().mip
        },
        ..UcOptions::default()
    };
    for seed in 0..50u64 {
        let periods = rng.gen_range(1..=4);
        let mut spec = GeneratorSpec::new(2, 2, periods).with_seed(seed);
        spec.n_lines = Some(1);
        spec.ramp_tightness = rng.gen_range(0.3..=1.0);
        let mut case = generate_case(&spec).unwrap_or_else(|_| {
            spec.ramp_tightness = 1.0;
            generate_case(&spec).unwrap()
        });
        // make shutting down and starting up worth considering
        for d in &mut case.devices {
            if d.kind == DeviceKind::Producer && seed % 2 == 1 {
                d.initial_on = false;
                d.initial_p = 0.0;
            }
        }
        let uc = solve_copperplate_uc(&case, &opts).unwrap();
        let oracle = brute_force_uc(&case);
        let err = (uc.objective - oracle).abs() / oracle.abs().max(1.0);
        worst = worst.max(err);
        if err > 1e-6 {
            failures.push(format!("seed {seed}: mip {} vs enumeration {oracle}", uc.objective));
        }
    }
    let secs = clock.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs <= 60.0;
    report(1, "UC oracle equivalence", pass, &format!("worst rel err {worst:.1e}, {secs:.1}s"));
    assert!(pass, "{failures:?}");
}

fn complex_flows(line: &AcLine, vi: Complex64, vk: Complex64) -> (Complex64, Complex64) {
    let y = Complex64::new(line.g_sr, line.b_sr);
    let half = Complex64::new(0.0, line.b_ch / 2.0);
    let y_ii = y + Complex64::new(line.g_fr, line.b_fr) + half;
    let y_kk = y + Complex64::new(line.g_to, line.b_to) + half;
    let i_fr = y_ii * vi - y * vk;
    let i_to = y_kk * vk - y * vi;
    (vi * i_fr.conj(), vk * i_to.conj())
}

#[test]
fn branch_flows_match_complex_admittance() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for n in 0..1000 {
        let mut line = AcLine::simple(&format!("l{n}"), "a", "b", rng.gen_range(0.0..20.0), rng.gen_range(-60.0..0.0), 1.0);
        line.g_fr = rng.gen_range(-0.05..0.05);
        line.g_to = rng.gen_range(-0.05..0.05);
        line.b_fr = rng.gen_range(-0.2..0.2);
        line.b_to = rng.gen_range(-0.2..0.2);
        line.b_ch = rng.gen_range(0.0..0.5);
        let (vi, vk) = (rng.gen_range(0.85..1.15), rng.gen_range(0.85..1.15));
        let (ti, tk) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (s_fr, s_to) = complex_flows(&line, Complex64::from_polar(vi, ti), Complex64::from_polar(vk, tk));
        let (p_fr, q_fr, p_to, q_to) = branch_flows(vi, vk, ti, tk, &line, true);
        for (a, b) in [(p_fr, s_fr.re), (q_fr, s_fr.im), (p_to, s_to.re), (q_to, s_to.im)] {
            worst = worst.max((a - b).abs());
        }
    }
    let pass = worst <= 1e-12;
    report(2, "branch-flow oracle", pass, &format!("max abs err {worst:.1e} over 1000 lines"));
    assert!(pass);
}

fn opf_problem(case: &Case, thermal: bool) -> AcOpfProblem {
    let idx = case.index();
    let on = vec![true; case.devices.len()];
    let pb: Vec<_> = case.devices.iter().map(|d| (d.p_min[0], d.p_max[0])).collect();
    let qb: Vec<_> = case.devices.iter().map(|d| (d.q_min[0], d.q_max[0])).collect();
    AcOpfProblem::new(case, &idx, 0, &on, &pb, &qb).unwrap().with_thermal_limits(thermal)
}

/// Compares every Jacobian entry and every Hessian-vector product against
/// central differences; returns the worst relative error.
fn derivative_error(prob: &AcOpfProblem, x: &[f64], lambda: &[f64], w: &[f64]) -> f64 {
    let h = 1e-6;
    let (n, m) = (prob.num_vars(), prob.num_constraints());
    let d = acopf_derivatives(prob, x);
    let mut jac = vec![vec![0.0; n]; m];
    for &(r, c, v) in &d.jacobian {
        jac[r][c] += v;
    }
    let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1.0);
    let mut worst = 0.0f64;
    // objective: linear, so the difference quotient is exact up to round-off
    let f0 = prob.objective(x);
    for j in 0..n {
        let mut xp = x.to_vec();
        xp[j] += 1.0;
        worst = worst.max(rel(prob.objective(&xp) - f0, d.gradient[j]));
    }
    let fd_grad_lag = |x: &[f64]| -> Vec<f64> {
        // gradient of lambda' c(x) by the analytic Jacobian
        let dd = acopf_derivatives(prob, x);
        let mut g = vec![0.0; n];
        for &(r, c, v) in &dd.jacobian {
            g[c] += lambda[r] * v;
        }
        g
    };
    for j in 0..n {
        let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
        xp[j] += h;
        xm[j] -= h;
        let (cp, cm) = (prob.constraints(&xp), prob.constraints(&xm));
        for r in 0..m {
            worst = worst.max(rel((cp[r] - cm[r]) / (2.0 * h), jac[r][j]));
        }
    }
    let hv = prob.hessian_vec(x, lambda, w);
    let (mut xp, mut xm) = (x.to_vec(), x.to_vec());
    for j in 0..n {
        xp[j] += h * w[j];
        xm[j] -= h * w[j];
    }
    let (gp, gm) = (fd_grad_lag(&xp), fd_grad_lag(&xm));
    for j in 0..n {
        worst = worst.max(rel((gp[j] - gm[j]) / (2.0 * h), hv[j]));
    }
    worst
}

/// A point strictly inside the bounds; unbounded coordinates get a random
/// value near the flat start.
fn interior_point(prob: &AcOpfProblem, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let x0 = prob.initial_point();
    prob.lower()
        .iter()
        .zip(prob.upper())
        .zip(&x0)
        .map(|((&lo, &hi), &x)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) if hi > lo => lo + (hi - lo) * rng.gen_range(0.05..0.95),
            (true, true) => lo,
            (true, false) => lo + rng.gen_range(0.01..2.0),
            (false, true) => hi - rng.gen_range(0.01..2.0),
            (false, false) => x + rng.gen_range(-0.5..0.5),
        })
        .collect()
}

#[test]
fn opf_derivatives_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for point in 0..100u64 {
        let mut case = generated(rng.gen_range(4..9), 5, 1, point);
        for line in &mut case.lines {
            line.g_fr = rng.gen_range(0.0..0.02);
            line.b_to = rng.gen_range(-0.05..0.05);
        }
        let prob = opf_problem(&case, point % 2 == 0);
        let x = interior_point(&prob, &mut rng);
        let lambda: Vec<f64> = (0..prob.num_constraints()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..prob.num_vars()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        worst = worst.max(derivative_error(&prob, &x, &lambda, &w));
    }
    let pass = worst <= 1e-6;
    report(3, "derivative check", pass, &format!("worst rel err {worst:.1e} at 100 points"));
    assert!(pass);
}

#[test]
fn opf_terminates_within_tolerances() {
    let opts = OpfOptions::default();
    let mut ok = 0;
    for seed in 0..100u64 {
        let case = generated(10, 20, 1, seed);
        let r = solve_acopf(&opf_problem(&case, false), &opts);
        if r.primal_residual <= 1e-3 && r.dual_residual <= 1.0 && r.iterations <= 300 {
            ok += 1;
        }
    }
    let pass = ok >= 95;
    report(4, "AC-OPF termination", pass, &format!("{ok}/100 within primal 1e-3, dual 1.0, 300 iterations"));
    assert!(pass);
}

/// Sizes for the feasibility sweep, growing to 100 buses by 48 periods.
fn sweep_case(i: u64) -> Case {
    let buses = 10 + (90 * i as usize) / 19;
    let devices = (buses / 4).max(6);
    let periods = if i == 19 { 48 } else { [6, 12, 24, 48][i as usize % 4] };
    generated(buses, devices, periods, 100 + i)
}

/// Returns (pass, detail, disagreements) for hard feasibility of all four
/// algorithms on the sweep.
fn hard_feasibility(agree: &mut Vec<f64>) -> (bool, String) {
    let mut bad = Vec::new();
    for i in 0..20 {
        let case = sweep_case(i);
        let uc = quick_uc(&case);
        for alg in 1..=4 {
            let out = run_with_uc(&case, &quick(alg), &uc).unwrap();
            let v = check_hard(&case, &out.solution);
            if !v.is_empty() {
                bad.push(format!("case {i} alg {alg}: {:?}", v[0]));
            }
            agree.push(objective_disagreement(&case, &out));
        }
    }
    (bad.is_empty(), if bad.is_empty() { "80 runs, no violations".to_string() } else { format!("{} of 80 runs with violations, first {}", bad.len(), bad[0]) })
}

fn reserve_dominance() -> (bool, String) {
    let (mut dominated, mut strict) = (0, 0);
    for i in 0..20u64 {
        let case = generated(8 + i as usize, 8, 4, 300 + i);
        let uc = quick_uc(&case);
        let out = run_with_uc(&case, &quick(2), &uc).unwrap();
        let sol = &out.solution;
        let idx = case.index();
        let greedy = greedy_allocate(&case, &sol.commitment, &sol.dispatch, ReserveKinds::Both);
        let g = reserve_objective(&case, &idx, &greedy);
        let (lp_state, lp) = redispatch_reserves(&case, &sol.commitment, &sol.dispatch).unwrap();
        let lp_recomputed = reserve_objective(&case, &idx, &lp_state);
        if lp_recomputed <= g + 1e-7 * g.abs().max(1.0) && rel_close(lp, lp_recomputed, 1e-6) {
            dominated += 1;
        }
        if lp_recomputed < g - 1e-6 * g.abs().max(1.0) {
            strict += 1;
        }
    }
    (dominated == 20 && strict >= 1, format!("{dominated}/20 dominated, {strict} strict"))
}

fn failure_modes(agree: &mut Vec<f64>) -> (bool, String) {
    let case = congested_reserve_case();
    let uc = solve_uc(&case, &RunOptions::default()).unwrap();
    let mut balance = [0.0; 4];
    let mut shortfall = [0.0; 4];
    for alg in 1..=4u8 {
        let opts = RunOptions {
            thermal_limits: true,
            ..RunOptions::algorithm(alg)
        };
        let out = run_with_uc(&case, &opts, &uc).unwrap();
        let c = evaluate(&case, &out.solution, None).unwrap().components;
        balance[alg as usize - 1] = c.p_penalty + c.q_penalty;
        shortfall[alg as usize - 1] = c.reserve_penalty;
        agree.push(objective_disagreement(&case, &out));
    }
    let pass = balance[0] > 0.0
        && balance[0] >= 10.0 * balance[2]
        && shortfall[1] > 0.0
        && shortfall[1] >= 10.0 * shortfall[2];
    (
        pass,
        format!(
            "balance penalty alg1 {:.1} vs alg3 {:.1}; shortfall penalty alg2 {:.1} vs alg3 {:.1}",
            balance[0], balance[2], shortfall[1], shortfall[2]
        ),
    )
}

fn parallel_consistency(agree: &mut Vec<f64>) -> (bool, String) {
    let case = generated(30, 12, 24, 500);
    let uc = quick_uc(&case);
    let files: Vec<Vec<u8>> = [1, 2, 8]
        .iter()
        .map(|&threads| {
            let out = run_with_uc(&case, &RunOptions { threads, ..quick(4) }, &uc).unwrap();
            agree.push(objective_disagreement(&case, &out));
            write_solution(&out.solution)
        })
        .collect();
    let identical = files.windows(2).all(|w| w[0] == w[1]);

    let mut spec = GeneratorSpec::new(30, 12, 24).with_seed(501);
    spec.ramp_tightness = 1.0;
    let mut loose = generate_case(&spec).unwrap();
    for d in &mut loose.devices {
        let big = 10.0 * d.p_max.iter().cloned().fold(0.0, f64::max);
        d.p_ru = big;
        d.p_rd = big;
        d.p_ru_su = big;
        d.p_rd_sd = big;
    }
    let uc = quick_uc(&loose);
    let a3 = run_with_uc(&loose, &quick(3), &uc).unwrap();
    let a4 = run_with_uc(&loose, &quick(4), &uc).unwrap();
    agree.push(objective_disagreement(&loose, &a3));
    agree.push(objective_disagreement(&loose, &a4));
    let diff = a3
        .solution
        .dispatch
        .p
        .iter()
        .flatten()
        .zip(a4.solution.dispatch.p.iter().flatten())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    (identical && diff <= 1e-6, format!("threads 1/2/8 identical: {identical}; alg3 vs alg4 max |dp| {diff:.1e}"))
}

#[test]
fn pipeline_feasibility_reserves_failure_modes_and_consistency() {
    let mut agree = Vec::new();
    let (p5, d5) = hard_feasibility(&mut agree);
    report(5, "hard feasibility", p5, &d5);
    let (p6, d6) = reserve_dominance();
    report(6, "reserve LP dominance", p6, &d6);
    let (p7, d7) = failure_modes(&mut agree);
    report(7, "failure-mode reproduction", p7, &d7);
    let (p8, d8) = parallel_consistency(&mut agree);
    report(8, "parallel consistency", p8, &d8);

    let worst = agree.iter().cloned().fold(0.0, f64::max);
    let gaps = [(100.0, 99.0, 1.0), (100.0, 100.0, 0.0), (-200.0, -202.0, 1.0), (50.0, 51.0, -2.0)];
    let gaps_ok = gaps.iter().all(|&(r, o, want)| (gap_percent(r, o) - want).abs() < 1e-12);
    let p10 = worst <= 1e-6 && gaps_ok;
    report(
        10,
        "evaluator agreement",
        p10,
        &format!("{} runs, worst rel diff {worst:.1e}; gap hand cases ok: {gaps_ok}", agree.len()),
    );
    assert!(p5 && p6 && p7 && p8 && p10);
}

#[test]
fn parallel_speedup_and_opf_share() {
    let clock = Instant::now();
    let case = generated(300, 60, 48, 900);
    let wall = |alg: u8, threads: usize| {
        let opts = RunOptions { threads, ..quick(alg) };
        let out = run(&case, &opts).unwrap();
        assert!(check_hard(&case, &out.solution).is_empty());
        out.stats
    };
    let one = wall(4, 1);
    let eight = wall(4, 8);
    let seq = wall(3, 1);
    let speedup = one.total_seconds / eight.total_seconds;
    let share = seq.opf_seconds / seq.total_seconds;
    let elapsed = clock.elapsed();
    let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
    let pass = speedup >= 1.4 && share >= 0.5 && elapsed <= Duration::from_secs(15 * 60);
    report(
        9,
        "scaling analogue",
        pass,
        &format!(
            "alg4 1 thread {:.1}s, 8 threads {:.1}s, speedup {speedup:.2}x on {cores} core(s); \
             alg3 OPF {:.1}s of {:.1}s ({:.0}%); {:.0}s elapsed",
            one.total_seconds,
            eight.total_seconds,
            seq.opf_seconds,
            seq.total_seconds,
            100.0 * share,
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}
