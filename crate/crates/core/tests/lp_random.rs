use acuc_core::lp::{solve_lp, LinearProgram, LpOptions, LpSolution, LpStatus, Simplex};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INF: f64 = f64::INFINITY;

/// Random LP that is feasible by construction (rows bracket the activity of
/// a hidden point) and bounded (every column boxed or costed away from its
/// open side).
fn random_lp(seed: u64, n: usize, m: usize, density: f64) -> LinearProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lp = LinearProgram::new();
    let mut x0 = Vec::new();
    for _ in 0..n {
        let lo: f64 = rng.gen_range(-5.0..5.0);
        let hi = lo + rng.gen_range(0.0..10.0);
        let c: f64 = rng.gen_range(-3.0..3.0);
        let (l, u) = match rng.gen_range(0..4) {
            0 if c > 0.0 => (lo, INF),
            1 if c < 0.0 => (-INF, hi),
            2 if rng.gen_bool(0.1) => (lo, lo),
            _ => (lo, hi),
        };
        let v = if l.is_finite() && u.is_finite() { rng.gen_range(l..=u) } else if l.is_finite() { l + 1.0 } else { u - 1.0 };
        x0.push(v);
        lp.add_col(l, u, c);
    }
    for _ in 0..m {
        let mut coeffs = Vec::new();
        for j in 0..n {
            if rng.gen_bool(density) {
                coeffs.push((j, rng.gen_range(-4.0..4.0f64).round()));
            }
        }
        let act: f64 = coeffs.iter().map(|&(j, a)| a * x0[j]).sum();
        let (lo, hi) = match rng.gen_range(0..4) {
            0 => (act, act),
            1 => (act - rng.gen_range(0.0..2.0), INF),
            2 => (-INF, act + rng.gen_range(0.0..2.0)),
            _ => (act - rng.gen_range(0.0..2.0), act + rng.gen_range(0.0..2.0)),
        };
        lp.add_row(lo, hi, coeffs);
    }
    lp
}

/// Optimality certificate: primal feasibility, sign-consistent multipliers
/// with complementary slackness, and a zero duality gap.
fn check_kkt(lp: &LinearProgram, s: &LpSolution, tol: f64) {
    assert!(lp.max_violation(&s.x) <= tol, "primal violation {}", lp.max_violation(&s.x));
    let act = lp.row_activity(&s.x);
    for i in 0..lp.num_rows() {
        let (lo, hi) = lp.row_bounds(i);
        let y = s.row_duals[i];
        if y > tol {
            assert!((act[i] - lo).abs() <= tol * (1.0 + lo.abs()), "row {i}: y={y} but act {} vs lo {lo}", act[i]);
        } else if y < -tol {
            assert!((act[i] - hi).abs() <= tol * (1.0 + hi.abs()), "row {i}: y={y} but act {} vs hi {hi}", act[i]);
        }
    }
    for j in 0..lp.num_cols() {
        let (lo, hi) = lp.col_bounds(j);
        let mut d = lp.cost(j);
        for i in 0..lp.num_rows() {
            for &(k, a) in lp.row(i) {
                if k == j {
                    d -= a * s.row_duals[i];
                }
            }
        }
        assert!((d - s.reduced_costs[j]).abs() <= 1e-6 * (1.0 + d.abs()));
        if d > tol {
            assert!((s.x[j] - lo).abs() <= tol * (1.0 + lo.abs()), "col {j}: d={d} x={} lo={lo}", s.x[j]);
        } else if d < -tol {
            assert!((s.x[j] - hi).abs() <= tol * (1.0 + hi.abs()), "col {j}: d={d} x={} hi={hi}", s.x[j]);
        }
    }
    let dual = s.dual_objective(lp);
    assert!((dual - s.objective).abs() <= 1e-5 * (1.0 + s.objective.abs()), "gap {} vs {}", s.objective, dual);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_feasible_lps_satisfy_kkt(seed in any::<u64>(), n in 1usize..25, m in 0usize..20) {
        let lp = random_lp(seed, n, m, 0.35);
        let s = solve_lp(&lp, &LpOptions::default());
        prop_assert_eq!(s.status, LpStatus::Optimal);
        check_kkt(&lp, &s, 1e-6);
    }

    #[test]
    fn warm_start_after_bound_change_matches_cold(seed in any::<u64>(), n in 2usize..20, m in 1usize..15) {
        let lp = random_lp(seed, n, m, 0.4);
        let mut warm = Simplex::new(&lp, LpOptions::default());
        prop_assert_eq!(warm.solve(), LpStatus::Optimal);
        let snap = warm.snapshot();
        let j = (seed as usize) % n;
        let (lo, hi) = lp.col_bounds(j);
        let x = warm.x()[j];
        let new_hi = if lo.is_finite() { lo.max(x - 0.5) } else { x - 0.5 };
        let mut changed = lp.clone();
        changed.set_col_bounds(j, lo, new_hi.min(hi));
        warm.set_bounds(j, lo, new_hi.min(hi));
        let ws = warm.solve();
        let cold = solve_lp(&changed, &LpOptions::default());
        prop_assert_eq!(ws, cold.status);
        if ws == LpStatus::Optimal {
            let w = warm.solution();
            prop_assert!((w.objective - cold.objective).abs() <= 1e-6 * (1.0 + cold.objective.abs()));
            check_kkt(&changed, &w, 1e-6);
        }
        // back to the original problem through the saved basis
        warm.set_bounds(j, lo, hi);
        warm.restore(&snap);
        prop_assert_eq!(warm.solve(), LpStatus::Optimal);
        let back = warm.solution();
        let orig = solve_lp(&lp, &LpOptions::default());
        prop_assert!((back.objective - orig.objective).abs() <= 1e-6 * (1.0 + orig.objective.abs()));
    }
}

/// Two-variable problems checked against brute-force vertex enumeration.
#[test]
fn small_problems_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..300 {
        let mut lp = LinearProgram::new();
        let c: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
        lp.add_col(0.0, 4.0, c[0]);
        lp.add_col(-1.0, 3.0, c[1]);
        let mut lines: Vec<(f64, f64, f64)> = vec![(1.0, 0.0, 0.0), (1.0, 0.0, 4.0), (0.0, 1.0, -1.0), (0.0, 1.0, 3.0)];
        let mut rows = Vec::new();
        for _ in 0..3 {
            let a = rng.gen_range(-2.0..2.0f64);
            let b = rng.gen_range(-2.0..2.0f64);
            let h = rng.gen_range(-1.0..4.0f64);
            lp.add_row(-INF, h, [(0, a), (1, b)]);
            lines.push((a, b, h));
            rows.push((a, b, h));
        }
        let feasible = |x: f64, y: f64| {
            (-1e-9..=4.0 + 1e-9).contains(&x)
                && (-1.0 - 1e-9..=3.0 + 1e-9).contains(&y)
                && rows.iter().all(|&(a, b, h)| a * x + b * y <= h + 1e-9)
        };
        let mut best: Option<f64> = None;
        for i in 0..lines.len() {
            for k in i + 1..lines.len() {
                let (a1, b1, h1) = lines[i];
                let (a2, b2, h2) = lines[k];
                let det = a1 * b2 - a2 * b1;
                if det.abs() < 1e-12 {
                    continue;
                }
                let x = (h1 * b2 - h2 * b1) / det;
                let y = (a1 * h2 - a2 * h1) / det;
                if feasible(x, y) {
                    let z = c[0] * x + c[1] * y;
                    best = Some(best.map_or(z, |b: f64| b.min(z)));
                }
            }
        }
        let s = solve_lp(&lp, &LpOptions::default());
        match best {
            None => assert_eq!(s.status, LpStatus::Infeasible),
            Some(z) => {
                assert_eq!(s.status, LpStatus::Optimal);
                assert!((s.objective - z).abs() < 1e-7, "{} vs {}", s.objective, z);
            }
        }
    }
}

#[test]
fn larger_sparse_problem_solves() {
    let lp = random_lp(42, 3000, 2000, 0.002);
    let t = std::time::Instant::now();
    let s = solve_lp(&lp, &LpOptions::default());
    assert_eq!(s.status, LpStatus::Optimal);
    check_kkt(&lp, &s, 1e-5);
    eprintln!("3000x2000: {} iterations in {:?}", s.iterations, t.elapsed());
}
