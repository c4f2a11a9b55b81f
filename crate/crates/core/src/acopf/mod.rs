//! Per-period AC optimal power flow in polar form.
//!
//! Device powers, bus voltages and angles are the variables; bus balances
//! carry split nonnegative slacks priced at the balance penalty, so every
//! problem has a feasible point. Costs enter through piecewise-linear block
//! variables, keeping the objective linear and all curvature in the flows.

mod flows;
mod ipm;
mod ldl;
mod problem;

pub use flows::{all_flows, balance_residual, branch_flows, flow_coefs, FlowCoef, FlowEval};
pub use ipm::OpfOptions;
pub use ldl::{Inertia, Ldl};
pub use problem::{acopf_derivatives, AcOpfProblem, Derivatives, OpfDevice, OpfLine, Slot};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcOpfResult {
    pub t: usize,
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
    /// Indexed like `case.devices`; zero for offline devices.
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    /// Indexed like `case.lines`; zero for lines out of service.
    pub p_fr: Vec<f64>,
    pub q_fr: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
    /// Exact bus residuals recomputed from the returned point.
    pub p_mismatch: Vec<f64>,
    pub q_mismatch: Vec<f64>,
    /// Device cost plus balance (and, when enabled, overload) penalties,
    /// recomputed from the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub converged: bool,
}

impl AcOpfResult {
    pub fn mismatch_total(&self) -> f64 {
        self.p_mismatch.iter().chain(&self.q_mismatch).map(|x| x.abs()).sum()
    }
}

pub fn solve_acopf(problem: &AcOpfProblem, opts: &OpfOptions) -> AcOpfResult {
    let x0 = problem.initial_point();
    let out = ipm::ipm(problem, opts, x0.clone());
    let ok = out.x.iter().all(|v| v.is_finite());
    // restoration fallback: keep the flat start when the iterate is unusable
    let (x, primal, dual) = if ok {
        (out.x, out.primal, out.dual)
    } else {
        let c = problem.constraints(&x0);
        (x0, c.iter().fold(0.0, |m: f64, v| m.max(v.abs())), f64::INFINITY)
    };
    let converged = primal <= opts.primal_tol && dual <= opts.dual_tol;
    if !converged {
        log::warn!(
            "OPF at period {} stopped after {} iterations, primal {primal:.2e}, dual {dual:.2e}",
            problem.t,
            out.iterations
        );
    }
    assemble(problem, &x, out.iterations, primal, dual, converged)
}

fn assemble(
    problem: &AcOpfProblem,
    x: &[f64],
    iterations: usize,
    primal: f64,
    dual: f64,
    converged: bool,
) -> AcOpfResult {
    let (v, theta, p, q) = problem.unpack(x);
    let nl = problem.n_case_lines;
    let nb = v.len();
    let (mut p_fr, mut q_fr, mut p_to, mut q_to) = (vec![0.0; nl], vec![0.0; nl], vec![0.0; nl], vec![0.0; nl]);
    let mut pm = vec![0.0; nb];
    let mut qm = vec![0.0; nb];
    for dev in &problem.devices {
        pm[dev.bus] += dev.sign * p[dev.device];
        qm[dev.bus] += dev.sign * q[dev.device];
    }
    let mut overload = 0.0;
    for ln in &problem.lines {
        let (i, k) = (ln.from, ln.to);
        let d = theta[i] - theta[k];
        let f = ln.coefs.map(|c| c.value(v[i], v[k], d));
        (p_fr[ln.line], q_fr[ln.line], p_to[ln.line], q_to[ln.line]) = (f[0], f[1], f[2], f[3]);
        pm[i] -= f[0];
        qm[i] -= f[1];
        pm[k] -= f[2];
        qm[k] -= f[3];
        if problem.thermal_limits {
            for (a, b) in [(f[0], f[1]), (f[2], f[3])] {
                overload += ((a * a + b * b).sqrt() - ln.s_max).max(0.0);
            }
        }
    }
    let mismatch: f64 = pm.iter().chain(&qm).map(|x| x.abs()).sum();
    let objective = problem.device_cost(&p)
        + problem.duration * (problem.balance_penalty * mismatch + problem.overload_penalty * overload);
    AcOpfResult {
        t: problem.t,
        v,
        theta,
        p,
        q,
        p_fr,
        q_fr,
        p_to,
        q_to,
        p_mismatch: pm,
        q_mismatch: qm,
        objective,
        iterations,
        primal_residual: primal,
        dual_residual: dual,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CostCurve, DeviceKind};
    use crate::testing::{simple_device, two_bus_case};

    fn online_all(case: &crate::model::Case) -> (Vec<bool>, Vec<(f64, f64)>, Vec<(f64, f64)>) {
        let t = 0;
        (
            vec![true; case.devices.len()],
            case.devices.iter().map(|d| (d.p_min[t], d.p_max[t])).collect(),
            case.devices.iter().map(|d| (d.q_min[t], d.q_max[t])).collect(),
        )
    }

    #[test]
    fn single_bus_meets_fixed_demand() {
        let mut case = two_bus_case();
        case.lines.clear();
        case.buses.truncate(1);
        let mut g = simple_device("g1", DeviceKind::Producer, 2, 0.0, 2.0);
        g.cost = vec![CostCurve::new(&[(2.0, 1.0)]); 2];
        let mut c = simple_device("c1", DeviceKind::Consumer, 2, 0.5, 0.5);
        c.q_min = vec![0.0; 2];
        c.q_max = vec![0.0; 2];
        c.cost = vec![CostCurve::new(&[(0.5, 0.0)]); 2];
        case.devices = vec![g, c];
        let idx = case.index();
        let (on, pb, qb) = online_all(&case);
        let prob = AcOpfProblem::new(&case, &idx, 0, &on, &pb, &qb).unwrap();
        let r = solve_acopf(&prob, &OpfOptions::default());
        assert!(r.converged);
        assert!((r.p[0] - 0.5).abs() < 1e-6, "{r:?}");
        assert!(r.mismatch_total() < 1e-6);
        assert!((r.objective - 0.5).abs() < 1e-4, "{}", r.objective);
    }

    #[test]
    fn excess_demand_shows_as_mismatch() {
        let mut case = two_bus_case();
        case.lines.clear();
        case.buses.truncate(1);
        let g = simple_device("g1", DeviceKind::Producer, 2, 0.0, 1.0);
        let mut c = simple_device("c1", DeviceKind::Consumer, 2, 1.2, 1.2);
        c.q_min = vec![0.0; 2];
        c.q_max = vec![0.0; 2];
        case.devices = vec![g, c];
        let idx = case.index();
        let (on, pb, qb) = online_all(&case);
        let prob = AcOpfProblem::new(&case, &idx, 0, &on, &pb, &qb).unwrap();
        let r = solve_acopf(&prob, &OpfOptions::default());
        assert!(r.converged);
        let total: f64 = r.p_mismatch.iter().map(|x| x.abs()).sum();
        assert!((total - 0.2).abs() < 1e-6, "{total}");
        assert!(r.objective > 0.19 * 1e6);
    }

    #[test]
    fn finite_differences_match_on_two_bus() {
        let mut case = two_bus_case();
        case.lines[0].b_ch = 0.05;
        case.lines[0].g_fr = 0.01;
        case.lines[0].b_to = -0.02;
        let idx = case.index();
        let (on, pb, qb) = online_all(&case);
        let prob = AcOpfProblem::new(&case, &idx, 0, &on, &pb, &qb)
            .unwrap()
            .with_thermal_limits(true);
        let mut x = prob.initial_point();
        x[0] = 1.03;
        let h = 1e-6;
        let d = acopf_derivatives(&prob, &x);
        let m = prob.num_constraints();
        for j in 0..prob.num_vars() {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let (cp, cm) = (prob.constraints(&xp), prob.constraints(&xm));
            for r in 0..m {
                let fd = (cp[r] - cm[r]) / (2.0 * h);
                let an: f64 = d.jacobian.iter().filter(|e| e.0 == r && e.1 == j).map(|e| e.2).sum();
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1.0), "row {r} col {j}: {fd} vs {an}");
            }
        }
    }
}
