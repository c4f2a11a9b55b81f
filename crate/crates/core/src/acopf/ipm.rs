//! Primal-dual interior-point method for the per-period OPF.
//!
//! Barrier subproblems are solved by Newton steps on the primal-dual
//! equations, with inertia-corrected regularization of the KKT matrix, a
//! fraction-to-boundary rule, and a backtracking filter search over
//! constraint violation and barrier objective with one second-order
//! correction. The objective is scaled so its largest gradient entry is at
//! most 100; all reported residuals are unscaled.

use super::ldl::Ldl;
use super::problem::AcOpfProblem;
use std::collections::HashMap;

#[derive(Debug, Clone)]
pub struct OpfOptions {
    /// Max-norm of the constraint residual accepted as converged.
    pub primal_tol: f64,
    /// Max-norm of the Lagrangian gradient accepted as converged.
    pub dual_tol: f64,
    pub max_iter: usize,
    /// Max bound complementarity, in objective units.
    pub compl_tol: f64,
    /// Constraint residual the solver keeps iterating for once dual and
    /// complementarity targets are met, so that slack values are exact
    /// mismatches rather than approximations.
    pub feas_target: f64,
}

impl Default for OpfOptions {
    fn default() -> Self {
        OpfOptions {
            primal_tol: 1e-3,
            dual_tol: 1.0,
            max_iter: 300,
            compl_tol: 1.0,
            feas_target: 1e-8,
        }
    }
}

pub(crate) struct IpmOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub primal: f64,
    pub dual: f64,
}

const KAPPA_SIGMA: f64 = 1e10;
const DELTA_C: f64 = 1e-8;
const REFINE_STEPS: usize = 5;
const GAMMA_THETA: f64 = 1e-5;
const GAMMA_PHI: f64 = 1e-8;

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// KKT matrix pattern plus the map from emitted triplets to stored entries.
struct Kkt {
    ldl: Ldl,
    slots: Vec<usize>,
    n_entries: usize,
    diag: Vec<usize>,
    /// constraint-block diagonal, where the regularization sits
    cdiag: Vec<usize>,
    /// stored lower-triangle entries, for residual products
    entries: Vec<(usize, usize)>,
}

impl Kkt {
    fn new(dim: usize, trip: &[(usize, usize)], diag_pos: &[usize], cdiag_pos: &[usize]) -> Self {
        let mut map: HashMap<(usize, usize), usize> = HashMap::with_capacity(trip.len());
        let mut entries = Vec::new();
        let slots = trip
            .iter()
            .map(|&(r, c)| {
                let key = (r.max(c), r.min(c));
                *map.entry(key).or_insert_with(|| {
                    entries.push(key);
                    entries.len() - 1
                })
            })
            .collect();
        let ldl = Ldl::analyze(dim, &entries);
        let diag = diag_pos.iter().map(|&i| map[&(i, i)]).collect();
        let cdiag = cdiag_pos.iter().map(|&i| map[&(i, i)]).collect();
        Kkt {
            ldl,
            slots,
            n_entries: entries.len(),
            diag,
            cdiag,
            entries,
        }
    }

    fn mul(&self, vals: &[f64], x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        for (&(r, c), &v) in self.entries.iter().zip(vals) {
            y[r] += v * x[c];
            if r != c {
                y[c] += v * x[r];
            }
        }
        y
    }

    /// Solves with the factored (regularized) matrix, then refines against
    /// the matrix without the constraint regularization, so the step meets
    /// the linearized constraints exactly.
    fn solve(&self, vals: &[f64], rhs: &[f64]) -> Vec<f64> {
        let mut exact = vals.to_vec();
        for &s in &self.cdiag {
            exact[s] = 0.0;
        }
        let mut x = rhs.to_vec();
        self.ldl.solve(&mut x);
        for _ in 0..REFINE_STEPS {
            let ax = self.mul(&exact, &x);
            let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            if inf_norm(&r) <= 1e-14 * inf_norm(rhs).max(1.0) {
                break;
            }
            self.ldl.solve(&mut r);
            for (xi, ri) in x.iter_mut().zip(&r) {
                *xi += ri;
            }
        }
        x
    }
}

struct Eval {
    c: Vec<f64>,
    jac: Vec<(usize, usize, f64)>,
}

pub(crate) fn ipm(prob: &AcOpfProblem, opts: &OpfOptions, x0: Vec<f64>) -> IpmOutcome {
    let n = prob.num_vars();
    let m = prob.num_constraints();
    let lo = prob.lower();
    let hi = prob.upper();
    let has_lo: Vec<bool> = lo.iter().map(|v| v.is_finite()).collect();
    let has_hi: Vec<bool> = hi.iter().map(|v| v.is_finite()).collect();
    let gmax = inf_norm(prob.gradient());
    let sf = if gmax > 100.0 { 100.0 / gmax } else { 1.0 };
    let g: Vec<f64> = prob.gradient().iter().map(|v| v * sf).collect();

    let mut x = x0;
    let mut lam = vec![0.0; m];
    let mut zl: Vec<f64> = has_lo.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut zu: Vec<f64> = has_hi.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut mu = 0.1;
    let mu_min = (sf * opts.compl_tol / 10.0).min(1e-4);
    let mut filter: Vec<(f64, f64)> = Vec::new();
    let mut last_dw: f64 = 0.0;

    let evaluate = |x: &[f64]| {
        let mut jac = Vec::new();
        prob.jacobian(x, &mut jac);
        Eval {
            c: prob.constraints(x),
            jac,
        }
    };
    let barrier = |x: &[f64], mu: f64| -> Option<f64> {
        let mut v = 0.0;
        for i in 0..n {
            v += g[i] * x[i];
            if has_lo[i] {
                let s = x[i] - lo[i];
                if s <= 0.0 {
                    return None;
                }
                v -= mu * s.ln();
            }
            if has_hi[i] {
                let s = hi[i] - x[i];
                if s <= 0.0 {
                    return None;
                }
                v -= mu * s.ln();
            }
        }
        Some(v)
    };

    let mut ev = evaluate(&x);
    let theta_init = one_norm(&ev.c);
    let mut kkt: Option<Kkt> = None;
    let mut hess = Vec::new();
    let mut best: Option<(f64, Vec<f64>, f64, f64)> = None;
    let mut iterations = 0;

    loop {
        // residuals
        let mut rd = g.clone();
        for &(r, c, v) in &ev.jac {
            rd[c] += v * lam[r];
        }
        for i in 0..n {
            rd[i] += zu[i] - zl[i];
        }
        let primal = inf_norm(&ev.c);
        let dual = inf_norm(&rd) / sf;
        let mut compl = 0.0f64;
        let mut compl_mu = 0.0f64;
        for i in 0..n {
            if has_lo[i] {
                let p = (x[i] - lo[i]) * zl[i];
                compl = compl.max(p);
                compl_mu = compl_mu.max((p - mu).abs());
            }
            if has_hi[i] {
                let p = (hi[i] - x[i]) * zu[i];
                compl = compl.max(p);
                compl_mu = compl_mu.max((p - mu).abs());
            }
        }
        let compl_unscaled = compl / sf;
        let score = (primal / opts.primal_tol).max(dual / opts.dual_tol);
        if score.is_finite() && best.as_ref().map_or(true, |b| score <= b.0) {
            best = Some((score, x.clone(), primal, dual));
        }
        if primal <= opts.feas_target && dual <= opts.dual_tol && compl_unscaled <= opts.compl_tol {
            return IpmOutcome {
                x,
                iterations,
                primal,
                dual,
            };
        }
        if iterations >= opts.max_iter || !score.is_finite() {
            break;
        }

        // barrier update
        let err_mu = primal.max(inf_norm(&rd)).max(compl_mu);
        if err_mu <= 10.0 * mu && mu > mu_min {
            mu = (0.2 * mu).min(mu.powf(1.5)).max(mu_min);
            filter.clear();
        }

        // KKT matrix: [W + Sigma + dw I, J^T; J, -dc I]
        prob.hessian(&x, &lam, &mut hess);
        let mut trip: Vec<(usize, usize, f64)> = Vec::with_capacity(hess.len() + ev.jac.len() + n + m);
        trip.extend(hess.iter().copied());
        let mut sigma = vec![0.0; n];
        for i in 0..n {
            if has_lo[i] {
                sigma[i] += zl[i] / (x[i] - lo[i]);
            }
            if has_hi[i] {
                sigma[i] += zu[i] / (hi[i] - x[i]);
            }
            trip.push((i, i, sigma[i]));
        }
        trip.extend(ev.jac.iter().map(|&(r, c, v)| (n + r, c, v)));
        for r in 0..m {
            trip.push((n + r, n + r, -DELTA_C));
        }
        let k = kkt.get_or_insert_with(|| {
            let pos: Vec<(usize, usize)> = trip.iter().map(|&(r, c, _)| (r, c)).collect();
            Kkt::new(n + m, &pos, &(0..n).collect::<Vec<_>>(), &(n..n + m).collect::<Vec<_>>())
        });
        let mut base = vec![0.0; k.n_entries];
        for (t, &(_, _, v)) in trip.iter().enumerate() {
            base[k.slots[t]] += v;
        }
        let mut dw: f64 = 0.0;
        let vals = loop {
            let mut vals = base.clone();
            if dw > 0.0 {
                for &s in &k.diag {
                    vals[s] += dw;
                }
            }
            let inertia = k.ldl.factor(&vals);
            if inertia.zero == 0 && inertia.positive == n && inertia.negative == m {
                break Some(vals);
            }
            dw = if dw == 0.0 {
                if last_dw == 0.0 {
                    1e-4
                } else {
                    (last_dw / 3.0).max(1e-20)
                }
            } else if last_dw == 0.0 {
                dw * 100.0
            } else {
                dw * 8.0
            };
            if dw > 1e40 {
                break None;
            }
        };
        let Some(vals) = vals else {
            log::warn!("period {}: KKT matrix could not be regularized", prob.t);
            break;
        };
        if dw > 0.0 {
            last_dw = dw;
        }

        // barrier gradient and Newton step
        let mut gphi = g.clone();
        for i in 0..n {
            if has_lo[i] {
                gphi[i] -= mu / (x[i] - lo[i]);
            }
            if has_hi[i] {
                gphi[i] += mu / (hi[i] - x[i]);
            }
        }
        let mut rhs = vec![0.0; n + m];
        for i in 0..n {
            rhs[i] = -gphi[i];
        }
        for &(r, c, v) in &ev.jac {
            rhs[c] -= v * lam[r];
        }
        for r in 0..m {
            rhs[n + r] = -ev.c[r];
        }
        let sol = k.solve(&vals, &rhs);
        let (dx, dl) = sol.split_at(n);

        // fraction to the boundary
        let tau = (1.0 - mu).max(0.99);
        let max_step = |x: &[f64], dx: &[f64]| {
            let mut a = 1.0f64;
            for i in 0..n {
                if has_lo[i] && dx[i] < 0.0 {
                    a = a.min(-tau * (x[i] - lo[i]) / dx[i]);
                }
                if has_hi[i] && dx[i] > 0.0 {
                    a = a.min(tau * (hi[i] - x[i]) / dx[i]);
                }
            }
            a
        };
        let alpha_max = max_step(&x, dx);
        let mut dzl = vec![0.0; n];
        let mut dzu = vec![0.0; n];
        let mut alpha_z = 1.0f64;
        for i in 0..n {
            if has_lo[i] {
                let s = x[i] - lo[i];
                dzl[i] = mu / s - zl[i] - zl[i] / s * dx[i];
                if dzl[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zl[i] / dzl[i]);
                }
            }
            if has_hi[i] {
                let s = hi[i] - x[i];
                dzu[i] = mu / s - zu[i] + zu[i] / s * dx[i];
                if dzu[i] < 0.0 {
                    alpha_z = alpha_z.min(-tau * zu[i] / dzu[i]);
                }
            }
        }

        // filter line search on (constraint violation, barrier objective)
        let theta0 = one_norm(&ev.c);
        let phi0 = barrier(&x, mu).unwrap_or(f64::INFINITY);
        let dphi = gphi.iter().zip(dx).map(|(a, b)| a * b).sum::<f64>();
        let theta_max = 1e4 * theta_init.max(1.0);
        let theta_min = 1e-4 * theta_init.max(1.0);
        let trial = |x: &[f64], step: &[f64], a: f64| -> (Vec<f64>, f64, f64) {
            let xt: Vec<f64> = x.iter().zip(step).map(|(xi, di)| xi + a * di).collect();
            let theta = one_norm(&prob.constraints(&xt));
            let phi = barrier(&xt, mu).unwrap_or(f64::INFINITY);
            (xt, theta, phi)
        };
        // Some(true) when accepted as an objective step (no filter entry)
        let judge = |theta: f64, phi: f64, a: f64, filter: &[(f64, f64)]| -> Option<bool> {
            if !phi.is_finite() || !theta.is_finite() || theta > theta_max {
                return None;
            }
            if filter.iter().any(|&(ft, fp)| theta >= ft && phi >= fp) {
                return None;
            }
            let switching = dphi < 0.0 && a * (-dphi).powf(2.3) > theta0.powf(1.1);
            if theta0 <= theta_min && switching {
                return (phi <= phi0 + 1e-4 * a * dphi).then_some(true);
            }
            (theta <= (1.0 - GAMMA_THETA) * theta0 || phi <= phi0 - GAMMA_PHI * theta0).then_some(false)
        };
        let mut alpha = alpha_max;
        let mut accepted: Option<(Vec<f64>, bool)> = None;
        let (xt, th, ph) = trial(&x, dx, alpha);
        if let Some(f) = judge(th, ph, alpha, &filter) {
            accepted = Some((xt, f));
        } else if th >= theta0 {
            // second-order correction on the full step
            let ct = prob.constraints(&xt);
            let mut rhs_soc = rhs.clone();
            for r in 0..m {
                rhs_soc[n + r] = -(alpha * ev.c[r] + ct[r]);
            }
            let soc = k.solve(&vals, &rhs_soc);
            let dx_soc = &soc[..n];
            let a_soc = max_step(&x, dx_soc);
            let (xs, ths, phs) = trial(&x, dx_soc, a_soc);
            if let Some(f) = judge(ths, phs, alpha, &filter) {
                accepted = Some((xs, f));
            }
        }
        while accepted.is_none() && alpha > 1e-8 {
            alpha *= 0.5;
            let (xt, th, ph) = trial(&x, dx, alpha);
            if let Some(f) = judge(th, ph, alpha, &filter) {
                accepted = Some((xt, f));
            }
        }
        let objective_step = match accepted {
            Some((xt, f)) => {
                x = xt;
                f
            }
            None => {
                // no acceptable point along the direction: restart the filter
                // from the full Newton step
                filter.clear();
                alpha = alpha_max;
                x = x.iter().zip(dx).map(|(xi, di)| xi + alpha * di).collect();
                true
            }
        };
        if !objective_step {
            filter.push(((1.0 - GAMMA_THETA) * theta0, phi0 - GAMMA_PHI * theta0));
        }
        for (l, d) in lam.iter_mut().zip(dl) {
            *l += alpha * d;
        }
        for i in 0..n {
            if has_lo[i] {
                let s = x[i] - lo[i];
                zl[i] = (zl[i] + alpha_z * dzl[i]).clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
            if has_hi[i] {
                let s = hi[i] - x[i];
                zu[i] = (zu[i] + alpha_z * dzu[i]).clamp(mu / (KAPPA_SIGMA * s), KAPPA_SIGMA * mu / s);
            }
        }
        ev = evaluate(&x);
        iterations += 1;
    }
    match best {
        Some((_, x, primal, dual)) => IpmOutcome {
            x,
            iterations,
            primal,
            dual,
        },
        None => {
            let c = prob.constraints(&x);
            IpmOutcome {
                primal: inf_norm(&c),
                dual: f64::INFINITY,
                x,
                iterations,
            }
        }
    }
}
