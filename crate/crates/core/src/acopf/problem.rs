use super::flows::{flow_coefs, FlowCoef};
use crate::error::{Error, Result};
use crate::model::{Case, CaseIndex, DeviceKind};

/// Bound ranges narrower than this are treated as fixed values.
const FIXED_RANGE: f64 = 1e-9;

/// Where a modelling quantity lives: a free variable or a constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slot {
    Var(usize),
    Fixed(f64),
}

#[derive(Debug, Clone)]
pub struct OpfDevice {
    /// Position in `case.devices`.
    pub device: usize,
    pub bus: usize,
    /// +1 for producers, -1 for consumers.
    pub sign: f64,
    pub p_bounds: (f64, f64),
    pub q_bounds: (f64, f64),
    /// `(width, rate)`, truncated at the upper power bound.
    pub blocks: Vec<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct OpfLine {
    /// Position in `case.lines`.
    pub line: usize,
    pub from: usize,
    pub to: usize,
    pub coefs: [FlowCoef; 4],
    pub s_max: f64,
}

#[derive(Debug, Clone, Default)]
struct Layout {
    lower: Vec<f64>,
    upper: Vec<f64>,
    grad: Vec<f64>,
    v: Vec<Slot>,
    th: Vec<Slot>,
    p: Vec<Slot>,
    q: Vec<Slot>,
    delta: Vec<Vec<Slot>>,
    /// Per bus: real surplus, real deficit, reactive surplus, reactive deficit.
    slack: Vec<[usize; 4]>,
    /// Per device, its link row if it has cost blocks.
    link_row: Vec<Option<usize>>,
    /// Per line and side: `(overload, spare)` columns and the row.
    thermal: Vec<[(usize, usize, usize); 2]>,
    m: usize,
}

/// One period of the AC optimal power flow. Only online devices and
/// in-service lines take part. Bus balances hold exactly thanks to split
/// slacks priced at the balance penalty, so the problem is always feasible.
#[derive(Debug, Clone)]
pub struct AcOpfProblem {
    pub t: usize,
    pub duration: f64,
    pub v_bounds: Vec<(f64, f64)>,
    pub reference: usize,
    pub devices: Vec<OpfDevice>,
    pub lines: Vec<OpfLine>,
    pub balance_penalty: f64,
    pub overload_penalty: f64,
    pub thermal_limits: bool,
    pub n_case_devices: usize,
    pub n_case_lines: usize,
    layout: Layout,
}

fn truncated_blocks(blocks: &[crate::model::CostBlock], p_hi: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut left = p_hi.max(0.0);
    for (b, block) in blocks.iter().enumerate() {
        if left <= 0.0 {
            break;
        }
        let w = if b + 1 == blocks.len() { left } else { block.width.min(left) };
        left -= w;
        out.push((w, block.rate));
    }
    out
}

impl AcOpfProblem {
    /// `online`, `p_bounds` and `q_bounds` are indexed like `case.devices`;
    /// bounds of offline devices are ignored.
    pub fn new(
        case: &Case,
        idx: &CaseIndex,
        t: usize,
        online: &[bool],
        p_bounds: &[(f64, f64)],
        q_bounds: &[(f64, f64)],
    ) -> Result<Self> {
        let mut devices = Vec::new();
        for (j, dev) in case.devices.iter().enumerate() {
            if !online[j] {
                continue;
            }
            let curve = &dev.cost[t];
            let convex = match dev.kind {
                DeviceKind::Producer => curve.is_nondecreasing(),
                DeviceKind::Consumer => curve.is_nonincreasing(),
            };
            if !convex {
                return Err(Error::NonConvex {
                    device: dev.id.clone(),
                    period: t,
                });
            }
            let (lo, hi) = p_bounds[j];
            let (qlo, qhi) = q_bounds[j];
            if !(lo <= hi) || !(qlo <= qhi) {
                return Err(Error::Internal(format!("device '{}' has empty bounds at period {t}", dev.id)));
            }
            devices.push(OpfDevice {
                device: j,
                bus: idx.device_bus[j],
                sign: dev.sign(),
                p_bounds: (lo, hi),
                q_bounds: (qlo, qhi),
                blocks: truncated_blocks(&curve.blocks, hi),
            });
        }
        let lines = case
            .lines
            .iter()
            .enumerate()
            .filter(|(_, l)| l.in_service)
            .map(|(l, line)| OpfLine {
                line: l,
                from: idx.line_from[l],
                to: idx.line_to[l],
                coefs: flow_coefs(line),
                s_max: line.s_max,
            })
            .collect();
        let mut p = AcOpfProblem {
            t,
            duration: case.time_grid.durations[t],
            v_bounds: case.buses.iter().map(|b| (b.v_min, b.v_max)).collect(),
            reference: idx.reference_bus,
            devices,
            lines,
            balance_penalty: case.penalties.balance,
            overload_penalty: case.penalties.line_overload,
            thermal_limits: false,
            n_case_devices: case.devices.len(),
            n_case_lines: case.lines.len(),
            layout: Layout::default(),
        };
        p.build_layout();
        Ok(p)
    }

    /// Turns the soft line-rating constraints on or off.
    pub fn with_thermal_limits(mut self, on: bool) -> Self {
        self.thermal_limits = on;
        self.build_layout();
        self
    }

    fn build_layout(&mut self) {
        let mut l = Layout::default();
        let d = self.duration;
        fn add(l: &mut Layout, lo: f64, hi: f64, cost: f64) -> Slot {
            if hi - lo < FIXED_RANGE {
                Slot::Fixed(0.5 * (lo + hi))
            } else {
                l.lower.push(lo);
                l.upper.push(hi);
                l.grad.push(cost);
                Slot::Var(l.lower.len() - 1)
            }
        }
        fn col(slot: Slot) -> usize {
            match slot {
                Slot::Var(i) => i,
                Slot::Fixed(_) => unreachable!("unbounded columns are never fixed"),
            }
        }
        let inf = f64::INFINITY;
        let nb = self.v_bounds.len();
        for (i, &(lo, hi)) in self.v_bounds.iter().enumerate() {
            let sv = add(&mut l, lo, hi, 0.0);
            l.v.push(sv);
            let st = if i == self.reference { Slot::Fixed(0.0) } else { add(&mut l, -inf, inf, 0.0) };
            l.th.push(st);
        }
        for dev in &self.devices {
            let sp = add(&mut l, dev.p_bounds.0, dev.p_bounds.1, 0.0);
            let sq = add(&mut l, dev.q_bounds.0, dev.q_bounds.1, 0.0);
            l.p.push(sp);
            l.q.push(sq);
            let blocks = dev.blocks.iter().map(|&(w, rate)| add(&mut l, 0.0, w, d * dev.sign * rate)).collect();
            l.delta.push(blocks);
        }
        let pen = d * self.balance_penalty;
        for _ in 0..nb {
            let s = [0; 4].map(|_| col(add(&mut l, 0.0, inf, pen)));
            l.slack.push(s);
        }
        let mut m = 2 * nb;
        for dev in &self.devices {
            if dev.blocks.is_empty() {
                l.link_row.push(None);
            } else {
                l.link_row.push(Some(m));
                m += 1;
            }
        }
        if self.thermal_limits {
            let over = d * self.overload_penalty;
            for _ in &self.lines {
                let side = [0; 2].map(|_| {
                    let s = col(add(&mut l, 0.0, inf, over));
                    let w = col(add(&mut l, 0.0, inf, 0.0));
                    m += 1;
                    (s, w, m - 1)
                });
                l.thermal.push(side);
            }
        }
        l.m = m;
        self.layout = l;
    }

    pub fn num_vars(&self) -> usize {
        self.layout.lower.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.layout.m
    }

    pub fn lower(&self) -> &[f64] {
        &self.layout.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.layout.upper
    }

    /// The objective is linear, so its gradient is constant.
    pub fn gradient(&self) -> &[f64] {
        &self.layout.grad
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        self.layout.grad.iter().zip(x).map(|(g, x)| g * x).sum()
    }

    fn get(slot: Slot, x: &[f64]) -> f64 {
        match slot {
            Slot::Var(i) => x[i],
            Slot::Fixed(v) => v,
        }
    }

    fn line_slots(&self, ln: &OpfLine) -> [Slot; 4] {
        let l = &self.layout;
        [l.v[ln.from], l.v[ln.to], l.th[ln.from], l.th[ln.to]]
    }

    fn line_point(&self, ln: &OpfLine, x: &[f64]) -> (f64, f64, f64) {
        let s = self.line_slots(ln);
        (Self::get(s[0], x), Self::get(s[1], x), Self::get(s[2], x) - Self::get(s[3], x))
    }

    /// Rows receiving `-flow` for `(p_fr, q_fr, p_to, q_to)`.
    fn flow_rows(&self, ln: &OpfLine) -> [usize; 4] {
        let nb = self.v_bounds.len();
        [ln.from, nb + ln.from, ln.to, nb + ln.to]
    }

    pub fn constraints(&self, x: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let nb = self.v_bounds.len();
        let mut c = vec![0.0; l.m];
        for (i, s) in l.slack.iter().enumerate() {
            c[i] = -x[s[0]] + x[s[1]];
            c[nb + i] = -x[s[2]] + x[s[3]];
        }
        for (k, dev) in self.devices.iter().enumerate() {
            let p = Self::get(l.p[k], x);
            c[dev.bus] += dev.sign * p;
            c[nb + dev.bus] += dev.sign * Self::get(l.q[k], x);
            if let Some(r) = l.link_row[k] {
                c[r] = p - l.delta[k].iter().map(|&s| Self::get(s, x)).sum::<f64>();
            }
        }
        for (li, ln) in self.lines.iter().enumerate() {
            let (vi, vk, d) = self.line_point(ln, x);
            let f: Vec<f64> = ln.coefs.iter().map(|c| c.value(vi, vk, d)).collect();
            for (fv, r) in f.iter().zip(self.flow_rows(ln)) {
                c[r] -= fv;
            }
            if self.thermal_limits {
                for (side, &(s, w, r)) in l.thermal[li].iter().enumerate() {
                    let (fp, fq) = (f[2 * side], f[2 * side + 1]);
                    let cap = ln.s_max + x[s];
                    c[r] = fp * fp + fq * fq - cap * cap + x[w];
                }
            }
        }
        c
    }

    /// Jacobian entries `(row, col, value)`. The sequence of positions
    /// depends only on the problem, never on `x`; entries may repeat and are
    /// meant to be summed.
    pub fn jacobian(&self, x: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        let l = &self.layout;
        let nb = self.v_bounds.len();
        for (i, s) in l.slack.iter().enumerate() {
            out.extend([(i, s[0], -1.0), (i, s[1], 1.0), (nb + i, s[2], -1.0), (nb + i, s[3], 1.0)]);
        }
        for (k, dev) in self.devices.iter().enumerate() {
            if let Slot::Var(c) = l.p[k] {
                out.push((dev.bus, c, dev.sign));
                if let Some(r) = l.link_row[k] {
                    out.push((r, c, 1.0));
                }
            }
            if let Slot::Var(c) = l.q[k] {
                out.push((nb + dev.bus, c, dev.sign));
            }
            if let Some(r) = l.link_row[k] {
                for &s in &l.delta[k] {
                    if let Slot::Var(c) = s {
                        out.push((r, c, -1.0));
                    }
                }
            }
        }
        for (li, ln) in self.lines.iter().enumerate() {
            let (vi, vk, d) = self.line_point(ln, x);
            let slots = self.line_slots(ln);
            let evals = ln.coefs.map(|c| c.eval(vi, vk, d));
            for (e, r) in evals.iter().zip(self.flow_rows(ln)) {
                for (a, &s) in slots.iter().enumerate() {
                    if let Slot::Var(c) = s {
                        out.push((r, c, -e.grad[a]));
                    }
                }
            }
            if self.thermal_limits {
                for (side, &(s, w, r)) in l.thermal[li].iter().enumerate() {
                    let (ep, eq) = (&evals[2 * side], &evals[2 * side + 1]);
                    for (a, &sl) in slots.iter().enumerate() {
                        if let Slot::Var(c) = sl {
                            out.push((r, c, 2.0 * (ep.value * ep.grad[a] + eq.value * eq.grad[a])));
                        }
                    }
                    out.push((r, s, -2.0 * (ln.s_max + x[s])));
                    out.push((r, w, 1.0));
                }
            }
        }
    }

    /// Lower-triangle entries of `sum_r lambda_r * hess(c_r)`; the objective
    /// is linear and contributes nothing. Positions are `x`-independent.
    pub fn hessian(&self, x: &[f64], lambda: &[f64], out: &mut Vec<(usize, usize, f64)>) {
        out.clear();
        let l = &self.layout;
        for (li, ln) in self.lines.iter().enumerate() {
            let (vi, vk, d) = self.line_point(ln, x);
            let slots = self.line_slots(ln);
            let evals = ln.coefs.map(|c| c.eval(vi, vk, d));
            let mut h = [[0.0; 4]; 4];
            for (e, r) in evals.iter().zip(self.flow_rows(ln)) {
                let m = -lambda[r];
                for a in 0..4 {
                    for b in 0..4 {
                        h[a][b] += m * e.hess[a][b];
                    }
                }
            }
            if self.thermal_limits {
                for (side, &(s, _, r)) in l.thermal[li].iter().enumerate() {
                    let m = lambda[r];
                    for e in [&evals[2 * side], &evals[2 * side + 1]] {
                        for a in 0..4 {
                            for b in 0..4 {
                                h[a][b] += 2.0 * m * (e.grad[a] * e.grad[b] + e.value * e.hess[a][b]);
                            }
                        }
                    }
                    out.push((s, s, -2.0 * m));
                }
            }
            for a in 0..4 {
                for b in 0..=a {
                    if let (Slot::Var(ca), Slot::Var(cb)) = (slots[a], slots[b]) {
                        out.push((ca.max(cb), ca.min(cb), h[a][b]));
                    }
                }
            }
        }
    }

    /// `H(x, lambda) * w` for the constraint part of the Lagrangian Hessian.
    pub fn hessian_vec(&self, x: &[f64], lambda: &[f64], w: &[f64]) -> Vec<f64> {
        let mut trip = Vec::new();
        self.hessian(x, lambda, &mut trip);
        let mut y = vec![0.0; x.len()];
        for (r, c, v) in trip {
            y[r] += v * w[c];
            if r != c {
                y[c] += v * w[r];
            }
        }
        y
    }

    /// Flat start: unit voltages, zero angles, powers at mid-range, blocks
    /// filled in order, slacks absorbing the initial residual; then pushed
    /// strictly inside the bounds.
    pub fn initial_point(&self) -> Vec<f64> {
        let l = &self.layout;
        let n = self.num_vars();
        let mut x = vec![0.0; n];
        let set = |x: &mut Vec<f64>, s: Slot, v: f64| {
            if let Slot::Var(i) = s {
                x[i] = v;
            }
        };
        for (i, &(lo, hi)) in self.v_bounds.iter().enumerate() {
            set(&mut x, l.v[i], 1.0f64.clamp(lo, hi));
        }
        for (k, dev) in self.devices.iter().enumerate() {
            let p = 0.5 * (dev.p_bounds.0 + dev.p_bounds.1);
            set(&mut x, l.p[k], p);
            set(&mut x, l.q[k], 0.5 * (dev.q_bounds.0 + dev.q_bounds.1));
            let mut left = p;
            for (b, &s) in l.delta[k].iter().enumerate() {
                let w = dev.blocks[b].0;
                set(&mut x, s, left.min(w).max(0.0));
                left -= w;
            }
        }
        // zero slacks, then read the balance residuals off the constraints
        let c = self.constraints(&x);
        let nb = self.v_bounds.len();
        for (i, s) in l.slack.iter().enumerate() {
            for (r, (sp, sn)) in [(i, (s[0], s[1])), (nb + i, (s[2], s[3]))] {
                x[sp] = c[r].max(0.0);
                x[sn] = (-c[r]).max(0.0);
            }
        }
        if self.thermal_limits {
            let c = self.constraints(&x);
            for side in &l.thermal {
                for &(_, w, r) in side {
                    x[w] = (-c[r]).max(0.0);
                }
            }
        }
        for i in 0..n {
            let (lo, hi) = (l.lower[i], l.upper[i]);
            let push_lo = if lo.is_finite() { 1e-2 * lo.abs().max(1.0) } else { 0.0 };
            let push_hi = if hi.is_finite() { 1e-2 * hi.abs().max(1.0) } else { 0.0 };
            let (push_lo, push_hi) = if lo.is_finite() && hi.is_finite() {
                (push_lo.min(1e-2 * (hi - lo)), push_hi.min(1e-2 * (hi - lo)))
            } else {
                (push_lo, push_hi)
            };
            x[i] = x[i].max(lo + push_lo).min(hi - push_hi);
        }
        x
    }

    /// Per-bus voltages and angles, per-case-device powers (zero offline).
    pub fn unpack(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
        let l = &self.layout;
        let v = l.v.iter().map(|&s| Self::get(s, x)).collect();
        let th = l.th.iter().map(|&s| Self::get(s, x)).collect();
        let mut p = vec![0.0; self.n_case_devices];
        let mut q = vec![0.0; self.n_case_devices];
        for (k, dev) in self.devices.iter().enumerate() {
            p[dev.device] = Self::get(l.p[k], x).clamp(dev.p_bounds.0, dev.p_bounds.1);
            q[dev.device] = Self::get(l.q[k], x).clamp(dev.q_bounds.0, dev.q_bounds.1);
        }
        (v, th, p, q)
    }

    /// Duration-weighted net cost of the online devices at powers `p`
    /// (indexed like `case.devices`), blocks filled in order.
    pub fn device_cost(&self, p: &[f64]) -> f64 {
        let mut total = 0.0;
        for dev in &self.devices {
            let mut left = p[dev.device];
            for &(w, rate) in &dev.blocks {
                let take = left.min(w).max(0.0);
                total += dev.sign * rate * take;
                left -= take;
            }
        }
        self.duration * total
    }
}

/// Gradient and merged Jacobian at a point, as a convenience for checking.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub gradient: Vec<f64>,
    /// `(row, col, value)`, sorted and without duplicates.
    pub jacobian: Vec<(usize, usize, f64)>,
}

pub fn acopf_derivatives(problem: &AcOpfProblem, x: &[f64]) -> Derivatives {
    let mut trip = Vec::new();
    problem.jacobian(x, &mut trip);
    trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(trip.len());
    for (r, c, v) in trip {
        match merged.last_mut() {
            Some(last) if last.0 == r && last.1 == c => last.2 += v,
            _ => merged.push((r, c, v)),
        }
    }
    Derivatives {
        gradient: problem.gradient().to_vec(),
        jacobian: merged,
    }
}
