use crate::model::{AcLine, Case, CaseIndex};

/// A side flow written as `c_ii v_i^2 + c_kk v_k^2 + v_i v_k (a cos d + b sin d)`
/// with `d = theta_i - theta_k` (`i` the from bus, `k` the to bus).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowCoef {
    pub c_ii: f64,
    pub c_kk: f64,
    pub a: f64,
    pub b: f64,
}

/// Coefficients for `(p_fr, q_fr, p_to, q_to)`.
///
/// The to-side terms use the angle difference seen from the to bus, so the
/// sine coefficients flip sign relative to the from side.
pub fn flow_coefs(line: &AcLine) -> [FlowCoef; 4] {
    let (g, b) = (line.g_sr, line.b_sr);
    let half = line.b_ch / 2.0;
    [
        FlowCoef {
            c_ii: g + line.g_fr,
            c_kk: 0.0,
            a: -g,
            b: -b,
        },
        FlowCoef {
            c_ii: -(b + line.b_fr + half),
            c_kk: 0.0,
            a: b,
            b: -g,
        },
        FlowCoef {
            c_ii: 0.0,
            c_kk: g + line.g_to,
            a: -g,
            b: b,
        },
        FlowCoef {
            c_ii: 0.0,
            c_kk: -(b + line.b_to + half),
            a: b,
            b: g,
        },
    ]
}

/// Value, gradient and Hessian of one side flow in `(v_i, v_k, th_i, th_k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowEval {
    pub value: f64,
    pub grad: [f64; 4],
    pub hess: [[f64; 4]; 4],
}

impl FlowCoef {
    pub fn value(&self, vi: f64, vk: f64, d: f64) -> f64 {
        self.c_ii * vi * vi + self.c_kk * vk * vk + vi * vk * (self.a * d.cos() + self.b * d.sin())
    }

    pub fn eval(&self, vi: f64, vk: f64, d: f64) -> FlowEval {
        let (sn, cs) = d.sin_cos();
        let c = self.a * cs + self.b * sn;
        let s = -self.a * sn + self.b * cs;
        let vv = vi * vk;
        let value = self.c_ii * vi * vi + self.c_kk * vk * vk + vv * c;
        let grad = [
            2.0 * self.c_ii * vi + vk * c,
            2.0 * self.c_kk * vk + vi * c,
            vv * s,
            -vv * s,
        ];
        let hess = [
            [2.0 * self.c_ii, c, vk * s, -vk * s],
            [c, 2.0 * self.c_kk, vi * s, -vi * s],
            [vk * s, vi * s, -vv * c, vv * c],
            [-vk * s, -vi * s, vv * c, -vv * c],
        ];
        FlowEval { value, grad, hess }
    }
}

/// Side flows `(p_fr, q_fr, p_to, q_to)`; all zero when the line is out.
pub fn branch_flows(v_fr: f64, v_to: f64, th_fr: f64, th_to: f64, line: &AcLine, u_on: bool) -> (f64, f64, f64, f64) {
    if !u_on {
        return (0.0, 0.0, 0.0, 0.0);
    }
    let d = th_fr - th_to;
    let c = flow_coefs(line);
    (
        c[0].value(v_fr, v_to, d),
        c[1].value(v_fr, v_to, d),
        c[2].value(v_fr, v_to, d),
        c[3].value(v_fr, v_to, d),
    )
}

/// Flows of every line at one period, `[line] -> (p_fr, q_fr, p_to, q_to)`.
pub fn all_flows(case: &Case, idx: &CaseIndex, v: &[f64], theta: &[f64]) -> Vec<(f64, f64, f64, f64)> {
    case.lines
        .iter()
        .enumerate()
        .map(|(l, line)| {
            let (i, k) = (idx.line_from[l], idx.line_to[l]);
            branch_flows(v[i], v[k], theta[i], theta[k], line, line.in_service)
        })
        .collect()
}

/// Per-bus `(dp, dq)`: device injections minus line outflows, i.e. the value
/// a bus mismatch slack has to absorb. `p`, `q` are per device at this
/// period (zero for offline devices).
pub fn balance_residual(
    case: &Case,
    idx: &CaseIndex,
    p: &[f64],
    q: &[f64],
    flows: &[(f64, f64, f64, f64)],
) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); case.buses.len()];
    for (j, dev) in case.devices.iter().enumerate() {
        let b = idx.device_bus[j];
        out[b].0 += dev.sign() * p[j];
        out[b].1 += dev.sign() * q[j];
    }
    for (l, f) in flows.iter().enumerate() {
        let (i, k) = (idx.line_from[l], idx.line_to[l]);
        out[i].0 -= f.0;
        out[i].1 -= f.1;
        out[k].0 -= f.2;
        out[k].1 -= f.3;
    }
    out
}
