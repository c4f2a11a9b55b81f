use super::{Case, DeviceKind, PowerKind};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, HashSet};
use std::fmt;

/// One broken invariant. `code` is a stable machine-readable tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: String,
    pub entity: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    pub message: String,
}

impl Violation {
    pub fn new(code: &str, entity: &str, period: Option<usize>, message: impl Into<String>) -> Self {
        Violation {
            code: code.into(),
            entity: entity.into(),
            period,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.period {
            Some(t) => write!(f, "[{}] {} (t={}): {}", self.code, self.entity, t, self.message),
            None => write!(f, "[{}] {}: {}", self.code, self.entity, self.message),
        }
    }
}

struct Collector(Vec<Violation>);

impl Collector {
    fn push(&mut self, code: &str, entity: &str, period: Option<usize>, msg: impl Into<String>) {
        self.0.push(Violation::new(code, entity, period, msg));
    }

    fn unique_ids<'a>(&mut self, what: &str, ids: impl Iterator<Item = &'a str>) {
        let mut seen = HashSet::new();
        for id in ids {
            if !seen.insert(id) {
                self.push("duplicate_id", id, None, format!("duplicate {what} id '{id}'"));
            }
        }
    }
}

fn finite(xs: &[f64]) -> bool {
    xs.iter().all(|x| x.is_finite())
}

/// Checks every type invariant plus connectivity of the in-service network.
/// Violations are returned as data; an empty list means the case is usable.
pub fn validate_case(case: &Case) -> Vec<Violation> {
    let mut out = Collector(Vec::new());
    let nt = case.periods();

    if nt == 0 {
        out.push("empty_horizon", "time_grid", None, "at least one period is required");
    }
    for (t, &d) in case.time_grid.durations.iter().enumerate() {
        if !(d > 0.0 && d.is_finite()) {
            out.push("bad_duration", "time_grid", Some(t), format!("duration {d} must be positive"));
        }
    }

    out.unique_ids("bus", case.buses.iter().map(|b| b.id.as_str()));
    out.unique_ids("line", case.lines.iter().map(|l| l.id.as_str()));
    out.unique_ids("device", case.devices.iter().map(|d| d.id.as_str()));
    out.unique_ids("zone", case.zones.iter().map(|z| z.id.as_str()));
    out.unique_ids("product", case.products.iter().map(|p| p.id.as_str()));

    let bus_pos: HashMap<&str, usize> = case
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.id.as_str(), i))
        .collect();
    let zone_kind: HashMap<&str, PowerKind> = case
        .zones
        .iter()
        .map(|z| (z.id.as_str(), z.power_kind))
        .collect();
    let products: HashMap<&str, &super::ReserveProduct> =
        case.products.iter().map(|p| (p.id.as_str(), p)).collect();

    if case.buses.is_empty() {
        out.push("no_buses", "buses", None, "case has no buses");
    }
    let refs = case.buses.iter().filter(|b| b.is_reference).count();
    if !case.buses.is_empty() && refs != 1 {
        out.push("reference_bus", "buses", None, format!("expected one reference bus, found {refs}"));
    }
    let has_zones = |kind| case.zones.iter().any(|z| z.power_kind == kind);
    for b in &case.buses {
        if !(b.v_min > 0.0 && b.v_min <= b.v_max && b.v_max.is_finite()) {
            out.push("voltage_bounds", &b.id, None, format!("need 0 < v_min <= v_max, got [{}, {}]", b.v_min, b.v_max));
        }
        for (zone, kind) in [(&b.active_zone, PowerKind::Active), (&b.reactive_zone, PowerKind::Reactive)] {
            match zone {
                Some(z) => match zone_kind.get(z.as_str()) {
                    None => out.push("dangling_reference", &b.id, None, format!("unknown zone '{z}'")),
                    Some(&k) if k != kind => out.push("zone_kind", &b.id, None, format!("zone '{z}' has the wrong power kind")),
                    _ => {}
                },
                None if has_zones(kind) => out.push("zone_partition", &b.id, None, format!("bus belongs to no {kind:?} zone")),
                None => {}
            }
        }
    }

    for l in &case.lines {
        for end in [&l.from_bus, &l.to_bus] {
            if !bus_pos.contains_key(end.as_str()) {
                out.push("dangling_reference", &l.id, None, format!("unknown bus '{end}'"));
            }
        }
        if l.from_bus == l.to_bus {
            out.push("self_loop", &l.id, None, "from_bus equals to_bus");
        }
        if !(l.s_max > 0.0) {
            out.push("line_rating", &l.id, None, format!("s_max {} must be positive", l.s_max));
        }
        if !finite(&[l.g_sr, l.b_sr, l.g_fr, l.g_to, l.b_fr, l.b_to, l.b_ch]) {
            out.push("non_finite", &l.id, None, "non-finite line parameter");
        }
    }

    for d in &case.devices {
        if !bus_pos.contains_key(d.bus.as_str()) {
            out.push("dangling_reference", &d.id, None, format!("unknown bus '{}'", d.bus));
        }
        let lens = [d.p_min.len(), d.p_max.len(), d.q_min.len(), d.q_max.len(), d.cost.len()];
        if lens.iter().any(|&n| n != nt) {
            out.push("dimension", &d.id, None, format!("per-period arrays must have {nt} entries, got {lens:?}"));
            continue;
        }
        for t in 0..nt {
            if !(d.p_min[t] >= 0.0 && d.p_min[t] <= d.p_max[t] && d.p_max[t].is_finite()) {
                out.push("p_bounds", &d.id, Some(t), format!("need 0 <= p_min <= p_max, got [{}, {}]", d.p_min[t], d.p_max[t]));
            }
            if !(d.q_min[t] <= d.q_max[t] && d.q_min[t].is_finite() && d.q_max[t].is_finite()) {
                out.push("q_bounds", &d.id, Some(t), format!("need q_min <= q_max, got [{}, {}]", d.q_min[t], d.q_max[t]));
            }
            let curve = &d.cost[t];
            if curve.blocks.iter().any(|b| !(b.width >= 0.0) || !b.rate.is_finite()) {
                out.push("cost_curve", &d.id, Some(t), "block widths must be >= 0 and rates finite");
            }
            let convex = match d.kind {
                DeviceKind::Producer => curve.is_nondecreasing(),
                DeviceKind::Consumer => curve.is_nonincreasing(),
            };
            if !convex {
                out.push("cost_curve", &d.id, Some(t), "marginal rates are not monotone (non-convex surplus)");
            }
            if curve.total_width() < d.p_max[t] - 1e-9 {
                out.push("cost_curve", &d.id, Some(t), format!("blocks cover {} pu, below p_max {}", curve.total_width(), d.p_max[t]));
            }
        }
        let rates = [d.p_ru, d.p_rd, d.p_ru_su, d.p_rd_sd];
        if rates.iter().any(|r| !(*r >= 0.0)) {
            out.push("ramp_rate", &d.id, None, format!("ramp rates must be >= 0, got {rates:?}"));
        }
        if !(d.initial_p >= 0.0 && d.initial_p.is_finite()) || (!d.initial_on && d.initial_p != 0.0) {
            out.push("initial_state", &d.id, None, format!("initial_p {} inconsistent with initial_on {}", d.initial_p, d.initial_on));
        }
        for c in [d.su_cost, d.sd_cost, d.on_cost] {
            if !c.is_finite() {
                out.push("non_finite", &d.id, None, "non-finite commitment cost");
            }
        }
        for (map, what) in [(&d.reserve_cost, "reserve_cost"), (&d.reserve_cap, "reserve_cap")] {
            for (pid, &v) in map {
                if !products.contains_key(pid.as_str()) {
                    out.push("dangling_reference", &d.id, None, format!("{what} names unknown product '{pid}'"));
                }
                if !(v >= 0.0) {
                    out.push(what, &d.id, None, format!("{what} for '{pid}' must be >= 0"));
                }
            }
        }
    }

    let mut ranks = HashSet::new();
    for p in &case.products {
        if !ranks.insert((p.power_kind, p.direction, p.quality_rank)) {
            out.push("duplicate_rank", &p.id, None, "quality_rank repeats within its kind and direction");
        }
    }

    for z in &case.zones {
        for (pid, req) in &z.requirement {
            match products.get(pid.as_str()) {
                None => out.push("dangling_reference", &z.id, None, format!("requirement names unknown product '{pid}'")),
                Some(p) if p.power_kind != z.power_kind => {
                    out.push("zone_kind", &z.id, None, format!("product '{pid}' has a different power kind"))
                }
                _ => {}
            }
            if req.len() != nt {
                out.push("dimension", &z.id, None, format!("requirement '{pid}' needs {nt} entries"));
            }
            if req.iter().any(|r| !(*r >= 0.0 && r.is_finite())) {
                out.push("requirement", &z.id, None, format!("requirement '{pid}' must be >= 0"));
            }
        }
        for (pid, &pen) in &z.shortfall_penalty {
            if !products.contains_key(pid.as_str()) {
                out.push("dangling_reference", &z.id, None, format!("penalty names unknown product '{pid}'"));
            }
            if !(pen >= 0.0 && pen.is_finite()) {
                out.push("penalty", &z.id, None, format!("penalty for '{pid}' must be >= 0"));
            }
        }
    }

    if !(case.penalties.balance >= 0.0 && case.penalties.line_overload >= 0.0) {
        out.push("penalty", "penalties", None, "penalties must be >= 0");
    }

    if !case.buses.is_empty() && !connected(case, &bus_pos) {
        out.push("disconnected", "lines", None, "in-service lines do not connect all buses");
    }
    out.0
}

fn connected(case: &Case, bus_pos: &HashMap<&str, usize>) -> bool {
    let n = case.buses.len();
    let mut adj = vec![Vec::new(); n];
    for l in case.lines.iter().filter(|l| l.in_service) {
        if let (Some(&a), Some(&b)) = (bus_pos.get(l.from_bus.as_str()), bus_pos.get(l.to_bus.as_str())) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(i) = stack.pop() {
        for &k in &adj[i] {
            if !seen[k] {
                seen[k] = true;
                stack.push(k);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::three_bus_case;

    #[test]
    fn well_formed_case_is_clean() {
        assert_eq!(validate_case(&three_bus_case()), vec![]);
    }

    #[test]
    fn p_min_above_p_max_is_reported_once() {
        let mut case = three_bus_case();
        case.devices[0].p_min[1] = case.devices[0].p_max[1] + 1.0;
        let v = validate_case(&case);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, case.devices[0].id);
        assert_eq!(v[0].period, Some(1));
    }

    #[test]
    fn dangling_line_end_is_reported() {
        let mut case = three_bus_case();
        case.lines[0].to_bus = "nowhere".into();
        let v = validate_case(&case);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].code, "dangling_reference");
    }
}
