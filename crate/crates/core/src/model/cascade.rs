use super::{Case, CaseIndex};

/// Cheapest zonal shortfalls `[zone][product][period]` that close every
/// cascade row for the given device reserves `r[device][product][period]`.
///
/// Row `i` of a group counts products of rank `<= i`, so a deficit first
/// seen at row `i` may be booked on any product up to `i`; the cheapest
/// penalty wins (later products on ties). Rows are visited in rank order,
/// which makes the greedy choice optimal.
pub fn cascade_shortfall(case: &Case, idx: &CaseIndex, r: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
    let nt = case.periods();
    let nk = case.products.len();
    let mut out = vec![vec![vec![0.0; nt]; nk]; case.zones.len()];
    for (z, zone) in case.zones.iter().enumerate() {
        for g in idx.groups.iter().filter(|g| g.kind == zone.power_kind) {
            for t in 0..nt {
                let mut supply = 0.0;
                let mut req = 0.0;
                let mut booked = 0.0;
                for (i, &k) in g.products.iter().enumerate() {
                    supply += idx.zone_devices[z].iter().map(|&j| r[j][k][t]).sum::<f64>();
                    req += idx.zone_req[z][k][t];
                    let need = req - supply - booked;
                    if need > 0.0 {
                        let mut best = k;
                        for &k2 in g.products[..i].iter().rev() {
                            if idx.zone_penalty[z][k2] < idx.zone_penalty[z][best] {
                                best = k2;
                            }
                        }
                        out[z][best][t] += need;
                        booked += need;
                    }
                }
            }
        }
    }
    out
}

/// Duration-weighted penalty of zonal shortfalls.
pub fn shortfall_cost(case: &Case, idx: &CaseIndex, shortfall: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    for (z, per_k) in shortfall.iter().enumerate() {
        for (k, per_t) in per_k.iter().enumerate() {
            for (t, &s) in per_t.iter().enumerate() {
                total += case.time_grid.durations[t] * idx.zone_penalty[z][k] * s;
            }
        }
    }
    total
}
