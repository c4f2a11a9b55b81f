use super::{Case, Direction, PowerKind};
use std::collections::HashMap;

/// Products sharing a power kind and direction, ordered by quality rank.
/// Cascade row `k` of a group sums the first `k + 1` products.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductGroup {
    pub kind: PowerKind,
    pub direction: Direction,
    pub products: Vec<usize>,
}

/// Dense integer lookups derived from a validated case. Building one is
/// linear in the case size; constructing it from a case with dangling
/// references panics, so run `validate_case` first on untrusted input.
#[derive(Debug, Clone)]
pub struct CaseIndex {
    pub bus_pos: HashMap<String, usize>,
    pub device_bus: Vec<usize>,
    pub line_from: Vec<usize>,
    pub line_to: Vec<usize>,
    pub bus_devices: Vec<Vec<usize>>,
    pub bus_lines_from: Vec<Vec<usize>>,
    pub bus_lines_to: Vec<Vec<usize>>,
    pub reference_bus: usize,
    pub product_pos: HashMap<String, usize>,
    pub groups: Vec<ProductGroup>,
    /// Zone of each device, indexed by `kind_slot`.
    pub device_zone: Vec<[Option<usize>; 2]>,
    pub zone_devices: Vec<Vec<usize>>,
    /// `[zone][product][period]`, zero where the zone sets nothing.
    pub zone_req: Vec<Vec<Vec<f64>>>,
    /// `[zone][product]`.
    pub zone_penalty: Vec<Vec<f64>>,
    /// `[device][product]`.
    pub reserve_cost: Vec<Vec<f64>>,
    /// `[device][product]`, infinite when uncapped.
    pub reserve_cap: Vec<Vec<f64>>,
}

pub fn kind_slot(kind: PowerKind) -> usize {
    match kind {
        PowerKind::Active => 0,
        PowerKind::Reactive => 1,
    }
}

impl CaseIndex {
    pub fn new(case: &Case) -> Self {
        let nb = case.buses.len();
        let nt = case.periods();
        let bus_pos: HashMap<String, usize> = case
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| (b.id.clone(), i))
            .collect();
        let lookup = |id: &str| -> usize {
            *bus_pos
                .get(id)
                .unwrap_or_else(|| panic!("unknown bus '{id}' (validate the case first)"))
        };

        let device_bus: Vec<usize> = case.devices.iter().map(|d| lookup(&d.bus)).collect();
        let line_from: Vec<usize> = case.lines.iter().map(|l| lookup(&l.from_bus)).collect();
        let line_to: Vec<usize> = case.lines.iter().map(|l| lookup(&l.to_bus)).collect();

        let mut bus_devices = vec![Vec::new(); nb];
        for (j, &b) in device_bus.iter().enumerate() {
            bus_devices[b].push(j);
        }
        let mut bus_lines_from = vec![Vec::new(); nb];
        let mut bus_lines_to = vec![Vec::new(); nb];
        for l in 0..case.lines.len() {
            bus_lines_from[line_from[l]].push(l);
            bus_lines_to[line_to[l]].push(l);
        }
        let reference_bus = case.buses.iter().position(|b| b.is_reference).unwrap_or(0);

        let product_pos: HashMap<String, usize> = case
            .products
            .iter()
            .enumerate()
            .map(|(k, p)| (p.id.clone(), k))
            .collect();
        let mut groups = Vec::new();
        for kind in [PowerKind::Active, PowerKind::Reactive] {
            for direction in [Direction::Up, Direction::Down] {
                let mut products: Vec<usize> = (0..case.products.len())
                    .filter(|&k| {
                        case.products[k].power_kind == kind && case.products[k].direction == direction
                    })
                    .collect();
                products.sort_by_key(|&k| (case.products[k].quality_rank, k));
                if !products.is_empty() {
                    groups.push(ProductGroup {
                        kind,
                        direction,
                        products,
                    });
                }
            }
        }

        let zone_pos: HashMap<&str, usize> = case
            .zones
            .iter()
            .enumerate()
            .map(|(z, zone)| (zone.id.as_str(), z))
            .collect();
        let bus_zone: Vec<[Option<usize>; 2]> = case
            .buses
            .iter()
            .map(|b| {
                [
                    b.active_zone.as_deref().and_then(|z| zone_pos.get(z).copied()),
                    b.reactive_zone.as_deref().and_then(|z| zone_pos.get(z).copied()),
                ]
            })
            .collect();
        let device_zone: Vec<[Option<usize>; 2]> = device_bus.iter().map(|&b| bus_zone[b]).collect();
        let mut zone_devices = vec![Vec::new(); case.zones.len()];
        for (j, zones) in device_zone.iter().enumerate() {
            for (slot, z) in zones.iter().enumerate() {
                if let Some(z) = *z {
                    if kind_slot(case.zones[z].power_kind) == slot {
                        zone_devices[z].push(j);
                    }
                }
            }
        }

        let nk = case.products.len();
        let mut zone_req = vec![vec![vec![0.0; nt]; nk]; case.zones.len()];
        let mut zone_penalty = vec![vec![0.0; nk]; case.zones.len()];
        for (z, zone) in case.zones.iter().enumerate() {
            for (pid, req) in &zone.requirement {
                if let Some(&k) = product_pos.get(pid) {
                    for (t, &r) in req.iter().enumerate().take(nt) {
                        zone_req[z][k][t] = r;
                    }
                }
            }
            for (pid, &pen) in &zone.shortfall_penalty {
                if let Some(&k) = product_pos.get(pid) {
                    zone_penalty[z][k] = pen;
                }
            }
        }

        let mut reserve_cost = vec![vec![0.0; nk]; case.devices.len()];
        let mut reserve_cap = vec![vec![f64::INFINITY; nk]; case.devices.len()];
        for (j, d) in case.devices.iter().enumerate() {
            for (pid, &c) in &d.reserve_cost {
                if let Some(&k) = product_pos.get(pid) {
                    reserve_cost[j][k] = c;
                }
            }
            for (pid, &c) in &d.reserve_cap {
                if let Some(&k) = product_pos.get(pid) {
                    reserve_cap[j][k] = c;
                }
            }
        }

        CaseIndex {
            bus_pos,
            device_bus,
            line_from,
            line_to,
            bus_devices,
            bus_lines_from,
            bus_lines_to,
            reference_bus,
            product_pos,
            groups,
            device_zone,
            zone_devices,
            zone_req,
            zone_penalty,
            reserve_cost,
            reserve_cap,
        }
    }

    /// The zone that counts device `j`'s reserves of power kind `kind`.
    pub fn zone_of(&self, j: usize, kind: PowerKind) -> Option<usize> {
        self.device_zone[j][kind_slot(kind)]
    }

    pub fn group(&self, kind: PowerKind, direction: Direction) -> Option<&ProductGroup> {
        self.groups
            .iter()
            .find(|g| g.kind == kind && g.direction == direction)
    }
}
