use crate::error::{Error, Result};
use crate::model::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadShape {
    Flat,
    Diurnal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_buses: usize,
    pub n_devices: usize,
    pub n_periods: usize,
    pub n_active_zones: usize,
    pub n_reactive_zones: usize,
    pub seed: u64,
    pub load_profile_shape: LoadShape,
    pub capacity_margin: f64,
    /// Online ramp rate as a fraction of `p_max` per hour.
    pub ramp_tightness: f64,
    /// Line count; defaults to about 1.4 lines per bus.
    pub n_lines: Option<usize>,
    /// Zone requirement as a fraction of zonal peak demand.
    pub reserve_fraction: f64,
}

impl GeneratorSpec {
    pub fn new(n_buses: usize, n_devices: usize, n_periods: usize) -> Self {
        GeneratorSpec {
            n_buses,
            n_devices,
            n_periods,
            n_active_zones: 1,
            n_reactive_zones: 1,
            seed: 0,
            load_profile_shape: LoadShape::Diurnal,
            capacity_margin: 0.3,
            ramp_tightness: 0.5,
            n_lines: None,
            reserve_fraction: 0.03,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Sizes of the competition networks the paper reports on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Goc73,
    Goc617,
    Goc2000,
}

impl Preset {
    pub fn parse(name: &str) -> Option<Preset> {
        match name {
            "goc73" => Some(Preset::Goc73),
            "goc617" => Some(Preset::Goc617),
            "goc2000" => Some(Preset::Goc2000),
            _ => None,
        }
    }

    pub fn spec(self, seed: u64) -> GeneratorSpec {
        let (b, d, l, za, zq) = match self {
            Preset::Goc73 => (73, 208, 127, 1, 1),
            Preset::Goc617 => (617, 499, 723, 10, 10),
            Preset::Goc2000 => (2000, 1894, 2345, 4, 10),
        };
        GeneratorSpec {
            n_active_zones: za,
            n_reactive_zones: zq,
            n_lines: Some(l),
            ..GeneratorSpec::new(b, d, 48).with_seed(seed)
        }
    }
}

fn check_spec(s: &GeneratorSpec) -> Result<usize> {
    let bad = |m: &str| Err(Error::InfeasibleSpec(m.to_string()));
    if s.n_buses < 2 || s.n_devices < 2 || s.n_periods < 1 {
        return bad("need at least 2 buses, 2 devices and 1 period");
    }
    if s.n_active_zones < 1 || s.n_reactive_zones < 1 {
        return bad("need at least one zone of each kind");
    }
    if s.n_active_zones > s.n_buses || s.n_reactive_zones > s.n_buses {
        return bad("more zones than buses");
    }
    if !(s.capacity_margin >= 0.0) || !(s.ramp_tightness > 0.0 && s.ramp_tightness <= 1.0) {
        return bad("capacity_margin must be >= 0 and ramp_tightness in (0, 1]");
    }
    let n = s.n_buses;
    let lines = s.n_lines.unwrap_or(((n as f64) * 1.4).round() as usize).max(n - 1);
    if lines > n * (n - 1) / 2 {
        return bad("more lines than bus pairs");
    }
    Ok(lines)
}

fn profile(shape: LoadShape, t: usize) -> f64 {
    match shape {
        LoadShape::Flat => 1.0,
        LoadShape::Diurnal => {
            let h = (t % 24) as f64;
            0.8 + 0.2 * (std::f64::consts::TAU * (h - 9.0) / 24.0).sin()
        }
    }
}

fn zone_partition(rng: &mut ChaCha8Rng, n: usize, zones: usize) -> Vec<usize> {
    let mut z: Vec<usize> = (0..n).map(|i| i % zones).collect();
    z.shuffle(rng);
    z
}

/// Builds a random case from `spec`. Output depends only on `spec`.
///
/// Producers get `(1 + capacity_margin)` times peak demand in capacity and
/// start online at a proportional all-on dispatch that is checked against
/// the ramp rates, so an all-on schedule with zero copper-plate mismatch
/// always exists.
pub fn generate_case(spec: &GeneratorSpec) -> Result<Case> {
    let n_lines = check_spec(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let nb = spec.n_buses;
    let nt = spec.n_periods;

    let za = zone_partition(&mut rng, nb, spec.n_active_zones);
    let zq = zone_partition(&mut rng, nb, spec.n_reactive_zones);
    let mut buses: Vec<Bus> = (0..nb)
        .map(|i| Bus {
            id: format!("b{i}"),
            v_min: 0.94,
            v_max: 1.06,
            is_reference: i == 0,
            active_zone: Some(format!("za{}", za[i])),
            reactive_zone: Some(format!("zq{}", zq[i])),
        })
        .collect();
    buses.shrink_to_fit();

    // spanning tree plus random chords
    let mut pairs = BTreeSet::new();
    let mut edges = Vec::new();
    for i in 1..nb {
        let k = rng.gen_range(0..i);
        pairs.insert((k, i));
        edges.push((k, i));
    }
    while edges.len() < n_lines {
        let a = rng.gen_range(0..nb);
        let b = rng.gen_range(0..nb);
        let key = (a.min(b), a.max(b));
        if a != b && pairs.insert(key) {
            edges.push(key);
        }
    }

    // consumers first so line ratings can scale with demand
    let n_prod = ((spec.n_devices as f64) * 0.4).round().max(1.0) as usize;
    let n_cons = spec.n_devices - n_prod;
    let shape: Vec<f64> = (0..nt).map(|t| profile(spec.load_profile_shape, t)).collect();
    let mut devices = Vec::with_capacity(spec.n_devices);
    let mut c_min = vec![0.0; nt];
    let mut c_max = vec![0.0; nt];
    for c in 0..n_cons {
        let bus = rng.gen_range(0..nb);
        let nominal: f64 = rng.gen_range(0.05..0.3);
        let firm_frac: f64 = rng.gen_range(0.7..0.9);
        let firm_value: f64 = rng.gen_range(500.0..1000.0);
        let elastic_value: f64 = rng.gen_range(25.0..60.0);
        let p_max: Vec<f64> = shape.iter().map(|f| nominal * f).collect();
        let p_min: Vec<f64> = p_max.iter().map(|p| p * firm_frac).collect();
        for t in 0..nt {
            c_min[t] += p_min[t];
            c_max[t] += p_max[t];
        }
        let step = (1..nt).map(|t| (p_max[t] - p_max[t - 1]).abs()).fold(0.0, f64::max);
        let ramp = 2.0 * step + 0.1 * nominal;
        let cost = (0..nt)
            .map(|t| CostCurve::new(&[(p_min[t], firm_value), (p_max[t] - p_min[t], elastic_value)]))
            .collect();
        let mut reserve_cost = BTreeMap::new();
        for pid in ["rgu", "scr", "rru_on", "rgd", "rrd"] {
            reserve_cost.insert(pid.to_string(), round4(rng.gen_range(2.0..6.0)));
        }
        devices.push(Device {
            id: format!("c{c}"),
            kind: DeviceKind::Consumer,
            bus: format!("b{bus}"),
            q_min: vec![0.0; nt],
            q_max: p_max.iter().map(|p| 0.25 * p).collect(),
            p_ru: ramp,
            p_rd: ramp,
            p_ru_su: ramp.max(p_max.iter().cloned().fold(0.0, f64::max)),
            p_rd_sd: ramp.max(p_max.iter().cloned().fold(0.0, f64::max)),
            initial_on: true,
            initial_p: p_min[0],
            must_run: false,
            cost,
            su_cost: 0.0,
            sd_cost: 0.0,
            on_cost: 0.0,
            reserve_cost,
            reserve_cap: BTreeMap::new(),
            p_min,
            p_max,
        });
    }
    let peak = c_max.iter().cloned().fold(0.0, f64::max);
    let low_firm = c_min.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(peak > 0.0) {
        return Err(Error::InfeasibleSpec("no consumers to serve".into()));
    }

    // producers share (1 + margin) * peak
    let capacity = (1.0 + spec.capacity_margin) * peak;
    let weights: Vec<f64> = (0..n_prod).map(|_| rng.gen_range(0.5..2.0)).collect();
    let wsum: f64 = weights.iter().sum();
    let mut prod = Vec::with_capacity(n_prod);
    for (g, w) in weights.iter().enumerate() {
        let bus = if g == 0 { 0 } else { rng.gen_range(0..nb) };
        let p_max = capacity * w / wsum;
        let p_min = p_max * rng.gen_range(0.1..0.4);
        let base: f64 = rng.gen_range(10.0..40.0);
        prod.push((bus, p_max, p_min, base));
    }
    // keep the all-on minimum output below the lightest firm demand
    let g_min: f64 = prod.iter().map(|p| p.2).sum();
    if g_min > 0.9 * low_firm {
        let s = 0.9 * low_firm / g_min;
        for p in &mut prod {
            p.2 *= s;
        }
    }
    let g_min: f64 = prod.iter().map(|p| p.2).sum();
    let g_max: f64 = prod.iter().map(|p| p.1).sum();
    // witness: consumers at firm demand, producers at a common fraction
    let alpha: Vec<f64> = (0..nt)
        .map(|t| ((c_min[t] - g_min) / (g_max - g_min)).clamp(0.0, 1.0))
        .collect();
    for (g, &(bus, p_max, p_min, base)) in prod.iter().enumerate() {
        let ramp = spec.ramp_tightness * p_max;
        let witness: Vec<f64> = alpha.iter().map(|a| p_min + a * (p_max - p_min)).collect();
        if (1..nt).any(|t| (witness[t] - witness[t - 1]).abs() > ramp + 1e-12) {
            return Err(Error::InfeasibleSpec(format!(
                "ramp_tightness {} cannot follow the load profile",
                spec.ramp_tightness
            )));
        }
        let third = p_max / 3.0;
        let curve = CostCurve::new(&[(third, base), (third, base * 1.2), (p_max - 2.0 * third, base * 1.5)]);
        let mut reserve_cost = BTreeMap::new();
        for pid in ["rgu", "scr", "rru_on", "rgd", "rrd"] {
            reserve_cost.insert(pid.to_string(), round4(rng.gen_range(0.5..3.0)));
        }
        for pid in ["qru", "qrd"] {
            reserve_cost.insert(pid.to_string(), round4(rng.gen_range(0.1..1.0)));
        }
        devices.push(Device {
            id: format!("g{g}"),
            kind: DeviceKind::Producer,
            bus: format!("b{bus}"),
            p_min: vec![p_min; nt],
            p_max: vec![p_max; nt],
            q_min: vec![-0.4 * p_max; nt],
            q_max: vec![0.6 * p_max; nt],
            p_ru: ramp,
            p_rd: ramp,
            p_ru_su: ramp.max(p_min),
            p_rd_sd: ramp.max(p_min),
            initial_on: true,
            initial_p: witness[0],
            must_run: false,
            cost: vec![curve; nt],
            su_cost: round4(rng.gen_range(20.0..200.0)),
            sd_cost: round4(rng.gen_range(0.0..20.0)),
            on_cost: round4(rng.gen_range(1.0..10.0)),
            reserve_cost,
            reserve_cap: BTreeMap::new(),
        });
    }

    let rating_scale = peak / (nb as f64).sqrt();
    // total charging averages a fifth of peak demand, well within what the
    // producers can absorb
    let charging_scale = 0.4 * peak / n_lines as f64;
    let lines = edges
        .iter()
        .enumerate()
        .map(|(l, &(a, b))| {
            let x: f64 = rng.gen_range(0.01..0.05);
            let r = x * rng.gen_range(0.05..0.2);
            let z2 = r * r + x * x;
            AcLine {
                b_ch: round4(rng.gen_range(0.0..1.0) * charging_scale),
                s_max: (rating_scale * rng.gen_range(1.5..3.0)).max(0.5),
                ..AcLine::simple(&format!("l{l}"), &format!("b{a}"), &format!("b{b}"), r / z2, -x / z2, 1.0)
            }
        })
        .collect();

    // zones: requirement is a fixed fraction of zonal peak demand
    let idx_bus = |d: &Device| d.bus[1..].parse::<usize>().expect("generated bus id");
    let mut zones = Vec::new();
    for (kind, count, part, prefix) in [
        (PowerKind::Active, spec.n_active_zones, &za, "za"),
        (PowerKind::Reactive, spec.n_reactive_zones, &zq, "zq"),
    ] {
        for z in 0..count {
            let zonal_peak = (0..nt)
                .map(|t| {
                    devices
                        .iter()
                        .filter(|d| d.kind == DeviceKind::Consumer && part[idx_bus(d)] == z)
                        .map(|d| d.p_max[t])
                        .sum::<f64>()
                })
                .fold(0.0, f64::max);
            let req = vec![spec.reserve_fraction * zonal_peak; nt];
            let (products, penalties): (Vec<&str>, Vec<f64>) = match kind {
                PowerKind::Active => (
                    vec!["rgu", "scr", "rru_on", "rgd", "rrd"],
                    vec![1000.0, 600.0, 300.0, 1000.0, 300.0],
                ),
                PowerKind::Reactive => (vec!["qru", "qrd"], vec![200.0, 200.0]),
            };
            zones.push(ReserveZone {
                id: format!("{prefix}{z}"),
                power_kind: kind,
                requirement: products.iter().map(|p| (p.to_string(), req.clone())).collect(),
                shortfall_penalty: products.iter().zip(&penalties).map(|(p, &v)| (p.to_string(), v)).collect(),
            });
        }
    }

    let case = Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses,
        lines,
        devices,
        zones,
        products: ReserveProduct::default_set(),
        penalties: Penalties::default(),
    };
    let v = validate_case(&case);
    if !v.is_empty() {
        return Err(Error::Internal(format!("generator produced an invalid case: {}", v[0])));
    }
    Ok(case)
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}
