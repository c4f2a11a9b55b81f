//! Small hand-built cases for examples and tests.

use crate::model::*;
use std::collections::BTreeMap;

/// A device with flat bounds over `nt` periods, generous ramp rates and a
/// single-block curve (cost 10 for producers, value 100 for consumers).
pub fn simple_device(id: &str, kind: DeviceKind, nt: usize, p_min: f64, p_max: f64) -> Device {
    let rate = match kind {
        DeviceKind::Producer => 10.0,
        DeviceKind::Consumer => 100.0,
    };
    Device {
        id: id.into(),
        kind,
        bus: "b1".into(),
        p_min: vec![p_min; nt],
        p_max: vec![p_max; nt],
        q_min: vec![-p_max; nt],
        q_max: vec![p_max; nt],
        p_ru: 1e3,
        p_rd: 1e3,
        p_ru_su: 1e3,
        p_rd_sd: 1e3,
        initial_on: true,
        initial_p: p_min,
        must_run: false,
        cost: vec![CostCurve::new(&[(p_max, rate)]); nt],
        su_cost: 0.0,
        sd_cost: 0.0,
        on_cost: 0.0,
        reserve_cost: BTreeMap::new(),
        reserve_cap: BTreeMap::new(),
    }
}

pub fn bus(id: &str, reference: bool) -> Bus {
    Bus {
        id: id.into(),
        v_min: 0.9,
        v_max: 1.1,
        is_reference: reference,
        active_zone: None,
        reactive_zone: None,
    }
}

/// Producer at `b1`, consumer at `b2`, one line, two periods, no reserves.
pub fn two_bus_case() -> Case {
    let nt = 2;
    let g = simple_device("g1", DeviceKind::Producer, nt, 0.0, 2.0);
    let mut c = simple_device("c1", DeviceKind::Consumer, nt, 0.5, 1.0);
    c.bus = "b2".into();
    c.q_min = vec![0.1; nt];
    c.q_max = vec![0.2; nt];
    Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses: vec![bus("b1", true), bus("b2", false)],
        lines: vec![AcLine::simple("l1", "b1", "b2", 1.0, -10.0, 5.0)],
        devices: vec![g, c],
        zones: vec![],
        products: vec![],
        penalties: Penalties::default(),
    }
}

/// Triangle network, two producers and a consumer, one active and one
/// reactive zone with the default product set, three periods.
pub fn three_bus_case() -> Case {
    let nt = 3;
    let mut g1 = simple_device("g1", DeviceKind::Producer, nt, 0.2, 2.0);
    g1.cost = vec![CostCurve::new(&[(1.0, 10.0), (1.0, 15.0)]); nt];
    g1.reserve_cost.insert("rgu".into(), 1.0);
    let mut g2 = simple_device("g2", DeviceKind::Producer, nt, 0.0, 1.0);
    g2.bus = "b2".into();
    g2.cost = vec![CostCurve::new(&[(1.0, 30.0)]); nt];
    g2.initial_on = false;
    g2.initial_p = 0.0;
    let mut c = simple_device("c1", DeviceKind::Consumer, nt, 0.6, 1.2);
    c.bus = "b3".into();
    c.cost = vec![CostCurve::new(&[(0.6, 200.0), (0.6, 20.0)]); nt];
    c.q_min = vec![0.1; nt];
    c.q_max = vec![0.3; nt];
    c.initial_p = 0.8;

    let mut buses = vec![bus("b1", true), bus("b2", false), bus("b3", false)];
    for b in &mut buses {
        b.active_zone = Some("za".into());
        b.reactive_zone = Some("zq".into());
    }
    let req = |x: f64| vec![x; nt];
    let zones = vec![
        ReserveZone {
            id: "za".into(),
            power_kind: PowerKind::Active,
            requirement: [("rgu".to_string(), req(0.1)), ("scr".to_string(), req(0.05)), ("rgd".to_string(), req(0.05))]
                .into_iter()
                .collect(),
            shortfall_penalty: [("rgu", 1000.0), ("scr", 500.0), ("rru_on", 100.0), ("rgd", 1000.0), ("rrd", 100.0)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
        },
        ReserveZone {
            id: "zq".into(),
            power_kind: PowerKind::Reactive,
            requirement: [("qru".to_string(), req(0.05))].into_iter().collect(),
            shortfall_penalty: [("qru".to_string(), 100.0), ("qrd".to_string(), 100.0)].into_iter().collect(),
        },
    ];
    Case {
        time_grid: TimeGrid::uniform(nt, 1.0),
        buses,
        lines: vec![
            AcLine::simple("l12", "b1", "b2", 1.0, -10.0, 5.0),
            AcLine::simple("l23", "b2", "b3", 1.0, -10.0, 5.0),
            AcLine::simple("l13", "b1", "b3", 1.0, -10.0, 5.0),
        ],
        devices: vec![g1, g2, c],
        zones,
        products: ReserveProduct::default_set(),
        penalties: Penalties::default(),
    }
}
