//! Domain types shared by every stage: the case description, the three
//! solution containers, and a few cheap pure helpers (ramp envelopes,
//! headroom, cost-curve evaluation).
//!
//! Units follow the usual per-unit convention: powers in pu, voltages in pu,
//! angles in radians, durations in hours and costs in $/pu-h.

mod cascade;
mod index;
mod ramp;
mod validate;

pub use cascade::{cascade_shortfall, shortfall_cost};
pub use index::{kind_slot, CaseIndex, ProductGroup};
pub use ramp::{headroom, ramp_envelope, reserve_headroom, shutdown_cap, static_bounds};
pub use validate::{validate_case, Violation};

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Default penalty on bus balance mismatch, $/pu-h.
pub const DEFAULT_BALANCE_PENALTY: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGrid {
    /// Period lengths in hours.
    pub durations: Vec<f64>,
}

impl TimeGrid {
    pub fn uniform(periods: usize, hours: f64) -> Self {
        TimeGrid {
            durations: vec![hours; periods],
        }
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: String,
    pub v_min: f64,
    pub v_max: f64,
    #[serde(default)]
    pub is_reference: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub active_zone: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactive_zone: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcLine {
    pub id: String,
    pub from_bus: String,
    pub to_bus: String,
    pub g_sr: f64,
    pub b_sr: f64,
    #[serde(default)]
    pub g_fr: f64,
    #[serde(default)]
    pub g_to: f64,
    #[serde(default)]
    pub b_fr: f64,
    #[serde(default)]
    pub b_to: f64,
    #[serde(default)]
    pub b_ch: f64,
    pub s_max: f64,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

impl AcLine {
    /// Shunt-free line with the given series admittance.
    pub fn simple(id: &str, from: &str, to: &str, g_sr: f64, b_sr: f64, s_max: f64) -> Self {
        AcLine {
            id: id.into(),
            from_bus: from.into(),
            to_bus: to.into(),
            g_sr,
            b_sr,
            g_fr: 0.0,
            g_to: 0.0,
            b_fr: 0.0,
            b_to: 0.0,
            b_ch: 0.0,
            s_max,
            in_service: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Producer,
    Consumer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Up,
    Down,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerKind {
    Active,
    Reactive,
}

/// One block of a piecewise-linear curve: `width` pu at `rate` $/pu-h.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostBlock {
    pub width: f64,
    pub rate: f64,
}

/// Blocks filled in order starting from zero power. For a producer this is
/// an energy cost (rates non-decreasing); for a consumer it is an energy
/// value (rates non-increasing).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostCurve {
    pub blocks: Vec<CostBlock>,
}

impl CostCurve {
    pub fn new(blocks: &[(f64, f64)]) -> Self {
        CostCurve {
            blocks: blocks
                .iter()
                .map(|&(width, rate)| CostBlock { width, rate })
                .collect(),
        }
    }

    pub fn total_width(&self) -> f64 {
        self.blocks.iter().map(|b| b.width).sum()
    }

    /// Curve value at `p` by filling blocks in order. Power beyond the last
    /// block is charged at the last rate.
    pub fn eval(&self, p: f64) -> f64 {
        let mut rest = p.max(0.0);
        let mut z = 0.0;
        for b in &self.blocks {
            if rest <= 0.0 {
                break;
            }
            let take = rest.min(b.width);
            z += take * b.rate;
            rest -= take;
        }
        if rest > 0.0 {
            if let Some(last) = self.blocks.last() {
                z += rest * last.rate;
            }
        }
        z
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.blocks.windows(2).all(|w| w[0].rate <= w[1].rate)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.blocks.windows(2).all(|w| w[0].rate >= w[1].rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    pub kind: DeviceKind,
    pub bus: String,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
    pub p_ru: f64,
    pub p_rd: f64,
    pub p_ru_su: f64,
    pub p_rd_sd: f64,
    pub initial_on: bool,
    pub initial_p: f64,
    /// Forces the device online in every period.
    #[serde(default)]
    pub must_run: bool,
    pub cost: Vec<CostCurve>,
    #[serde(default)]
    pub su_cost: f64,
    #[serde(default)]
    pub sd_cost: f64,
    #[serde(default)]
    pub on_cost: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reserve_cost: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub reserve_cap: BTreeMap<String, f64>,
}

impl Device {
    pub fn is_producer(&self) -> bool {
        self.kind == DeviceKind::Producer
    }

    /// +1 for producers, -1 for consumers: the sign of the device's
    /// injection into its bus.
    pub fn sign(&self) -> f64 {
        match self.kind {
            DeviceKind::Producer => 1.0,
            DeviceKind::Consumer => -1.0,
        }
    }

    /// Producer cost minus consumer value for power `p` in period `t`.
    pub fn net_cost(&self, t: usize, p: f64) -> f64 {
        self.sign() * self.cost[t].eval(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveProduct {
    pub id: String,
    pub direction: Direction,
    pub power_kind: PowerKind,
    pub quality_rank: u32,
}

impl ReserveProduct {
    pub fn new(id: &str, direction: Direction, power_kind: PowerKind, rank: u32) -> Self {
        ReserveProduct {
            id: id.into(),
            direction,
            power_kind,
            quality_rank: rank,
        }
    }

    /// Regulation, synchronized and online ramping up; regulation and ramping
    /// down; one reactive product each way.
    pub fn default_set() -> Vec<ReserveProduct> {
        use Direction::*;
        use PowerKind::*;
        vec![
            ReserveProduct::new("rgu", Up, Active, 1),
            ReserveProduct::new("scr", Up, Active, 2),
            ReserveProduct::new("rru_on", Up, Active, 3),
            ReserveProduct::new("rgd", Down, Active, 1),
            ReserveProduct::new("rrd", Down, Active, 2),
            ReserveProduct::new("qru", Up, Reactive, 1),
            ReserveProduct::new("qrd", Down, Reactive, 1),
        ]
    }
}

/// A zone's member buses are those whose `active_zone` (or
/// `reactive_zone`, by `power_kind`) names it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveZone {
    pub id: String,
    pub power_kind: PowerKind,
    /// Per-product requirement by period; missing products require nothing.
    #[serde(default)]
    pub requirement: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub shortfall_penalty: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Penalties {
    #[serde(default = "default_balance_penalty")]
    pub balance: f64,
    #[serde(default = "default_balance_penalty")]
    pub line_overload: f64,
}

fn default_balance_penalty() -> f64 {
    DEFAULT_BALANCE_PENALTY
}

impl Default for Penalties {
    fn default() -> Self {
        Penalties {
            balance: DEFAULT_BALANCE_PENALTY,
            line_overload: DEFAULT_BALANCE_PENALTY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Case {
    pub time_grid: TimeGrid,
    pub buses: Vec<Bus>,
    pub lines: Vec<AcLine>,
    pub devices: Vec<Device>,
    #[serde(default)]
    pub zones: Vec<ReserveZone>,
    #[serde(default)]
    pub products: Vec<ReserveProduct>,
    #[serde(default)]
    pub penalties: Penalties,
}

impl Case {
    pub fn periods(&self) -> usize {
        self.time_grid.len()
    }

    pub fn index(&self) -> CaseIndex {
        CaseIndex::new(self)
    }
}

/// Binary commitment state per device and period, stored `[device][period]`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitmentSchedule {
    #[serde(with = "binary_matrix")]
    pub u_on: Vec<Vec<bool>>,
    #[serde(with = "binary_matrix")]
    pub u_su: Vec<Vec<bool>>,
    #[serde(with = "binary_matrix")]
    pub u_sd: Vec<Vec<bool>>,
}

impl CommitmentSchedule {
    /// Derives start-up and shut-down flags from the online pattern.
    pub fn from_on(case: &Case, u_on: Vec<Vec<bool>>) -> Self {
        let mut u_su = Vec::with_capacity(u_on.len());
        let mut u_sd = Vec::with_capacity(u_on.len());
        for (dev, on) in case.devices.iter().zip(&u_on) {
            let mut prev = dev.initial_on;
            let mut su = Vec::with_capacity(on.len());
            let mut sd = Vec::with_capacity(on.len());
            for &u in on {
                su.push(u && !prev);
                sd.push(!u && prev);
                prev = u;
            }
            u_su.push(su);
            u_sd.push(sd);
        }
        CommitmentSchedule { u_on, u_su, u_sd }
    }

    pub fn all_on(case: &Case) -> Self {
        let on = vec![vec![true; case.periods()]; case.devices.len()];
        Self::from_on(case, on)
    }

    pub fn on(&self, j: usize, t: usize) -> bool {
        self.u_on[j][t]
    }

    /// Online state before period `t`, falling back to the initial state.
    pub fn on_before(&self, case: &Case, j: usize, t: usize) -> bool {
        if t == 0 {
            case.devices[j].initial_on
        } else {
            self.u_on[j][t - 1]
        }
    }
}

/// Continuous operating point, stored `[entity][period]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DispatchState {
    pub p: Vec<Vec<f64>>,
    pub q: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub p_fr: Vec<Vec<f64>>,
    pub q_fr: Vec<Vec<f64>>,
    pub p_to: Vec<Vec<f64>>,
    pub q_to: Vec<Vec<f64>>,
    pub p_mismatch: Vec<Vec<f64>>,
    pub q_mismatch: Vec<Vec<f64>>,
}

impl DispatchState {
    /// All-zero dispatch at flat voltage.
    pub fn zeros(case: &Case) -> Self {
        let t = case.periods();
        let z = |n: usize| vec![vec![0.0; t]; n];
        let (nd, nb, nl) = (case.devices.len(), case.buses.len(), case.lines.len());
        DispatchState {
            p: z(nd),
            q: z(nd),
            v: vec![vec![1.0; t]; nb],
            theta: z(nb),
            p_fr: z(nl),
            q_fr: z(nl),
            p_to: z(nl),
            q_to: z(nl),
            p_mismatch: z(nb),
            q_mismatch: z(nb),
        }
    }
}

/// Reserve quantities `r[device][product][period]` and zonal shortfalls
/// `shortfall[zone][product][period]`; product indices follow `Case::products`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReserveState {
    pub r: Vec<Vec<Vec<f64>>>,
    pub shortfall: Vec<Vec<Vec<f64>>>,
}

impl ReserveState {
    pub fn zeros(case: &Case) -> Self {
        let t = case.periods();
        let k = case.products.len();
        ReserveState {
            r: vec![vec![vec![0.0; t]; k]; case.devices.len()],
            shortfall: vec![vec![vec![0.0; t]; k]; case.zones.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<u8>,
    /// Wall seconds per stage name.
    #[serde(default)]
    pub stage_seconds: BTreeMap<String, f64>,
    /// Objective as accounted by the solver stages (not the evaluator).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FullSolution {
    pub commitment: CommitmentSchedule,
    pub dispatch: DispatchState,
    pub reserves: ReserveState,
    #[serde(default)]
    pub meta: SolutionMeta,
}

/// Commitment binaries are written as 0/1 integers.
mod binary_matrix {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut outer = s.serialize_seq(Some(m.len()))?;
        for row in m {
            let ints: Vec<u8> = row.iter().map(|&b| b as u8).collect();
            outer.serialize_element(&ints)?;
        }
        outer.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        let raw: Vec<Vec<i64>> = Vec::deserialize(d)?;
        raw.into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|x| match x {
                        0 => Ok(false),
                        1 => Ok(true),
                        other => Err(D::Error::custom(format!("binary value expected, got {other}"))),
                    })
                    .collect()
            })
            .collect()
    }
}
