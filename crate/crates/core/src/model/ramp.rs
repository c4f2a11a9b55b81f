use super::{Device, DeviceKind, Direction, PowerKind};

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Interval reachable at `t` from `p_prev` under the state-dependent ramp
/// rates. `u_on_prev` is implied by the transition logic and only checked in
/// debug builds.
pub fn ramp_envelope(
    device: &Device,
    p_prev: f64,
    u_on_prev: bool,
    u_on_t: bool,
    u_su_t: bool,
    d_t: f64,
) -> (f64, f64) {
    debug_assert!(!u_su_t || (u_on_t && !u_on_prev));
    let (on, su) = (bit(u_on_t), bit(u_su_t));
    let hi = p_prev + d_t * (device.p_ru * (on - su) + device.p_ru_su * (su + 1.0 - on));
    let lo = p_prev - d_t * (device.p_rd * on + device.p_rd_sd * (1.0 - on));
    (lo, hi)
}

/// Capacity left between `p` and the bound in the given direction. Up means
/// more injection for a producer and less consumption for a consumer.
pub fn headroom(device: &Device, p: f64, u_on: bool, t: usize, direction: Direction) -> f64 {
    let on = bit(u_on);
    match (device.kind, direction) {
        (DeviceKind::Producer, Direction::Up) | (DeviceKind::Consumer, Direction::Down) => {
            device.p_max[t] * on - p
        }
        (DeviceKind::Producer, Direction::Down) | (DeviceKind::Consumer, Direction::Up) => {
            p - device.p_min[t] * on
        }
    }
}

/// Headroom for a reserve product of either power kind. Reactive headroom
/// mirrors the active rule on `[q_min, q_max]`.
pub fn reserve_headroom(
    device: &Device,
    kind: PowerKind,
    p: f64,
    q: f64,
    u_on: bool,
    t: usize,
    direction: Direction,
) -> f64 {
    match kind {
        PowerKind::Active => headroom(device, p, u_on, t, direction),
        PowerKind::Reactive => {
            let on = bit(u_on);
            match (device.kind, direction) {
                (DeviceKind::Producer, Direction::Up) | (DeviceKind::Consumer, Direction::Down) => {
                    device.q_max[t] * on - q
                }
                (DeviceKind::Producer, Direction::Down) | (DeviceKind::Consumer, Direction::Up) => {
                    q - device.q_min[t] * on
                }
            }
        }
    }
}

/// Per-period power bounds implied by a fixed commitment alone.
///
/// Besides `[p_min, p_max]` this folds in the start-up ramp and a backward
/// reachability pass: a device that must later shut down (or meet a rising
/// `p_min`) cannot sit so high (or low) now that the later period becomes
/// unreachable. Sequential OPF with forward ramp tightening then never
/// strands a device.
pub fn static_bounds(device: &Device, u_on: &[bool], u_su: &[bool], durations: &[f64]) -> Vec<(f64, f64)> {
    let nt = u_on.len();
    let mut b: Vec<(f64, f64)> = (0..nt)
        .map(|t| {
            if !u_on[t] {
                (0.0, 0.0)
            } else {
                let mut hi = device.p_max[t];
                if u_su[t] {
                    hi = hi.min(durations[t] * device.p_ru_su);
                }
                (device.p_min[t], hi)
            }
        })
        .collect();
    for t in (0..nt.saturating_sub(1)).rev() {
        if !u_on[t] {
            continue;
        }
        let d = durations[t + 1];
        let (next_lo, next_hi) = b[t + 1];
        if u_on[t + 1] {
            b[t].1 = b[t].1.min(next_hi + d * device.p_rd);
            b[t].0 = b[t].0.max(next_lo - d * device.p_ru);
        } else {
            b[t].1 = b[t].1.min(d * device.p_rd_sd);
        }
    }
    b
}

/// Upper reachability cap alone, exposed for diagnostics.
pub fn shutdown_cap(device: &Device, u_on: &[bool], u_su: &[bool], durations: &[f64]) -> Vec<f64> {
    static_bounds(device, u_on, u_su, durations)
        .into_iter()
        .map(|(_, hi)| hi)
        .collect()
}
