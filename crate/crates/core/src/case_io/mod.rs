//! JSON case and solution files, plus the synthetic case generator.
//!
//! Both formats are plain serde renderings of the model types (see
//! `docs/schema.md`). Floats are written in shortest round-trip form, so a
//! write followed by a read reproduces every value bit for bit.

mod generate;

pub use generate::{generate_case, GeneratorSpec, LoadShape, Preset};

use crate::error::{Error, Result};
use crate::model::{validate_case, Case, FullSolution, Violation};
use serde::de::DeserializeOwned;

fn parse<T: DeserializeOwned>(bytes: &[u8]) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let mut path = e.path().to_string();
        let reason = e.inner().to_string();
        // serde reports a missing field at its parent; point at the field
        if let Some(rest) = reason.strip_prefix("missing field `") {
            if let Some(field) = rest.split('`').next() {
                path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
            }
        }
        Error::Schema { path, reason }
    })
}

pub fn read_case(bytes: &[u8]) -> Result<Case> {
    let case: Case = parse(bytes)?;
    let v = validate_case(&case);
    if !v.is_empty() {
        return Err(Error::Invalid(v));
    }
    Ok(case)
}

pub fn write_case(case: &Case) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(case).expect("case serializes");
    out.push(b'\n');
    out
}

pub fn write_solution(solution: &FullSolution) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(solution).expect("solution serializes");
    out.push(b'\n');
    out
}

/// Reads a solution and checks it against `case`: every array must have the
/// case's dimensions, values must be finite and reserves nonnegative.
pub fn read_solution(bytes: &[u8], case: &Case) -> Result<FullSolution> {
    let sol: FullSolution = parse(bytes)?;
    check_dimensions(&sol, case)?;
    let mut bad = Vec::new();
    for (j, per_k) in sol.reserves.r.iter().enumerate() {
        for (k, per_t) in per_k.iter().enumerate() {
            for (t, &x) in per_t.iter().enumerate() {
                if x < 0.0 {
                    bad.push(Violation::new(
                        "negative_reserve",
                        &case.devices[j].id,
                        Some(t),
                        format!("reserve '{}' is {x}", case.products[k].id),
                    ));
                }
            }
        }
    }
    for (z, per_k) in sol.reserves.shortfall.iter().enumerate() {
        for (k, per_t) in per_k.iter().enumerate() {
            for (t, &x) in per_t.iter().enumerate() {
                if x < 0.0 {
                    bad.push(Violation::new(
                        "negative_shortfall",
                        &case.zones[z].id,
                        Some(t),
                        format!("shortfall '{}' is {x}", case.products[k].id),
                    ));
                }
            }
        }
    }
    if bad.is_empty() {
        Ok(sol)
    } else {
        Err(Error::Invalid(bad))
    }
}

fn dims<T>(what: &str, m: &[Vec<T>], rows: usize, cols: usize) -> Result<()> {
    if m.len() != rows {
        return Err(Error::Dimension(format!("{what} has {} rows, case needs {rows}", m.len())));
    }
    for (i, r) in m.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::Dimension(format!("{what}[{i}] has {} periods, case has {cols}", r.len())));
        }
    }
    Ok(())
}

fn finite(what: &str, m: &[Vec<f64>]) -> Result<()> {
    if m.iter().flatten().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::Invalid(vec![Violation::new("non_finite", what, None, "non-finite value")]))
    }
}

pub fn check_dimensions(sol: &FullSolution, case: &Case) -> Result<()> {
    let nt = case.periods();
    let (nj, nb, nl, nk, nz) = (
        case.devices.len(),
        case.buses.len(),
        case.lines.len(),
        case.products.len(),
        case.zones.len(),
    );
    let c = &sol.commitment;
    dims("commitment.u_on", &c.u_on, nj, nt)?;
    dims("commitment.u_su", &c.u_su, nj, nt)?;
    dims("commitment.u_sd", &c.u_sd, nj, nt)?;
    let d = &sol.dispatch;
    for (name, m, rows) in [
        ("dispatch.p", &d.p, nj),
        ("dispatch.q", &d.q, nj),
        ("dispatch.v", &d.v, nb),
        ("dispatch.theta", &d.theta, nb),
        ("dispatch.p_fr", &d.p_fr, nl),
        ("dispatch.q_fr", &d.q_fr, nl),
        ("dispatch.p_to", &d.p_to, nl),
        ("dispatch.q_to", &d.q_to, nl),
        ("dispatch.p_mismatch", &d.p_mismatch, nb),
        ("dispatch.q_mismatch", &d.q_mismatch, nb),
    ] {
        dims(name, m, rows, nt)?;
        finite(name, m)?;
    }
    let r = &sol.reserves;
    if r.r.len() != nj {
        return Err(Error::Dimension(format!("reserves.r has {} devices, case has {nj}", r.r.len())));
    }
    for per_k in &r.r {
        dims("reserves.r[..]", per_k, nk, nt)?;
        finite("reserves.r", per_k)?;
    }
    if r.shortfall.len() != nz {
        return Err(Error::Dimension(format!(
            "reserves.shortfall has {} zones, case has {nz}",
            r.shortfall.len()
        )));
    }
    for per_k in &r.shortfall {
        dims("reserves.shortfall[..]", per_k, nk, nt)?;
        finite("reserves.shortfall", per_k)?;
    }
    Ok(())
}
