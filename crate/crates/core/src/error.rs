use crate::mip::MipStatus;
use crate::model::Violation;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("schema error at {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("case is invalid: {}", join(.0))]
    Invalid(Vec<Violation>),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("cannot generate a case: {0}")]
    InfeasibleSpec(String),

    #[error("cost curve of device '{device}' is not convex in period {period}")]
    NonConvex { device: String, period: usize },

    #[error("unit commitment produced no schedule (search ended {0:?})")]
    NoSchedule(MipStatus),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn join(v: &[Violation]) -> String {
    let shown: Vec<String> = v.iter().take(10).map(|x| x.to_string()).collect();
    let more = if v.len() > 10 { format!("; and {} more", v.len() - 10) } else { String::new() };
    format!("{}{more}", shown.join("; "))
}

pub type Result<T> = std::result::Result<T, Error>;
